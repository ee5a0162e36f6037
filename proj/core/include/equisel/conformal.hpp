#pragma once

#include <cstdint>
#include <vector>

#include "equisel/metrics.hpp"
#include "equisel/tensor_io.hpp"

namespace equisel {

struct ConformalConfig {
  double alpha = 0.1;         // miscoverage level
  std::size_t resamples = 100;
  std::uint64_t seed = 0;
};

struct PredictionSet {
  // classification
  std::vector<std::size_t> classes;
  // regression
  double lower = 0.0;
  double upper = 0.0;
  bool unbounded = false;

  double width() const;
};

struct ResampleStat {
  double coverage = 0.0;
  double size = 0.0;  // mean set size or mean interval width
};

struct ConformalResult {
  double coverage = 0.0;
  double mean_size = 0.0;       // set size (classification) / width (regression)
  double empty_set_rate = 0.0;  // classification only
  double qhat_last = 0.0;
  std::vector<ResampleStat> per_resample;
};

// k-th smallest score with k = ceil((n+1)(1-alpha)); +infinity when k > n.
double conformal_quantile(std::vector<double> scores, double alpha);

// 1 - p_hat of the true class, per sample.
std::vector<double> score_classification(const ProbMatrix& probs,
                                         const Matrix& targets);
// |y - y_hat| per sample.
std::vector<double> score_regression(const Matrix& predictions,
                                     const Matrix& targets);

PredictionSet predict_set_classification(const ProbMatrix& probs,
                                         std::size_t row, double qhat);
PredictionSet predict_interval_regression(double prediction, double qhat);

// Pools calibration and test rows, reshuffles them `resamples` times with
// seeds mix_seed(config.seed, r), and aggregates coverage / efficiency.
ConformalResult run_split_cp(const ModelDump& dump,
                             const ConformalConfig& config);

}  // namespace equisel
