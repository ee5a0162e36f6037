#include "equisel/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "equisel/rng.hpp"

namespace equisel {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double PredictionSet::width() const {
  if (unbounded) return kInf;
  return upper - lower;
}

double conformal_quantile(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw EmptyInputError("conformal_quantile: no scores");
  if (alpha <= 0.0 || alpha >= 1.0)
    throw ConfigError("conformal_quantile: alpha must be in (0,1)");
  const std::size_t n = scores.size();
  const auto k = static_cast<std::size_t>(
      std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha)));
  if (k > n) return kInf;
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return scores[k - 1];
}

std::vector<double> score_classification(const ProbMatrix& probs,
                                         const Matrix& targets) {
  const std::size_t n = probs.rows();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = targets.iat(i, 0);
    if (y < 0 || static_cast<std::size_t>(y) >= probs.num_classes())
      throw ValidationError("score_classification: target out of range");
    scores[i] = 1.0 - probs.probs.at(i, static_cast<std::size_t>(y));
  }
  return scores;
}

std::vector<double> score_regression(const Matrix& predictions,
                                     const Matrix& targets) {
  if (predictions.rows() != targets.rows())
    throw ValidationError("score_regression: length mismatch");
  std::vector<double> scores(predictions.rows());
  for (std::size_t i = 0; i < predictions.rows(); ++i)
    scores[i] = std::abs(targets.at(i, 0) - predictions.at(i, 0));
  return scores;
}

PredictionSet predict_set_classification(const ProbMatrix& probs,
                                         std::size_t row, double qhat) {
  PredictionSet set;
  for (std::size_t k = 0; k < probs.num_classes(); ++k)
    if (1.0 - probs.probs.at(row, k) <= qhat) set.classes.push_back(k);
  return set;
}

PredictionSet predict_interval_regression(double prediction, double qhat) {
  PredictionSet set;
  if (std::isinf(qhat)) {
    set.unbounded = true;
    set.lower = -kInf;
    set.upper = kInf;
  } else {
    set.lower = prediction - qhat;
    set.upper = prediction + qhat;
  }
  return set;
}

ConformalResult run_split_cp(const ModelDump& dump,
                             const ConformalConfig& config) {
  if (config.alpha <= 0.0 || config.alpha >= 1.0)
    throw ConfigError("run_split_cp: alpha must be in (0,1)");
  if (config.resamples < 1)
    throw ConfigError("run_split_cp: resamples must be >= 1");
  const std::size_t n_cal = dump.calibration.features.rows();
  const std::size_t n_test = dump.test.features.rows();
  if (n_cal == 0 || n_test == 0)
    throw EmptyInputError("run_split_cp: empty calibration or test split");

  const bool classification = dump.task.kind == TaskKind::Classification;
  const std::size_t n_pool = n_cal + n_test;

  // Precompute per-row scores (and per-row probabilities for set sizes)
  // once over the pooled rows; resampling only permutes indices.
  std::vector<double> scores(n_pool);
  ProbMatrix pooled_probs;
  {
    auto eval_split = [&](const SplitData& split, std::size_t offset) {
      const Matrix out = forward_last_layer(split.features, dump.last_layer);
      if (classification) {
        const ProbMatrix probs = softmax_logits(out);
        const auto s = score_classification(probs, split.targets);
        for (std::size_t i = 0; i < s.size(); ++i) {
          scores[offset + i] = s[i];
          for (std::size_t k = 0; k < probs.num_classes(); ++k)
            pooled_probs.probs.at(offset + i, k) = probs.probs.at(i, k);
        }
      } else {
        const auto s = score_regression(out, split.targets);
        for (std::size_t i = 0; i < s.size(); ++i) scores[offset + i] = s[i];
      }
    };
    if (classification)
      pooled_probs.probs = Matrix::zeros(n_pool, dump.task.num_classes);
    eval_split(dump.calibration, 0);
    eval_split(dump.test, n_cal);
  }

  ConformalResult result;
  result.per_resample.resize(config.resamples);
  double empty_sets = 0.0;

  for (std::size_t r = 0; r < config.resamples; ++r) {
    Rng rng(mix_seed(config.seed, r));
    const auto perm = rng.permutation(n_pool);

    std::vector<double> cal_scores(n_cal);
    for (std::size_t i = 0; i < n_cal; ++i) cal_scores[i] = scores[perm[i]];
    const double qhat = conformal_quantile(std::move(cal_scores), config.alpha);

    double covered = 0.0;
    double size_sum = 0.0;
    for (std::size_t i = n_cal; i < n_pool; ++i) {
      const std::size_t idx = perm[i];
      if (scores[idx] <= qhat) covered += 1.0;
      if (classification) {
        const auto set = predict_set_classification(pooled_probs, idx, qhat);
        size_sum += static_cast<double>(set.classes.size());
        if (set.classes.empty()) empty_sets += 1.0;
      } else {
        size_sum += std::isinf(qhat) ? kInf : 2.0 * qhat;
      }
    }
    result.per_resample[r].coverage = covered / static_cast<double>(n_test);
    result.per_resample[r].size = size_sum / static_cast<double>(n_test);
    if (r + 1 == config.resamples) result.qhat_last = qhat;
  }

  for (const auto& stat : result.per_resample) {
    result.coverage += stat.coverage;
    result.mean_size += stat.size;
  }
  result.coverage /= static_cast<double>(config.resamples);
  result.mean_size /= static_cast<double>(config.resamples);
  result.empty_set_rate =
      classification
          ? empty_sets / static_cast<double>(n_test * config.resamples)
          : 0.0;
  return result;
}

}  // namespace equisel
