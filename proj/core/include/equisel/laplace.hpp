#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "equisel/tensor_io.hpp"

namespace equisel {

enum class HessianKind { Full, Diagonal };

struct LaplaceConfig {
  HessianKind hessian_kind = HessianKind::Full;
  std::vector<double> delta_grid;           // default: 41 points, 1e-4..1e4
  std::vector<double> sigma_grid;           // regression: 21 points, 1e-2..1e1
  std::optional<double> delta_fixed;
  std::size_t full_dim_cap = 4096;          // Full kind D x D allocation cap

  static std::vector<double> log_grid(double lo, double hi, std::size_t points);
  static LaplaceConfig defaults();
};

// Curvature of the last-layer negative log likelihood, cached as either
// the eigenvalues of the full GGN matrix or its diagonal. Both support
// log|H + delta I| in O(D) per delta.
struct HessianSummary {
  HessianKind kind = HessianKind::Full;
  std::size_t dim = 0;
  Eigen::VectorXd spectrum;  // Full: eigenvalues; Diagonal: diagonal entries
  double ggn_trace = 0.0;

  double logdet(double delta) const;
};

struct GridPoint {
  double delta = 0.0;
  std::optional<double> sigma;
  double log_marglik = 0.0;
};

struct LaplaceResult {
  double loglik_train = 0.0;
  double complexity = 0.0;
  double log_marglik = 0.0;
  double delta_star = 0.0;
  std::optional<double> sigma_star;
  double loglik_test = 0.0;
  std::vector<GridPoint> grid_values;
};

// Bias-augmented design matrix (features with a trailing ones column).
Eigen::MatrixXd augment_features(const Matrix& features);

// Flattened last-layer parameters, row-major over [weights | bias] per
// output, matching the Kronecker ordering of the classification GGN.
Eigen::VectorXd flatten_last_layer(const LastLayer& layer);

// Materialized K*(design cols) square GGN for the linear-softmax model,
// parameter order [class 0 block | class 1 block | ...].
Eigen::MatrixXd dense_ggn_classification(const Eigen::MatrixXd& design,
                                         const Eigen::MatrixXd& logits);

// GGN over an explicit design matrix. For classification the logits must
// be consistent with the same design; for a linear last layer the GGN is
// the exact Hessian.
HessianSummary ggn_classification_raw(const Eigen::MatrixXd& design,
                                      const Eigen::MatrixXd& logits,
                                      HessianKind kind,
                                      std::size_t full_dim_cap = 4096);
HessianSummary ggn_regression_raw(const Eigen::MatrixXd& design, double sigma,
                                  HessianKind kind);

HessianSummary ggn_classification(const Matrix& features,
                                  const LastLayer& layer, HessianKind kind,
                                  std::size_t full_dim_cap = 4096);
HessianSummary ggn_regression(const Matrix& features, double sigma,
                              HessianKind kind);

struct MarglikTerms {
  double loglik = 0.0;
  double complexity = 0.0;
  double log_marglik = 0.0;
};

// complexity = 1/2 log|H + delta I| - (D/2) log delta + (delta/2)||theta||^2
MarglikTerms log_marginal_likelihood(double loglik_train,
                                     const Eigen::VectorXd& theta, double delta,
                                     const HessianSummary& hessian);

double train_loglik(const ModelDump& dump, std::optional<double> sigma);
double test_loglik(const ModelDump& dump, std::optional<double> sigma);

LaplaceResult optimize_prior_precision(const ModelDump& dump,
                                       const LaplaceConfig& config);

}  // namespace equisel
