#include "equisel/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "equisel/metrics.hpp"

namespace equisel {

std::vector<double> LaplaceConfig::log_grid(double lo, double hi,
                                            std::size_t points) {
  if (points == 0 || lo <= 0.0 || hi <= lo)
    throw ConfigError("log_grid: need positive lo < hi and points >= 1");
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = lo;
    return grid;
  }
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = std::exp(std::log(lo) + step * static_cast<double>(i));
  return grid;
}

LaplaceConfig LaplaceConfig::defaults() {
  LaplaceConfig c;
  c.delta_grid = log_grid(1e-4, 1e4, 41);
  c.sigma_grid = log_grid(1e-2, 1e1, 21);
  return c;
}

double HessianSummary::logdet(double delta) const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i)
    total += std::log(spectrum[i] + delta);
  return total;
}

Eigen::MatrixXd augment_features(const Matrix& features) {
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto d = static_cast<Eigen::Index>(features.cols());
  Eigen::MatrixXd design(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) design(i, j) = features.at(i, j);
    design(i, d) = 1.0;
  }
  return design;
}

Eigen::VectorXd flatten_last_layer(const LastLayer& layer) {
  const auto k = static_cast<Eigen::Index>(layer.weights.rows());
  const auto d = static_cast<Eigen::Index>(layer.weights.cols());
  Eigen::VectorXd theta(k * (d + 1));
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index j = 0; j < d; ++j)
      theta[c * (d + 1) + j] = layer.weights.at(c, j);
    theta[c * (d + 1) + d] = layer.bias.at(c, 0);
  }
  return theta;
}

namespace {

HessianSummary summarize_full(Eigen::MatrixXd h) {
  // enforce exact symmetry before factorization
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success)
    throw NumericalError("GGN eigendecomposition failed");
  HessianSummary summary;
  summary.kind = HessianKind::Full;
  summary.dim = static_cast<std::size_t>(h.rows());
  summary.spectrum = solver.eigenvalues();
  const double max_eig = summary.spectrum.size() > 0
                             ? summary.spectrum.maxCoeff()
                             : 0.0;
  for (Eigen::Index i = 0; i < summary.spectrum.size(); ++i) {
    if (summary.spectrum[i] < -1e-8 * std::max(max_eig, 1.0))
      throw NumericalError("GGN not positive semidefinite: eigenvalue " +
                           std::to_string(summary.spectrum[i]));
    if (summary.spectrum[i] < 0.0) summary.spectrum[i] = 0.0;
  }
  summary.ggn_trace = summary.spectrum.sum();
  return summary;
}

}  // namespace

Eigen::MatrixXd dense_ggn_classification(const Eigen::MatrixXd& design,
                                         const Eigen::MatrixXd& logits) {
  const Eigen::Index n = design.rows();
  const Eigen::Index df = design.cols();  // per-class block size
  const Eigen::Index k = logits.cols();
  const Eigen::Index dim = k * df;
  if (logits.rows() != n)
    throw ValidationError("ggn_classification: design/logits row mismatch");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z = logits.row(i);
    const double zmax = z.maxCoeff();
    Eigen::VectorXd p = (z.array() - zmax).exp();
    p /= p.sum();
    const Eigen::MatrixXd lambda =
        Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
    const Eigen::VectorXd phi = design.row(i);
    const Eigen::MatrixXd outer = phi * phi.transpose();
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b)
        h.block(a * df, b * df, df, df) += lambda(a, b) * outer;
  }
  return h;
}

HessianSummary ggn_classification_raw(const Eigen::MatrixXd& design,
                                      const Eigen::MatrixXd& logits,
                                      HessianKind kind,
                                      std::size_t full_dim_cap) {
  const Eigen::Index n = design.rows();
  const Eigen::Index df = design.cols();  // per-class block size
  const Eigen::Index k = logits.cols();
  const Eigen::Index dim = k * df;
  if (logits.rows() != n)
    throw ValidationError("ggn_classification: design/logits row mismatch");

  if (kind == HessianKind::Full) {
    if (static_cast<std::size_t>(dim) > full_dim_cap)
      throw CapacityError("full GGN dimension " + std::to_string(dim) +
                          " exceeds cap " + std::to_string(full_dim_cap) +
                          "; use the diagonal Hessian instead");
    return summarize_full(dense_ggn_classification(design, logits));
  }

  HessianSummary summary;
  summary.kind = HessianKind::Diagonal;
  summary.dim = static_cast<std::size_t>(dim);
  summary.spectrum = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z = logits.row(i);
    const double zmax = z.maxCoeff();
    Eigen::VectorXd p = (z.array() - zmax).exp();
    p /= p.sum();
    for (Eigen::Index a = 0; a < k; ++a) {
      const double lam = p[a] * (1.0 - p[a]);
      for (Eigen::Index j = 0; j < df; ++j)
        summary.spectrum[a * df + j] += lam * design(i, j) * design(i, j);
    }
  }
  summary.ggn_trace = summary.spectrum.sum();
  return summary;
}

HessianSummary ggn_regression_raw(const Eigen::MatrixXd& design, double sigma,
                                  HessianKind kind) {
  if (sigma <= 0.0) throw ConfigError("ggn_regression: sigma must be positive");
  const double inv_var = 1.0 / (sigma * sigma);
  if (kind == HessianKind::Full)
    return summarize_full(inv_var * (design.transpose() * design));

  HessianSummary summary;
  summary.kind = HessianKind::Diagonal;
  summary.dim = static_cast<std::size_t>(design.cols());
  summary.spectrum =
      inv_var * design.array().square().colwise().sum().matrix().transpose();
  summary.ggn_trace = summary.spectrum.sum();
  return summary;
}

HessianSummary ggn_classification(const Matrix& features,
                                  const LastLayer& layer, HessianKind kind,
                                  std::size_t full_dim_cap) {
  const Eigen::MatrixXd design = augment_features(features);
  const Matrix logits_m = forward_last_layer(features, layer);
  Eigen::MatrixXd logits(logits_m.rows(), logits_m.cols());
  for (std::size_t i = 0; i < logits_m.rows(); ++i)
    for (std::size_t j = 0; j < logits_m.cols(); ++j)
      logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          logits_m.at(i, j);
  return ggn_classification_raw(design, logits, kind, full_dim_cap);
}

HessianSummary ggn_regression(const Matrix& features, double sigma,
                              HessianKind kind) {
  return ggn_regression_raw(augment_features(features), sigma, kind);
}

MarglikTerms log_marginal_likelihood(double loglik_train,
                                     const Eigen::VectorXd& theta, double delta,
                                     const HessianSummary& hessian) {
  if (delta <= 0.0)
    throw ConfigError("log_marginal_likelihood: delta must be positive");
  const auto dim = static_cast<double>(hessian.dim);
  MarglikTerms terms;
  terms.loglik = loglik_train;
  terms.complexity = 0.5 * hessian.logdet(delta) - 0.5 * dim * std::log(delta) +
                     0.5 * delta * theta.squaredNorm();
  terms.log_marglik = terms.loglik - terms.complexity;
  if (!std::isfinite(terms.log_marglik))
    throw NumericalError("non-finite log marginal likelihood (complexity " +
                         std::to_string(terms.complexity) + ")");
  return terms;
}

namespace {

double split_loglik(const SplitData& split, const LastLayer& layer,
                    const TaskSpec& task, std::optional<double> sigma) {
  const Matrix out = forward_last_layer(split.features, layer);
  if (task.kind == TaskKind::Classification)
    return -nll_classification(softmax_logits(out), split.targets);
  const double s = sigma ? *sigma
                         : (task.sigma_obs
                                ? *task.sigma_obs
                                : throw ConfigError("sigma unresolved"));
  return -nll_regression(out, split.targets, s);
}

}  // namespace

double train_loglik(const ModelDump& dump, std::optional<double> sigma) {
  if (dump.train.features.rows() == 0)
    throw EmptyInputError("train split empty");
  return split_loglik(dump.train, dump.last_layer, dump.task, sigma);
}

double test_loglik(const ModelDump& dump, std::optional<double> sigma) {
  if (dump.test.features.rows() == 0) throw EmptyInputError("test split empty");
  return split_loglik(dump.test, dump.last_layer, dump.task, sigma);
}

LaplaceResult optimize_prior_precision(const ModelDump& dump,
                                       const LaplaceConfig& config) {
  if (dump.train.features.rows() == 0)
    throw EmptyInputError("optimize_prior_precision: train split empty");

  const std::vector<double> deltas =
      config.delta_fixed ? std::vector<double>{*config.delta_fixed}
                         : config.delta_grid;
  if (deltas.empty()) throw ConfigError("empty delta grid");

  const bool regression = dump.task.kind == TaskKind::Regression;
  std::vector<std::optional<double>> sigmas;
  if (regression && !dump.task.sigma_obs) {
    if (config.sigma_grid.empty())
      throw ConfigError("regression sigma unresolved and sigma grid empty");
    for (double s : config.sigma_grid) sigmas.emplace_back(s);
  } else {
    sigmas.emplace_back(regression ? dump.task.sigma_obs : std::nullopt);
  }

  const Eigen::VectorXd theta = flatten_last_layer(dump.last_layer);

  LaplaceResult result;
  bool have_best = false;
  double best = 0.0;
  std::size_t finite_points = 0;

  for (const auto& sigma : sigmas) {
    HessianSummary hessian =
        regression
            ? ggn_regression(dump.train.features, *sigma, config.hessian_kind)
            : ggn_classification(dump.train.features, dump.last_layer,
                                 config.hessian_kind, config.full_dim_cap);
    const double loglik = train_loglik(dump, sigma);
    for (double delta : deltas) {
      GridPoint point;
      point.delta = delta;
      point.sigma = sigma;
      try {
        const auto terms = log_marginal_likelihood(loglik, theta, delta, hessian);
        point.log_marglik = terms.log_marglik;
        ++finite_points;
        if (!have_best || terms.log_marglik > best) {
          have_best = true;
          best = terms.log_marglik;
          result.loglik_train = terms.loglik;
          result.complexity = terms.complexity;
          result.log_marglik = terms.log_marglik;
          result.delta_star = delta;
          result.sigma_star = sigma;
        }
      } catch (const NumericalError&) {
        point.log_marglik = -std::numeric_limits<double>::infinity();
      }
      result.grid_values.push_back(point);
    }
  }
  if (finite_points == 0)
    throw NumericalError("no finite log marginal likelihood on the grid");
  result.loglik_test = test_loglik(dump, result.sigma_star);
  return result;
}

}  // namespace equisel
