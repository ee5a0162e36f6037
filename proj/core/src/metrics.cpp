#include "equisel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace equisel {

namespace {
constexpr double kProbClamp = 1e-15;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

ProbMatrix ProbMatrix::checked(Matrix probs) {
  if (probs.dtype() != Dtype::F64)
    throw ValidationError("probabilities must be F64");
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < probs.cols(); ++k) {
      const double p = probs.at(i, k);
      if (p < 0.0 || p > 1.0)
        throw ValidationError("probability out of [0,1] at row " +
                              std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError("probability row " + std::to_string(i) +
                            " does not sum to 1");
  }
  return ProbMatrix{std::move(probs)};
}

Matrix forward_last_layer(const Matrix& features, const LastLayer& layer) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const std::size_t out_dim = layer.weights.rows();
  if (layer.weights.cols() != d)
    throw ValidationError("forward_last_layer: feature dim mismatch");
  if (layer.bias.rows() != out_dim || layer.bias.cols() != 1)
    throw ValidationError("forward_last_layer: bias shape mismatch");

  Matrix out = Matrix::zeros(n, out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < out_dim; ++k) {
      double acc = layer.bias.at(k, 0);
      for (std::size_t j = 0; j < d; ++j)
        acc += features.at(i, j) * layer.weights.at(k, j);
      out.at(i, k) = acc;
    }
  }
  return out;
}

ProbMatrix softmax_logits(const Matrix& logits) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  Matrix probs = Matrix::zeros(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) max = std::max(max, logits.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(logits.at(i, j) - max);
      probs.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) probs.at(i, j) /= sum;
  }
  return ProbMatrix{std::move(probs)};
}

std::size_t argmax_row(const ProbMatrix& probs, std::size_t row) {
  std::size_t best = 0;
  double best_p = probs.probs.at(row, 0);
  for (std::size_t k = 1; k < probs.num_classes(); ++k) {
    if (probs.probs.at(row, k) > best_p) {  // ties keep the lowest index
      best_p = probs.probs.at(row, k);
      best = k;
    }
  }
  return best;
}

double accuracy(const ProbMatrix& probs, const Matrix& targets) {
  const std::size_t n = probs.rows();
  if (n == 0) throw EmptyInputError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax_row(probs, i) == static_cast<std::size_t>(targets.iat(i, 0)))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(n);
}

double mae(const Matrix& predictions, const Matrix& targets) {
  const std::size_t n = predictions.rows();
  if (n == 0) throw EmptyInputError("mae: empty input");
  if (targets.rows() != n) throw ValidationError("mae: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += std::abs(predictions.at(i, 0) - targets.at(i, 0));
  return sum / static_cast<double>(n);
}

double nll_classification(const ProbMatrix& probs, const Matrix& targets) {
  const std::size_t n = probs.rows();
  if (n == 0) throw EmptyInputError("nll: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(targets.iat(i, 0));
    total -= std::log(std::max(probs.probs.at(i, y), kProbClamp));
  }
  return total;
}

double nll_regression(const Matrix& predictions, const Matrix& targets,
                      double sigma) {
  const std::size_t n = predictions.rows();
  if (n == 0) throw EmptyInputError("nll: empty input");
  if (sigma <= 0) throw ConfigError("nll: sigma must be positive");
  const double var = sigma * sigma;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = targets.at(i, 0) - predictions.at(i, 0);
    total -= -0.5 * std::log(kTwoPi * var) - r * r / (2.0 * var);
  }
  return total;
}

double nll(const ProbMatrix* probs, const Matrix* predictions,
           const Matrix& targets, const TaskSpec& task) {
  if (task.kind == TaskKind::Classification) {
    if (!probs) throw ConfigError("nll: probabilities required");
    return nll_classification(*probs, targets);
  }
  if (!predictions) throw ConfigError("nll: predictions required");
  if (!task.sigma_obs) throw ConfigError("nll: sigma unresolved for regression");
  return nll_regression(*predictions, targets, *task.sigma_obs);
}

double ece(const ProbMatrix& probs, const Matrix& targets,
           std::size_t num_bins) {
  const std::size_t n = probs.rows();
  if (n == 0) throw EmptyInputError("ece: empty input");
  if (num_bins < 1) throw ConfigError("ece: num_bins must be >= 1");

  std::vector<double> conf_sum(num_bins, 0.0), acc_sum(num_bins, 0.0);
  std::vector<std::size_t> count(num_bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pred = argmax_row(probs, i);
    const double conf = probs.probs.at(i, pred);
    // bins are (b/B, (b+1)/B]; confidence 0 goes to the first bin
    std::size_t bin;
    if (conf <= 0.0) {
      bin = 0;
    } else {
      bin = static_cast<std::size_t>(std::ceil(conf * num_bins)) - 1;
      bin = std::min(bin, num_bins - 1);
    }
    conf_sum[bin] += conf;
    acc_sum[bin] += pred == static_cast<std::size_t>(targets.iat(i, 0)) ? 1.0 : 0.0;
    ++count[bin];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (count[b] == 0) continue;
    const double w = static_cast<double>(count[b]) / static_cast<double>(n);
    total += w * std::abs(acc_sum[b] / count[b] - conf_sum[b] / count[b]);
  }
  return total;
}

double brier(const ProbMatrix& probs, const Matrix& targets) {
  const std::size_t n = probs.rows();
  if (n == 0) throw EmptyInputError("brier: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(targets.iat(i, 0));
    for (std::size_t k = 0; k < probs.num_classes(); ++k) {
      const double diff = probs.probs.at(i, k) - (k == y ? 1.0 : 0.0);
      total += diff * diff;
    }
  }
  return total / static_cast<double>(n);
}

MetricReport classification_report(const std::string& split_name,
                                   const ProbMatrix& probs,
                                   const Matrix& targets,
                                   std::size_t ece_bins) {
  MetricReport r;
  r.split_name = split_name;
  r.metrics["accuracy"] = accuracy(probs, targets);
  r.metrics["nll"] = nll_classification(probs, targets);
  r.metrics["ece"] = ece(probs, targets, ece_bins);
  r.metrics["brier"] = brier(probs, targets);
  r.metrics["nll_per_sample"] = r.metrics["nll"] / static_cast<double>(probs.rows());
  return r;
}

MetricReport regression_report(const std::string& split_name,
                               const Matrix& predictions,
                               const Matrix& targets, double sigma) {
  MetricReport r;
  r.split_name = split_name;
  r.metrics["mae"] = mae(predictions, targets);
  r.metrics["nll"] = nll_regression(predictions, targets, sigma);
  r.metrics["nll_per_sample"] =
      r.metrics["nll"] / static_cast<double>(predictions.rows());
  return r;
}

}  // namespace equisel
