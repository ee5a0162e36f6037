#pragma once

#include <map>
#include <string>

#include "equisel/matrix.hpp"
#include "equisel/tensor_io.hpp"

namespace equisel {

// n x K matrix of class probabilities; rows sum to 1 within 1e-9.
struct ProbMatrix {
  Matrix probs;

  static ProbMatrix checked(Matrix probs);
  std::size_t rows() const { return probs.rows(); }
  std::size_t num_classes() const { return probs.cols(); }
};

struct MetricReport {
  std::string split_name;
  std::map<std::string, double> metrics;
};

// features * weights^T + bias, broadcast per row.
Matrix forward_last_layer(const Matrix& features, const LastLayer& layer);

// Row-wise softmax with max-subtraction.
ProbMatrix softmax_logits(const Matrix& logits);

double accuracy(const ProbMatrix& probs, const Matrix& targets);
double mae(const Matrix& predictions, const Matrix& targets);

// Sum over samples (not mean), matching the log-likelihood scale used in
// reports. Probabilities clamped at 1e-15 before the log.
double nll_classification(const ProbMatrix& probs, const Matrix& targets);
double nll_regression(const Matrix& predictions, const Matrix& targets,
                      double sigma);
double nll(const ProbMatrix* probs, const Matrix* predictions,
           const Matrix& targets, const TaskSpec& task);

// Equal-width bins over (0,1], left-open right-closed; confidence is the
// max class probability; empty bins contribute zero.
double ece(const ProbMatrix& probs, const Matrix& targets,
           std::size_t num_bins = 15);

// Multiclass Brier: mean over samples of the squared distance between the
// probability row and the one-hot target.
double brier(const ProbMatrix& probs, const Matrix& targets);

std::size_t argmax_row(const ProbMatrix& probs, std::size_t row);

MetricReport classification_report(const std::string& split_name,
                                   const ProbMatrix& probs,
                                   const Matrix& targets,
                                   std::size_t ece_bins = 15);
MetricReport regression_report(const std::string& split_name,
                               const Matrix& predictions,
                               const Matrix& targets, double sigma);

}  // namespace equisel
