#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "equisel/conformal.hpp"
#include "equisel/laplace.hpp"
#include "equisel/metrics.hpp"

namespace equisel {

struct ModelEvaluation {
  std::string model_name;
  std::string constraint_tag;
  TaskKind task_kind = TaskKind::Classification;
  MetricReport train_metrics;
  MetricReport test_metrics;
  ConformalResult conformal;
  LaplaceResult laplace;

  // Metric name -> value over which models are ranked.
  std::map<std::string, double> selection_metrics() const;
};

// true = larger is better (accuracy, loglik, log_marglik); false = smaller
// is better (mae, nll, ece, brier, conformal_size, complexity).
bool metric_higher_is_better(const std::string& metric);

struct Disagreement {
  std::string metric;
  std::string preferred_by_metric;
  std::string preferred_by_error;
};

struct RankingReport {
  std::string error_metric;
  std::map<std::string, std::vector<std::string>> per_metric_ranks;  // best first
  std::map<std::string, std::string> preferred;
  std::map<std::string, double> alignment;  // Spearman rho vs error ranking
  std::vector<Disagreement> disagreements;
};

ModelEvaluation evaluate_dump(const ModelDump& dump,
                              const ConformalConfig& conformal_config,
                              const LaplaceConfig& laplace_config);

// Spearman rank correlation between two orderings of the same item set.
double spearman_rho(const std::vector<std::string>& rank_a,
                    const std::vector<std::string>& rank_b);

// Variant over raw metric values; equal values receive average ranks.
double spearman_rho_values(const std::vector<double>& values_a,
                           const std::vector<double>& values_b);

RankingReport rank_models(const std::vector<ModelEvaluation>& evaluations,
                          const std::string& error_metric);

// JSON serialization of one evaluation (CLI `evaluate --out` / `rank --evals`).
std::string evaluation_to_json(const ModelEvaluation& eval);
ModelEvaluation evaluation_from_json(const std::string& text);
void write_evaluation(const ModelEvaluation& eval,
                      const std::filesystem::path& path);
ModelEvaluation read_evaluation(const std::filesystem::path& path);

// Renderers; all deterministic given identical inputs.
std::string render_evaluation_text(const ModelEvaluation& eval);
std::string render_table_text(const std::vector<ModelEvaluation>& evals);
std::string render_ranking_text(const RankingReport& report);
// CSV of (model, delta, sigma, log_marglik) grid traces.
std::string render_grid_csv(const std::vector<ModelEvaluation>& evals);
// CSV of (model, error value, metric, value) pairs for external plotting.
std::string render_alignment_csv(const std::vector<ModelEvaluation>& evals,
                                 const std::string& error_metric);

std::string format_metric(const std::string& name, double value);

void write_text_file(const std::string& content,
                     const std::filesystem::path& path);

}  // namespace equisel
