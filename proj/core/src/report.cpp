#include "equisel/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace equisel {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// shortest round-trippable representation, for CSV determinism
std::string fmt_exact(double v) { return fmt("%.17g", v); }

}  // namespace

std::map<std::string, double> ModelEvaluation::selection_metrics() const {
  std::map<std::string, double> m;
  if (task_kind == TaskKind::Classification) {
    m["accuracy"] = test_metrics.metrics.at("accuracy");
    m["ece"] = test_metrics.metrics.at("ece");
    m["brier"] = test_metrics.metrics.at("brier");
  } else {
    m["mae"] = test_metrics.metrics.at("mae");
  }
  m["nll"] = test_metrics.metrics.at("nll");
  m["conformal_size"] = conformal.mean_size;
  m["log_marglik"] = laplace.log_marglik;
  m["complexity"] = laplace.complexity;
  m["loglik_test"] = laplace.loglik_test;
  return m;
}

bool metric_higher_is_better(const std::string& metric) {
  return metric == "accuracy" || metric == "loglik" ||
         metric == "loglik_test" || metric == "log_marglik";
}

ModelEvaluation evaluate_dump(const ModelDump& dump,
                              const ConformalConfig& conformal_config,
                              const LaplaceConfig& laplace_config) {
  ModelEvaluation eval;
  eval.model_name = dump.model_name;
  eval.constraint_tag = constraint_tag_name(dump);
  eval.task_kind = dump.task.kind;
  eval.laplace = optimize_prior_precision(dump, laplace_config);
  eval.conformal = run_split_cp(dump, conformal_config);

  auto report_split = [&](const SplitData& split, const char* name) {
    const Matrix out = forward_last_layer(split.features, dump.last_layer);
    if (dump.task.kind == TaskKind::Classification)
      return classification_report(name, softmax_logits(out), split.targets);
    const double sigma =
        dump.task.sigma_obs ? *dump.task.sigma_obs : *eval.laplace.sigma_star;
    return regression_report(name, out, split.targets, sigma);
  };
  eval.train_metrics = report_split(dump.train, "train");
  eval.test_metrics = report_split(dump.test, "test");
  return eval;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw InsufficientDataError("spearman: constant ranking");
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman_rho_values(const std::vector<double>& values_a,
                           const std::vector<double>& values_b) {
  if (values_a.size() != values_b.size())
    throw ValidationError("spearman: size mismatch");
  if (values_a.size() < 2)
    throw InsufficientDataError("spearman: need at least 2 items");
  return pearson(average_ranks(values_a), average_ranks(values_b));
}

double spearman_rho(const std::vector<std::string>& rank_a,
                    const std::vector<std::string>& rank_b) {
  if (rank_a.size() != rank_b.size())
    throw ValidationError("spearman: rankings differ in size");
  if (rank_a.size() < 2)
    throw InsufficientDataError("spearman: need at least 2 models");
  std::map<std::string, double> pos_b;
  for (std::size_t i = 0; i < rank_b.size(); ++i)
    pos_b[rank_b[i]] = static_cast<double>(i + 1);
  std::vector<double> a(rank_a.size()), b(rank_a.size());
  for (std::size_t i = 0; i < rank_a.size(); ++i) {
    const auto it = pos_b.find(rank_a[i]);
    if (it == pos_b.end())
      throw ValidationError("spearman: model sets differ ('" + rank_a[i] + "')");
    a[i] = static_cast<double>(i + 1);
    b[i] = it->second;
  }
  return pearson(a, b);
}

RankingReport rank_models(const std::vector<ModelEvaluation>& evaluations,
                          const std::string& error_metric) {
  if (evaluations.size() < 2)
    throw InsufficientDataError("rank_models: need at least 2 evaluations");

  std::vector<std::map<std::string, double>> metrics;
  for (const auto& eval : evaluations) metrics.push_back(eval.selection_metrics());
  for (const auto& m : metrics)
    if (!m.count(error_metric))
      throw ValidationError("rank_models: metric '" + error_metric +
                            "' missing from an evaluation");

  RankingReport report;
  report.error_metric = error_metric;

  auto ordering = [&](const std::string& metric) {
    std::vector<std::size_t> order(evaluations.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const bool higher = metric_higher_is_better(metric);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = metrics[a].at(metric);
      const double vb = metrics[b].at(metric);
      if (va != vb) return higher ? va > vb : va < vb;
      return evaluations[a].model_name < evaluations[b].model_name;
    });
    std::vector<std::string> names;
    for (auto i : order) names.push_back(evaluations[i].model_name);
    return names;
  };

  // value vectors oriented so that smaller = better, for alignment rho
  auto oriented_values = [&](const std::string& metric) {
    std::vector<double> v;
    const double sign = metric_higher_is_better(metric) ? -1.0 : 1.0;
    for (const auto& m : metrics) v.push_back(sign * m.at(metric));
    return v;
  };

  const auto error_values = oriented_values(error_metric);
  for (const auto& [metric, unused] : metrics.front()) {
    (void)unused;
    for (const auto& m : metrics)
      if (!m.count(metric))
        throw ValidationError("rank_models: metric '" + metric +
                              "' missing from an evaluation");
    const auto ranks = ordering(metric);
    report.per_metric_ranks[metric] = ranks;
    report.preferred[metric] = ranks.front();
    if (metric != error_metric) {
      // rank correlation is undefined against a constant vector; such
      // degenerate metrics are simply omitted from the alignment map
      const auto values = oriented_values(metric);
      const auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(),
                           [&](double x) { return x == v.front(); });
      };
      if (!constant(values) && !constant(error_values))
        report.alignment[metric] = spearman_rho_values(values, error_values);
    }
  }

  const auto& error_preferred = report.preferred.at(error_metric);
  for (const auto& [metric, pref] : report.preferred) {
    if (metric == error_metric) continue;
    if (pref != error_preferred)
      report.disagreements.push_back({metric, pref, error_preferred});
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

ordered_json metric_report_to_json(const MetricReport& r) {
  ordered_json j;
  j["split_name"] = r.split_name;
  j["metrics"] = r.metrics;
  return j;
}

MetricReport metric_report_from_json(const ordered_json& j) {
  MetricReport r;
  r.split_name = j.at("split_name").get<std::string>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  return r;
}

}  // namespace

std::string evaluation_to_json(const ModelEvaluation& eval) {
  ordered_json j;
  j["model_name"] = eval.model_name;
  j["constraint_tag"] = eval.constraint_tag;
  j["task_kind"] = eval.task_kind == TaskKind::Classification ? "classification"
                                                              : "regression";
  j["train_metrics"] = metric_report_to_json(eval.train_metrics);
  j["test_metrics"] = metric_report_to_json(eval.test_metrics);

  ordered_json cp;
  cp["coverage"] = eval.conformal.coverage;
  cp["mean_size"] = eval.conformal.mean_size;
  cp["empty_set_rate"] = eval.conformal.empty_set_rate;
  cp["qhat_last"] = eval.conformal.qhat_last;
  ordered_json per_resample = ordered_json::array();
  for (const auto& stat : eval.conformal.per_resample)
    per_resample.push_back({{"coverage", stat.coverage}, {"size", stat.size}});
  cp["per_resample"] = per_resample;
  j["conformal"] = cp;

  ordered_json lp;
  lp["loglik_train"] = eval.laplace.loglik_train;
  lp["complexity"] = eval.laplace.complexity;
  lp["log_marglik"] = eval.laplace.log_marglik;
  lp["delta_star"] = eval.laplace.delta_star;
  if (eval.laplace.sigma_star) lp["sigma_star"] = *eval.laplace.sigma_star;
  lp["loglik_test"] = eval.laplace.loglik_test;
  ordered_json grid = ordered_json::array();
  for (const auto& point : eval.laplace.grid_values) {
    ordered_json g;
    g["delta"] = point.delta;
    if (point.sigma) g["sigma"] = *point.sigma;
    g["log_marglik"] = point.log_marglik;
    grid.push_back(g);
  }
  lp["grid_values"] = grid;
  j["laplace"] = lp;
  return j.dump(2) + "\n";
}

ModelEvaluation evaluation_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("evaluation parse error: " + std::string(e.what()));
  }
  ModelEvaluation eval;
  try {
    eval.model_name = j.at("model_name").get<std::string>();
    eval.constraint_tag = j.at("constraint_tag").get<std::string>();
    eval.task_kind = j.at("task_kind").get<std::string>() == "classification"
                         ? TaskKind::Classification
                         : TaskKind::Regression;
    eval.train_metrics = metric_report_from_json(j.at("train_metrics"));
    eval.test_metrics = metric_report_from_json(j.at("test_metrics"));
    const auto& cp = j.at("conformal");
    eval.conformal.coverage = cp.at("coverage").get<double>();
    eval.conformal.mean_size = cp.at("mean_size").get<double>();
    eval.conformal.empty_set_rate = cp.at("empty_set_rate").get<double>();
    eval.conformal.qhat_last = cp.at("qhat_last").get<double>();
    for (const auto& stat : cp.at("per_resample"))
      eval.conformal.per_resample.push_back(
          {stat.at("coverage").get<double>(), stat.at("size").get<double>()});
    const auto& lp = j.at("laplace");
    eval.laplace.loglik_train = lp.at("loglik_train").get<double>();
    eval.laplace.complexity = lp.at("complexity").get<double>();
    eval.laplace.log_marglik = lp.at("log_marglik").get<double>();
    eval.laplace.delta_star = lp.at("delta_star").get<double>();
    if (lp.contains("sigma_star"))
      eval.laplace.sigma_star = lp.at("sigma_star").get<double>();
    eval.laplace.loglik_test = lp.at("loglik_test").get<double>();
    for (const auto& g : lp.at("grid_values")) {
      GridPoint point;
      point.delta = g.at("delta").get<double>();
      if (g.contains("sigma")) point.sigma = g.at("sigma").get<double>();
      point.log_marglik = g.at("log_marglik").get<double>();
      eval.laplace.grid_values.push_back(point);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("evaluation field error: " + std::string(e.what()));
  }
  return eval;
}

void write_evaluation(const ModelEvaluation& eval,
                      const std::filesystem::path& path) {
  write_text_file(evaluation_to_json(eval), path);
}

ModelEvaluation read_evaluation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return evaluation_from_json(buf.str());
}

// ---------------------------------------------------------------------------
// renderers

std::string format_metric(const std::string& name, double value) {
  if (name == "mae") return fmt("%.4f", value);
  if (name == "loglik" || name == "loglik_train" || name == "loglik_test" ||
      name == "complexity" || name == "log_marglik" || name == "nll") {
    if (std::abs(value) >= 100.0) return fmt("%.0f", value);
    return fmt("%.4f", value);
  }
  return fmt("%.4f", value);
}

std::string render_evaluation_text(const ModelEvaluation& eval) {
  std::ostringstream out;
  out << "model: " << eval.model_name << " (" << eval.constraint_tag << ")\n";
  out << "task: "
      << (eval.task_kind == TaskKind::Classification ? "classification"
                                                     : "regression")
      << "\n";
  for (const auto* report : {&eval.train_metrics, &eval.test_metrics}) {
    out << "[" << report->split_name << "]\n";
    for (const auto& [name, value] : report->metrics)
      out << "  " << name << " = " << format_metric(name, value) << "\n";
  }
  out << "[conformal]\n";
  out << "  coverage = " << fmt("%.4f", eval.conformal.coverage) << "\n";
  out << "  mean_size = " << fmt("%.4f", eval.conformal.mean_size) << "\n";
  if (eval.task_kind == TaskKind::Classification)
    out << "  empty_set_rate = " << fmt("%.4f", eval.conformal.empty_set_rate)
        << "\n";
  out << "  qhat_last = " << fmt("%.6f", eval.conformal.qhat_last) << "\n";
  out << "[laplace]\n";
  out << "  loglik_train = "
      << format_metric("loglik_train", eval.laplace.loglik_train) << "\n";
  out << "  complexity = "
      << format_metric("complexity", eval.laplace.complexity) << "\n";
  out << "  log_marglik = "
      << format_metric("log_marglik", eval.laplace.log_marglik) << "\n";
  out << "  delta_star = " << fmt_exact(eval.laplace.delta_star) << "\n";
  if (eval.laplace.sigma_star)
    out << "  sigma_star = " << fmt_exact(*eval.laplace.sigma_star) << "\n";
  out << "  loglik_test = "
      << format_metric("loglik_test", eval.laplace.loglik_test) << "\n";
  return out.str();
}

std::string render_table_text(const std::vector<ModelEvaluation>& evals) {
  std::ostringstream out;
  const bool regression =
      !evals.empty() && evals.front().task_kind == TaskKind::Regression;
  const char* error_name = regression ? "MAE" : "Accuracy";
  out << "Model        " << error_name
      << "      LogLik   Complexity  Log-MargLik  Test-" << error_name
      << " Test-LogLik  CP-Size\n";
  for (const auto& eval : evals) {
    const std::string error_metric = regression ? "mae" : "accuracy";
    char line[256];
    std::snprintf(
        line, sizeof(line), "%-12s %-9s %-8s %-11s %-12s %-9s %-11s %s\n",
        eval.model_name.c_str(),
        format_metric(error_metric, eval.train_metrics.metrics.at(error_metric))
            .c_str(),
        format_metric("loglik", eval.laplace.loglik_train).c_str(),
        format_metric("complexity", eval.laplace.complexity).c_str(),
        format_metric("log_marglik", eval.laplace.log_marglik).c_str(),
        format_metric(error_metric, eval.test_metrics.metrics.at(error_metric))
            .c_str(),
        format_metric("loglik_test", eval.laplace.loglik_test).c_str(),
        fmt("%.4f", eval.conformal.mean_size).c_str());
    out << line;
  }
  return out.str();
}

std::string render_ranking_text(const RankingReport& report) {
  std::ostringstream out;
  out << "error metric: " << report.error_metric << "\n";
  out << "alignment: Spearman rank correlation against the " << report.error_metric
      << " ranking\n";
  for (const auto& [metric, ranks] : report.per_metric_ranks) {
    out << metric << ": ";
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      if (i) out << " > ";
      out << ranks[i];
    }
    if (report.alignment.count(metric))
      out << "  (rho = " << fmt("%.4f", report.alignment.at(metric)) << ")";
    out << "\n";
  }
  out << "preferred by " << report.error_metric << ": "
      << report.preferred.at(report.error_metric) << "\n";
  if (report.disagreements.empty()) {
    out << "disagreements: none\n";
  } else {
    out << "disagreements:\n";
    for (const auto& d : report.disagreements)
      out << "  " << d.metric << " prefers " << d.preferred_by_metric
          << " but " << report.error_metric << " prefers "
          << d.preferred_by_error << "\n";
  }
  return out.str();
}

std::string render_grid_csv(const std::vector<ModelEvaluation>& evals) {
  std::ostringstream out;
  out << "model,delta,sigma,log_marglik\n";
  for (const auto& eval : evals)
    for (const auto& point : eval.laplace.grid_values) {
      out << eval.model_name << "," << fmt_exact(point.delta) << ",";
      if (point.sigma) out << fmt_exact(*point.sigma);
      out << "," << fmt_exact(point.log_marglik) << "\n";
    }
  return out.str();
}

std::string render_alignment_csv(const std::vector<ModelEvaluation>& evals,
                                 const std::string& error_metric) {
  std::ostringstream out;
  out << "model," << error_metric << ",metric,value\n";
  for (const auto& eval : evals) {
    const auto metrics = eval.selection_metrics();
    const double error_value = metrics.at(error_metric);
    for (const auto& [name, value] : metrics) {
      if (name == error_metric) continue;
      out << eval.model_name << "," << fmt_exact(error_value) << "," << name
          << "," << fmt_exact(value) << "\n";
    }
  }
  return out.str();
}

void write_text_file(const std::string& content,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace equisel
