// equisel — uncertainty-aware selection among exported models.
//
// Subcommands: synth, evaluate, rank, laplace-grid, validate.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "equisel/report.hpp"
#include "equisel/synthetic.hpp"

namespace fs = std::filesystem;
using namespace equisel;

namespace {

std::vector<double> parse_grid(const std::string& text) {
  // "min,max,points"
  std::stringstream ss(text);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, ',')) parts.push_back(part);
  if (parts.size() != 3)
    throw ConfigError("grid spec must be min,max,points: '" + text + "'");
  try {
    const double lo = std::stod(parts[0]);
    const double hi = std::stod(parts[1]);
    const auto points = static_cast<std::size_t>(std::stoul(parts[2]));
    return LaplaceConfig::log_grid(lo, hi, points);
  } catch (const std::logic_error&) {
    throw ConfigError("bad grid spec '" + text + "'");
  }
}

struct LaplaceFlags {
  std::string hessian = "full";
  std::string delta_grid;
  std::string sigma_grid;
  double delta_fixed = 0.0;
  bool has_delta_fixed = false;

  LaplaceConfig to_config() const {
    LaplaceConfig config = LaplaceConfig::defaults();
    if (hessian == "full") config.hessian_kind = HessianKind::Full;
    else if (hessian == "diag") config.hessian_kind = HessianKind::Diagonal;
    else throw ConfigError("--hessian must be full or diag");
    if (!delta_grid.empty()) config.delta_grid = parse_grid(delta_grid);
    if (!sigma_grid.empty()) config.sigma_grid = parse_grid(sigma_grid);
    if (has_delta_fixed) {
      if (delta_fixed <= 0.0) throw ConfigError("--delta-fixed must be positive");
      config.delta_fixed = delta_fixed;
    }
    return config;
  }
};

void add_laplace_flags(CLI::App* cmd, LaplaceFlags& flags) {
  cmd->add_option("--hessian", flags.hessian, "Hessian kind: full|diag");
  cmd->add_option("--delta-grid", flags.delta_grid,
                  "prior precision grid as min,max,points");
  cmd->add_option("--sigma-grid", flags.sigma_grid,
                  "observation noise grid as min,max,points (regression)");
  cmd->add_option("--delta-fixed", flags.delta_fixed,
                  "fixed prior precision, skips the grid")
      ->each([&](const std::string&) { flags.has_delta_fixed = true; });
}

int run_synth(const PointCloudTask& task, const std::vector<std::string>& models,
              std::uint64_t train_seed, std::size_t epochs,
              const std::string& out_dir) {
  const RawDataset data = generate_task(task);
  for (const auto& name : models) {
    ToyModelSpec spec;
    spec.variant = parse_variant(name);
    spec.epochs = epochs;
    spec.train_seed = train_seed;
    TrainedToyModel model = init_toy_model(spec, task);
    const TrainStats stats = train_toy_model(model, data.train, task);
    const ModelDump dump = export_dump(model, data, task);
    const fs::path dir = fs::path(out_dir) / variant_name(spec.variant);
    write_dump(dump, dir);
    std::printf("%-12s loss %.4f -> %.4f  dump %s\n",
                variant_name(spec.variant).c_str(), stats.initial_loss,
                stats.final_loss, dir.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-aware model selection toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate and train toy model dumps");
  std::string task_name = "shapes-cls";
  std::string mode_name = "aligned";
  std::string models_arg = "inv,equi,aug,plain";
  PointCloudTask task;
  std::uint64_t train_seed = 0;
  std::size_t epochs = 200;
  std::string synth_out = "dumps";
  synth->add_option("--task", task_name, "shapes-cls|radius-reg");
  synth->add_option("--mode", mode_name, "aligned|rotated");
  synth->add_option("--models", models_arg, "comma list of inv,equi,aug,plain");
  synth->add_option("--classes", task.num_classes, "number of shape classes");
  synth->add_option("--n-train", task.n_train);
  synth->add_option("--n-cal", task.n_cal);
  synth->add_option("--n-test", task.n_test);
  synth->add_option("--points", task.points_per_cloud, "points per cloud");
  synth->add_option("--noise", task.noise_scale, "jitter scale");
  synth->add_option("--seed", task.seed, "data seed");
  synth->add_option("--train-seed", train_seed);
  synth->add_option("--epochs", epochs);
  synth->add_option("--out", synth_out, "output directory");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "evaluate one model dump");
  std::string eval_dump, eval_out;
  ConformalConfig cp_config;
  LaplaceFlags eval_laplace;
  evaluate->add_option("--dump", eval_dump)->required();
  evaluate->add_option("--alpha", cp_config.alpha, "miscoverage level");
  evaluate->add_option("--resamples", cp_config.resamples);
  evaluate->add_option("--seed", cp_config.seed);
  add_laplace_flags(evaluate, eval_laplace);
  evaluate->add_option("--out", eval_out, "evaluation JSON output")->required();

  // rank
  auto* rank = app.add_subcommand("rank", "rank models across evaluations");
  std::vector<std::string> eval_files;
  std::string error_metric = "accuracy";
  std::string rank_out;
  rank->add_option("--evals", eval_files, "evaluation JSON files")->required();
  rank->add_option("--error-metric", error_metric, "accuracy|mae");
  rank->add_option("--out", rank_out, "ranking report output")->required();

  // laplace-grid
  auto* grid = app.add_subcommand("laplace-grid",
                                  "prior precision grid trace only");
  std::string grid_dump, grid_out;
  LaplaceFlags grid_laplace;
  grid->add_option("--dump", grid_dump)->required();
  add_laplace_flags(grid, grid_laplace);
  grid->add_option("--out", grid_out, "grid trace CSV output")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "validate a dump directory");
  std::string validate_dump;
  validate->add_option("--dump", validate_dump)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (task_name == "shapes-cls") task.kind = SyntheticKind::ShapeClassification;
      else if (task_name == "radius-reg") task.kind = SyntheticKind::InvariantRegression;
      else throw ConfigError("--task must be shapes-cls or radius-reg");
      if (mode_name == "aligned") task.mode = OrientationMode::Aligned;
      else if (mode_name == "rotated") task.mode = OrientationMode::Rotated;
      else throw ConfigError("--mode must be aligned or rotated");
      std::vector<std::string> models;
      std::stringstream ss(models_arg);
      std::string name;
      while (std::getline(ss, name, ',')) models.push_back(name);
      return run_synth(task, models, train_seed, epochs, synth_out);
    }
    if (evaluate->parsed()) {
      const ModelDump dump = load_dump(eval_dump);
      const ModelEvaluation eval =
          evaluate_dump(dump, cp_config, eval_laplace.to_config());
      write_evaluation(eval, eval_out);
      std::cout << render_evaluation_text(eval);
      return 0;
    }
    if (rank->parsed()) {
      std::vector<ModelEvaluation> evals;
      for (const auto& file : eval_files) evals.push_back(read_evaluation(file));
      const RankingReport report = rank_models(evals, error_metric);
      const std::string text =
          render_table_text(evals) + "\n" + render_ranking_text(report);
      write_text_file(text, rank_out);
      std::cout << text;
      return 0;
    }
    if (grid->parsed()) {
      const ModelDump dump = load_dump(grid_dump);
      ModelEvaluation eval;
      eval.model_name = dump.model_name;
      eval.laplace = optimize_prior_precision(dump, grid_laplace.to_config());
      write_text_file(render_grid_csv({eval}), grid_out);
      std::printf("delta_star %.6g  log_marglik %.4f\n", eval.laplace.delta_star,
                  eval.laplace.log_marglik);
      return 0;
    }
    if (validate->parsed()) {
      const ModelDump dump = load_dump(validate_dump);
      std::printf("ok: %s (%s), d=%zu, splits %zu/%zu/%zu\n",
                  dump.model_name.c_str(), constraint_tag_name(dump).c_str(),
                  dump.last_layer.weights.cols(), dump.train.features.rows(),
                  dump.calibration.features.rows(), dump.test.features.rows());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
