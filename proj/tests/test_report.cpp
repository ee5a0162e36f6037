#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "equisel/report.hpp"
#include "equisel/rng.hpp"
#include "equisel/synthetic.hpp"

using namespace equisel;

namespace {

// Minimal hand-built evaluation: only the fields ranking reads.
ModelEvaluation fixture(const std::string& name, double test_mae,
                        double log_marglik) {
  ModelEvaluation eval;
  eval.model_name = name;
  eval.constraint_tag = name;
  eval.task_kind = TaskKind::Regression;
  eval.train_metrics.split_name = "train";
  eval.train_metrics.metrics = {{"mae", test_mae}, {"nll", 0.0},
                                {"nll_per_sample", 0.0}};
  eval.test_metrics.split_name = "test";
  eval.test_metrics.metrics = {{"mae", test_mae}, {"nll", 1.0},
                               {"nll_per_sample", 0.1}};
  eval.conformal.coverage = 0.9;
  eval.conformal.mean_size = test_mae * 4.0;
  eval.conformal.per_resample = {{0.9, test_mae * 4.0}};
  eval.laplace.log_marglik = log_marglik;
  eval.laplace.complexity = 100.0;
  eval.laplace.loglik_train = log_marglik + 100.0;
  eval.laplace.delta_star = 1.0;
  eval.laplace.sigma_star = 1.0;
  eval.laplace.loglik_test = -test_mae;
  eval.laplace.grid_values = {{1.0, 1.0, log_marglik}};
  return eval;
}

std::vector<ModelEvaluation> reference_fixture() {
  // frozen reference values exhibiting a known preference conflict
  return {fixture("Invariant", 0.0613, -102628.0),
          fixture("Equivariant", 0.0522, -102691.0),
          fixture("Augment", 0.0679, -102633.0),
          fixture("Plain", 0.0888, -102664.0)};
}

ModelDump small_trained_dump(Variant variant, OrientationMode mode) {
  PointCloudTask task;
  task.kind = SyntheticKind::InvariantRegression;
  task.points_per_cloud = 12;
  task.mode = mode;
  task.n_train = 64;
  task.n_cal = 32;
  task.n_test = 32;
  task.seed = 11;
  const RawDataset data = generate_task(task);
  ToyModelSpec spec;
  spec.variant = variant;
  spec.hidden_dim = 16;
  spec.feature_dim = 8;
  spec.epochs = 30;
  spec.train_seed = 7;
  TrainedToyModel model = init_toy_model(spec, task);
  train_toy_model(model, data.train, task);
  return export_dump(model, data, task);
}

}  // namespace

TEST_CASE("spearman basics") {
  const std::vector<std::string> abc = {"a", "b", "c"};
  CHECK(spearman_rho(abc, abc) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<std::string> cba = {"c", "b", "a"};
  CHECK(spearman_rho(abc, cba) == doctest::Approx(-1.0).epsilon(1e-12));

  // ranks (1,2,3,4) vs (2,1,3,4): rho = 1 - 6*2/(4*15) = 0.8
  const std::vector<std::string> wxyz = {"w", "x", "y", "z"};
  const std::vector<std::string> xwyz = {"x", "w", "y", "z"};
  CHECK(spearman_rho(wxyz, xwyz) == doctest::Approx(0.8).epsilon(1e-12));

  CHECK_THROWS_AS(spearman_rho({"a"}, {"a"}), InsufficientDataError);
  CHECK_THROWS_AS(spearman_rho(abc, wxyz), ValidationError);
}

TEST_CASE("spearman over values gives ties average ranks") {
  // values (1, 1, 2) vs (3, 3, 4): identical tie structure -> rho 1
  CHECK(spearman_rho_values({1, 1, 2}, {3, 3, 4}) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rank_models reproduces the reference preference inconsistency") {
  const auto evals = reference_fixture();
  const auto report = rank_models(evals, "mae");

  const std::vector<std::string> expected_error = {"Equivariant", "Invariant",
                                                   "Augment", "Plain"};
  CHECK(report.per_metric_ranks.at("mae") == expected_error);
  CHECK(report.preferred.at("log_marglik") == "Invariant");

  bool recorded = false;
  for (const auto& d : report.disagreements)
    if (d.metric == "log_marglik" && d.preferred_by_metric == "Invariant" &&
        d.preferred_by_error == "Equivariant")
      recorded = true;
  CHECK(recorded);
}

TEST_CASE("ranking is a permutation per metric") {
  const auto evals = reference_fixture();
  const auto report = rank_models(evals, "mae");
  for (const auto& [metric, ranks] : report.per_metric_ranks) {
    CHECK(ranks.size() == 4);
    for (const auto& eval : evals)
      CHECK(std::count(ranks.begin(), ranks.end(), eval.model_name) == 1);
  }
}

TEST_CASE("identical orderings give rho 1 and no disagreements") {
  // conformal size tracks mae in the fixture, marglik made consistent
  auto evals = std::vector<ModelEvaluation>{
      fixture("A", 0.1, -10.0), fixture("B", 0.2, -20.0),
      fixture("C", 0.3, -30.0)};
  const auto report = rank_models(evals, "mae");
  CHECK(report.alignment.at("conformal_size") ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.alignment.at("log_marglik") ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.disagreements.empty());
}

TEST_CASE("direction conventions: negated lower-better metric ranks the same") {
  const auto evals = reference_fixture();
  const auto report = rank_models(evals, "mae");
  // mae is lower-better, loglik_test here is -mae and higher-better
  CHECK(report.per_metric_ranks.at("mae") ==
        report.per_metric_ranks.at("loglik_test"));
}

TEST_CASE("metric direction table") {
  CHECK(metric_higher_is_better("accuracy"));
  CHECK(metric_higher_is_better("log_marglik"));
  CHECK(metric_higher_is_better("loglik_test"));
  CHECK(!metric_higher_is_better("mae"));
  CHECK(!metric_higher_is_better("ece"));
  CHECK(!metric_higher_is_better("brier"));
  CHECK(!metric_higher_is_better("conformal_size"));
  CHECK(!metric_higher_is_better("complexity"));
}

TEST_CASE("format_metric follows the table conventions") {
  CHECK(format_metric("mae", 0.05224) == "0.0522");
  CHECK(format_metric("loglik_test", 22940.3) == "22940");
  CHECK(format_metric("log_marglik", -102628.4) == "-102628");
}

TEST_CASE("evaluate_dump fills every field and is deterministic") {
  const ModelDump dump =
      small_trained_dump(Variant::Invariant, OrientationMode::Rotated);
  ConformalConfig cp;
  cp.resamples = 10;
  cp.seed = 3;
  LaplaceConfig lp = LaplaceConfig::defaults();
  lp.delta_grid = LaplaceConfig::log_grid(1e-3, 1e3, 13);
  lp.sigma_grid = LaplaceConfig::log_grid(1e-2, 1e1, 7);

  const auto a = evaluate_dump(dump, cp, lp);
  CHECK(a.test_metrics.metrics.count("mae") == 1);
  CHECK(a.test_metrics.metrics.count("ece") == 0);
  CHECK(std::isfinite(a.laplace.log_marglik));
  CHECK(std::isfinite(a.conformal.mean_size));
  CHECK(a.laplace.sigma_star.has_value());

  const auto b = evaluate_dump(dump, cp, lp);
  CHECK(evaluation_to_json(a) == evaluation_to_json(b));
}

TEST_CASE("evaluation JSON round trip") {
  const auto eval = fixture("roundtrip", 0.25, -42.5);
  const auto restored = evaluation_from_json(evaluation_to_json(eval));
  CHECK(restored.model_name == eval.model_name);
  CHECK(restored.test_metrics.metrics.at("mae") == 0.25);
  CHECK(restored.laplace.log_marglik == -42.5);
  CHECK(restored.conformal.per_resample.size() == 1);
  CHECK(restored.laplace.grid_values.size() == 1);
  CHECK(evaluation_to_json(restored) == evaluation_to_json(eval));
}

TEST_CASE("renderers are deterministic and carry the expected headers") {
  const auto evals = reference_fixture();
  CHECK(render_grid_csv(evals).rfind("model,delta,sigma,log_marglik\n", 0) == 0);
  CHECK(render_grid_csv(evals) == render_grid_csv(evals));
  const auto csv = render_alignment_csv(evals, "mae");
  CHECK(csv.rfind("model,mae,metric,value\n", 0) == 0);
  const auto table = render_table_text(evals);
  CHECK(table.find("0.0522") != std::string::npos);
  CHECK(table.find("-102628") != std::string::npos);
}
