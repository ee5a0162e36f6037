#include <doctest.h>

#include <cmath>

#include "equisel/rng.hpp"
#include "equisel/synthetic.hpp"
#include "equisel/tensor_io.hpp"
#include "equisel/metrics.hpp"

using namespace equisel;

namespace {

constexpr double kPi = 3.14159265358979323846;

PointCloud random_cloud(Rng& rng, std::size_t points) {
  PointCloud cloud;
  cloud.xs.resize(points);
  cloud.ys.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    cloud.xs[i] = rng.next_gaussian();
    cloud.ys[i] = 0.5 * rng.next_gaussian() + 0.2 * cloud.xs[i];
  }
  return cloud;
}

double max_feature_diff(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff;
}

PointCloudTask small_regression_task() {
  PointCloudTask task;
  task.kind = SyntheticKind::InvariantRegression;
  task.points_per_cloud = 12;
  task.n_train = 64;
  task.n_cal = 16;
  task.n_test = 16;
  task.seed = 5;
  return task;
}

}  // namespace

TEST_CASE("rotation preserves pairwise distances and composes") {
  Rng rng(1);
  const PointCloud cloud = random_cloud(rng, 8);
  const GroupElement g1{0.7}, g2{2.1};
  const PointCloud r1 = apply_rotation(g1, cloud);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j) {
      const double orig = std::hypot(cloud.xs[i] - cloud.xs[j],
                                     cloud.ys[i] - cloud.ys[j]);
      const double rot = std::hypot(r1.xs[i] - r1.xs[j], r1.ys[i] - r1.ys[j]);
      CHECK(std::abs(orig - rot) < 1e-12);
    }
  const PointCloud lhs = apply_rotation(g1, apply_rotation(g2, cloud));
  const PointCloud rhs = apply_rotation(g1.compose(g2), cloud);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(lhs.xs[i] == doctest::Approx(rhs.xs[i]).epsilon(1e-12));
    CHECK(lhs.ys[i] == doctest::Approx(rhs.ys[i]).epsilon(1e-12));
  }
}

TEST_CASE("radius of gyration") {
  PointCloud square;
  square.xs = {0.5, -0.5, 0.5, -0.5};
  square.ys = {0.5, 0.5, -0.5, -0.5};
  CHECK(radius_of_gyration(square) ==
        doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));

  Rng rng(2);
  const PointCloud cloud = random_cloud(rng, 10);
  const PointCloud rotated = apply_rotation(GroupElement{1.234}, cloud);
  CHECK(std::abs(radius_of_gyration(cloud) - radius_of_gyration(rotated)) <
        1e-12);
}

TEST_CASE("generate_task determinism and validity") {
  const PointCloudTask task = small_regression_task();
  const RawDataset a = generate_task(task);
  const RawDataset b = generate_task(task);
  CHECK(a.train.clouds.size() == 64);
  for (std::size_t i = 0; i < a.train.clouds.size(); ++i) {
    CHECK(a.train.targets[i] == b.train.targets[i]);
    CHECK(a.train.clouds[i].xs == b.train.clouds[i].xs);
  }
  // regression target is the radius of gyration
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(a.test.targets[i] ==
          doctest::Approx(radius_of_gyration(a.test.clouds[i])).epsilon(1e-12));
}

TEST_CASE("classification task rejects degenerate cloud size") {
  PointCloudTask task;
  task.kind = SyntheticKind::ShapeClassification;
  task.points_per_cloud = 2;
  CHECK_THROWS_AS(generate_task(task), ConfigError);
}

TEST_CASE("classification labels balanced round-robin") {
  PointCloudTask task;
  task.kind = SyntheticKind::ShapeClassification;
  task.num_classes = 4;
  task.points_per_cloud = 12;
  task.n_train = 16;
  task.n_cal = 8;
  task.n_test = 8;
  const RawDataset data = generate_task(task);
  for (std::size_t i = 0; i < 16; ++i)
    CHECK(data.train.targets[i] == static_cast<double>(i % 4));
}

TEST_CASE("invariant and equivariant featurizations are rotation invariant") {
  Rng rng(3);
  for (int iter = 0; iter < 100; ++iter) {
    const PointCloud cloud = random_cloud(rng, 10);
    const GroupElement g{2.0 * kPi * rng.next_double()};
    const PointCloud rotated = apply_rotation(g, cloud);
    for (Variant v : {Variant::Invariant, Variant::Equivariant}) {
      const auto fa = featurize(v, cloud, 10);
      const auto fb = featurize(v, rotated, 10);
      CHECK(max_feature_diff(fa, fb) < 1e-9);
    }
  }
}

TEST_CASE("plain featurization changes under rotation") {
  Rng rng(4);
  const PointCloud cloud = random_cloud(rng, 10);
  const PointCloud rotated = apply_rotation(GroupElement{kPi / 2.0}, cloud);
  const auto fa = featurize(Variant::Plain, cloud, 10);
  const auto fb = featurize(Variant::Plain, rotated, 10);
  CHECK(max_feature_diff(fa, fb) > 1e-3);
}

TEST_CASE("degenerate cloud falls back to zero-angle convention") {
  PointCloud cloud;
  cloud.xs.assign(6, 1.0);
  cloud.ys.assign(6, -2.0);
  const auto f = featurize(Variant::Equivariant, cloud, 6);
  for (double v : f) CHECK(v == 0.0);
}

TEST_CASE("equivariant features strictly extend the invariant block") {
  CHECK(featurize_dim(Variant::Equivariant, 10) >
        featurize_dim(Variant::Invariant, 10));
  CHECK(featurize_dim(Variant::Plain, 10) == 20);
}

TEST_CASE("gradient check against central finite differences") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);

  PointCloudTask cls_task;
  cls_task.kind = SyntheticKind::ShapeClassification;
  cls_task.num_classes = 3;
  cls_task.points_per_cloud = 12;
  cls_task.n_train = 16;
  cls_task.n_cal = 8;
  cls_task.n_test = 8;
  cls_task.seed = 6;
  const RawDataset cls_data = generate_task(cls_task);

  for (Variant variant : {Variant::Invariant, Variant::Equivariant,
                          Variant::Augment, Variant::Plain}) {
    for (int mode = 0; mode < 2; ++mode) {
      const PointCloudTask& t = mode == 0 ? task : cls_task;
      const RawDataset& d = mode == 0 ? data : cls_data;
      ToyModelSpec spec;
      spec.variant = variant;
      spec.hidden_dim = 8;
      spec.feature_dim = 6;
      spec.train_seed = 13;
      TrainedToyModel model = init_toy_model(spec, t);

      std::vector<std::vector<double>> inputs;
      std::vector<double> targets;
      for (std::size_t i = 0; i < 5; ++i) {
        inputs.push_back(featurize(variant, d.train.clouds[i], t.points_per_cloud));
        targets.push_back(d.train.targets[i]);
      }
      std::vector<double> grads;
      batch_loss_and_grads(model, inputs, targets, t, &grads);

      const auto base = flatten_params(model);
      const double h = 1e-5;
      for (std::size_t p = 0; p < base.size(); ++p) {
        auto plus = base, minus = base;
        plus[p] += h;
        minus[p] -= h;
        TrainedToyModel m2 = model;
        unflatten_params(m2, plus);
        const double fp = batch_loss_and_grads(m2, inputs, targets, t, nullptr);
        unflatten_params(m2, minus);
        const double fm = batch_loss_and_grads(m2, inputs, targets, t, nullptr);
        const double fd = (fp - fm) / (2.0 * h);
        const double scale = std::max({std::abs(grads[p]), std::abs(fd), 1e-6});
        CHECK(std::abs(grads[p] - fd) / scale < 1e-4);
      }
    }
  }
}

TEST_CASE("zero-epoch training is a no-op") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);
  ToyModelSpec spec;
  spec.variant = Variant::Invariant;
  spec.epochs = 0;
  spec.train_seed = 3;
  TrainedToyModel model = init_toy_model(spec, task);
  const auto before = flatten_params(model);
  const auto stats = train_toy_model(model, data.train, task);
  CHECK(flatten_params(model) == before);
  CHECK(stats.initial_loss == stats.final_loss);
}

TEST_CASE("training reduces the loss for every variant") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);
  for (Variant variant : {Variant::Invariant, Variant::Equivariant,
                          Variant::Augment, Variant::Plain}) {
    ToyModelSpec spec;
    spec.variant = variant;
    spec.hidden_dim = 16;
    spec.feature_dim = 8;
    spec.epochs = 50;
    spec.train_seed = 21;
    TrainedToyModel model = init_toy_model(spec, task);
    const auto stats = train_toy_model(model, data.train, task);
    CHECK(stats.final_loss < stats.initial_loss);
  }
}

TEST_CASE("end-to-end model invariance law") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);
  Rng rng(8);

  auto train_variant = [&](Variant variant) {
    ToyModelSpec spec;
    spec.variant = variant;
    spec.hidden_dim = 16;
    spec.feature_dim = 8;
    spec.epochs = 30;
    spec.train_seed = 9;
    TrainedToyModel model = init_toy_model(spec, task);
    train_toy_model(model, data.train, task);
    return model;
  };

  const auto inv = train_variant(Variant::Invariant);
  const auto equi = train_variant(Variant::Equivariant);
  const auto plain = train_variant(Variant::Plain);

  int plain_violations = 0;
  for (int iter = 0; iter < 100; ++iter) {
    const PointCloud cloud = random_cloud(rng, task.points_per_cloud);
    const GroupElement g{2.0 * kPi * rng.next_double()};
    const PointCloud rotated = apply_rotation(g, cloud);
    CHECK(std::abs(inv.predict(cloud)[0] - inv.predict(rotated)[0]) < 1e-9);
    CHECK(std::abs(equi.predict(cloud)[0] - equi.predict(rotated)[0]) < 1e-9);
    if (std::abs(plain.predict(cloud)[0] - plain.predict(rotated)[0]) >= 1e-3)
      ++plain_violations;
  }
  CHECK(plain_violations >= 90);
}

TEST_CASE("export_dump logits match direct model outputs") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);
  ToyModelSpec spec;
  spec.variant = Variant::Invariant;
  spec.hidden_dim = 16;
  spec.feature_dim = 8;
  spec.epochs = 10;
  spec.train_seed = 33;
  TrainedToyModel model = init_toy_model(spec, task);
  train_toy_model(model, data.train, task);
  const ModelDump dump = export_dump(model, data, task);
  CHECK(dump.constraint_tag == ConstraintTag::Invariant);

  const Matrix out = forward_last_layer(dump.test.features, dump.last_layer);
  for (std::size_t i = 0; i < dump.test.features.rows(); ++i) {
    const auto direct = model.predict(data.test.clouds[i]);
    CHECK(out.at(i, 0) == doctest::Approx(direct[0]).epsilon(1e-12));
  }
}

TEST_CASE("invariant dump features identical for rotated copies") {
  const PointCloudTask task = small_regression_task();
  const RawDataset data = generate_task(task);
  ToyModelSpec spec;
  spec.variant = Variant::Invariant;
  spec.hidden_dim = 8;
  spec.feature_dim = 4;
  spec.epochs = 5;
  spec.train_seed = 1;
  TrainedToyModel model = init_toy_model(spec, task);
  train_toy_model(model, data.train, task);

  const PointCloud& cloud = data.test.clouds[0];
  const PointCloud rotated = apply_rotation(GroupElement{0.9}, cloud);
  const auto fa = model.feature_map(cloud);
  const auto fb = model.feature_map(rotated);
  CHECK(max_feature_diff(fa, fb) < 1e-9);
}
