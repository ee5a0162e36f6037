#include "equisel/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "equisel/rng.hpp"

namespace equisel {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kDistanceQuantiles = 10;
constexpr std::size_t kInvariantDim = kDistanceQuantiles + 3;
}  // namespace

GroupElement GroupElement::compose(const GroupElement& other) const {
  double a = std::fmod(angle + other.angle, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return GroupElement{a};
}

PointCloud apply_rotation(const GroupElement& g, const PointCloud& cloud) {
  const double c = std::cos(g.angle);
  const double s = std::sin(g.angle);
  PointCloud out;
  out.xs.resize(cloud.size());
  out.ys.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.xs[i] = c * cloud.xs[i] - s * cloud.ys[i];
    out.ys[i] = s * cloud.xs[i] + c * cloud.ys[i];
  }
  return out;
}

double radius_of_gyration(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n == 0) return 0.0;
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += cloud.xs[i];
    cy += cloud.ys[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = cloud.xs[i] - cx;
    const double dy = cloud.ys[i] - cy;
    sq += dx * dx + dy * dy;
  }
  return std::sqrt(sq / static_cast<double>(n));
}

namespace {

PointCloud polygon_cloud(std::size_t num_vertices, std::size_t points,
                         double noise_scale, Rng& rng) {
  PointCloud cloud;
  cloud.xs.resize(points);
  cloud.ys.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const std::size_t v = i % num_vertices;
    const double theta =
        2.0 * kPi * static_cast<double>(v) / static_cast<double>(num_vertices);
    cloud.xs[i] = std::cos(theta) + noise_scale * rng.next_gaussian();
    cloud.ys[i] = std::sin(theta) + noise_scale * rng.next_gaussian();
  }
  return cloud;
}

PointCloud blob_cloud(std::size_t points, Rng& rng) {
  // axis-aligned anisotropic Gaussian; Rotated mode adds the rotation
  const double sx = 0.3 + 1.2 * rng.next_double();
  const double sy = 0.3 + 1.2 * rng.next_double();
  PointCloud cloud;
  cloud.xs.resize(points);
  cloud.ys.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    cloud.xs[i] = sx * rng.next_gaussian();
    cloud.ys[i] = sy * rng.next_gaussian();
  }
  return cloud;
}

RawSplit generate_split(const PointCloudTask& task, std::size_t count,
                        Rng& rng) {
  RawSplit split;
  split.clouds.reserve(count);
  split.targets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PointCloud cloud;
    double target;
    if (task.kind == SyntheticKind::ShapeClassification) {
      const std::size_t label = i % task.num_classes;
      cloud = polygon_cloud(label + 3, task.points_per_cloud, task.noise_scale,
                            rng);
      target = static_cast<double>(label);
    } else {
      cloud = blob_cloud(task.points_per_cloud, rng);
      target = radius_of_gyration(cloud);
    }
    if (task.mode == OrientationMode::Rotated)
      cloud = apply_rotation(GroupElement{2.0 * kPi * rng.next_double()}, cloud);
    split.clouds.push_back(std::move(cloud));
    split.targets.push_back(target);
  }
  return split;
}

}  // namespace

RawDataset generate_task(const PointCloudTask& task) {
  if (task.n_train == 0 || task.n_cal == 0 || task.n_test == 0)
    throw ConfigError("generate_task: split sizes must be >= 1");
  if (task.kind == SyntheticKind::ShapeClassification &&
      task.points_per_cloud < 3)
    throw ConfigError("generate_task: classification needs >= 3 points per cloud");
  Rng rng(task.seed);
  RawDataset data;
  data.train = generate_split(task, task.n_train, rng);
  data.calibration = generate_split(task, task.n_cal, rng);
  data.test = generate_split(task, task.n_test, rng);
  return data;
}

Variant parse_variant(const std::string& s) {
  if (s == "inv" || s == "invariant") return Variant::Invariant;
  if (s == "equi" || s == "equivariant") return Variant::Equivariant;
  if (s == "aug" || s == "augment") return Variant::Augment;
  if (s == "plain") return Variant::Plain;
  throw ConfigError("unknown model variant '" + s + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Invariant: return "invariant";
    case Variant::Equivariant: return "equivariant";
    case Variant::Augment: return "augment";
    case Variant::Plain: return "plain";
  }
  return "unknown";
}

ConstraintTag variant_tag(Variant v) {
  switch (v) {
    case Variant::Invariant: return ConstraintTag::Invariant;
    case Variant::Equivariant: return ConstraintTag::Equivariant;
    case Variant::Augment: return ConstraintTag::Augment;
    case Variant::Plain: return ConstraintTag::Plain;
  }
  return ConstraintTag::Other;
}

namespace {

struct CenteredCloud {
  std::vector<double> xs, ys;
};

CenteredCloud center(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += cloud.xs[i];
    cy += cloud.ys[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  CenteredCloud out;
  out.xs.resize(n);
  out.ys.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.xs[i] = cloud.xs[i] - cx;
    out.ys[i] = cloud.ys[i] - cy;
  }
  return out;
}

void append_invariant_block(const CenteredCloud& c, std::vector<double>& out) {
  const std::size_t n = c.xs.size();
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = c.xs[i] - c.xs[j];
      const double dy = c.ys[i] - c.ys[j];
      dists.push_back(std::sqrt(dx * dx + dy * dy));
    }
  std::sort(dists.begin(), dists.end());
  for (std::size_t q = 0; q < kDistanceQuantiles; ++q) {
    if (dists.empty()) {
      out.push_back(0.0);
      continue;
    }
    const std::size_t idx = (q * (dists.size() - 1)) / (kDistanceQuantiles - 1);
    out.push_back(dists[idx]);
  }
  double sq = 0.0, norm_sum = 0.0;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(c.xs[i] * c.xs[i] + c.ys[i] * c.ys[i]);
    norm_sum += norms[i];
    sq += norms[i] * norms[i];
  }
  const double rog = std::sqrt(sq / static_cast<double>(n));
  const double mean = norm_sum / static_cast<double>(n);
  double var = 0.0;
  for (double v : norms) var += (v - mean) * (v - mean);
  out.push_back(rog);
  out.push_back(mean);
  out.push_back(std::sqrt(var / static_cast<double>(n)));
}

// Dominant eigenvector of the 2x2 covariance of the centered points, with
// the sign fixed so the largest-norm point projects nonnegatively.
// Degenerate clouds fall back to the x-axis (zero-angle convention).
void principal_axis(const CenteredCloud& c, double& ux, double& uy) {
  const std::size_t n = c.xs.size();
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += c.xs[i] * c.xs[i];
    sxy += c.xs[i] * c.ys[i];
    syy += c.ys[i] * c.ys[i];
  }
  const double tr = sxx + syy;
  if (tr < 1e-24) {
    ux = 1.0;
    uy = 0.0;
    return;
  }
  const double half_gap = 0.5 * (sxx - syy);
  const double lam = 0.5 * tr + std::sqrt(half_gap * half_gap + sxy * sxy);
  // eigenvector for the larger eigenvalue
  double vx = sxy, vy = lam - sxx;
  if (vx * vx + vy * vy < 1e-24 * tr) {
    vx = lam - syy;
    vy = sxy;
  }
  if (vx * vx + vy * vy < 1e-24 * tr) {
    vx = 1.0;
    vy = 0.0;
  }
  const double norm = std::sqrt(vx * vx + vy * vy);
  ux = vx / norm;
  uy = vy / norm;
  std::size_t imax = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sq = c.xs[i] * c.xs[i] + c.ys[i] * c.ys[i];
    if (sq > best) {
      best = sq;
      imax = i;
    }
  }
  if (c.xs[imax] * ux + c.ys[imax] * uy < 0.0) {
    ux = -ux;
    uy = -uy;
  }
}

}  // namespace

std::size_t featurize_dim(Variant variant, std::size_t points_per_cloud) {
  switch (variant) {
    case Variant::Plain:
    case Variant::Augment:
      return 2 * points_per_cloud;
    case Variant::Invariant:
      return kInvariantDim;
    case Variant::Equivariant:
      return 2 * points_per_cloud + kInvariantDim;
  }
  return 0;
}

std::vector<double> featurize(Variant variant, const PointCloud& cloud,
                              std::size_t points_per_cloud) {
  if (cloud.size() != points_per_cloud)
    throw ValidationError("featurize: unexpected cloud size");
  const CenteredCloud c = center(cloud);
  std::vector<double> out;
  out.reserve(featurize_dim(variant, points_per_cloud));

  if (variant == Variant::Plain || variant == Variant::Augment) {
    for (std::size_t i = 0; i < c.xs.size(); ++i) {
      out.push_back(c.xs[i]);
      out.push_back(c.ys[i]);
    }
    return out;
  }

  if (variant == Variant::Equivariant) {
    double ux, uy;
    principal_axis(c, ux, uy);
    const double px = -uy, py = ux;  // positively oriented perpendicular
    std::vector<std::pair<double, double>> pairs(c.xs.size());
    for (std::size_t i = 0; i < c.xs.size(); ++i) {
      const double norm = std::sqrt(c.xs[i] * c.xs[i] + c.ys[i] * c.ys[i]);
      const double along = c.xs[i] * ux + c.ys[i] * uy;
      const double across = c.xs[i] * px + c.ys[i] * py;
      const double rel_angle = (norm > 1e-12) ? std::atan2(across, along) : 0.0;
      pairs[i] = {norm, rel_angle};
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [norm, rel_angle] : pairs) {
      out.push_back(norm);
      out.push_back(rel_angle);
    }
  }

  append_invariant_block(c, out);
  return out;
}

// ---------------------------------------------------------------------------
// toy MLP

namespace {

std::size_t output_dim_for(const PointCloudTask& task) {
  return task.kind == SyntheticKind::ShapeClassification ? task.num_classes : 1;
}

void affine(const std::vector<double>& w, const std::vector<double>& b,
            const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t rows = b.size();
  const std::size_t cols = in.size();
  out.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

void tanh_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::tanh(x);
}

struct ForwardCache {
  std::vector<double> a1, a2, out;
};

void forward(const TrainedToyModel& m, const std::vector<double>& input,
             ForwardCache& cache) {
  affine(m.w1, m.b1, input, cache.a1);
  tanh_inplace(cache.a1);
  affine(m.w2, m.b2, cache.a1, cache.a2);
  tanh_inplace(cache.a2);
  affine(m.w3, m.b3, cache.a2, cache.out);
}

struct Grads {
  std::vector<double> w1, b1, w2, b2, w3, b3;

  void zero_like(const TrainedToyModel& m) {
    w1.assign(m.w1.size(), 0.0);
    b1.assign(m.b1.size(), 0.0);
    w2.assign(m.w2.size(), 0.0);
    b2.assign(m.b2.size(), 0.0);
    w3.assign(m.w3.size(), 0.0);
    b3.assign(m.b3.size(), 0.0);
  }
};

// Loss per sample: softmax cross-entropy or 0.5 squared error. Returns
// the loss; accumulates parameter gradients when grads != nullptr.
double backward_sample(const TrainedToyModel& m, const std::vector<double>& input,
                       double target, const PointCloudTask& task,
                       ForwardCache& cache, Grads* grads) {
  forward(m, input, cache);
  const std::size_t out_dim = cache.out.size();

  double loss;
  std::vector<double> dout(out_dim);
  if (task.kind == SyntheticKind::ShapeClassification) {
    const auto y = static_cast<std::size_t>(target);
    double max = cache.out[0];
    for (double v : cache.out) max = std::max(max, v);
    double sum = 0.0;
    for (std::size_t k = 0; k < out_dim; ++k) sum += std::exp(cache.out[k] - max);
    const double log_sum = std::log(sum) + max;
    loss = log_sum - cache.out[y];
    for (std::size_t k = 0; k < out_dim; ++k)
      dout[k] = std::exp(cache.out[k] - log_sum) - (k == y ? 1.0 : 0.0);
  } else {
    const double r = cache.out[0] - target;
    loss = 0.5 * r * r;
    dout[0] = r;
  }
  if (!grads) return loss;

  const std::size_t f = cache.a2.size();
  const std::size_t h = cache.a1.size();
  const std::size_t in_dim = input.size();

  std::vector<double> da2(f, 0.0);
  for (std::size_t k = 0; k < out_dim; ++k) {
    grads->b3[k] += dout[k];
    for (std::size_t j = 0; j < f; ++j) {
      grads->w3[k * f + j] += dout[k] * cache.a2[j];
      da2[j] += dout[k] * m.w3[k * f + j];
    }
  }
  std::vector<double> da1(h, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    const double dz = da2[j] * (1.0 - cache.a2[j] * cache.a2[j]);
    grads->b2[j] += dz;
    for (std::size_t i = 0; i < h; ++i) {
      grads->w2[j * h + i] += dz * cache.a1[i];
      da1[i] += dz * m.w2[j * h + i];
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    const double dz = da1[i] * (1.0 - cache.a1[i] * cache.a1[i]);
    grads->b1[i] += dz;
    for (std::size_t j = 0; j < in_dim; ++j)
      grads->w1[i * in_dim + j] += dz * input[j];
  }
  return loss;
}

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                 AdamState& state, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

std::vector<double> TrainedToyModel::feature_map(const PointCloud& cloud) const {
  const auto input = featurize(spec.variant, cloud, points_per_cloud);
  ForwardCache cache;
  forward(*this, input, cache);
  return cache.a2;
}

std::vector<double> TrainedToyModel::predict(const PointCloud& cloud) const {
  const auto input = featurize(spec.variant, cloud, points_per_cloud);
  ForwardCache cache;
  forward(*this, input, cache);
  return cache.out;
}

LastLayer TrainedToyModel::last_layer() const {
  LastLayer layer;
  layer.weights = Matrix::from_f64(output_dim, spec.feature_dim, w3);
  std::vector<double> bias = b3;
  layer.bias = Matrix::from_f64(output_dim, 1, std::move(bias));
  return layer;
}

TrainedToyModel init_toy_model(const ToyModelSpec& spec,
                               const PointCloudTask& task) {
  TrainedToyModel m;
  m.spec = spec;
  m.points_per_cloud = task.points_per_cloud;
  m.input_dim = featurize_dim(spec.variant, task.points_per_cloud);
  m.output_dim = output_dim_for(task);

  Rng rng(spec.train_seed);
  auto init_layer = [&](std::vector<double>& w, std::vector<double>& b,
                        std::size_t out, std::size_t in) {
    const double scale = std::sqrt(1.0 / static_cast<double>(in));
    w.resize(out * in);
    for (double& x : w) x = scale * rng.next_gaussian();
    b.assign(out, 0.0);
  };
  init_layer(m.w1, m.b1, spec.hidden_dim, m.input_dim);
  init_layer(m.w2, m.b2, spec.feature_dim, spec.hidden_dim);
  init_layer(m.w3, m.b3, m.output_dim, spec.feature_dim);
  return m;
}

double batch_loss_and_grads(const TrainedToyModel& model,
                            const std::vector<std::vector<double>>& inputs,
                            const std::vector<double>& targets,
                            const PointCloudTask& task,
                            std::vector<double>* grads) {
  if (inputs.empty()) throw EmptyInputError("batch_loss_and_grads: empty batch");
  ForwardCache cache;
  Grads g;
  if (grads) g.zero_like(model);
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    loss += backward_sample(model, inputs[i], targets[i], task, cache,
                            grads ? &g : nullptr);
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  loss *= inv_n;
  if (grads) {
    grads->clear();
    for (const auto* part : {&g.w1, &g.b1, &g.w2, &g.b2, &g.w3, &g.b3})
      for (double v : *part) grads->push_back(v * inv_n);
  }
  return loss;
}

std::vector<double> flatten_params(const TrainedToyModel& model) {
  std::vector<double> flat;
  for (const auto* part :
       {&model.w1, &model.b1, &model.w2, &model.b2, &model.w3, &model.b3})
    flat.insert(flat.end(), part->begin(), part->end());
  return flat;
}

void unflatten_params(TrainedToyModel& model, const std::vector<double>& flat) {
  std::size_t off = 0;
  for (auto* part :
       {&model.w1, &model.b1, &model.w2, &model.b2, &model.w3, &model.b3}) {
    std::copy(flat.begin() + off, flat.begin() + off + part->size(),
              part->begin());
    off += part->size();
  }
  if (off != flat.size())
    throw ValidationError("unflatten_params: size mismatch");
}

TrainStats train_toy_model(TrainedToyModel& model, const RawSplit& train_data,
                           const PointCloudTask& task) {
  if (train_data.clouds.empty())
    throw EmptyInputError("train_toy_model: empty train data");
  const std::size_t n = train_data.clouds.size();
  constexpr std::size_t kBatch = 32;
  const Variant variant = model.spec.variant;

  std::vector<std::vector<double>> base_inputs(n);
  for (std::size_t i = 0; i < n; ++i)
    base_inputs[i] =
        featurize(variant, train_data.clouds[i], task.points_per_cloud);

  TrainStats stats;
  stats.initial_loss =
      batch_loss_and_grads(model, base_inputs, train_data.targets, task, nullptr);

  Rng rng(mix_seed(model.spec.train_seed, 0x7261696eULL));
  AdamState adam_w1, adam_b1, adam_w2, adam_b2, adam_w3, adam_b3;
  adam_w1.init(model.w1.size());
  adam_b1.init(model.b1.size());
  adam_w2.init(model.w2.size());
  adam_b2.init(model.b2.size());
  adam_w3.init(model.w3.size());
  adam_b3.init(model.b3.size());

  std::vector<std::vector<double>> epoch_inputs;
  for (std::size_t epoch = 0; epoch < model.spec.epochs; ++epoch) {
    const std::vector<std::vector<double>>* inputs = &base_inputs;
    if (variant == Variant::Augment) {
      epoch_inputs.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const GroupElement g{2.0 * kPi * rng.next_double()};
        epoch_inputs[i] =
            featurize(variant, apply_rotation(g, train_data.clouds[i]),
                      task.points_per_cloud);
      }
      inputs = &epoch_inputs;
    }

    const auto order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += kBatch) {
      const std::size_t end = std::min(start + kBatch, n);
      std::vector<std::vector<double>> batch_in;
      std::vector<double> batch_y;
      batch_in.reserve(end - start);
      batch_y.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch_in.push_back((*inputs)[order[i]]);
        batch_y.push_back(train_data.targets[order[i]]);
      }
      std::vector<double> grads;
      const double loss =
          batch_loss_and_grads(model, batch_in, batch_y, task, &grads);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));

      std::size_t off = 0;
      auto slice = [&](std::size_t count) {
        std::vector<double> part(grads.begin() + off, grads.begin() + off + count);
        off += count;
        return part;
      };
      adam_update(model.w1, slice(model.w1.size()), adam_w1,
                  model.spec.learning_rate);
      adam_update(model.b1, slice(model.b1.size()), adam_b1,
                  model.spec.learning_rate);
      adam_update(model.w2, slice(model.w2.size()), adam_w2,
                  model.spec.learning_rate);
      adam_update(model.b2, slice(model.b2.size()), adam_b2,
                  model.spec.learning_rate);
      adam_update(model.w3, slice(model.w3.size()), adam_w3,
                  model.spec.learning_rate);
      adam_update(model.b3, slice(model.b3.size()), adam_b3,
                  model.spec.learning_rate);
    }
  }

  stats.final_loss =
      batch_loss_and_grads(model, base_inputs, train_data.targets, task, nullptr);
  return stats;
}

ModelDump export_dump(const TrainedToyModel& model, const RawDataset& data,
                      const PointCloudTask& task) {
  ModelDump dump;
  dump.model_name = variant_name(model.spec.variant);
  dump.constraint_tag = variant_tag(model.spec.variant);
  dump.task = task.kind == SyntheticKind::ShapeClassification
                  ? TaskSpec::classification(task.num_classes)
                  : TaskSpec::regression();
  dump.last_layer = model.last_layer();

  auto export_split = [&](const RawSplit& split) {
    SplitData out;
    const std::size_t n = split.clouds.size();
    std::vector<double> features;
    features.reserve(n * model.spec.feature_dim);
    for (const auto& cloud : split.clouds) {
      const auto f = model.feature_map(cloud);
      features.insert(features.end(), f.begin(), f.end());
    }
    out.features = Matrix::from_f64(n, model.spec.feature_dim, std::move(features));
    if (task.kind == SyntheticKind::ShapeClassification) {
      std::vector<std::int64_t> labels(n);
      for (std::size_t i = 0; i < n; ++i)
        labels[i] = static_cast<std::int64_t>(split.targets[i]);
      out.targets = Matrix::from_i64(n, 1, std::move(labels));
    } else {
      out.targets = Matrix::from_f64(n, 1, split.targets);
    }
    return out;
  };
  dump.train = export_split(data.train);
  dump.calibration = export_split(data.calibration);
  dump.test = export_split(data.test);
  validate_dump(dump);
  return dump;
}

}  // namespace equisel
