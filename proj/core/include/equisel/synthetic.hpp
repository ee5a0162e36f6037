#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "equisel/tensor_io.hpp"

namespace equisel {

// Planar rotation about the origin; the group action on 2-D point clouds.
struct GroupElement {
  double angle = 0.0;

  GroupElement compose(const GroupElement& other) const;
};

// One sample: 2-D points in generation order.
struct PointCloud {
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const { return xs.size(); }
};

PointCloud apply_rotation(const GroupElement& g, const PointCloud& cloud);

// Root-mean-square distance of points to their centroid.
double radius_of_gyration(const PointCloud& cloud);

enum class SyntheticKind { ShapeClassification, InvariantRegression };
enum class OrientationMode { Aligned, Rotated };

struct PointCloudTask {
  SyntheticKind kind = SyntheticKind::ShapeClassification;
  std::size_t num_classes = 4;
  std::size_t points_per_cloud = 24;
  OrientationMode mode = OrientationMode::Aligned;
  double noise_scale = 0.05;
  std::size_t n_train = 512;
  std::size_t n_cal = 256;
  std::size_t n_test = 256;
  std::uint64_t seed = 0;
};

struct RawSplit {
  std::vector<PointCloud> clouds;
  std::vector<double> targets;  // class index (as double) or regression value
};

struct RawDataset {
  RawSplit train;
  RawSplit calibration;
  RawSplit test;
};

RawDataset generate_task(const PointCloudTask& task);

enum class Variant { Invariant, Equivariant, Augment, Plain };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);
ConstraintTag variant_tag(Variant v);

// Input featurization per model variant. Plain/Augment flatten centered
// coordinates; Invariant uses rotation-invariant statistics; Equivariant
// adds principal-axis-relative geometry on top of the Invariant block.
std::vector<double> featurize(Variant variant, const PointCloud& cloud,
                              std::size_t points_per_cloud);
std::size_t featurize_dim(Variant variant, std::size_t points_per_cloud);

struct ToyModelSpec {
  Variant variant = Variant::Plain;
  std::size_t hidden_dim = 32;
  std::size_t feature_dim = 16;
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t train_seed = 0;
};

// input -> hidden (tanh) -> feature_dim (tanh, exported penultimate
// layer) -> linear head.
struct TrainedToyModel {
  ToyModelSpec spec;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t points_per_cloud = 0;
  // layer parameters, row-major [out x in] with separate bias vectors
  std::vector<double> w1, b1, w2, b2, w3, b3;

  std::vector<double> feature_map(const PointCloud& cloud) const;
  std::vector<double> predict(const PointCloud& cloud) const;
  LastLayer last_layer() const;
};

struct TrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

TrainedToyModel init_toy_model(const ToyModelSpec& spec,
                               const PointCloudTask& task);
TrainStats train_toy_model(TrainedToyModel& model, const RawSplit& train_data,
                           const PointCloudTask& task);

// Mean loss and parameter gradients on a batch; exposed for gradient
// verification against finite differences.
double batch_loss_and_grads(const TrainedToyModel& model,
                            const std::vector<std::vector<double>>& inputs,
                            const std::vector<double>& targets,
                            const PointCloudTask& task,
                            std::vector<double>* grads);

std::vector<double> flatten_params(const TrainedToyModel& model);
void unflatten_params(TrainedToyModel& model, const std::vector<double>& flat);

ModelDump export_dump(const TrainedToyModel& model, const RawDataset& data,
                      const PointCloudTask& task);

}  // namespace equisel
