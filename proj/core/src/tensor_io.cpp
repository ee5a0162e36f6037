#include "equisel/tensor_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace equisel {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<char, 4> kMagic = {'E', 'Q', 'M', 'X'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kHeaderBytes = 24;

void put_u64_le(std::uint64_t v, char* out) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64_le(const char* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

std::string relpath(const std::string& stem) { return stem + ".eqmx"; }

}  // namespace

std::size_t write_matrix(const Matrix& m, std::ostream& out) {
  char header[kHeaderBytes] = {};
  std::memcpy(header, kMagic.data(), 4);
  header[4] = static_cast<char>(kVersion);
  header[5] = static_cast<char>(m.dtype());
  put_u64_le(m.rows(), header + 8);
  put_u64_le(m.cols(), header + 16);
  out.write(header, kHeaderBytes);

  std::size_t written = kHeaderBytes;
  char buf[8];
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    if (m.dtype() == Dtype::F64) {
      bits = std::bit_cast<std::uint64_t>(m.f64()[i]);
    } else {
      bits = std::bit_cast<std::uint64_t>(m.i64()[i]);
    }
    put_u64_le(bits, buf);
    out.write(buf, 8);
    written += 8;
  }
  if (!out)
    throw IoError("matrix write failed at byte offset " + std::to_string(written));
  return written;
}

Matrix read_matrix(std::istream& in) {
  char header[kHeaderBytes];
  in.read(header, kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes))
    throw TruncationError("matrix header truncated: expected 24 bytes, got " +
                          std::to_string(in.gcount()));
  if (std::memcmp(header, kMagic.data(), 4) != 0)
    throw FormatError("bad matrix magic (expected EQMX)");
  if (static_cast<std::uint8_t>(header[4]) != kVersion)
    throw FormatError("unsupported matrix format version " +
                      std::to_string(static_cast<int>(header[4])));
  auto dtype_byte = static_cast<std::uint8_t>(header[5]);
  if (dtype_byte != 0x01 && dtype_byte != 0x02)
    throw FormatError("unknown dtype byte " + std::to_string(dtype_byte));
  const auto dtype = static_cast<Dtype>(dtype_byte);
  const std::uint64_t rows = get_u64_le(header + 8);
  const std::uint64_t cols = get_u64_le(header + 16);
  const std::uint64_t count = rows * cols;

  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  if (dtype == Dtype::F64) f64.reserve(count);
  else i64.reserve(count);

  char buf[8];
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(buf, 8);
    if (in.gcount() != 8)
      throw TruncationError("matrix payload truncated: expected " +
                            std::to_string(count) + " scalars, got " +
                            std::to_string(i));
    const std::uint64_t bits = get_u64_le(buf);
    if (dtype == Dtype::F64) {
      const double v = std::bit_cast<double>(bits);
      if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " +
                              std::to_string(i / cols) + ", col " +
                              std::to_string(i % cols));
      f64.push_back(v);
    } else {
      i64.push_back(std::bit_cast<std::int64_t>(bits));
    }
  }
  if (dtype == Dtype::F64)
    return Matrix::from_f64(rows, cols, std::move(f64));
  return Matrix::from_i64(rows, cols, std::move(i64));
}

std::size_t write_matrix_file(const Matrix& m, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return write_matrix(m, out);
}

Matrix read_matrix_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return read_matrix(in);
}

std::string constraint_tag_name(const ModelDump& dump) {
  switch (dump.constraint_tag) {
    case ConstraintTag::Invariant: return "invariant";
    case ConstraintTag::Equivariant: return "equivariant";
    case ConstraintTag::Augment: return "augment";
    case ConstraintTag::Plain: return "plain";
    case ConstraintTag::Other: return dump.constraint_other;
  }
  return "unknown";
}

ConstraintTag parse_constraint_tag(const std::string& s) {
  if (s == "invariant") return ConstraintTag::Invariant;
  if (s == "equivariant") return ConstraintTag::Equivariant;
  if (s == "augment") return ConstraintTag::Augment;
  if (s == "plain") return ConstraintTag::Plain;
  return ConstraintTag::Other;
}

namespace {

void validate_split(const SplitData& split, const std::string& name,
                    const TaskSpec& task, std::size_t feature_dim) {
  if (split.features.dtype() != Dtype::F64)
    throw ValidationError(name + ".features must be F64");
  if (split.features.cols() != feature_dim)
    throw ValidationError(name + ".features: feature dim mismatch (got " +
                          std::to_string(split.features.cols()) + ", expected " +
                          std::to_string(feature_dim) + ")");
  if (split.targets.cols() != 1)
    throw ValidationError(name + ".targets must have one column");
  if (split.targets.rows() != split.features.rows())
    throw ValidationError(name + ": features/targets row count mismatch");
  if (task.kind == TaskKind::Classification) {
    if (split.targets.dtype() != Dtype::I64)
      throw ValidationError(name + ".targets must be I64 class indices");
    for (std::size_t i = 0; i < split.targets.rows(); ++i) {
      const auto t = split.targets.iat(i, 0);
      if (t < 0 || static_cast<std::size_t>(t) >= task.num_classes)
        throw ValidationError(name + ".targets[" + std::to_string(i) +
                              "]: target out of range (" + std::to_string(t) +
                              " not in [0, " + std::to_string(task.num_classes) +
                              "))");
    }
  } else if (split.targets.dtype() != Dtype::F64) {
    throw ValidationError(name + ".targets must be F64 for regression");
  }
}

}  // namespace

void validate_dump(const ModelDump& dump) {
  const auto& task = dump.task;
  if (task.kind == TaskKind::Classification && task.num_classes < 2)
    throw ValidationError("num_classes must be >= 2");
  if (task.sigma_obs && *task.sigma_obs <= 0)
    throw ValidationError("sigma_obs must be positive");

  const std::size_t d = dump.last_layer.weights.cols();
  const std::size_t out_dim =
      task.kind == TaskKind::Classification ? task.num_classes : 1;
  if (dump.last_layer.weights.rows() != out_dim)
    throw ValidationError("last_layer.weights: expected " +
                          std::to_string(out_dim) + " rows, got " +
                          std::to_string(dump.last_layer.weights.rows()));
  if (dump.last_layer.bias.rows() != out_dim || dump.last_layer.bias.cols() != 1)
    throw ValidationError("last_layer.bias: expected " +
                          std::to_string(out_dim) + "x1");

  validate_split(dump.train, "train", task, d);
  validate_split(dump.calibration, "calibration", task, d);
  validate_split(dump.test, "test", task, d);
}

void write_dump(const ModelDump& dump, const std::filesystem::path& dir) {
  validate_dump(dump);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  ordered_json manifest;
  manifest["schema_version"] = dump.schema_version;
  manifest["model_name"] = dump.model_name;
  manifest["constraint_tag"] = constraint_tag_name(dump);
  ordered_json task;
  if (dump.task.kind == TaskKind::Classification) {
    task["kind"] = "classification";
    task["num_classes"] = dump.task.num_classes;
  } else {
    task["kind"] = "regression";
    if (dump.task.sigma_obs) task["sigma_obs"] = *dump.task.sigma_obs;
  }
  manifest["task"] = task;
  manifest["last_layer"] = {{"weights", relpath("last_layer_weights")},
                            {"bias", relpath("last_layer_bias")}};
  ordered_json splits;
  for (const auto* name : {"train", "calibration", "test"}) {
    splits[name] = {{"features", relpath(std::string(name) + "_features")},
                    {"targets", relpath(std::string(name) + "_targets")}};
  }
  manifest["splits"] = splits;

  {
    std::ofstream out(dir / "manifest");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }
  write_matrix_file(dump.last_layer.weights, dir / relpath("last_layer_weights"));
  write_matrix_file(dump.last_layer.bias, dir / relpath("last_layer_bias"));
  const SplitData* splits_data[3] = {&dump.train, &dump.calibration, &dump.test};
  const char* names[3] = {"train", "calibration", "test"};
  for (int i = 0; i < 3; ++i) {
    write_matrix_file(splits_data[i]->features,
                      dir / relpath(std::string(names[i]) + "_features"));
    write_matrix_file(splits_data[i]->targets,
                      dir / relpath(std::string(names[i]) + "_targets"));
  }
}

ModelDump load_dump(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing manifest in " + dir.string());
  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }

  ModelDump dump;
  try {
    dump.schema_version = manifest.at("schema_version").get<std::size_t>();
    dump.model_name = manifest.at("model_name").get<std::string>();
    const auto tag = manifest.at("constraint_tag").get<std::string>();
    dump.constraint_tag = parse_constraint_tag(tag);
    if (dump.constraint_tag == ConstraintTag::Other) dump.constraint_other = tag;

    const auto& task = manifest.at("task");
    const auto kind = task.at("kind").get<std::string>();
    if (kind == "classification") {
      dump.task = TaskSpec::classification(task.at("num_classes").get<std::size_t>());
    } else if (kind == "regression") {
      dump.task = TaskSpec::regression();
      if (task.contains("sigma_obs"))
        dump.task.sigma_obs = task.at("sigma_obs").get<double>();
    } else {
      throw ValidationError("unknown task.kind '" + kind + "'");
    }

    auto load = [&](const ordered_json& node, const char* field) {
      return read_matrix_file(dir / node.at(field).get<std::string>());
    };
    const auto& ll = manifest.at("last_layer");
    dump.last_layer.weights = load(ll, "weights");
    dump.last_layer.bias = load(ll, "bias");
    const auto& splits = manifest.at("splits");
    SplitData* out[3] = {&dump.train, &dump.calibration, &dump.test};
    const char* names[3] = {"train", "calibration", "test"};
    for (int i = 0; i < 3; ++i) {
      out[i]->features = load(splits.at(names[i]), "features");
      out[i]->targets = load(splits.at(names[i]), "targets");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest field error: " + std::string(e.what()));
  }

  validate_dump(dump);
  return dump;
}

}  // namespace equisel
