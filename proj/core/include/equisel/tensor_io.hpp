#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "equisel/matrix.hpp"

namespace equisel {

enum class TaskKind { Classification, Regression };

struct TaskSpec {
  TaskKind kind = TaskKind::Classification;
  std::size_t num_classes = 0;            // classification only, >= 2
  std::optional<double> sigma_obs;        // regression only, > 0 when present

  static TaskSpec classification(std::size_t k) {
    TaskSpec t;
    t.kind = TaskKind::Classification;
    t.num_classes = k;
    return t;
  }
  static TaskSpec regression(std::optional<double> sigma = std::nullopt) {
    TaskSpec t;
    t.kind = TaskKind::Regression;
    t.sigma_obs = sigma;
    return t;
  }
};

struct SplitData {
  Matrix features;  // n x d, F64
  Matrix targets;   // n x 1, I64 class indices or F64 values
};

struct LastLayer {
  Matrix weights;  // K x d (classification) or 1 x d (regression)
  Matrix bias;     // K x 1 or 1 x 1
};

enum class ConstraintTag { Invariant, Equivariant, Augment, Plain, Other };

struct ModelDump {
  std::size_t schema_version = 1;
  std::string model_name;
  ConstraintTag constraint_tag = ConstraintTag::Other;
  std::string constraint_other;  // only when constraint_tag == Other
  TaskSpec task;
  LastLayer last_layer;
  SplitData train;
  SplitData calibration;
  SplitData test;
};

std::string constraint_tag_name(const ModelDump& dump);
ConstraintTag parse_constraint_tag(const std::string& s);

// Binary matrix format: magic "EQMX", version 0x01, dtype byte, two zero
// bytes, rows and cols as u64 LE, then rows*cols scalars LE, 8 bytes each.
std::size_t write_matrix(const Matrix& m, std::ostream& out);
Matrix read_matrix(std::istream& in);

std::size_t write_matrix_file(const Matrix& m, const std::filesystem::path& p);
Matrix read_matrix_file(const std::filesystem::path& p);

// Directory bundle: `manifest` (JSON) plus matrix files it references.
void write_dump(const ModelDump& dump, const std::filesystem::path& dir);
ModelDump load_dump(const std::filesystem::path& dir);

// Cross-field checks shared by load_dump and write_dump.
void validate_dump(const ModelDump& dump);

}  // namespace equisel
