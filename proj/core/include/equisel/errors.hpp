#pragma once

#include <stdexcept>
#include <string>

namespace equisel {

// Exit-code convention shared with the CLI:
//   2 = validation / config problems, 3 = numerical problems, 4 = I/O.
class Error : public std::runtime_error {
 public:
  Error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

struct ValidationError : Error {
  explicit ValidationError(std::string msg) : Error(std::move(msg), 2) {}
};

struct FormatError : Error {
  explicit FormatError(std::string msg) : Error(std::move(msg), 2) {}
};

struct TruncationError : Error {
  explicit TruncationError(std::string msg) : Error(std::move(msg), 2) {}
};

struct EmptyInputError : Error {
  explicit EmptyInputError(std::string msg) : Error(std::move(msg), 2) {}
};

struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(std::move(msg), 2) {}
};

struct InsufficientDataError : Error {
  explicit InsufficientDataError(std::string msg) : Error(std::move(msg), 2) {}
};

struct NumericalError : Error {
  explicit NumericalError(std::string msg) : Error(std::move(msg), 3) {}
};

struct TrainingError : Error {
  explicit TrainingError(std::string msg) : Error(std::move(msg), 3) {}
};

struct CapacityError : Error {
  explicit CapacityError(std::string msg) : Error(std::move(msg), 3) {}
};

struct IoError : Error {
  explicit IoError(std::string msg) : Error(std::move(msg), 4) {}
};

}  // namespace equisel
