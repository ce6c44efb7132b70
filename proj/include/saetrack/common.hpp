#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace saetrack {

template <typename T, int Rows = Eigen::Dynamic>
using Vector = Eigen::Matrix<T, Rows, 1>;

template <typename T, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using Matrix = Eigen::Matrix<T, Rows, Cols>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

// Error families. Each maps onto one CLI exit code (see ErrorKind).
enum class ErrorKind {
  kArgument,       // bad call arguments, usage
  kIo,             // io, format, corruption, lookup
  kNumeric,        // non-finite values, training divergence
  kConfiguration,  // inconsistent configuration or schedule
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::kArgument, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::kArgument, "shape: " + w) {}
};
struct SelectionError : Error {
  explicit SelectionError(const std::string& w) : Error(ErrorKind::kArgument, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::kIo, "format: " + w) {}
};
struct CorruptionError : Error {
  explicit CorruptionError(const std::string& w) : Error(ErrorKind::kIo, "corrupt: " + w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kIo, "io: " + w) {}
};
struct LookupError : Error {
  explicit LookupError(const std::string& w) : Error(ErrorKind::kIo, "lookup: " + w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, "numeric: " + w) {}
};
struct TrainingError : Error {
  TrainingError(const std::string& w, std::int64_t last_good_step)
      : Error(ErrorKind::kNumeric, "training: " + w), last_good_step(last_good_step) {}
  std::int64_t last_good_step;
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfiguration, "config: " + w) {}
};
struct ScheduleError : Error {
  explicit ScheduleError(const std::string& w) : Error(ErrorKind::kConfiguration, "schedule: " + w) {}
};

}  // namespace saetrack
