#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace avd {

/// Row-major dense matrix; one sample (or prompt) per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input/shape does not satisfy an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

/// Dense n x d matrix of embedding rows. Values are held as f64 regardless
/// of the on-disk dtype; `dtype` remembers how the matrix is serialized.
struct EmbeddingMatrix {
  Matrix data;
  DType dtype = DType::f64;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
};

/// Class index per sample.
using LabelVector = std::vector<int>;

}  // namespace avd
