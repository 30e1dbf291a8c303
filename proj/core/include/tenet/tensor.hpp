#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand extents do not satisfy an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file or directory that cannot be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation produces NaN or Inf. Carries the op name and the
/// training step (or -1 outside of training) that produced it.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string op, std::int64_t step);

  const std::string& op() const { return op_; }
  std::int64_t step() const { return step_; }

 private:
  std::string op_;
  std::int64_t step_;
};

/// Dense row-major float32 array. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Multi-index access; the number of indices must equal rank().
  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  /// Contiguous slice along the leading axis: returns element `i` of axis 0.
  Tensor slice(std::size_t i) const;
  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i);

  Tensor reshaped(Shape shape) const;
  void fill(float value);
  bool all_finite() const;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

/// Same shape and identical bit patterns in every element.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Largest absolute elementwise difference; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace tenet
