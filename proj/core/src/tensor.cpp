#include "tenet/tensor.hpp"

#include <cstdint>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace tenet {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

NonFiniteError::NonFiniteError(std::string op, std::int64_t step)
    : std::runtime_error("non-finite value produced by '" + op + "' at step " +
                         std::to_string(step)),
      op_(std::move(op)),
      step_(step) {}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw DimensionError("tensor of shape " + to_string(shape_) + " needs " +
                         std::to_string(numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index rank mismatch for shape " + to_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw DimensionError("index out of range for shape " + to_string(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

float& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

std::span<const float> Tensor::row(std::size_t i) const {
  const std::size_t stride = data_.size() / dim(0);
  if (i >= shape_[0]) throw DimensionError("row index out of range");
  return std::span<const float>(data_).subspan(i * stride, stride);
}

std::span<float> Tensor::row(std::size_t i) {
  const std::size_t stride = data_.size() / dim(0);
  if (i >= shape_[0]) throw DimensionError("row index out of range");
  return std::span<float>(data_).subspan(i * stride, stride);
}

Tensor Tensor::slice(std::size_t i) const {
  auto r = row(i);
  return Tensor(Shape(shape_.begin() + 1, shape_.end()),
                std::vector<float>(r.begin(), r.end()));
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  // A float is NaN or Inf exactly when its exponent bits are all ones. The
  // branch-free scan vectorises; this runs on every recorded op.
  constexpr std::uint32_t kExponent = 0x7f800000u;
  std::uint32_t bad = 0;
  const std::size_t n = data_.size();
  const float* p = data_.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, p + i, sizeof(bits));
    bad |= static_cast<std::uint32_t>((bits & kExponent) == kExponent);
  }
  return bad == 0;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.raw(), b.raw(), a.size() * sizeof(float)) == 0;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no tensors");
  Shape shape = items.front().shape();
  std::vector<float> data;
  data.reserve(items.size() * items.front().size());
  for (const Tensor& t : items) {
    if (t.shape() != shape) throw DimensionError("stack: shape mismatch");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace tenet
