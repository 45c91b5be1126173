#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metadenoise/errors.hpp"

namespace metadenoise {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with a fixed shape. Construction checks
/// that the extents are positive, match the data length, and that every
/// element is finite.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw NumericError("tensor constructed with a non-finite element");
    }
  }

  static Tensor vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
  }

  static Tensor filled(Shape shape, double value) {
    const std::size_t n = checked_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // 2-D access, row-major.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t checked_size(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (std::size_t e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
    }
    return shape_size(shape);
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

/// Flat parameter vector plus the per-block layout it was produced from.
/// Each block is one weight or bias array of one layer.
struct ParamBlock {
  std::size_t layer = 0;  // index into the network's layer list
  bool is_bias = false;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.length;
    return n;
  }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

class ParamVector {
 public:
  ParamVector() = default;

  ParamVector(ParamLayout layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (layout_.total() != values_.size()) {
      throw DimensionError("parameter layout covers " + std::to_string(layout_.total()) +
                           " values but " + std::to_string(values_.size()) + " were given");
    }
  }

  static ParamVector zeros_like(const ParamVector& other) {
    return ParamVector(other.layout_, std::vector<double>(other.size(), 0.0));
  }

  // Unstructured vector; used by optimizer tests and scalar oracles.
  static ParamVector flat(std::vector<double> values) {
    ParamLayout layout;
    layout.blocks.push_back({0, false, 0, values.size()});
    return ParamVector(std::move(layout), std::move(values));
  }

  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  ParamLayout layout_;
  std::vector<double> values_;
};

inline void require_same_layout(const ParamVector& a, const ParamVector& b, const char* what) {
  if (!a.same_layout(b)) {
    throw DimensionError(std::string(what) + ": parameter layouts differ (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace metadenoise
