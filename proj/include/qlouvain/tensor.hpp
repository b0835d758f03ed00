#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qlouvain/error.hpp"

namespace qlouvain::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
      throw ShapeError("tensor of shape " + qlouvain::nn::to_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)) + " values, got " + std::to_string(values_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Element (r, c) of a rank-2 tensor.
  double& at(std::size_t r, std::size_t c) { return values_.at(r * shape_.at(1) + c); }
  double at(std::size_t r, std::size_t c) const { return values_.at(r * shape_.at(1) + c); }

  Tensor reshaped(Shape shape) const {
    if (element_count(shape) != values_.size()) {
      throw ShapeError("cannot reshape " + qlouvain::nn::to_string(shape_) + " to " + qlouvain::nn::to_string(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Stacks equally shaped tensors along a new leading batch axis.
inline Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack an empty list of tensors");
  const auto& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> values;
  values.reserve(element_count(shape));
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw ShapeError("cannot stack " + to_string(t.shape()) + " with " + to_string(inner));
    }
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace qlouvain::nn
