// SPDX-License-Identifier: Apache-2.0
#include "gesture/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gesture/error.hpp"

namespace gesture {

std::size_t element_count(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Tensor::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

static void check_dims(const Tensor::Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ContractViolation("tensor dimensions must be positive, got " + to_string(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_dims(shape_);
  if (data_.size() != element_count(shape_))
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            to_string(shape_));
}

Tensor Tensor::of(std::initializer_list<double> values) { return Tensor({values.size()}, std::vector<double>(values)); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size())
    throw ContractViolation("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace gesture
