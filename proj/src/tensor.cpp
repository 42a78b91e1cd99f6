// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vidmdl/error.hpp"

namespace vidmdl {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("tensor: non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel_of(shape);
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = numel_of(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw DimensionError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({1}, value, requires_grad); }

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("tensor: use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = impl().shape;
  if (axis >= s.size()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl().data.size()); }

std::span<double> Tensor::data() { return impl().data; }
std::span<const double> Tensor::data() const { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("tensor: item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool on) { impl().requires_grad = on; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<double> Tensor::grad() {
  auto& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

std::span<const double> Tensor::grad() const { return impl().grad; }

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::drop_grad() {
  auto& g = impl().grad;
  g.clear();
  g.shrink_to_fit();
}

Tensor Tensor::clone() const {
  const auto& im = impl();
  auto copy = std::make_shared<Impl>();
  copy->shape = im.shape;
  copy->data = im.data;
  copy->requires_grad = im.requires_grad;
  return Tensor(std::move(copy));
}

void Tensor::check_finite(const std::string& context) const {
  const auto& d = impl().data;
  auto it = std::find_if(d.begin(), d.end(), [](double v) { return !std::isfinite(v); });
  if (it != d.end()) {
    throw NumericError(context + ": non-finite value " + std::to_string(*it) + " at flat index " +
                       std::to_string(it - d.begin()));
  }
}

}  // namespace vidmdl
