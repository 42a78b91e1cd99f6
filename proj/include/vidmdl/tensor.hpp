// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors. Clip activations use axis order (B, T, C, H, W).
//
// A Tensor is a handle: copies share storage, clone() makes a deep copy. This
// is what lets the tape keep intermediates alive and lets parameters be
// referenced from both the network and the optimizer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vidmdl {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  // Allocates a zero-filled buffer on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void drop_grad();

  Tensor clone() const;
  // Same storage identity, i.e. both handles refer to one tensor.
  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }
  const void* id() const noexcept { return impl_.get(); }

  // Throws NumericError if any value is NaN or infinite.
  void check_finite(const std::string& context) const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

}  // namespace vidmdl
