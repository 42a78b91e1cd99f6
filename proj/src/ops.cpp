// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/ops.hpp"

#include <string>

#include "vidmdl/error.hpp"

namespace vidmdl {

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return;
  std::string msg = std::string(op) + ": shape mismatch " + shape_str(sa) + " vs " + shape_str(sb);
  if (sa.size() != sb.size()) {
    msg += " (rank " + std::to_string(sa.size()) + " vs " + std::to_string(sb.size()) + ")";
  } else {
    msg += " at axes";
    for (std::size_t i = 0; i < sa.size(); ++i) {
      if (sa[i] != sb[i]) msg += " " + std::to_string(i);
    }
  }
  throw DimensionError(msg);
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return tape.record("add", {a, b}, out, [a = a, b = b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return tape.record("sub", {a, b}, out, [a = a, b = b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return tape.record("mul", {a, b}, out, [a = a, b = b, out]() mutable {
    auto g = out.grad();
    auto x = a.data();
    auto y = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x[i];
  return tape.record("scale", {a}, out, [a = a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  // NaN passes through so a diverged network cannot produce a finite loss.
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] <= 0.0 ? 0.0 : x[i];
  return tape.record("relu", {a}, out, [a = a, out]() mutable {
    auto g = out.grad();
    auto x = a.data();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  return tape.record("sum", {a}, out, [a = a, out]() mutable {
    double g = out.grad()[0];
    for (double& ga : a.grad()) ga += g;
  });
}

Tensor weighted_sum(Tape& tape, const Tensor& a, const std::vector<double>& weights) {
  if (static_cast<std::int64_t>(weights.size()) != a.numel()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor of shape " +
                         shape_str(a.shape()));
  }
  double s = 0.0;
  auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  Tensor out = Tensor::scalar(s);
  return tape.record("weighted_sum", {a}, out, [a = a, out, weights]() mutable {
    double g = out.grad()[0];
    auto ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * weights[i];
  });
}

}  // namespace vidmdl
