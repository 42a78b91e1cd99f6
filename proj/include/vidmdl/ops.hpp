// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Elementwise and reduction primitives. No broadcasting: operands of binary
// ops must have identical shapes.

#pragma once

#include <string_view>
#include <vector>

#include "vidmdl/tape.hpp"
#include "vidmdl/tensor.hpp"

namespace vidmdl {

// Throws DimensionError naming `op` and every axis where the shapes differ.
void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);
// Scalar (shape {1}) sum of all elements.
Tensor sum(Tape& tape, const Tensor& a);
// Scalar sum of a * w for a fixed (non-differentiated) weight vector. Used to
// reduce a tensor-valued function to a scalar for gradient checks.
Tensor weighted_sum(Tape& tape, const Tensor& a, const std::vector<double>& weights);

}  // namespace vidmdl
