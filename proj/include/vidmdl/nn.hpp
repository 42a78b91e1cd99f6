// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Neural-network primitives over clip tensors laid out as (B, T, C, H, W).
// Every op records its backward on the tape it is given.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vidmdl/tape.hpp"
#include "vidmdl/tensor.hpp"

namespace vidmdl {

enum class Mode { Train, Eval };

enum class ConvKind {
  Framewise2D,  // k_t = 1: each frame convolved on its own
  Full3D,       // k_t x k_h x k_w
  Temporal1D,   // k_h = k_w = 1: mixes frames only
  Strided,      // backbone blocks: any odd extents, spatial stride >= 1
};

std::string to_string(ConvKind kind);

// Convolution weights of shape (C_out, C_in, k_t, k_h, k_w). Padding is always
// "same" with zeros (k / 2 on each side); the temporal stride is always 1.
struct ConvKernel {
  ConvKind kind = ConvKind::Full3D;
  std::int64_t out_channels = 0;
  std::int64_t in_channels = 0;
  std::int64_t kt = 1;
  std::int64_t kh = 1;
  std::int64_t kw = 1;
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  Tensor weight;
  Tensor bias;  // undefined when the kernel has no bias

  // Zero weights; validates extents against `kind`.
  static ConvKernel make(ConvKind kind, std::int64_t out_channels, std::int64_t in_channels, std::int64_t kt,
                         std::int64_t kh, std::int64_t kw, bool with_bias = false, std::int64_t stride = 1);

  bool has_bias() const { return bias.defined(); }
  std::int64_t fan_in() const { return in_channels * kt * kh * kw; }
  std::int64_t param_count() const;
};

// Uniform(-b, b) with b = sqrt(6 / fan_in).
void he_uniform(Tensor& weight, std::int64_t fan_in, std::mt19937_64& rng);

// Output spatial extent of a same-padded convolution.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride);

// General same-padded convolution used by every kind below.
Tensor conv3d(Tape& tape, const Tensor& x, const ConvKernel& k);
Tensor conv_framewise_2d(Tape& tape, const Tensor& x, const ConvKernel& k);
Tensor conv_3d(Tape& tape, const Tensor& x, const ConvKernel& k);
Tensor conv_temporal_1d(Tape& tape, const Tensor& x, const ConvKernel& k);

// Per-channel batch normalization over (B, T, H, W).
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNorm make(std::int64_t channels, double gamma_init = 1.0);
  std::int64_t channels() const { return gamma.numel(); }
};

// Train mode normalizes with batch statistics and updates the running
// statistics (unbiased variance); eval mode uses the running statistics.
Tensor batch_norm(Tape& tape, const Tensor& x, BatchNorm& p, Mode mode);

// Normalizes every (sample, frame) slice over (C, H, W); gamma and beta are
// per channel.
struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;
  // Test hook: the op returns its input untouched.
  bool pass_through = false;

  static LayerNorm make(std::int64_t channels);
  std::int64_t channels() const { return gamma.numel(); }
};

Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNorm& p);

// Mean over (T, H, W): (B, T, C, H, W) -> (B, C).
Tensor global_avg_pool(Tape& tape, const Tensor& x);

struct LinearHead {
  Tensor weight;  // (N, F)
  Tensor bias;    // (N)

  static LinearHead make(std::int64_t num_classes, std::int64_t features, std::mt19937_64& rng);
  std::int64_t num_classes() const { return weight.dim(0); }
  std::int64_t features() const { return weight.dim(1); }
};

// logits = pooled * W^T + b
Tensor linear_head(Tape& tape, const Tensor& pooled, const Tensor& weight, const Tensor& bias);

// Mean over the batch of -log softmax(logits)[label]. Max-subtracted.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

// Row-wise softmax of a (B, N) tensor, without recording.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

}  // namespace vidmdl
