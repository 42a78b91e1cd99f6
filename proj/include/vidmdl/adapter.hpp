// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain-specific adapter blocks: conv -> BN -> (+ input) -> ReLU, followed by
// a layer norm shared by all domains at the same insertion location.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidmdl/nn.hpp"

namespace vidmdl {

struct ChannelSpec;

enum class AdapterKind {
  Framewise2D,  // 3x3 per frame
  Full3D,       // 3x3x3
  SeparableST,  // 3x3 per frame, then 3-tap temporal
};

std::string to_string(AdapterKind kind);
// Accepts "2d", "framewise2d", "3d", "full3d", "(2+1)d", "2+1d", "separable", ...
AdapterKind parse_adapter_kind(const std::string& text);

constexpr std::int64_t kAdapterSpatialKernel = 3;
constexpr std::int64_t kAdapterTemporalKernel = 3;

// Closed-form trainable parameter count of one block with C channels:
// conv weights (no bias) plus BN gamma and beta.
std::int64_t adapter_param_count(AdapterKind kind, std::int64_t channels);

struct AdapterBlock {
  AdapterKind kind = AdapterKind::SeparableST;
  std::int64_t channels = 0;
  // One kernel, or (spatial, temporal) for SeparableST.
  std::vector<ConvKernel> convs;
  BatchNorm bn;

  static AdapterBlock make(AdapterKind kind, std::int64_t channels);
  // He-uniform conv weights; BN gamma and beta left at `gamma_init` / 0.
  void initialize(std::mt19937_64& rng, double gamma_init = 0.0);

  std::int64_t count_params() const;
  // Trainable tensors with their local names ("spatial.weight", "bn.gamma", ...).
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// conv(f) for the block's kind; for SeparableST this is temporal(framewise(f)).
Tensor adapter_conv(Tape& tape, const Tensor& f, const AdapterBlock& blk);

// g = LN(ReLU(BN(conv(f)) + f))
Tensor adapter_forward(Tape& tape, const Tensor& f, AdapterBlock& blk, const LayerNorm& ln, Mode mode);

// One domain's adapters, keyed by insertion location (1-based).
struct AdapterBank {
  int domain_id = 0;
  std::map<int, AdapterBlock> blocks;

  std::int64_t count_params() const;
};

// The domain-independent layer norm after each active insertion location.
struct SharedPostNorm {
  std::map<int, LayerNorm> norms;

  static SharedPostNorm make(const ChannelSpec& channels, const std::set<int>& locations);
  void set_pass_through(bool on);
  std::int64_t count_params() const;
};

// Locations are 1-based and must lie in [1, channels.locations()].
AdapterBank build_bank(int domain_id, const ChannelSpec& channels, AdapterKind kind, const std::set<int>& locations,
                       std::uint64_t seed, double gamma_init = 0.0);

}  // namespace vidmdl
