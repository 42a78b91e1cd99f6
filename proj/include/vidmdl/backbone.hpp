// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer-stack backbones: y = M^L(M^{L-1}(... M^1(x))). Layers M^1..M^{L-1}
// keep the temporal extent; M^L (pool + head) is owned per domain by the
// network. Adapters may sit after M^1..M^{L-2}, i.e. at locations 1..L-2.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vidmdl/adapter.hpp"
#include "vidmdl/nn.hpp"

namespace vidmdl {

// Output channels after each insertion location plus the pooled feature width.
// Enough to audit adapter and head budgets without building the network.
struct ChannelSpec {
  std::string name;
  std::vector<std::int64_t> channels;  // channels[l - 1] is C at location l
  std::int64_t feature_width = 0;

  int locations() const { return static_cast<int>(channels.size()); }
  int layer_count() const { return locations() + 2; }
  std::int64_t at(int location) const;
  void validate() const;
};

// X3D-M: stem + res2..res5 outputs (24, 24, 48, 96, 192), conv5 width 2048.
ChannelSpec x3dm_channel_spec();

// One backbone layer: conv -> BN -> ReLU.
struct ConvBlock {
  ConvKernel conv;
  BatchNorm bn;
};

struct LayerStack {
  std::vector<ConvBlock> layers;  // M^1 .. M^{L-1}

  int layer_count() const { return static_cast<int>(layers.size()) + 1; }
  int insertion_locations() const { return static_cast<int>(layers.size()) - 1; }
  std::int64_t feature_width() const { return layers.back().conv.out_channels; }
  ChannelSpec channel_spec(std::string name) const;

  std::int64_t count_params() const;
  // Names like "M3.conv.weight", "M3.bn.gamma".
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool on);
};

struct ToyBackboneConfig {
  std::int64_t in_channels = 3;
  std::vector<std::int64_t> widths{8, 8, 16, 32, 64};  // outputs of M^1..M^5
  std::int64_t feature_width = 128;                    // output of M^6
  std::int64_t temporal_kernel = 1;                    // k_t of M^1..M^5
  std::int64_t spatial_kernel = 3;
};

// M^1 (stride 1), M^2..M^5 (spatial stride 2), M^6 (1x1x1 to feature_width).
LayerStack make_toy_backbone(const ToyBackboneConfig& cfg, std::uint64_t seed);
// Closed-form parameter count of make_toy_backbone(cfg, *).
std::int64_t toy_backbone_param_count(const ToyBackboneConfig& cfg);
ChannelSpec toy_channel_spec(const ToyBackboneConfig& cfg);

Tensor layer_forward(Tape& tape, const Tensor& x, ConvBlock& layer, Mode mode);

// Counts work done by stack_forward; tests use it to see which adapters ran.
struct ForwardProbe {
  int adapters_executed = 0;
  std::vector<int> adapter_locations;
  std::vector<Shape> layer_outputs;
};

struct AdapterRoute {
  AdapterBank* bank = nullptr;
  const SharedPostNorm* post_norms = nullptr;
  std::set<int> active;
};

// Runs M^1 -> [A^1] -> M^2 -> ... -> M^{L-1} -> pool -> head.
Tensor stack_forward(Tape& tape, const Tensor& x, LayerStack& stack, const AdapterRoute& route,
                     const LinearHead& head, Mode mode, ForwardProbe* probe = nullptr);

}  // namespace vidmdl
