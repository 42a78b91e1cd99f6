// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/backbone.hpp"

#include "vidmdl/error.hpp"
#include "vidmdl/ops.hpp"

namespace vidmdl {

std::int64_t ChannelSpec::at(int location) const {
  if (location < 1 || location > locations()) {
    throw ConfigError("channel spec '" + name + "': location " + std::to_string(location) + " outside [1, " +
                      std::to_string(locations()) + "]");
  }
  return channels[static_cast<std::size_t>(location - 1)];
}

void ChannelSpec::validate() const {
  for (auto c : channels) {
    if (c <= 0) throw ConfigError("channel spec '" + name + "': channel counts must be positive");
  }
  if (feature_width <= 0) throw ConfigError("channel spec '" + name + "': feature width must be positive");
}

ChannelSpec x3dm_channel_spec() { return ChannelSpec{"x3d-m", {24, 24, 48, 96, 192}, 2048}; }

ChannelSpec LayerStack::channel_spec(std::string name) const {
  ChannelSpec spec;
  spec.name = std::move(name);
  for (int l = 1; l <= insertion_locations(); ++l) {
    spec.channels.push_back(layers[static_cast<std::size_t>(l - 1)].conv.out_channels);
  }
  spec.feature_width = feature_width();
  return spec;
}

std::int64_t LayerStack::count_params() const {
  std::int64_t n = 0;
  for (const auto& layer : layers) n += layer.conv.param_count() + layer.bn.gamma.numel() + layer.bn.beta.numel();
  return n;
}

std::vector<std::pair<std::string, Tensor>> LayerStack::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "M" + std::to_string(i + 1) + ".";
    out.emplace_back(prefix + "conv.weight", layers[i].conv.weight);
    if (layers[i].conv.has_bias()) out.emplace_back(prefix + "conv.bias", layers[i].conv.bias);
    out.emplace_back(prefix + "bn.gamma", layers[i].bn.gamma);
    out.emplace_back(prefix + "bn.beta", layers[i].bn.beta);
  }
  return out;
}

void LayerStack::set_trainable(bool on) {
  for (auto& [name, t] : named_params()) {
    t.set_requires_grad(on);
    if (!on) t.drop_grad();
  }
}

LayerStack make_toy_backbone(const ToyBackboneConfig& cfg, std::uint64_t seed) {
  if (cfg.widths.empty()) throw ConfigError("toy backbone: at least one width is required");
  LayerStack stack;
  std::mt19937_64 rng(seed ^ 0xbac4b0e5ULL);
  std::int64_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const std::int64_t stride = i == 0 ? 1 : 2;
    ConvBlock block{ConvKernel::make(ConvKind::Strided, cfg.widths[i], in, cfg.temporal_kernel, cfg.spatial_kernel,
                                     cfg.spatial_kernel, false, stride),
                    BatchNorm::make(cfg.widths[i])};
    he_uniform(block.conv.weight, block.conv.fan_in(), rng);
    stack.layers.push_back(std::move(block));
    in = cfg.widths[i];
  }
  ConvBlock last{ConvKernel::make(ConvKind::Strided, cfg.feature_width, in, 1, 1, 1), BatchNorm::make(cfg.feature_width)};
  he_uniform(last.conv.weight, last.conv.fan_in(), rng);
  stack.layers.push_back(std::move(last));
  stack.set_trainable(true);
  return stack;
}

std::int64_t toy_backbone_param_count(const ToyBackboneConfig& cfg) {
  std::int64_t n = 0;
  std::int64_t in = cfg.in_channels;
  const std::int64_t k = cfg.temporal_kernel * cfg.spatial_kernel * cfg.spatial_kernel;
  for (auto w : cfg.widths) {
    n += in * w * k + 2 * w;
    in = w;
  }
  n += in * cfg.feature_width + 2 * cfg.feature_width;
  return n;
}

ChannelSpec toy_channel_spec(const ToyBackboneConfig& cfg) { return ChannelSpec{"toy", cfg.widths, cfg.feature_width}; }

Tensor layer_forward(Tape& tape, const Tensor& x, ConvBlock& layer, Mode mode) {
  Tensor h = conv3d(tape, x, layer.conv);
  h = batch_norm(tape, h, layer.bn, mode);
  return relu(tape, h);
}

Tensor stack_forward(Tape& tape, const Tensor& x, LayerStack& stack, const AdapterRoute& route,
                     const LinearHead& head, Mode mode, ForwardProbe* probe) {
  const int max_location = stack.insertion_locations();
  for (int loc : route.active) {
    if (loc < 1 || loc > max_location) {
      throw ConfigError("stack_forward: adapter location " + std::to_string(loc) + " outside [1, " +
                        std::to_string(max_location) + "]");
    }
    if (route.bank == nullptr || !route.bank->blocks.contains(loc)) {
      throw ConfigError("stack_forward: no adapter for active location " + std::to_string(loc));
    }
    if (route.post_norms == nullptr || !route.post_norms->norms.contains(loc)) {
      throw ConfigError("stack_forward: no shared layer norm for active location " + std::to_string(loc));
    }
  }
  if (x.rank() != 5) throw DimensionError("stack_forward: expected a (B,T,C,H,W) clip, got " + shape_str(x.shape()));

  const auto frames = x.dim(1);
  Tensor h = x;
  for (int l = 1; l <= static_cast<int>(stack.layers.size()); ++l) {
    h = layer_forward(tape, h, stack.layers[static_cast<std::size_t>(l - 1)], mode);
    if (h.dim(1) != frames) throw ContractError("stack_forward: layer M" + std::to_string(l) + " changed T");
    if (probe) probe->layer_outputs.push_back(h.shape());
    if (route.active.contains(l)) {
      h = adapter_forward(tape, h, route.bank->blocks.at(l), route.post_norms->norms.at(l), mode);
      if (probe) {
        ++probe->adapters_executed;
        probe->adapter_locations.push_back(l);
      }
    }
  }
  Tensor pooled = global_avg_pool(tape, h);
  return linear_head(tape, pooled, head.weight, head.bias);
}

}  // namespace vidmdl
