// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/adapter.hpp"

#include <algorithm>
#include <cctype>

#include "vidmdl/backbone.hpp"
#include "vidmdl/error.hpp"
#include "vidmdl/ops.hpp"

namespace vidmdl {

std::string to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::Framewise2D: return "2d";
    case AdapterKind::Full3D: return "3d";
    case AdapterKind::SeparableST: return "(2+1)d";
  }
  return "?";
}

AdapterKind parse_adapter_kind(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t == "2d" || t == "framewise2d" || t == "framewise-2d") return AdapterKind::Framewise2D;
  if (t == "3d" || t == "full3d" || t == "full-3d") return AdapterKind::Full3D;
  if (t == "(2+1)d" || t == "2+1d" || t == "separable" || t == "separablest" || t == "separable-st") {
    return AdapterKind::SeparableST;
  }
  throw ConfigError("unknown adapter kind '" + text + "' (expected 2d, (2+1)d or 3d)");
}

std::int64_t adapter_param_count(AdapterKind kind, std::int64_t channels) {
  const std::int64_t c2 = channels * channels;
  const std::int64_t s = kAdapterSpatialKernel * kAdapterSpatialKernel;
  const std::int64_t t = kAdapterTemporalKernel;
  switch (kind) {
    case AdapterKind::Framewise2D: return s * c2 + 2 * channels;
    case AdapterKind::Full3D: return t * s * c2 + 2 * channels;
    case AdapterKind::SeparableST: return (s + t) * c2 + 2 * channels;
  }
  return 0;
}

AdapterBlock AdapterBlock::make(AdapterKind kind, std::int64_t channels) {
  AdapterBlock blk;
  blk.kind = kind;
  blk.channels = channels;
  const auto s = kAdapterSpatialKernel;
  const auto t = kAdapterTemporalKernel;
  switch (kind) {
    case AdapterKind::Framewise2D:
      blk.convs.push_back(ConvKernel::make(ConvKind::Framewise2D, channels, channels, 1, s, s));
      break;
    case AdapterKind::Full3D:
      blk.convs.push_back(ConvKernel::make(ConvKind::Full3D, channels, channels, t, s, s));
      break;
    case AdapterKind::SeparableST:
      blk.convs.push_back(ConvKernel::make(ConvKind::Framewise2D, channels, channels, 1, s, s));
      blk.convs.push_back(ConvKernel::make(ConvKind::Temporal1D, channels, channels, t, 1, 1));
      break;
  }
  blk.bn = BatchNorm::make(channels, 0.0);
  for (auto& k : blk.convs) k.weight.set_requires_grad(true);
  blk.bn.gamma.set_requires_grad(true);
  blk.bn.beta.set_requires_grad(true);
  return blk;
}

void AdapterBlock::initialize(std::mt19937_64& rng, double gamma_init) {
  for (auto& k : convs) he_uniform(k.weight, k.fan_in(), rng);
  std::fill(bn.gamma.data().begin(), bn.gamma.data().end(), gamma_init);
  std::fill(bn.beta.data().begin(), bn.beta.data().end(), 0.0);
}

std::int64_t AdapterBlock::count_params() const { return adapter_param_count(kind, channels); }

std::vector<std::pair<std::string, Tensor>> AdapterBlock::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (kind == AdapterKind::SeparableST) {
    out.emplace_back("spatial.weight", convs[0].weight);
    out.emplace_back("temporal.weight", convs[1].weight);
  } else {
    out.emplace_back("conv.weight", convs[0].weight);
  }
  out.emplace_back("bn.gamma", bn.gamma);
  out.emplace_back("bn.beta", bn.beta);
  return out;
}

Tensor adapter_conv(Tape& tape, const Tensor& f, const AdapterBlock& blk) {
  switch (blk.kind) {
    case AdapterKind::Framewise2D: return conv_framewise_2d(tape, f, blk.convs[0]);
    case AdapterKind::Full3D: return conv_3d(tape, f, blk.convs[0]);
    case AdapterKind::SeparableST: {
      Tensor spatial = conv_framewise_2d(tape, f, blk.convs[0]);
      return conv_temporal_1d(tape, spatial, blk.convs[1]);
    }
  }
  throw ContractError("adapter_conv: unknown adapter kind");
}

Tensor adapter_forward(Tape& tape, const Tensor& f, AdapterBlock& blk, const LayerNorm& ln, Mode mode) {
  if (f.rank() != 5 || f.dim(2) != blk.channels) {
    throw DimensionError("adapter_forward: block has " + std::to_string(blk.channels) +
                         " channels, input shape " + shape_str(f.shape()) + " differs on axis 2");
  }
  Tensor h = adapter_conv(tape, f, blk);
  h = batch_norm(tape, h, blk.bn, mode);
  h = add(tape, h, f);
  h = relu(tape, h);
  return layer_norm(tape, h, ln);
}

std::int64_t AdapterBank::count_params() const {
  std::int64_t n = 0;
  for (const auto& [loc, blk] : blocks) n += blk.count_params();
  return n;
}

SharedPostNorm SharedPostNorm::make(const ChannelSpec& channels, const std::set<int>& locations) {
  SharedPostNorm post;
  for (int loc : locations) {
    LayerNorm ln = LayerNorm::make(channels.at(loc));
    ln.gamma.set_requires_grad(true);
    ln.beta.set_requires_grad(true);
    post.norms.emplace(loc, std::move(ln));
  }
  return post;
}

void SharedPostNorm::set_pass_through(bool on) {
  for (auto& [loc, ln] : norms) ln.pass_through = on;
}

std::int64_t SharedPostNorm::count_params() const {
  std::int64_t n = 0;
  for (const auto& [loc, ln] : norms) n += ln.gamma.numel() + ln.beta.numel();
  return n;
}

AdapterBank build_bank(int domain_id, const ChannelSpec& channels, AdapterKind kind, const std::set<int>& locations,
                       std::uint64_t seed, double gamma_init) {
  AdapterBank bank;
  bank.domain_id = domain_id;
  for (int loc : locations) {
    if (loc < 1 || loc > channels.locations()) {
      throw ConfigError("build_bank: location " + std::to_string(loc) + " outside [1, " +
                        std::to_string(channels.locations()) + "] for channel spec '" + channels.name + "'");
    }
  }
  for (int loc : locations) {
    // Per-(domain, location) streams so adding a location never reshuffles the others.
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(domain_id), static_cast<std::uint32_t>(loc), 0xada7u};
    std::mt19937_64 rng(seq);
    AdapterBlock blk = AdapterBlock::make(kind, channels.at(loc));
    blk.initialize(rng, gamma_init);
    bank.blocks.emplace(loc, std::move(blk));
  }
  return bank;
}

}  // namespace vidmdl
