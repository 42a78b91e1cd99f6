// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic video domains, the training clip pipeline (window -> 16 uniform
// frames -> short-side resize -> crop -> flip) and 30-view evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vidmdl/network.hpp"
#include "vidmdl/trainer.hpp"

namespace vidmdl {

enum class GeneratorKind {
  // Classes are stripe patterns (axis x period); every frame alone identifies the class.
  SpatialPatterns,
  // One Gaussian blob drifting on a torus; classes differ only in vertical
  // direction and speed, so every single frame has the same distribution.
  TemporalMotion,
  // SpatialPatterns classes rendered in a per-domain colour and noise style.
  MixedStyle,
};

std::string to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& text);

struct SyntheticDomain {
  int id = 1;
  std::string name = "domain";
  int num_classes = 4;
  GeneratorKind kind = GeneratorKind::SpatialPatterns;
  int train_size = 200;
  int val_size = 100;
  int frames = 32;
  int height = 32;
  int width = 32;
  int channels = 3;
  std::uint64_t seed = 1;
  double noise = 0.1;
  int style = 0;  // MixedStyle palette index

  DomainSpec spec() const { return DomainSpec{id, name, num_classes}; }
  void validate() const;
};

// Raw frames laid out (T, C, H, W).
struct RawClip {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;
  int label = 0;

  double at(int t, int c, int y, int x) const {
    return pixels[((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x];
  }
};

// Deterministic in (domain.seed, domain.id, class_id, index).
RawClip generate_clip(const SyntheticDomain& domain, int class_id, std::uint64_t index);

enum class Split { Train, Val };

// Item i of a split; the label is i mod num_classes. Train and val draw from
// disjoint index ranges.
RawClip dataset_item(const SyntheticDomain& domain, Split split, std::uint64_t i);

struct ClipSamplerConfig {
  int window_frames = 32;  // raw frames covered by one clip
  int clip_len = 16;
  int resize_min = 24;  // short side is resized into [resize_min, resize_max]
  int resize_max = 32;
  int crop = 24;
  double hflip_prob = 0.5;
  int temporal_views = 10;  // evaluation clips; x3 crops

  void validate() const;
};

// Bilinear (half-pixel centres) resize of every frame; exact copy when the size is unchanged.
RawClip resize_frames(const RawClip& raw, int height, int width);

// Frame indices start + floor(i * window / clip_len), i = 0..clip_len-1.
std::vector<int> uniform_frame_indices(int start, int window, int clip_len);

// Returns (1, clip_len, C, crop, crop).
Tensor sample_train_clip(const RawClip& raw, const ClipSamplerConfig& cfg, std::mt19937_64& rng);

enum class CropPosition { Left, Center, Right };

// temporal_views evenly spaced windows x {left, center, right} crops after a
// deterministic short-side resize to resize_min. Temporal-major order.
std::vector<Tensor> sample_eval_views(const RawClip& raw, const ClipSamplerConfig& cfg);

// Average of per-view softmax scores (running mean, exact for identical views).
std::vector<double> multiview_predict(MdlNetwork& net, std::span<const Tensor> views, int domain_id);

// Concatenates (1, ...) tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

// Draws uniformly random training items with replacement.
class SyntheticSampler : public DomainSampler {
 public:
  SyntheticSampler(SyntheticDomain domain, ClipSamplerConfig cfg, std::uint64_t seed);

  int domain_id() const override { return domain_.id; }
  std::size_t size() const override { return static_cast<std::size_t>(domain_.train_size); }
  DomainBatch next(int batch_size) override;

  const SyntheticDomain& domain() const { return domain_; }

 private:
  SyntheticDomain domain_;
  ClipSamplerConfig cfg_;
  std::mt19937_64 rng_;
};

struct EvalOptions {
  int max_items = 0;     // 0: whole validation split
  bool multiview = true;  // false: a single centred view per item
};

// Top-1 on the validation split, in [0, 1].
double evaluate_top1(MdlNetwork& net, const SyntheticDomain& domain, const ClipSamplerConfig& cfg,
                     const EvalOptions& options = {});

// Directory of per-item float64 blobs plus manifest.csv with
// (domain, split, index, label, seed, shape, dtype, checksum, file).
class ClipCache {
 public:
  explicit ClipCache(std::filesystem::path dir);

  RawClip get(const SyntheticDomain& domain, Split split, std::uint64_t index);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t entries() const { return manifest_.size(); }

 private:
  struct Entry {
    int label;
    std::uint64_t seed;
    std::string shape;
    std::uint32_t checksum;
    std::string file;
  };
  std::filesystem::path dir_;
  std::map<std::string, Entry> manifest_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace vidmdl
