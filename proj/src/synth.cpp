// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/synth.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vidmdl/error.hpp"

namespace vidmdl {

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::SpatialPatterns: return "spatial";
    case GeneratorKind::TemporalMotion: return "motion";
    case GeneratorKind::MixedStyle: return "mixed";
  }
  return "?";
}

GeneratorKind parse_generator_kind(const std::string& text) {
  if (text == "spatial" || text == "SpatialPatterns") return GeneratorKind::SpatialPatterns;
  if (text == "motion" || text == "TemporalMotion") return GeneratorKind::TemporalMotion;
  if (text == "mixed" || text == "MixedStyle") return GeneratorKind::MixedStyle;
  throw ConfigError("unknown generator kind '" + text + "' (expected spatial, motion or mixed)");
}

void SyntheticDomain::validate() const {
  const std::string where = "domain " + std::to_string(id) + ": ";
  if (num_classes < 2) throw ConfigError(where + "num_classes must be >= 2");
  if (train_size < 1 || val_size < 0) throw ConfigError(where + "train_size must be >= 1 and val_size >= 0");
  if (frames < 1 || height < 1 || width < 1 || channels < 1) throw ConfigError(where + "frame geometry must be positive");
  if (!(noise >= 0.0)) throw ConfigError(where + "noise must be >= 0");
  if (style < 0) throw ConfigError(where + "style must be >= 0");
}

namespace {

std::mt19937_64 clip_rng(const SyntheticDomain& d, int class_id, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(d.seed), static_cast<std::uint32_t>(d.seed >> 32),
                    static_cast<std::uint32_t>(d.id), static_cast<std::uint32_t>(class_id),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(d.kind)};
  return std::mt19937_64(seq);
}

// Signed offset a - b wrapped into [-n/2, n/2).
double torus_delta(double a, double b, double n) {
  double d = std::fmod(a - b, n);
  if (d < -n / 2) d += n;
  if (d >= n / 2) d -= n;
  return d;
}

struct Palette {
  std::array<double, 3> background;
  std::array<double, 3> foreground;
  double noise_scale;
};

// Deterministic colour style for MixedStyle domains.
Palette palette_for(int style) {
  std::mt19937_64 rng(0x5eed0000ULL + static_cast<std::uint64_t>(style));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Palette p{};
  for (int c = 0; c < 3; ++c) {
    p.background[static_cast<std::size_t>(c)] = 0.2 + 0.6 * u(rng);
    p.foreground[static_cast<std::size_t>(c)] = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.3 + 0.5 * u(rng));
  }
  p.noise_scale = 0.75 + 0.5 * u(rng);
  return p;
}

void render_grating(const SyntheticDomain& d, int class_id, std::mt19937_64& rng, RawClip& clip) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  // Class = stripe axis (vertical / horizontal) x spatial period. Both survive a
  // horizontal flip, and the period ratio survives the resize range.
  const double jitter = 0.15 * (2.0 * u(rng) - 1.0);
  const double theta = (class_id % 2 == 0 ? 0.0 : std::numbers::pi / 2) + jitter;
  const double period = 3.5 * std::pow(1.6, class_id / 2);
  const double k = 2.0 * std::numbers::pi / period;
  const double kx = k * std::cos(theta);
  const double ky = k * std::sin(theta);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double amplitude = 0.6 + 0.4 * u(rng);
  // Slow phase drift so frames are not literally identical.
  const double drift = 0.2 * (u(rng) - 0.5);

  const bool styled = d.kind == GeneratorKind::MixedStyle;
  const Palette pal = styled ? palette_for(d.style) : Palette{{0.5, 0.5, 0.5}, {1.0, 1.0, 1.0}, 1.0};
  const double sigma = d.noise * pal.noise_scale;
  for (int t = 0; t < d.frames; ++t) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const double v = 0.5 * amplitude * std::sin(kx * x + ky * y + phase + drift * t);
        for (int c = 0; c < d.channels; ++c) {
          const auto cc = static_cast<std::size_t>(c % 3);
          const double base = pal.background[cc] + pal.foreground[cc] * v;
          clip.pixels[((static_cast<std::size_t>(t) * d.channels + c) * d.height + y) * d.width + x] =
              base + sigma * n(rng);
        }
      }
    }
  }
}

void render_motion(const SyntheticDomain& d, int class_id, std::mt19937_64& rng, RawClip& clip) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const double direction = class_id % 2 == 0 ? 1.0 : -1.0;  // down / up
  const double speed = 1.0 + class_id / 2;
  const double sigma_blob = 2.0;
  const double y0 = u(rng) * d.height;
  const double x0 = u(rng) * d.width;
  std::vector<double> col(static_cast<std::size_t>(d.width));
  for (int x = 0; x < d.width; ++x) {
    const double dx = torus_delta(x, x0, d.width);
    col[static_cast<std::size_t>(x)] = std::exp(-dx * dx / (2 * sigma_blob * sigma_blob));
  }
  for (int t = 0; t < d.frames; ++t) {
    const double py = y0 + direction * speed * t;
    for (int y = 0; y < d.height; ++y) {
      const double dy = torus_delta(y, py, d.height);
      const double row = std::exp(-dy * dy / (2 * sigma_blob * sigma_blob));
      for (int x = 0; x < d.width; ++x) {
        const double v = row * col[static_cast<std::size_t>(x)];
        for (int c = 0; c < d.channels; ++c) {
          clip.pixels[((static_cast<std::size_t>(t) * d.channels + c) * d.height + y) * d.width + x] =
              v + d.noise * n(rng);
        }
      }
    }
  }
}

}  // namespace

RawClip generate_clip(const SyntheticDomain& domain, int class_id, std::uint64_t index) {
  if (class_id < 0 || class_id >= domain.num_classes) {
    throw ContractError("generate_clip: class " + std::to_string(class_id) + " outside [0, " +
                        std::to_string(domain.num_classes) + ")");
  }
  RawClip clip;
  clip.frames = domain.frames;
  clip.channels = domain.channels;
  clip.height = domain.height;
  clip.width = domain.width;
  clip.label = class_id;
  clip.pixels.assign(static_cast<std::size_t>(domain.frames) * domain.channels * domain.height * domain.width, 0.0);
  auto rng = clip_rng(domain, class_id, index);
  if (domain.kind == GeneratorKind::TemporalMotion) {
    render_motion(domain, class_id, rng, clip);
  } else {
    render_grating(domain, class_id, rng, clip);
  }
  return clip;
}

namespace {

constexpr std::uint64_t kValOffset = 1ULL << 40;

std::uint64_t item_index(Split split, std::uint64_t i) { return split == Split::Val ? kValOffset + i : i; }

}  // namespace

RawClip dataset_item(const SyntheticDomain& domain, Split split, std::uint64_t i) {
  const auto n = static_cast<std::uint64_t>(domain.num_classes);
  return generate_clip(domain, static_cast<int>(i % n), item_index(split, i));
}

void ClipSamplerConfig::validate() const {
  if (clip_len < 1) throw ConfigError("sampler: clip_len must be >= 1");
  if (clip_len > window_frames) throw ConfigError("sampler: clip_len must not exceed window_frames");
  if (resize_min < 1 || resize_max < resize_min) throw ConfigError("sampler: resize range must satisfy 1 <= min <= max");
  if (crop < 1 || crop > resize_min) throw ConfigError("sampler: crop must lie in [1, resize_min]");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("sampler: hflip_prob must lie in [0, 1]");
  if (temporal_views < 1) throw ConfigError("sampler: temporal_views must be >= 1");
}

RawClip resize_frames(const RawClip& raw, int height, int width) {
  if (height == raw.height && width == raw.width) return raw;
  RawClip out;
  out.frames = raw.frames;
  out.channels = raw.channels;
  out.height = height;
  out.width = width;
  out.label = raw.label;
  out.pixels.assign(static_cast<std::size_t>(raw.frames) * raw.channels * height * width, 0.0);

  struct Tap {
    int i0, i1;
    double w;
  };
  auto taps = [](int out_n, int in_n) {
    std::vector<Tap> v(static_cast<std::size_t>(out_n));
    const double s = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
      double src = std::clamp((i + 0.5) * s - 0.5, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      v[static_cast<std::size_t>(i)] = {i0, std::min(i0 + 1, in_n - 1), src - i0};
    }
    return v;
  };
  const auto ty = taps(height, raw.height);
  const auto tx = taps(width, raw.width);
  std::size_t o = 0;
  for (int t = 0; t < raw.frames; ++t) {
    for (int c = 0; c < raw.channels; ++c) {
      for (const auto& yy : ty) {
        for (const auto& xx : tx) {
          const double top = (1 - xx.w) * raw.at(t, c, yy.i0, xx.i0) + xx.w * raw.at(t, c, yy.i0, xx.i1);
          const double bot = (1 - xx.w) * raw.at(t, c, yy.i1, xx.i0) + xx.w * raw.at(t, c, yy.i1, xx.i1);
          out.pixels[o++] = (1 - yy.w) * top + yy.w * bot;
        }
      }
    }
  }
  return out;
}

std::vector<int> uniform_frame_indices(int start, int window, int clip_len) {
  std::vector<int> idx(static_cast<std::size_t>(clip_len));
  for (int i = 0; i < clip_len; ++i) {
    idx[static_cast<std::size_t>(i)] =
        start + static_cast<int>((static_cast<std::int64_t>(i) * window) / clip_len);
  }
  return idx;
}

namespace {

RawClip select_frames(const RawClip& raw, const std::vector<int>& idx) {
  RawClip out;
  out.frames = static_cast<int>(idx.size());
  out.channels = raw.channels;
  out.height = raw.height;
  out.width = raw.width;
  out.label = raw.label;
  const std::size_t frame = static_cast<std::size_t>(raw.channels) * raw.height * raw.width;
  out.pixels.resize(frame * idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(raw.pixels.begin() + static_cast<std::ptrdiff_t>(frame * idx[i]), frame,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(frame * i));
  }
  return out;
}

// Scales so the short side equals `side`.
std::pair<int, int> short_side_size(int h, int w, int side) {
  if (h <= w) return {side, static_cast<int>(std::lround(static_cast<double>(w) * side / h))};
  return {static_cast<int>(std::lround(static_cast<double>(h) * side / w)), side};
}

Tensor crop_to_tensor(const RawClip& clip, int top, int left, int crop, bool flip) {
  Tensor out = Tensor::zeros({1, clip.frames, clip.channels, crop, crop});
  auto o = out.data();
  std::size_t k = 0;
  for (int t = 0; t < clip.frames; ++t) {
    for (int c = 0; c < clip.channels; ++c) {
      for (int y = 0; y < crop; ++y) {
        for (int x = 0; x < crop; ++x) {
          const int sx = flip ? left + crop - 1 - x : left + x;
          o[k++] = clip.at(t, c, top + y, sx);
        }
      }
    }
  }
  return out;
}

void require_window(const RawClip& raw, const ClipSamplerConfig& cfg) {
  cfg.validate();
  if (cfg.window_frames > raw.frames) {
    throw ContractError("clip sampler: window of " + std::to_string(cfg.window_frames) + " frames exceeds raw length " +
                        std::to_string(raw.frames));
  }
}

}  // namespace

Tensor sample_train_clip(const RawClip& raw, const ClipSamplerConfig& cfg, std::mt19937_64& rng) {
  require_window(raw, cfg);
  const int start = std::uniform_int_distribution<int>(0, raw.frames - cfg.window_frames)(rng);
  const int side = std::uniform_int_distribution<int>(cfg.resize_min, cfg.resize_max)(rng);
  const auto [h, w] = short_side_size(raw.height, raw.width, side);
  const int top = std::uniform_int_distribution<int>(0, h - cfg.crop)(rng);
  const int left = std::uniform_int_distribution<int>(0, w - cfg.crop)(rng);
  // Always drawn, so the random stream does not depend on hflip_prob.
  const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.hflip_prob;

  const RawClip frames = select_frames(raw, uniform_frame_indices(start, cfg.window_frames, cfg.clip_len));
  return crop_to_tensor(resize_frames(frames, h, w), top, left, cfg.crop, flip);
}

std::vector<Tensor> sample_eval_views(const RawClip& raw, const ClipSamplerConfig& cfg) {
  require_window(raw, cfg);
  const auto [h, w] = short_side_size(raw.height, raw.width, cfg.resize_min);
  const RawClip resized = resize_frames(raw, h, w);
  const int n = cfg.temporal_views;
  const int span = raw.frames - cfg.window_frames;
  const int top = (h - cfg.crop) / 2;
  std::vector<Tensor> views;
  views.reserve(static_cast<std::size_t>(n) * 3);
  for (int j = 0; j < n; ++j) {
    const int start = n == 1 ? span / 2 : static_cast<int>((static_cast<std::int64_t>(j) * span) / (n - 1));
    const RawClip frames = select_frames(resized, uniform_frame_indices(start, cfg.window_frames, cfg.clip_len));
    for (int left : {0, (w - cfg.crop) / 2, w - cfg.crop}) {
      views.push_back(crop_to_tensor(frames, top, left, cfg.crop, false));
    }
  }
  return views;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ContractError("stack_batch: no items");
  Shape shape = items.front().shape();
  if (shape.empty() || shape[0] != 1) throw DimensionError("stack_batch: items must have a leading axis of 1, got " + shape_str(shape));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(items.front().numel()) * items.size());
  for (const auto& item : items) {
    if (item.shape() != shape) {
      throw DimensionError("stack_batch: shape " + shape_str(item.shape()) + " differs from " + shape_str(shape));
    }
    auto d = item.data();
    values.insert(values.end(), d.begin(), d.end());
  }
  shape[0] = static_cast<std::int64_t>(items.size());
  return Tensor::from(shape, std::move(values));
}

std::vector<double> multiview_predict(MdlNetwork& net, std::span<const Tensor> views, int domain_id) {
  if (views.empty()) throw ContractError("multiview_predict: no views");
  Tape tape;
  tape.set_recording(false);
  const Tensor logits = net.forward(tape, stack_batch(views), domain_id, Mode::Eval);
  const auto probs = softmax_rows(logits);
  std::vector<double> mean(probs.front().size(), 0.0);
  for (std::size_t v = 0; v < probs.size(); ++v) {
    const double w = 1.0 / static_cast<double>(v + 1);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += w * (probs[v][k] - mean[k]);
  }
  return mean;
}

SyntheticSampler::SyntheticSampler(SyntheticDomain domain, ClipSamplerConfig cfg, std::uint64_t seed)
    : domain_(std::move(domain)), cfg_(cfg), rng_(seed) {
  domain_.validate();
  cfg_.validate();
}

DomainBatch SyntheticSampler::next(int batch_size) {
  if (batch_size < 1) throw ContractError("sampler: batch_size must be >= 1");
  std::uniform_int_distribution<std::uint64_t> pick(0, static_cast<std::uint64_t>(domain_.train_size) - 1);
  std::vector<Tensor> clips;
  DomainBatch batch;
  batch.domain_id = domain_.id;
  for (int b = 0; b < batch_size; ++b) {
    const RawClip raw = dataset_item(domain_, Split::Train, pick(rng_));
    clips.push_back(sample_train_clip(raw, cfg_, rng_));
    batch.labels.push_back(raw.label);
  }
  batch.clips = stack_batch(clips);
  return batch;
}

double evaluate_top1(MdlNetwork& net, const SyntheticDomain& domain, const ClipSamplerConfig& cfg,
                     const EvalOptions& options) {
  const int n = options.max_items > 0 ? std::min(options.max_items, domain.val_size) : domain.val_size;
  if (n == 0) return 0.0;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const RawClip raw = dataset_item(domain, Split::Val, static_cast<std::uint64_t>(i));
    auto views = sample_eval_views(raw, cfg);
    if (!options.multiview) {
      // Middle temporal window, centre crop.
      const std::size_t mid = static_cast<std::size_t>(cfg.temporal_views / 2) * 3 + 1;
      views = {views[mid]};
    }
    const auto scores = multiview_predict(net, views, domain.id);
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    if (best == raw.label) ++correct;
  }
  return static_cast<double>(correct) / n;
}

namespace {

std::string cache_key(const SyntheticDomain& d, Split split, std::uint64_t index) {
  return std::to_string(d.id) + (split == Split::Train ? "/train/" : "/val/") + std::to_string(index);
}

std::uint32_t checksum_of(const std::vector<double>& v) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(v.size() * sizeof(double))));
}

std::string shape_of(const RawClip& c) {
  return std::to_string(c.frames) + "x" + std::to_string(c.channels) + "x" + std::to_string(c.height) + "x" +
         std::to_string(c.width);
}

}  // namespace

ClipCache::ClipCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::ifstream in(dir_ / "manifest.csv");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw ParseError((dir_ / "manifest.csv").string(), line_no, "expected 9 fields");
    try {
      manifest_[f[0] + "/" + f[1] + "/" + f[2]] =
          Entry{std::stoi(f[3]), std::stoull(f[4]), f[5], static_cast<std::uint32_t>(std::stoul(f[7])), f[8]};
    } catch (const std::logic_error&) {
      throw ParseError((dir_ / "manifest.csv").string(), line_no, "malformed number");
    }
  }
}

RawClip ClipCache::get(const SyntheticDomain& domain, Split split, std::uint64_t index) {
  const std::string key = cache_key(domain, split, index);
  if (auto it = manifest_.find(key); it != manifest_.end() && it->second.seed == domain.seed) {
    std::ifstream blob(dir_ / it->second.file, std::ios::binary);
    RawClip clip;
    if (blob && std::sscanf(it->second.shape.c_str(), "%dx%dx%dx%d", &clip.frames, &clip.channels, &clip.height,
                            &clip.width) == 4) {
      clip.label = it->second.label;
      clip.pixels.resize(static_cast<std::size_t>(clip.frames) * clip.channels * clip.height * clip.width);
      blob.read(reinterpret_cast<char*>(clip.pixels.data()),
                static_cast<std::streamsize>(clip.pixels.size() * sizeof(double)));
      if (blob && checksum_of(clip.pixels) == it->second.checksum) {
        ++hits_;
        return clip;
      }
    }
  }
  ++misses_;
  RawClip clip = dataset_item(domain, split, index);
  const std::string file = "d" + std::to_string(domain.id) + (split == Split::Train ? "_train_" : "_val_") +
                           std::to_string(index) + ".bin";
  {
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(clip.pixels.data()),
              static_cast<std::streamsize>(clip.pixels.size() * sizeof(double)));
  }
  manifest_[key] = Entry{clip.label, domain.seed, shape_of(clip), checksum_of(clip.pixels), file};

  std::ofstream m(dir_ / "manifest.csv", std::ios::trunc);
  m << "domain,split,index,label,seed,shape,dtype,checksum,file\n";
  for (const auto& [k, e] : manifest_) {
    std::string parts = k;
    std::replace(parts.begin(), parts.end(), '/', ',');
    m << parts << ',' << e.label << ',' << e.seed << ',' << e.shape << ",f64," << e.checksum << ',' << e.file << '\n';
  }
  return clip;
}

}  // namespace vidmdl
