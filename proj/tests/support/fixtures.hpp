// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small networks and samplers shared by the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <vector>

#include "support/oracles.hpp"
#include "vidmdl/network.hpp"
#include "vidmdl/trainer.hpp"

namespace fixtures {

inline vidmdl::ToyBackboneConfig small_backbone() {
  vidmdl::ToyBackboneConfig cfg;
  cfg.in_channels = 3;
  cfg.widths = {4, 4, 6, 8, 8};
  cfg.feature_width = 12;
  return cfg;
}

// Random clips with random labels; records which domains were asked for.
class RandomSampler : public vidmdl::DomainSampler {
 public:
  RandomSampler(int id, int classes, std::uint64_t seed, std::vector<int>* log = nullptr)
      : id_(id), classes_(classes), rng_(seed), log_(log) {}

  int domain_id() const override { return id_; }
  std::size_t size() const override { return 100; }
  vidmdl::DomainBatch next(int batch_size) override {
    if (log_) log_->push_back(id_);
    vidmdl::DomainBatch b;
    b.domain_id = id_;
    b.clips = oracle::random_tensor({batch_size, 2, 3, 8, 8}, rng_);
    std::uniform_int_distribution<int> lab(0, classes_ - 1);
    for (int i = 0; i < batch_size; ++i) b.labels.push_back(lab(rng_));
    return b;
  }

 private:
  int id_;
  int classes_;
  std::mt19937_64 rng_;
  std::vector<int>* log_;
};

// FNV-1a over the raw bytes of every tensor of the given tags.
inline std::uint64_t param_hash(const vidmdl::MdlNetwork& net, std::initializer_list<vidmdl::ParamTag> tags) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : net.all_params()) {
    bool want = false;
    for (auto t : tags) want |= p.tag == t;
    if (!want) continue;
    for (double v : p.tensor.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ull;
    }
  }
  return h;
}

}  // namespace fixtures
