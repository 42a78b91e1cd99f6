// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <random>

#include "doctest.h"
#include "support/oracles.hpp"
#include "vidmdl/error.hpp"
#include "vidmdl/network.hpp"

using namespace vidmdl;

namespace {

ToyBackboneConfig tiny_backbone() {
  ToyBackboneConfig cfg;
  cfg.in_channels = 3;
  cfg.widths = {4, 4, 6, 8, 8};
  cfg.feature_width = 12;
  return cfg;
}

MdlNetwork tiny_net(AdapterKind kind, InsertionConfig ins, bool trainable_base = true, double gamma_init = 0.0) {
  return MdlNetwork(make_toy_backbone(tiny_backbone(), 3), {{1, "a", 4}, {2, "b", 5}}, kind, ins, trainable_base, 9,
                    gamma_init);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("adapter parameter counts follow the closed forms") {
  for (std::int64_t c : {1, 24, 48, 96, 192}) {
    CHECK(adapter_param_count(AdapterKind::Framewise2D, c) == 9 * c * c + 2 * c);
    CHECK(adapter_param_count(AdapterKind::Full3D, c) == 27 * c * c + 2 * c);
    CHECK(adapter_param_count(AdapterKind::SeparableST, c) == 12 * c * c + 2 * c);
    for (AdapterKind k : {AdapterKind::Framewise2D, AdapterKind::Full3D, AdapterKind::SeparableST}) {
      CHECK(AdapterBlock::make(k, c).count_params() == adapter_param_count(k, c));
    }
  }
}

TEST_CASE("adapter kind names round-trip") {
  for (AdapterKind k : {AdapterKind::Framewise2D, AdapterKind::Full3D, AdapterKind::SeparableST}) {
    CHECK(parse_adapter_kind(to_string(k)) == k);
  }
  CHECK(parse_adapter_kind("2+1d") == AdapterKind::SeparableST);
  CHECK_THROWS_AS(parse_adapter_kind("4d"), ConfigError);
}

TEST_CASE("adapters preserve shape") {
  std::mt19937_64 rng(4);
  Tensor f = oracle::random_tensor({2, 3, 5, 6, 6}, rng);
  for (AdapterKind k : {AdapterKind::Framewise2D, AdapterKind::Full3D, AdapterKind::SeparableST}) {
    AdapterBlock blk = AdapterBlock::make(k, 5);
    blk.initialize(rng, 1.0);
    LayerNorm ln = LayerNorm::make(5);
    Tape tape;
    CHECK(adapter_forward(tape, f, blk, ln, Mode::Train).shape() == f.shape());
  }
}

TEST_CASE("zero-gamma adapter with pass-through norm is the identity on non-negative input") {
  std::mt19937_64 rng(5);
  Tensor f = oracle::random_tensor({2, 3, 4, 5, 5}, rng, 0.0, 2.0);
  for (AdapterKind k : {AdapterKind::Framewise2D, AdapterKind::Full3D, AdapterKind::SeparableST}) {
    AdapterBlock blk = AdapterBlock::make(k, 4);
    blk.initialize(rng, 0.0);
    LayerNorm ln = LayerNorm::make(4);
    ln.pass_through = true;
    Tape tape;
    CHECK(values(adapter_forward(tape, f, blk, ln, Mode::Train)) == values(f));
  }
}

TEST_CASE("insertion configs resolve to the expected locations") {
  CHECK(InsertionConfig::all().resolve(5) == std::set<int>{1, 2, 3, 4, 5});
  CHECK(InsertionConfig::early(1).resolve(5) == std::set<int>{1});
  CHECK(InsertionConfig::early(3).resolve(5) == std::set<int>{1, 2, 3});
  CHECK(InsertionConfig::late(3).resolve(5) == std::set<int>{3, 4, 5});
  CHECK(InsertionConfig::late(1).resolve(5) == std::set<int>{5});
  CHECK(InsertionConfig::multi_head().resolve(5).empty());
  // early-x and late-(L-2-x) partition all locations
  for (int x = 0; x <= 5; ++x) {
    auto e = InsertionConfig::early(x).resolve(5);
    auto l = InsertionConfig::late(5 - x).resolve(5);
    std::set<int> u = e;
    u.insert(l.begin(), l.end());
    CHECK(u.size() == 5);
    CHECK(e.size() + l.size() == 5);
  }
  CHECK_THROWS_AS(InsertionConfig::early(6).resolve(5), ConfigError);
  for (const char* s : {"all", "early-3", "late-1", "multi-head"}) CHECK(InsertionConfig::parse(s).to_string() == s);
  CHECK_THROWS_AS(InsertionConfig::parse("middle-2"), ConfigError);
  CHECK_THROWS_AS(InsertionConfig::parse("early-x"), ConfigError);
}

TEST_CASE("build_bank rejects locations outside the spec") {
  ChannelSpec spec{"s", {4, 4, 8}, 16};
  CHECK_THROWS_AS(build_bank(1, spec, AdapterKind::Framewise2D, {0}, 1), ConfigError);
  CHECK_THROWS_AS(build_bank(1, spec, AdapterKind::Framewise2D, {4}, 1), ConfigError);
  CHECK(build_bank(1, spec, AdapterKind::Framewise2D, {1, 3}, 1).blocks.size() == 2);
}

TEST_CASE("toy backbone parameter count and channel spec") {
  const auto cfg = tiny_backbone();
  LayerStack stack = make_toy_backbone(cfg, 1);
  CHECK(stack.count_params() == toy_backbone_param_count(cfg));
  CHECK(stack.insertion_locations() == 5);
  CHECK(toy_channel_spec(cfg).channels == std::vector<std::int64_t>{4, 4, 6, 8, 8});
  CHECK(toy_channel_spec(cfg).feature_width == 12);
}

TEST_CASE("forward routes through the requested domain's adapters only") {
  MdlNetwork net = tiny_net(AdapterKind::SeparableST, InsertionConfig::late(2));
  std::mt19937_64 rng(6);
  Tensor x = oracle::random_tensor({2, 3, 3, 16, 16}, rng);
  Tape tape;
  ForwardProbe probe;
  Tensor logits = net.forward(tape, x, 2, Mode::Train, &probe);
  CHECK(logits.shape() == Shape{2, 5});
  CHECK(probe.adapters_executed == 2);
  CHECK(probe.adapter_locations == std::vector<int>{4, 5});
  CHECK(probe.layer_outputs.size() == 6);

  // Perturbing domain 1's adapters does not change domain 2's output.
  Tape t2;
  Tensor before = net.forward(t2, x, 2, Mode::Eval);
  for (auto& [loc, blk] : net.banks().at(1).blocks) blk.bn.beta.data()[0] += 1.0;
  Tensor after = net.forward(t2, x, 2, Mode::Eval);
  CHECK(values(before) == values(after));

  CHECK_THROWS_AS(net.forward(tape, x, 7, Mode::Eval), RoutingError);
}

TEST_CASE("multi-head network runs no adapters") {
  MdlNetwork net = tiny_net(AdapterKind::Full3D, InsertionConfig::multi_head());
  std::mt19937_64 rng(7);
  Tape tape;
  ForwardProbe probe;
  net.forward(tape, oracle::random_tensor({1, 2, 3, 8, 8}, rng), 1, Mode::Eval, &probe);
  CHECK(probe.adapters_executed == 0);
  CHECK(net.banks().at(1).blocks.empty());
}

TEST_CASE("trainable params follow the base flag and tags") {
  MdlNetwork net = tiny_net(AdapterKind::Framewise2D, InsertionConfig::all(), false);
  for (const auto& p : net.trainable_params()) CHECK(p.tag != ParamTag::Base);
  std::size_t base = 0;
  for (const auto& p : net.all_params()) {
    if (p.tag == ParamTag::Base) {
      ++base;
      CHECK_FALSE(p.tensor.requires_grad());
    }
  }
  CHECK(base > 0);
  net.set_trainable_base(true);
  std::size_t trainable_base = 0;
  for (const auto& p : net.trainable_params()) trainable_base += p.tag == ParamTag::Base;
  CHECK(trainable_base == base);
}

TEST_CASE("adding a domain leaves existing parameters alone") {
  MdlNetwork net = tiny_net(AdapterKind::SeparableST, InsertionConfig::all());
  auto before = net.state();
  std::map<std::string, std::vector<double>> snap;
  for (const auto& [k, t] : before) snap[k] = values(t);
  net.add_domain({3, "c", 6});
  for (const auto& [k, v] : snap) CHECK(values(net.state().at(k)) == v);
  CHECK(net.heads().at(3).num_classes() == 6);
  CHECK_THROWS_AS(net.add_domain({3, "dup", 6}), ConfigError);
  CHECK_THROWS_AS(net.add_domain({4, "tiny", 1}), ConfigError);
}

TEST_CASE("clone shares no storage") {
  MdlNetwork net = tiny_net(AdapterKind::Framewise2D, InsertionConfig::all());
  MdlNetwork copy = net.clone();
  auto a = net.all_params();
  auto b = copy.all_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_FALSE(a[i].tensor.same(b[i].tensor));
    CHECK(values(a[i].tensor) == values(b[i].tensor));
  }
}

TEST_CASE("backbone BN running statistics are kept per domain") {
  MdlNetwork net = tiny_net(AdapterKind::Framewise2D, InsertionConfig::all());
  std::mt19937_64 rng(8);
  Tape tape;
  tape.set_recording(false);
  net.forward(tape, oracle::random_tensor({2, 2, 3, 8, 8}, rng, 2.0, 3.0), 1, Mode::Train);
  CHECK(net.base_bn_stats(1)[0].mean != std::vector<double>(4, 0.0));
  CHECK(net.base_bn_stats(2)[0].mean == std::vector<double>(4, 0.0));
}

TEST_CASE("checkpoint round trip restores every tensor and statistic") {
  MdlNetwork net = tiny_net(AdapterKind::SeparableST, InsertionConfig::early(3), true, 0.5);
  std::mt19937_64 rng(10);
  Tape tape;
  tape.set_recording(false);
  net.forward(tape, oracle::random_tensor({2, 2, 3, 8, 8}, rng), 2, Mode::Train);
  const auto path = std::filesystem::temp_directory_path() / "vidmdl_test_ckpt.bin";
  save_checkpoint(net, path, "hello");
  std::string header;
  auto loaded = read_checkpoint(path, &header);
  CHECK(header == "hello");
  const auto state = net.state();
  REQUIRE(loaded.size() == state.size());
  for (const auto& [k, t] : state) {
    REQUIRE(loaded.count(k) == 1);
    CHECK(loaded.at(k).shape() == t.shape());
    CHECK(values(loaded.at(k)) == values(t));
  }

  MdlNetwork fresh = tiny_net(AdapterKind::SeparableST, InsertionConfig::early(3));
  fresh.load_state(loaded);
  Tensor x = oracle::random_tensor({1, 2, 3, 8, 8}, rng);
  Tape t1, t2;
  CHECK(values(net.forward(t1, x, 2, Mode::Eval)) == values(fresh.forward(t2, x, 2, Mode::Eval)));
  std::filesystem::remove(path);
}
