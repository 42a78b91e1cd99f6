// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Criteria 6 and 7 train for several minutes.
//
//   acceptance            run everything
//   acceptance 1 4 9      run the listed criteria only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "vidmdl/audit.hpp"
#include "vidmdl/experiment.hpp"
#include "vidmdl/gradsuite.hpp"
#include "vidmdl/synth.hpp"

using namespace vidmdl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// 1. Published parameter budgets from the X3D-M channel spec.
void parameter_tables(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  const ChannelSpec spec = x3dm_channel_spec();
  const std::vector<std::int64_t> three{51, 101, 400};
  auto run = [&](AdapterKind k, InsertionConfig ins, std::vector<std::int64_t> d, bool trainable = true) {
    return audit(AuditScenario{"", spec, k, ins, std::move(d), trainable, kX3dmBaseParams});
  };
  int checked = 0;
  auto near = [&](std::int64_t count, double reference, const std::string& what) {
    ++checked;
    o.require(std::abs(static_cast<double>(count) / 1e6 - reference) <= 0.01 + 1e-9,
              what + " = " + fixed(count / 1e6) + " vs " + fixed(reference, 2));
  };
  near(run(AdapterKind::Framewise2D, InsertionConfig::all(), three).adapters, 1.34, "t1 2d");
  near(run(AdapterKind::SeparableST, InsertionConfig::all(), three).adapters, 1.79, "t1 (2+1)d");
  near(run(AdapterKind::Full3D, InsertionConfig::all(), three).adapters, 4.02, "t1 3d");
  near(run(AdapterKind::SeparableST, InsertionConfig::early(1), three).adapters, 0.02, "t3 early-1");
  near(run(AdapterKind::SeparableST, InsertionConfig::early(3), three).adapters, 0.13, "t3 early-3");
  near(run(AdapterKind::SeparableST, InsertionConfig::late(3), three).adapters, 1.75, "t3 late-3");
  near(run(AdapterKind::SeparableST, InsertionConfig::late(1), three).adapters, 1.33, "t3 late-1");
  near(run(AdapterKind::SeparableST, InsertionConfig::all(), three).adapters, 1.79, "t3 all");
  near(run(AdapterKind::SeparableST, InsertionConfig::multi_head(), {51}).heads, 0.10, "t4a head 51");
  near(run(AdapterKind::SeparableST, InsertionConfig::multi_head(), {101}).heads, 0.21, "t4a head 101");
  near(run(AdapterKind::SeparableST, InsertionConfig::multi_head(), {400}).heads, 0.82, "t4a head 400");
  near(run(AdapterKind::SeparableST, InsertionConfig::all(), {51}).adapters, 0.60, "t4a single-domain adapters");
  near(run(AdapterKind::SeparableST, InsertionConfig::all(), three).heads, 1.13, "t4a D=3 heads");
  const auto fix = run(AdapterKind::SeparableST, InsertionConfig::all(), three, false);
  const std::int64_t fix_total = fix.heads + fix.adapters + fix.norms;
  ++checked;
  o.require(fix.base == 0, "fix row has no base parameters");
  o.require(fix_total >= 2'905'000 && fix_total < 2'925'000, "t2 fix total " + fixed(fix_total / 1e6) + " in [2.91, 2.92]");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 1.0, "runtime " + fixed(secs) + " s");
  o.detail << checked << " values, t2 fix total " << fixed(fix_total / 1e6) << " M, " << fixed(secs * 1e3, 2) << " ms";
}

// 2. Finite-difference gradient checks.
void gradients(Outcome& o) {
  const double t0 = cpu_seconds();
  GradSuiteOptions opts;  // eps 1e-5, rtol 1e-4, 3 shapes per case
  const auto cases = run_grad_suite(opts);
  const double secs = cpu_seconds() - t0;
  std::map<std::string, int> trials;
  double worst = 0;
  for (const auto& c : cases) {
    ++trials[c.name];
    worst = std::max(worst, c.report.max_rel_error);
    o.require(c.report.passed, c.name + " " + c.shape + " rel " + std::to_string(c.report.max_rel_error));
  }
  for (const auto& [name, n] : trials) o.require(n >= 3, name + " ran " + std::to_string(n) + " shapes");
  for (const char* must : {"adapter_2d/input", "adapter_(2+1)d/input", "adapter_3d/input", "network_loss/input",
                           "network_loss/adapter", "conv_3d/weight", "batch_norm_train/input", "layer_norm/input",
                           "softmax_cross_entropy"}) {
    o.require(trials.count(must) == 1, std::string("missing case ") + must);
  }
  o.require(secs < 120.0, "suite CPU time " + fixed(secs, 1) + " s");
  o.detail << cases.size() << " checks over " << trials.size() << " cases, worst rel err " << worst << ", "
           << fixed(secs, 1) << " s CPU";
}

// 3. Fast convolutions vs nested-loop oracles.
void conv_oracle(Outcome& o) {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> b(1, 2), t(1, 4), c(1, 4), hw(1, 6);
  double worst = 0;
  int cases = 0;
  for (int trial = 0; trial < 50; ++trial) {
    for (ConvKind kind : {ConvKind::Framewise2D, ConvKind::Full3D, ConvKind::Temporal1D, ConvKind::Strided}) {
      const Shape xs{b(rng), t(rng), c(rng), hw(rng), hw(rng)};
      std::int64_t kt = 3, kh = 3, kw = 3, stride = 1;
      if (kind == ConvKind::Framewise2D) kt = 1;
      if (kind == ConvKind::Temporal1D) kh = kw = 1;
      if (kind == ConvKind::Strided) stride = 1 + trial % 2;
      ConvKernel k = ConvKernel::make(kind, c(rng), xs[2], kt, kh, kw, trial % 2 == 1, stride);
      k.weight = oracle::random_tensor(k.weight.shape(), rng);
      if (k.has_bias()) k.bias = oracle::random_tensor(k.bias.shape(), rng);
      Tensor x = oracle::random_tensor(xs, rng);
      Tape tape;
      Tensor y = kind == ConvKind::Framewise2D ? conv_framewise_2d(tape, x, k)
                 : kind == ConvKind::Full3D    ? conv_3d(tape, x, k)
                 : kind == ConvKind::Temporal1D ? conv_temporal_1d(tape, x, k)
                                                : conv3d(tape, x, k);
      const auto want = oracle::conv(x, k);
      if (static_cast<std::size_t>(y.numel()) != want.size()) {
        o.require(false, "output size for " + to_string(kind) + " " + shape_str(xs));
        continue;
      }
      worst = std::max(worst, oracle::max_abs_diff(y.data(), want));
      ++cases;
    }
  }
  o.require(worst <= 1e-12, "max abs diff " + std::to_string(worst));
  o.detail << cases << " random shapes up to (2,4,4,6,6), max abs diff " << worst;
}

// 4. Accumulation equivalence and parameter hashes.
void accumulation(Outcome& o) {
  MdlNetwork net(make_toy_backbone(fixtures::small_backbone(), 1), {{1, "a", 3}, {2, "b", 4}, {3, "c", 5}},
                 AdapterKind::SeparableST, InsertionConfig::all(), true, 2, 0.5);
  fixtures::RandomSampler s1(1, 3, 11), s2(2, 4, 12), s3(3, 5, 13);
  std::vector<DomainBatch> batches{s1.next(3), s2.next(3), s3.next(3)};

  std::map<std::string, std::vector<double>> summed;
  for (const auto& batch : batches) {
    MdlNetwork iso = net.clone();
    iso.zero_grad();
    accumulate(iso, std::span(&batch, 1), 0);
    for (const auto& p : iso.trainable_params()) {
      auto& acc = summed[p.name];
      if (acc.empty()) acc.assign(static_cast<std::size_t>(p.tensor.numel()), 0.0);
      if (!p.tensor.has_grad()) continue;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.tensor.grad()[i];
    }
  }

  const std::initializer_list<ParamTag> every{ParamTag::Base, ParamTag::Head, ParamTag::Adapter, ParamTag::Norm};
  MdlNetwork joint = net.clone();
  joint.zero_grad();
  const auto h0 = fixtures::param_hash(joint, every);
  accumulate(joint, batches, 0);
  o.require(fixtures::param_hash(joint, every) == h0, "parameters changed during accumulation");
  double worst = 0;
  for (const auto& p : joint.trainable_params()) {
    const auto& want = summed.at(p.name);
    for (std::size_t i = 0; i < want.size(); ++i) {
      const double got = p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0;
      if (got == want[i]) continue;
      worst = std::max(worst, std::abs(got - want[i]) / std::max(std::abs(want[i]), 1e-300));
    }
  }
  o.require(worst <= 1e-12, "max rel diff " + std::to_string(worst));

  // Hashes across cycles: constant while a cycle accumulates, different after each step.
  TrainSchedule sched;
  sched.total_iterations = 3;
  sched.batch_size = 2;
  sched.lr0 = 0.01;
  SgdMomentum opt(sched.momentum);
  std::set<std::uint64_t> seen{fixtures::param_hash(joint, every)};
  joint.zero_grad();
  DomainCycle cycle(sched, {{1, &s1}, {2, &s2}, {3, &s3}});
  for (std::int64_t it = 0; it < sched.total_iterations; ++it) {
    const auto before = fixtures::param_hash(joint, every);
    const auto cyc = cycle.next_cycle();
    for (const auto& b : cyc) {
      accumulate(joint, std::span(&b, 1), it);
      o.require(fixtures::param_hash(joint, every) == before, "hash changed mid-cycle");
    }
    opt.step(joint.trainable_params(), lr_at(it, sched));
    o.require(seen.insert(fixtures::param_hash(joint, every)).second, "hash unchanged across cycles");
  }
  o.detail << "max rel diff " << worst << " over " << summed.size() << " tensors; " << seen.size()
           << " distinct hashes over 3 cycles";
}

// 5. Identity at initialization.
void identity_at_init(Outcome& o) {
  int compared = 0;
  std::mt19937_64 rng(5);
  for (AdapterKind kind : {AdapterKind::Framewise2D, AdapterKind::SeparableST, AdapterKind::Full3D}) {
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      MdlNetwork plain(make_toy_backbone(fixtures::small_backbone(), 4), {{1, "a", 4}, {2, "b", 6}}, kind,
                       InsertionConfig::multi_head(), true, 8);
      MdlNetwork adapted(make_toy_backbone(fixtures::small_backbone(), 4), {{1, "a", 4}, {2, "b", 6}}, kind,
                         InsertionConfig::all(), true, 8);
      adapted.post_norms().set_pass_through(true);
      for (int d : {1, 2}) {
        Tensor x = oracle::random_tensor({2, 3, 3, 16, 16}, rng);
        Tape t1, t2;
        ForwardProbe probe;
        const Tensor a = plain.forward(t1, x, d, mode);
        const Tensor b = adapted.forward(t2, x, d, mode, &probe);
        o.require(probe.adapters_executed == 5, "adapters did not run");
        o.require(std::vector<double>(a.data().begin(), a.data().end()) ==
                      std::vector<double>(b.data().begin(), b.data().end()),
                  to_string(kind) + " logits differ");
        ++compared;
      }
    }
  }
  o.detail << compared << " forward passes bit-identical with adapters at all 5 locations";
}

// 6. Temporal adapters beat frame-wise adapters on the motion domain.
void temporal_adapters(Outcome& o, const fs::path& scratch) {
  const double t0 = cpu_seconds();
  auto flat = resolve_config_source("table1-sweep", {"sweep.model.adapter=2d | (2+1)d"});
  flat["experiment.output"] = (scratch / "c6").string();
  const auto runs = run_experiment(flat);
  const double secs = cpu_seconds() - t0;
  const int motion = 2;
  std::map<std::string, std::vector<double>> acc;
  for (const auto& r : runs) acc[r.variant].push_back(r.top1.at(motion));
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const auto& sep = acc["adapter=(2+1)d"];
  const auto& fw = acc["adapter=2d"];
  o.require(sep.size() == 3 && fw.size() == 3, "expected 3 seeds per variant");
  const double gap = mean(sep) - mean(fw);
  o.require(gap >= 0.05, "gap " + fixed(100 * gap, 1) + " points");
  o.require(secs <= 20 * 60, "runtime " + fixed(secs / 60, 1) + " min");
  o.detail << "motion top-1 (2+1)d " << fixed(mean(sep)) << " vs 2d " << fixed(mean(fw)) << " (+"
           << fixed(100 * gap, 1) << " points), " << fixed(secs / 60, 1) << " min CPU";
}

// 7. Joint training helps the small domain.
void small_domain_benefit(Outcome& o, const fs::path& scratch) {
  auto flat = resolve_config_source("table4-domains", {"sweep.experiment.domains=1 | 1, 3"});
  flat["experiment.output"] = (scratch / "c7").string();
  const auto runs = run_experiment(flat);
  std::map<std::string, std::vector<double>> acc;
  for (const auto& r : runs) acc[r.variant].push_back(r.top1.at(1));
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const auto& single = acc["domains=1"];
  const auto& joint = acc["domains=1, 3"];
  o.require(single.size() == 3 && joint.size() == 3, "expected 3 seeds per variant");
  o.require(mean(joint) >= mean(single), "joint below single");
  o.detail << "small-domain top-1 joint " << fixed(mean(joint)) << " vs single " << fixed(mean(single));
}

// 8. Multi-view protocol.
void multiview(Outcome& o) {
  std::mt19937_64 rng(8);
  int geometries = 0;
  for (int frames : {16, 17, 24, 40}) {
    for (int side : {16, 19, 24}) {
      SyntheticDomain d;
      d.kind = GeneratorKind::TemporalMotion;
      d.frames = frames;
      d.height = side;
      d.width = side + 3;
      ClipSamplerConfig cfg;
      cfg.window_frames = 16;
      cfg.resize_min = 16;
      cfg.resize_max = 16;
      cfg.crop = 16;
      const auto views = sample_eval_views(generate_clip(d, 1, 0), cfg);
      o.require(views.size() == 30, std::to_string(views.size()) + " views for " + std::to_string(frames) + " frames");
      ++geometries;
    }
  }
  MdlNetwork net(make_toy_backbone(fixtures::small_backbone(), 1), {{1, "a", 5}}, AdapterKind::SeparableST,
                 InsertionConfig::all(), true, 3, 0.7);
  Tensor v = oracle::random_tensor({1, 16, 3, 16, 16}, rng);
  const std::vector<Tensor> one{v};
  const std::vector<Tensor> thirty(30, v);
  o.require(multiview_predict(net, thirty, 1) == multiview_predict(net, one, 1), "identical views differ from one view");
  o.detail << "30 views on " << geometries << " geometries; 30 identical views == single view exactly";
}

// 9. Domain order and learning-rate schedule.
void schedule(Outcome& o) {
  std::vector<int> log;
  fixtures::RandomSampler a(1, 3, 1, &log), b(2, 3, 2, &log), c(3, 3, 3, &log);
  TrainSchedule s;
  s.batch_size = 1;
  DomainCycle cycle(s, {{1, &a}, {2, &b}, {3, &c}});
  for (int k = 0; k < 12; ++k) cycle.next();
  for (std::size_t i = 0; i < log.size(); ++i) o.require(log[i] == static_cast<int>(i % 3) + 1, "domain order");

  s.lr0 = 0.001;
  s.lr_drop_points = {8000, 12000};
  auto rel = [](double a, double b) { return std::abs(a - b) / b; };
  const std::vector<std::pair<std::int64_t, double>> expect{
      {0, 1e-3}, {7999, 1e-3}, {8000, 1e-4}, {11999, 1e-4}, {12000, 1e-5}, {15999, 1e-5}};
  for (const auto& [it, lr] : expect) o.require(rel(lr_at(it, s), lr) < 1e-12, "lr at " + std::to_string(it));
  o.detail << "order 1,2,3 x4; lr 0.001 -> 0.0001 at 8000 -> 0.00001 at 12000";
}

// 10. Frozen vs trainable base.
void fix_vs_train(Outcome& o) {
  SyntheticDomain d1;
  d1.id = 1;
  d1.kind = GeneratorKind::SpatialPatterns;
  d1.frames = 10;
  d1.height = d1.width = 12;
  SyntheticDomain d2 = d1;
  d2.id = 2;
  d2.kind = GeneratorKind::TemporalMotion;
  ClipSamplerConfig cfg;
  cfg.window_frames = 8;
  cfg.clip_len = 4;
  cfg.resize_min = 12;
  cfg.resize_max = 14;
  cfg.crop = 12;
  for (bool trainable : {false, true}) {
    MdlNetwork net(make_toy_backbone(fixtures::small_backbone(), 1), {d1.spec(), d2.spec()}, AdapterKind::SeparableST,
                   InsertionConfig::all(), trainable, 1);
    const auto base0 = fixtures::param_hash(net, {ParamTag::Base});
    const auto adapters0 = fixtures::param_hash(net, {ParamTag::Adapter});
    const auto heads0 = fixtures::param_hash(net, {ParamTag::Head});
    SyntheticSampler s1(d1, cfg, 1), s2(d2, cfg, 2);
    TrainSchedule sched;
    sched.total_iterations = 5;
    sched.batch_size = 4;
    sched.lr0 = 0.01;
    train(net, sched, {{1, &s1}, {2, &s2}}, {});
    const bool base_same = fixtures::param_hash(net, {ParamTag::Base}) == base0;
    o.require(fixtures::param_hash(net, {ParamTag::Adapter}) != adapters0, "adapters unchanged");
    o.require(fixtures::param_hash(net, {ParamTag::Head}) != heads0, "heads unchanged");
    if (trainable) o.require(!base_same, "trainable base did not change");
    else o.require(base_same, "frozen base changed");
  }
  o.detail << "frozen base bit-identical after 5 updates, trainable base changed; adapters and heads changed in both";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const fs::path scratch = fs::temp_directory_path() / "vidmdl_acceptance";
  fs::remove_all(scratch);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"parameter-table golden reproduction", parameter_tables},
      {"gradient correctness", gradients},
      {"convolution oracle equivalence", conv_oracle},
      {"accumulation equivalence", accumulation},
      {"identity at init", identity_at_init},
      {"temporal adapters beat 2D adapters on motion", [&](Outcome& o) { temporal_adapters(o, scratch); }},
      {"small-domain benefit from joint training", [&](Outcome& o) { small_domain_benefit(o, scratch); }},
      {"multi-view protocol", multiview},
      {"domain order and learning-rate schedule", schedule},
      {"fix vs train base", fix_vs_train},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " -- "
              << o.detail.str() << std::endl;
  }
  fs::remove_all(scratch);
  return failed == 0 ? 0 : 1;
}
