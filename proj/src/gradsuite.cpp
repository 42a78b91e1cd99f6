// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/gradsuite.hpp"

#include <random>

#include "vidmdl/adapter.hpp"
#include "vidmdl/network.hpp"
#include "vidmdl/nn.hpp"
#include "vidmdl/ops.hpp"

namespace vidmdl {

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v));
}

std::vector<double> random_weights(std::int64_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& x : w) x = u(rng);
  return w;
}

// Random (B, T, C, H, W) with small extents.
Shape clip_shape(std::mt19937_64& rng, std::int64_t channels = 0) {
  auto pick = [&](int lo, int hi) { return static_cast<std::int64_t>(std::uniform_int_distribution<int>(lo, hi)(rng)); };
  return {pick(1, 2), pick(1, 3), channels > 0 ? channels : pick(1, 3), pick(2, 4), pick(2, 4)};
}

void randomize(Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
}

class Suite {
 public:
  Suite(const GradSuiteOptions& o, const std::function<void(const GradSuiteCase&)>& progress)
      : opt_(o), progress_(progress), rng_(o.seed) {}

  // `build(rng)` returns the probed tensor and a function of it.
  void run(const std::string& name, const std::function<std::pair<Tensor, ScalarFn>(std::mt19937_64&)>& build) {
    for (int trial = 0; trial < opt_.trials; ++trial) {
      auto [x, f] = build(rng_);
      GradCheckOptions gopt;
      gopt.seed = opt_.seed + static_cast<std::uint64_t>(trial);
      GradSuiteCase c{name, shape_str(x.shape()), finite_diff_check(f, x, opt_.eps, opt_.rtol, gopt)};
      if (progress_) progress_(c);
      cases_.push_back(std::move(c));
    }
  }

  std::vector<GradSuiteCase> take() { return std::move(cases_); }

 private:
  GradSuiteOptions opt_;
  std::function<void(const GradSuiteCase&)> progress_;
  std::mt19937_64 rng_;
  std::vector<GradSuiteCase> cases_;
};

// Loss = random projection of the op output, so no gradient is trivially constant.
ScalarFn projected(std::function<Tensor(Tape&, const Tensor&)> op, std::vector<double> w) {
  return [op = std::move(op), w = std::move(w)](Tape& tape, const Tensor& x) {
    return weighted_sum(tape, op(tape, x), w);
  };
}

using Build = std::pair<Tensor, ScalarFn>;

void elementwise_cases(Suite& s) {
  auto binary = [&](const std::string& name, Tensor (*op)(Tape&, const Tensor&, const Tensor&)) {
    s.run(name, [op](std::mt19937_64& rng) -> Build {
      const Shape sh = clip_shape(rng);
      Tensor other = random_tensor(sh, rng);
      auto w = random_weights(numel_of(sh), rng);
      return {random_tensor(sh, rng), projected([op, other](Tape& t, const Tensor& x) { return op(t, x, other); }, w)};
    });
  };
  binary("add", add);
  binary("sub", sub);
  binary("mul", mul);
  s.run("scale", [](std::mt19937_64& rng) -> Build {
    const Shape sh = clip_shape(rng);
    return {random_tensor(sh, rng),
            projected([](Tape& t, const Tensor& x) { return scale(t, x, -1.7); }, random_weights(numel_of(sh), rng))};
  });
  s.run("relu", [](std::mt19937_64& rng) -> Build {
    const Shape sh = clip_shape(rng);
    // Keep inputs away from the kink.
    Tensor x = random_tensor(sh, rng, 0.05, 1.0);
    std::bernoulli_distribution neg(0.5);
    for (double& v : x.data()) v = neg(rng) ? -v : v;
    return {x, projected([](Tape& t, const Tensor& in) { return relu(t, in); }, random_weights(numel_of(sh), rng))};
  });
  s.run("sum", [](std::mt19937_64& rng) -> Build {
    return {random_tensor(clip_shape(rng), rng), [](Tape& t, const Tensor& x) { return sum(t, mul(t, x, x)); }};
  });
}

void conv_cases(Suite& s) {
  struct Variant {
    std::string name;
    ConvKind kind;
    int kt, kh, kw, stride;
    bool bias;
    Tensor (*op)(Tape&, const Tensor&, const ConvKernel&);
  };
  const std::vector<Variant> variants{
      {"conv_framewise_2d", ConvKind::Framewise2D, 1, 3, 3, 1, false, conv_framewise_2d},
      {"conv_3d", ConvKind::Full3D, 3, 3, 3, 1, true, conv_3d},
      {"conv_temporal_1d", ConvKind::Temporal1D, 3, 1, 1, 1, false, conv_temporal_1d},
      {"conv_strided", ConvKind::Strided, 1, 3, 3, 2, false, conv3d},
  };
  for (const auto& v : variants) {
    for (const std::string probe : {"input", "weight", "bias"}) {
      if (probe == "bias" && !v.bias) continue;
      s.run(v.name + "/" + probe, [v, probe](std::mt19937_64& rng) -> Build {
        const Shape sh = clip_shape(rng);
        const auto cout = static_cast<std::int64_t>(std::uniform_int_distribution<int>(1, 3)(rng));
        ConvKernel k = ConvKernel::make(v.kind, cout, sh[2], v.kt, v.kh, v.kw, v.bias, v.stride);
        randomize(k.weight, rng);
        if (v.bias) randomize(k.bias, rng);
        Tensor x = random_tensor(sh, rng);
        Tape probe_tape;
        const auto n = v.op(probe_tape, x, k).numel();
        auto w = random_weights(n, rng);
        auto op = v.op;
        if (probe == "input") {
          return {x, projected([k, op](Tape& t, const Tensor& in) { return op(t, in, k); }, w)};
        }
        Tensor target = probe == "weight" ? k.weight : k.bias;
        return {target, projected([k, op, x](Tape& t, const Tensor&) { return op(t, x, k); }, w)};
      });
    }
  }
}

void norm_cases(Suite& s) {
  for (const std::string probe : {"input", "gamma", "beta"}) {
    s.run("batch_norm_train/" + probe, [probe](std::mt19937_64& rng) -> Build {
      Shape sh = clip_shape(rng);
      if (numel_of(sh) / sh[2] < 2) sh[3] = 3;  // need a non-degenerate batch per channel
      auto bn = std::make_shared<BatchNorm>(BatchNorm::make(sh[2]));
      randomize(bn->gamma, rng, 0.5, 1.5);
      randomize(bn->beta, rng);
      Tensor x = random_tensor(sh, rng);
      auto w = random_weights(numel_of(sh), rng);
      ScalarFn f = projected([bn, x, probe](Tape& t, const Tensor& in) {
        return batch_norm(t, probe == "input" ? in : x, *bn, Mode::Train);
      }, w);
      return {probe == "input" ? x : probe == "gamma" ? bn->gamma : bn->beta, f};
    });
  }
  s.run("batch_norm_eval/input", [](std::mt19937_64& rng) -> Build {
    const Shape sh = clip_shape(rng);
    auto bn = std::make_shared<BatchNorm>(BatchNorm::make(sh[2]));
    randomize(bn->gamma, rng, 0.5, 1.5);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (auto& v : bn->running_var) v = u(rng);
    for (auto& v : bn->running_mean) v = u(rng) - 1.0;
    return {random_tensor(sh, rng), projected([bn](Tape& t, const Tensor& in) {
              return batch_norm(t, in, *bn, Mode::Eval);
            }, random_weights(numel_of(sh), rng))};
  });
  for (const std::string probe : {"input", "gamma", "beta"}) {
    s.run("layer_norm/" + probe, [probe](std::mt19937_64& rng) -> Build {
      const Shape sh = clip_shape(rng);
      LayerNorm ln = LayerNorm::make(sh[2]);
      randomize(ln.gamma, rng, 0.5, 1.5);
      randomize(ln.beta, rng);
      Tensor x = random_tensor(sh, rng);
      auto w = random_weights(numel_of(sh), rng);
      ScalarFn f = projected([ln, x, probe](Tape& t, const Tensor& in) {
        return layer_norm(t, probe == "input" ? in : x, ln);
      }, w);
      return {probe == "input" ? x : probe == "gamma" ? ln.gamma : ln.beta, f};
    });
  }
}

void head_cases(Suite& s) {
  s.run("global_avg_pool", [](std::mt19937_64& rng) -> Build {
    const Shape sh = clip_shape(rng);
    return {random_tensor(sh, rng), projected([](Tape& t, const Tensor& in) { return global_avg_pool(t, in); },
                                              random_weights(sh[0] * sh[2], rng))};
  });
  for (const std::string probe : {"input", "weight", "bias"}) {
    s.run("linear_head/" + probe, [probe](std::mt19937_64& rng) -> Build {
      const auto b = std::uniform_int_distribution<int>(1, 3)(rng);
      const auto f = std::uniform_int_distribution<int>(1, 5)(rng);
      const auto n = std::uniform_int_distribution<int>(2, 4)(rng);
      Tensor x = random_tensor({b, f}, rng);
      Tensor w = random_tensor({n, f}, rng);
      Tensor bias = random_tensor({n}, rng);
      ScalarFn fn = projected([x, w, bias, probe](Tape& t, const Tensor&) { return linear_head(t, x, w, bias); },
                              random_weights(b * n, rng));
      return {probe == "input" ? x : probe == "weight" ? w : bias, fn};
    });
  }
  s.run("softmax_cross_entropy", [](std::mt19937_64& rng) -> Build {
    const auto b = std::uniform_int_distribution<int>(1, 4)(rng);
    const auto n = std::uniform_int_distribution<int>(2, 5)(rng);
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (auto& l : labels) l = std::uniform_int_distribution<int>(0, n - 1)(rng);
    return {random_tensor({b, n}, rng, -3.0, 3.0),
            [labels](Tape& t, const Tensor& x) { return softmax_cross_entropy(t, x, labels); }};
  });
}

void adapter_cases(Suite& s) {
  for (auto kind : {AdapterKind::Framewise2D, AdapterKind::Full3D, AdapterKind::SeparableST}) {
    for (const std::string probe : {"input", "conv", "bn.gamma"}) {
      s.run("adapter_" + to_string(kind) + "/" + probe, [kind, probe](std::mt19937_64& rng) -> Build {
        Shape sh = clip_shape(rng);
        if (numel_of(sh) / sh[2] < 2) sh[3] = 3;
        auto blk = std::make_shared<AdapterBlock>(AdapterBlock::make(kind, sh[2]));
        // Non-zero BN scale, otherwise the conv branch has no gradient at all.
        blk->initialize(rng, 1.0);
        randomize(blk->bn.gamma, rng, 0.5, 1.5);
        randomize(blk->bn.beta, rng, -0.5, 0.5);
        LayerNorm ln = LayerNorm::make(sh[2]);
        randomize(ln.gamma, rng, 0.5, 1.5);
        Tensor x = random_tensor(sh, rng);
        auto w = random_weights(numel_of(sh), rng);
        ScalarFn f = projected([blk, ln, x, probe](Tape& t, const Tensor& in) {
          return adapter_forward(t, probe == "input" ? in : x, *blk, ln, Mode::Train);
        }, w);
        Tensor target = probe == "input" ? x : probe == "conv" ? blk->convs.front().weight : blk->bn.gamma;
        return {target, f};
      });
    }
  }
}

void network_cases(Suite& s) {
  for (const std::string probe : {"input", "base", "adapter", "head"}) {
    s.run("network_loss/" + probe, [probe](std::mt19937_64& rng) -> Build {
      ToyBackboneConfig cfg;
      cfg.in_channels = 2;
      cfg.widths = {2, 3, 3, 4, 4};
      cfg.feature_width = 5;
      cfg.temporal_kernel = std::uniform_int_distribution<int>(0, 1)(rng) ? 3 : 1;
      const std::uint64_t seed = rng();
      auto net = std::make_shared<MdlNetwork>(make_toy_backbone(cfg, seed), std::vector<DomainSpec>{{1, "a", 3}},
                                              AdapterKind::SeparableST, InsertionConfig::all(), true, seed, 0.5);
      const auto b = std::uniform_int_distribution<int>(2, 3)(rng);
      const auto t = std::uniform_int_distribution<int>(2, 3)(rng);
      // Four stride-2 layers; 24 px keeps the last BN off a single element per channel.
      Tensor x = random_tensor({b, t, 2, 24, 24}, rng);
      std::vector<int> labels(static_cast<std::size_t>(b));
      for (auto& l : labels) l = std::uniform_int_distribution<int>(0, 2)(rng);
      ScalarFn f = [net, x, labels, probe](Tape& tape, const Tensor& in) {
        return softmax_cross_entropy(tape, net->forward(tape, probe == "input" ? in : x, 1, Mode::Train), labels);
      };
      Tensor target = x;
      if (probe == "base") target = net->backbone().layers[1].conv.weight;
      if (probe == "adapter") target = net->banks().at(1).blocks.at(2).convs.back().weight;
      if (probe == "head") target = net->heads().at(1).weight;
      return {target, f};
    });
  }
}

}  // namespace

std::vector<GradSuiteCase> run_grad_suite(const GradSuiteOptions& options,
                                          const std::function<void(const GradSuiteCase&)>& progress) {
  Suite s(options, progress);
  elementwise_cases(s);
  conv_cases(s);
  norm_cases(s);
  head_cases(s);
  adapter_cases(s);
  network_cases(s);
  return s.take();
}

}  // namespace vidmdl
