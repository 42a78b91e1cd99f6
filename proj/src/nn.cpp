// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "vidmdl/error.hpp"

namespace vidmdl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void require_clip(std::string_view op, const Tensor& x) {
  if (x.rank() != 5) {
    throw DimensionError(std::string(op) + ": expected a (B,T,C,H,W) tensor, got shape " + shape_str(x.shape()));
  }
}

// Index arithmetic for one same-padded convolution.
struct ConvGeometry {
  std::int64_t batch, frames, cin, h, w;
  std::int64_t cout, kt, kh, kw, sh, sw;
  std::int64_t pt, ph, pw;
  std::int64_t ho, wo;

  std::int64_t rows() const { return cin * kt * kh * kw; }
  std::int64_t cols() const { return ho * wo; }
  std::int64_t in_frame() const { return cin * h * w; }
  std::int64_t out_frame() const { return cout * ho * wo; }
};

ConvGeometry geometry(std::string_view op, const Tensor& x, const ConvKernel& k) {
  require_clip(op, x);
  const auto& s = x.shape();
  if (s[2] != k.in_channels) {
    throw DimensionError(std::string(op) + ": input has " + std::to_string(s[2]) + " channels on axis 2, kernel expects " +
                         std::to_string(k.in_channels));
  }
  ConvGeometry g{};
  g.batch = s[0];
  g.frames = s[1];
  g.cin = s[2];
  g.h = s[3];
  g.w = s[4];
  g.cout = k.out_channels;
  g.kt = k.kt;
  g.kh = k.kh;
  g.kw = k.kw;
  g.sh = k.stride_h;
  g.sw = k.stride_w;
  g.pt = k.kt / 2;
  g.ph = k.kh / 2;
  g.pw = k.kw / 2;
  g.ho = conv_out_extent(g.h, g.kh, g.sh);
  g.wo = conv_out_extent(g.w, g.kw, g.sw);
  return g;
}

// Gathers the receptive fields of output frame (b, t) into a rows x cols matrix.
void im2col(const ConvGeometry& g, const double* x, std::int64_t b, std::int64_t t, RowMatrix& col) {
  col.setZero(g.rows(), g.cols());
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (std::int64_t dt = 0; dt < g.kt; ++dt) {
      const std::int64_t ti = t + dt - g.pt;
      for (std::int64_t dy = 0; dy < g.kh; ++dy) {
        for (std::int64_t dx = 0; dx < g.kw; ++dx, ++r) {
          if (ti < 0 || ti >= g.frames) continue;
          const double* frame = x + ((b * g.frames + ti) * g.cin + ci) * g.h * g.w;
          double* dst = col.data() + r * g.cols();
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.sh + dy - g.ph;
            if (iy < 0 || iy >= g.h) continue;
            const double* src = frame + iy * g.w;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.sw + dx - g.pw;
              if (ix >= 0 && ix < g.w) dst[oy * g.wo + ox] = src[ix];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds column gradients back into the input gradient.
void col2im(const ConvGeometry& g, const RowMatrix& col, std::int64_t b, std::int64_t t, double* dx) {
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (std::int64_t dt = 0; dt < g.kt; ++dt) {
      const std::int64_t ti = t + dt - g.pt;
      for (std::int64_t dy = 0; dy < g.kh; ++dy) {
        for (std::int64_t kx = 0; kx < g.kw; ++kx, ++r) {
          if (ti < 0 || ti >= g.frames) continue;
          double* frame = dx + ((b * g.frames + ti) * g.cin + ci) * g.h * g.w;
          const double* src = col.data() + r * g.cols();
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.sh + dy - g.ph;
            if (iy < 0 || iy >= g.h) continue;
            double* dst = frame + iy * g.w;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.sw + kx - g.pw;
              if (ix >= 0 && ix < g.w) dst[ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

void require_kind(std::string_view op, const ConvKernel& k, ConvKind expected) {
  if (k.kind != expected) {
    throw ContractError(std::string(op) + ": kernel kind is " + to_string(k.kind) + ", expected " +
                        to_string(expected));
  }
}

}  // namespace

std::string to_string(ConvKind kind) {
  switch (kind) {
    case ConvKind::Framewise2D: return "framewise-2d";
    case ConvKind::Full3D: return "full-3d";
    case ConvKind::Temporal1D: return "temporal-1d";
    case ConvKind::Strided: return "strided";
  }
  return "?";
}

ConvKernel ConvKernel::make(ConvKind kind, std::int64_t out_channels, std::int64_t in_channels, std::int64_t kt,
                            std::int64_t kh, std::int64_t kw, bool with_bias, std::int64_t stride) {
  for (auto e : {kt, kh, kw}) {
    if (e <= 0 || e % 2 == 0) throw ConfigError("conv kernel: extents must be odd and positive");
  }
  if (out_channels <= 0 || in_channels <= 0) throw ConfigError("conv kernel: channel counts must be positive");
  if (stride < 1) throw ConfigError("conv kernel: stride must be >= 1");
  switch (kind) {
    case ConvKind::Framewise2D:
      if (kt != 1) throw ConfigError("framewise-2d kernel requires k_t = 1");
      break;
    case ConvKind::Temporal1D:
      if (kh != 1 || kw != 1) throw ConfigError("temporal-1d kernel requires k_h = k_w = 1");
      break;
    case ConvKind::Full3D:
    case ConvKind::Strided:
      break;
  }
  if (kind != ConvKind::Strided && stride != 1) throw ConfigError(to_string(kind) + " kernel must have stride 1");
  ConvKernel k;
  k.kind = kind;
  k.out_channels = out_channels;
  k.in_channels = in_channels;
  k.kt = kt;
  k.kh = kh;
  k.kw = kw;
  k.stride_h = stride;
  k.stride_w = stride;
  k.weight = Tensor::zeros({out_channels, in_channels, kt, kh, kw});
  if (with_bias) k.bias = Tensor::zeros({out_channels});
  return k;
}

std::int64_t ConvKernel::param_count() const { return weight.numel() + (has_bias() ? bias.numel() : 0); }

void he_uniform(Tensor& weight, std::int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : weight.data()) v = dist(rng);
}

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride) {
  return (in + 2 * (k / 2) - k) / stride + 1;
}

Tensor conv3d(Tape& tape, const Tensor& x, const ConvKernel& k) {
  const ConvGeometry g = geometry("conv3d", x, k);
  Tensor out = Tensor::zeros({g.batch, g.frames, g.cout, g.ho, g.wo});

  ConstRowMap wmat(k.weight.data().data(), g.cout, g.rows());
  RowMatrix col;
  const double* xs = x.data().data();
  double* os = out.data().data();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t t = 0; t < g.frames; ++t) {
      im2col(g, xs, b, t, col);
      RowMap frame(os + (b * g.frames + t) * g.out_frame(), g.cout, g.cols());
      frame.noalias() = wmat * col;
      if (k.has_bias()) {
        auto bias = k.bias.data();
        for (std::int64_t c = 0; c < g.cout; ++c) frame.row(c).array() += bias[c];
      }
    }
  }

  Tensor weight = k.weight;
  Tensor bias = k.bias;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return tape.record("conv3d", std::move(inputs), out, [g, x = x, weight, bias, out]() mutable {
    const double* gs = out.grad().data();
    const double* xs = x.data().data();
    RowMatrix col;
    RowMatrix dcol;
    ConstRowMap wmat(weight.data().data(), g.cout, g.rows());
    const bool want_x = x.requires_grad();
    const bool want_w = weight.requires_grad();
    const bool want_b = bias.defined() && bias.requires_grad();
    double* dx = want_x ? x.grad().data() : nullptr;
    double* dw = want_w ? weight.grad().data() : nullptr;
    double* db = want_b ? bias.grad().data() : nullptr;
    for (std::int64_t b = 0; b < g.batch; ++b) {
      for (std::int64_t t = 0; t < g.frames; ++t) {
        ConstRowMap gframe(gs + (b * g.frames + t) * g.out_frame(), g.cout, g.cols());
        if (want_w) {
          im2col(g, xs, b, t, col);
          RowMap(dw, g.cout, g.rows()).noalias() += gframe * col.transpose();
        }
        if (want_b) {
          for (std::int64_t c = 0; c < g.cout; ++c) db[c] += gframe.row(c).sum();
        }
        if (want_x) {
          dcol.noalias() = wmat.transpose() * gframe;
          col2im(g, dcol, b, t, dx);
        }
      }
    }
  });
}

Tensor conv_framewise_2d(Tape& tape, const Tensor& x, const ConvKernel& k) {
  require_kind("conv_framewise_2d", k, ConvKind::Framewise2D);
  return conv3d(tape, x, k);
}

Tensor conv_3d(Tape& tape, const Tensor& x, const ConvKernel& k) {
  require_kind("conv_3d", k, ConvKind::Full3D);
  return conv3d(tape, x, k);
}

Tensor conv_temporal_1d(Tape& tape, const Tensor& x, const ConvKernel& k) {
  require_kind("conv_temporal_1d", k, ConvKind::Temporal1D);
  return conv3d(tape, x, k);
}

BatchNorm BatchNorm::make(std::int64_t channels, double gamma_init) {
  BatchNorm bn;
  bn.gamma = Tensor::full({channels}, gamma_init);
  bn.beta = Tensor::zeros({channels});
  bn.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
  bn.running_var.assign(static_cast<std::size_t>(channels), 1.0);
  return bn;
}

Tensor batch_norm(Tape& tape, const Tensor& x, BatchNorm& p, Mode mode) {
  require_clip("batch_norm", x);
  const auto& s = x.shape();
  const std::int64_t slices = s[0] * s[1];
  const std::int64_t channels = s[2];
  const std::int64_t hw = s[3] * s[4];
  if (channels != p.channels()) {
    throw DimensionError("batch_norm: input has " + std::to_string(channels) + " channels on axis 2, parameters have " +
                         std::to_string(p.channels()));
  }
  const double count = static_cast<double>(slices * hw);
  const auto xs = x.data();

  std::vector<double> mean(channels, 0.0);
  std::vector<double> invstd(channels, 0.0);
  if (mode == Mode::Train) {
    std::vector<double> var(channels, 0.0);
    for (std::int64_t sl = 0; sl < slices; ++sl) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const double* v = xs.data() + (sl * channels + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) mean[c] += v[i];
      }
    }
    for (auto& m : mean) m /= count;
    for (std::int64_t sl = 0; sl < slices; ++sl) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const double* v = xs.data() + (sl * channels + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = v[i] - mean[c];
          var[c] += d * d;
        }
      }
    }
    for (std::int64_t c = 0; c < channels; ++c) {
      const double biased = var[c] / count;
      invstd[c] = 1.0 / std::sqrt(biased + p.eps);
      const double unbiased = count > 1.0 ? var[c] / (count - 1.0) : biased;
      p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c];
      p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased;
    }
  } else {
    for (std::int64_t c = 0; c < channels; ++c) {
      mean[c] = p.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(p.running_var[c] + p.eps);
    }
  }

  Tensor out = Tensor::zeros(s);
  Tensor xhat = Tensor::zeros(s);
  {
    auto o = out.data();
    auto xh = xhat.data();
    const auto gam = p.gamma.data();
    const auto bet = p.beta.data();
    for (std::int64_t sl = 0; sl < slices; ++sl) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::int64_t base = (sl * channels + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double n = (xs[base + i] - mean[c]) * invstd[c];
          xh[base + i] = n;
          o[base + i] = gam[c] * n + bet[c];
        }
      }
    }
  }

  Tensor gamma = p.gamma;
  Tensor beta = p.beta;
  const bool train = mode == Mode::Train;
  return tape.record(train ? "batch_norm[train]" : "batch_norm[eval]", {x, gamma, beta}, out,
                     [x = x, gamma, beta, out, xhat, invstd, slices, channels, hw, count, train]() mutable {
                       const auto gy = out.grad();
                       const auto xh = xhat.data();
                       const auto gam = gamma.data();
                       std::vector<double> sum_g(channels, 0.0);
                       std::vector<double> sum_gx(channels, 0.0);
                       for (std::int64_t sl = 0; sl < slices; ++sl) {
                         for (std::int64_t c = 0; c < channels; ++c) {
                           const std::int64_t base = (sl * channels + c) * hw;
                           for (std::int64_t i = 0; i < hw; ++i) {
                             sum_g[c] += gy[base + i];
                             sum_gx[c] += gy[base + i] * xh[base + i];
                           }
                         }
                       }
                       if (gamma.requires_grad()) {
                         auto gg = gamma.grad();
                         for (std::int64_t c = 0; c < channels; ++c) gg[c] += sum_gx[c];
                       }
                       if (beta.requires_grad()) {
                         auto gb = beta.grad();
                         for (std::int64_t c = 0; c < channels; ++c) gb[c] += sum_g[c];
                       }
                       if (!x.requires_grad()) return;
                       auto gx = x.grad();
                       for (std::int64_t sl = 0; sl < slices; ++sl) {
                         for (std::int64_t c = 0; c < channels; ++c) {
                           const std::int64_t base = (sl * channels + c) * hw;
                           const double k = gam[c] * invstd[c];
                           if (train) {
                             const double mg = sum_g[c] / count;
                             const double mgx = sum_gx[c] / count;
                             for (std::int64_t i = 0; i < hw; ++i) {
                               gx[base + i] += k * (gy[base + i] - mg - xh[base + i] * mgx);
                             }
                           } else {
                             for (std::int64_t i = 0; i < hw; ++i) gx[base + i] += k * gy[base + i];
                           }
                         }
                       }
                     });
}

LayerNorm LayerNorm::make(std::int64_t channels) {
  LayerNorm ln;
  ln.gamma = Tensor::full({channels}, 1.0);
  ln.beta = Tensor::zeros({channels});
  return ln;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNorm& p) {
  require_clip("layer_norm", x);
  if (p.pass_through) return x;
  const auto& s = x.shape();
  const std::int64_t slices = s[0] * s[1];
  const std::int64_t channels = s[2];
  const std::int64_t hw = s[3] * s[4];
  const std::int64_t n = channels * hw;
  if (channels != p.channels()) {
    throw DimensionError("layer_norm: input has " + std::to_string(channels) + " channels on axis 2, parameters have " +
                         std::to_string(p.channels()));
  }
  const auto xs = x.data();
  Tensor out = Tensor::zeros(s);
  Tensor xhat = Tensor::zeros(s);
  std::vector<double> invstd(slices);
  auto o = out.data();
  auto xh = xhat.data();
  const auto gam = p.gamma.data();
  const auto bet = p.beta.data();
  for (std::int64_t sl = 0; sl < slices; ++sl) {
    const double* v = xs.data() + sl * n;
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= static_cast<double>(n);
    invstd[sl] = 1.0 / std::sqrt(var + p.eps);
    for (std::int64_t c = 0; c < channels; ++c) {
      for (std::int64_t i = 0; i < hw; ++i) {
        const std::int64_t idx = sl * n + c * hw + i;
        const double h = (xs[idx] - mean) * invstd[sl];
        xh[idx] = h;
        o[idx] = gam[c] * h + bet[c];
      }
    }
  }

  Tensor gamma = p.gamma;
  Tensor beta = p.beta;
  return tape.record("layer_norm", {x, gamma, beta}, out,
                     [x = x, gamma, beta, out, xhat, invstd, slices, channels, hw, n]() mutable {
                       const auto gy = out.grad();
                       const auto xh = xhat.data();
                       const auto gam = gamma.data();
                       if (gamma.requires_grad() || beta.requires_grad()) {
                         std::vector<double> dg(channels, 0.0);
                         std::vector<double> dbeta(channels, 0.0);
                         for (std::int64_t sl = 0; sl < slices; ++sl) {
                           for (std::int64_t c = 0; c < channels; ++c) {
                             const std::int64_t base = sl * n + c * hw;
                             for (std::int64_t i = 0; i < hw; ++i) {
                               dg[c] += gy[base + i] * xh[base + i];
                               dbeta[c] += gy[base + i];
                             }
                           }
                         }
                         if (gamma.requires_grad()) {
                           auto gg = gamma.grad();
                           for (std::int64_t c = 0; c < channels; ++c) gg[c] += dg[c];
                         }
                         if (beta.requires_grad()) {
                           auto gb = beta.grad();
                           for (std::int64_t c = 0; c < channels; ++c) gb[c] += dbeta[c];
                         }
                       }
                       if (!x.requires_grad()) return;
                       auto gx = x.grad();
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::int64_t sl = 0; sl < slices; ++sl) {
                         double sum_d = 0.0;
                         double sum_dx = 0.0;
                         for (std::int64_t c = 0; c < channels; ++c) {
                           const std::int64_t base = sl * n + c * hw;
                           for (std::int64_t i = 0; i < hw; ++i) {
                             const double d = gy[base + i] * gam[c];
                             sum_d += d;
                             sum_dx += d * xh[base + i];
                           }
                         }
                         for (std::int64_t c = 0; c < channels; ++c) {
                           const std::int64_t base = sl * n + c * hw;
                           for (std::int64_t i = 0; i < hw; ++i) {
                             const double d = gy[base + i] * gam[c];
                             gx[base + i] += invstd[sl] * (d - inv_n * sum_d - xh[base + i] * inv_n * sum_dx);
                           }
                         }
                       }
                     });
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_clip("global_avg_pool", x);
  const auto& s = x.shape();
  const std::int64_t batch = s[0], frames = s[1], channels = s[2], hw = s[3] * s[4];
  const double inv = 1.0 / static_cast<double>(frames * hw);
  Tensor out = Tensor::zeros({batch, channels});
  auto o = out.data();
  const auto xs = x.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t t = 0; t < frames; ++t) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const double* v = xs.data() + ((b * frames + t) * channels + c) * hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += v[i];
        o[b * channels + c] += acc;
      }
    }
  }
  for (double& v : o) v *= inv;
  return tape.record("global_avg_pool", {x}, out, [x = x, out, batch, frames, channels, hw, inv]() mutable {
    const auto g = out.grad();
    auto gx = x.grad();
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t t = 0; t < frames; ++t) {
        for (std::int64_t c = 0; c < channels; ++c) {
          const double v = g[b * channels + c] * inv;
          double* dst = gx.data() + ((b * frames + t) * channels + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) dst[i] += v;
        }
      }
    }
  });
}

LinearHead LinearHead::make(std::int64_t num_classes, std::int64_t features, std::mt19937_64& rng) {
  LinearHead head;
  head.weight = Tensor::zeros({num_classes, features});
  head.bias = Tensor::zeros({num_classes});
  const double bound = 1.0 / std::sqrt(static_cast<double>(features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : head.weight.data()) v = dist(rng);
  return head;
}

Tensor linear_head(Tape& tape, const Tensor& pooled, const Tensor& weight, const Tensor& bias) {
  if (pooled.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("linear_head: expected pooled (B,F), weight (N,F), bias (N); got " + shape_str(pooled.shape()) +
                         ", " + shape_str(weight.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::int64_t batch = pooled.dim(0), features = pooled.dim(1), classes = weight.dim(0);
  if (weight.dim(1) != features) {
    throw DimensionError("linear_head: feature width mismatch on axis 1: pooled " + std::to_string(features) +
                         " vs weight " + std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != classes) {
    throw DimensionError("linear_head: bias length " + std::to_string(bias.dim(0)) + " vs " + std::to_string(classes) +
                         " classes on axis 0");
  }
  Tensor out = Tensor::zeros({batch, classes});
  {
    ConstRowMap p(pooled.data().data(), batch, features);
    ConstRowMap w(weight.data().data(), classes, features);
    RowMap o(out.data().data(), batch, classes);
    // Row by row, so a sample's logits do not depend on the batch it sits in.
    for (std::int64_t b = 0; b < batch; ++b) o.row(b).noalias() = p.row(b) * w.transpose();
    const auto bs = bias.data();
    for (std::int64_t n = 0; n < classes; ++n) o.col(n).array() += bs[n];
  }
  return tape.record("linear_head", {pooled, weight, bias}, out,
                     [pooled = pooled, weight = weight, bias = bias, out, batch, features, classes]() mutable {
                       ConstRowMap g(out.grad().data(), batch, classes);
                       if (pooled.requires_grad()) {
                         ConstRowMap w(weight.data().data(), classes, features);
                         RowMap(pooled.grad().data(), batch, features).noalias() += g * w;
                       }
                       if (weight.requires_grad()) {
                         ConstRowMap p(pooled.data().data(), batch, features);
                         RowMap(weight.grad().data(), classes, features).noalias() += g.transpose() * p;
                       }
                       if (bias.requires_grad()) {
                         auto gb = bias.grad();
                         for (std::int64_t n = 0; n < classes; ++n) gb[n] += g.col(n).sum();
                       }
                     });
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be (B,N), got " + shape_str(logits.shape()));
  const std::int64_t batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch) + " on axis 0");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.data();
  Tensor probs = Tensor::zeros({batch, classes});
  auto pr = probs.data();
  double loss = 0.0;
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::int64_t n = 0; n < classes; ++n) denom += std::exp(row[n] - mx);
    const double log_denom = std::log(denom);
    for (std::int64_t n = 0; n < classes; ++n) pr[b * classes + n] = std::exp(row[n] - mx - log_denom);
    loss -= row[labels[b]] - mx - log_denom;
  }
  loss /= static_cast<double>(batch);
  Tensor out = Tensor::scalar(loss);
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record("softmax_cross_entropy", {logits}, out, [logits = logits, out, probs, ys, batch, classes]() mutable {
    const double g = out.grad()[0] / static_cast<double>(batch);
    auto gz = logits.grad();
    const auto pr = probs.data();
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t n = 0; n < classes; ++n) {
        const double target = n == ys[b] ? 1.0 : 0.0;
        gz[b * classes + n] += g * (pr[b * classes + n] - target);
      }
    }
  });
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows: logits must be (B,N), got " + shape_str(logits.shape()));
  const std::int64_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<std::vector<double>> rows(batch, std::vector<double>(classes));
  const auto z = logits.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::int64_t n = 0; n < classes; ++n) denom += std::exp(row[n] - mx);
    for (std::int64_t n = 0; n < classes; ++n) rows[b][n] = std::exp(row[n] - mx) / denom;
  }
  return rows;
}

}  // namespace vidmdl
