// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "vidmdl/error.hpp"

namespace vidmdl {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Tensor y = f(tape, x);
  return y.item();
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, Tensor x, double eps, double rtol,
                                  const GradCheckOptions& options) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");

  bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape, x);
    if (loss.numel() != 1) throw ContractError("finite_diff_check: f must return a scalar");
    tape.backward(loss);
  }
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  x.zero_grad();

  const auto n = static_cast<std::size_t>(x.numel());
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (n > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  auto values = x.data();
  const double centre = options.skip_kinks ? evaluate(f, x) : 0.0;
  for (auto i : coords) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = evaluate(f, x);
    values[i] = saved - eps;
    const double down = evaluate(f, x);
    values[i] = saved;

    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > rtol && options.skip_kinks) {
      const double forward = (up - centre) / eps;
      const double backward = (centre - down) / eps;
      if (std::abs(forward - backward) >= std::abs(a - numeric)) {
        ++report.kinks_skipped;
        continue;
      }
    }
    if (rel > report.max_rel_error || report.coords_checked == 0) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
    ++report.coords_checked;
  }
  const double kink_fraction = coords.empty() ? 0.0 : static_cast<double>(report.kinks_skipped) / coords.size();
  report.passed = report.max_rel_error <= rtol && kink_fraction <= options.max_kink_fraction;
  x.set_requires_grad(had_grad_flag);
  return report;
}

}  // namespace vidmdl
