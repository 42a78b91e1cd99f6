// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "vidmdl/tape.hpp"
#include "vidmdl/tensor.hpp"

namespace vidmdl {

// Maps the probed tensor to a scalar. The function may ignore its argument and
// read the probed tensor through a captured handle instead (that is how
// parameters buried inside a block are checked).
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

struct GradCheckOptions {
  // Above this many elements, a random subset of this size is probed.
  std::size_t max_coords = 96;
  std::uint64_t seed = 0x5eed;
  // Denominator floor so coordinates with a true gradient near zero are
  // judged on absolute rather than relative error.
  double abs_floor = 1e-6;
  // A failing coordinate whose one-sided slopes differ by at least the
  // central-difference error sits on a kink (e.g. ReLU at 0) and is skipped.
  // A wrong backward at a smooth point has matching one-sided slopes.
  bool skip_kinks = true;
  // More skipped coordinates than this fraction fails the check.
  double max_kink_fraction = 0.1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t kinks_skipped = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = false;
};

// Compares the tape gradient of f at x against (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
// The relative error of one coordinate is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport finite_diff_check(const ScalarFn& f, Tensor x, double eps, double rtol,
                                  const GradCheckOptions& options = {});

}  // namespace vidmdl
