// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full finite-difference suite: every primitive, the adapter blocks and an
// end-to-end toy network loss, each on several random small shapes.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vidmdl/gradcheck.hpp"

namespace vidmdl {

struct GradSuiteCase {
  std::string name;   // e.g. "conv_3d/weight"
  std::string shape;  // input shape of this trial
  GradCheckReport report;
};

struct GradSuiteOptions {
  double eps = 1e-5;
  double rtol = 1e-4;
  int trials = 3;
  std::uint64_t seed = 7;
};

// Runs every case; `progress` (optional) sees each result as it completes.
std::vector<GradSuiteCase> run_grad_suite(const GradSuiteOptions& options = {},
                                          const std::function<void(const GradSuiteCase&)>& progress = {});

}  // namespace vidmdl
