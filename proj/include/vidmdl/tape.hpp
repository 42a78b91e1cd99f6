// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over an explicit operation tape.
//
// Ops append one entry each (only when some input requires a gradient). The
// backward pass walks the entries in exact reverse order and ACCUMULATES into
// every reachable grad buffer; callers zero buffers themselves. The trainer
// relies on this to sum gradients of D domain batches before one update.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "vidmdl/tensor.hpp"

namespace vidmdl {

class Tape {
 public:
  // Reads output.grad() and adds the contributions into the inputs' grads.
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  static bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

  // Marks `output` as requiring grad and records the entry, but only if one of
  // `inputs` requires grad. Returns `output` for chaining.
  Tensor record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs every entry backwards, then clears the tape.
  void backward(const Tensor& loss);

  void clear() noexcept { entries_.clear(); }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  // When on, every recorded output and every propagated gradient is checked
  // for NaN/Inf. Defaults to on in builds without NDEBUG.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  bool check_finite() const noexcept { return check_finite_; }

  // A non-recording tape computes values only (inference).
  void set_recording(bool on) noexcept { recording_ = on; }
  bool recording() const noexcept { return recording_; }

 private:
  std::vector<Entry> entries_;
  bool check_finite_;
  bool recording_ = true;
};

}  // namespace vidmdl
