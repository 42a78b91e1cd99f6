// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/tape.hpp"

#include <algorithm>
#include <cmath>

#include "vidmdl/error.hpp"

namespace vidmdl {

Tape::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

bool Tape::any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

Tensor Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (check_finite_) output.check_finite(op + " forward");
  if (!recording_) return output;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return output;
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(op), std::move(inputs), output, std::move(backward)});
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  auto on_tape = std::any_of(entries_.begin(), entries_.end(),
                             [&](const Entry& e) { return e.output.same(loss); });
  if (!on_tape) throw ContractError("backward: loss was not produced by an op recorded on this tape");

  Tensor seed = loss;
  seed.grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not reachable from the loss
    it->backward();
    if (check_finite_) {
      for (const auto& in : it->inputs) {
        if (!in.defined() || !in.has_grad()) continue;
        for (double g : in.grad()) {
          if (!std::isfinite(g)) throw NumericError(it->op + " backward: non-finite gradient");
        }
      }
    }
  }
  entries_.clear();
}

}  // namespace vidmdl
