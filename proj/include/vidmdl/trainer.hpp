// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-domain training: domains are visited in a fixed round-robin order, one
// batch each; gradients of the D per-domain losses accumulate and parameters
// are updated once per cycle with heavy-ball SGD.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidmdl/network.hpp"

namespace vidmdl {

struct TrainSchedule {
  std::int64_t total_iterations = 0;  // gradient updates, one per domain cycle
  int batch_size = 32;
  double lr0 = 0.001;
  std::vector<std::int64_t> lr_drop_points{8000, 12000};
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  std::vector<int> domain_order;    // visited once per update, in this order
  std::int64_t eval_interval = 0;   // 0: evaluate only at the end

  void validate() const;
};

// lr0 * factor^(number of drop points <= update_index)
double lr_at(std::int64_t update_index, const TrainSchedule& sched);

// Produces batches for one domain. Implementations must be deterministic for a
// fixed seed.
class DomainSampler {
 public:
  virtual ~DomainSampler() = default;
  virtual int domain_id() const = 0;
  virtual std::size_t size() const = 0;
  virtual DomainBatch next(int batch_size) = 0;
};

// Emits batches in the schedule's domain order, repeating: d1, d2, ..., dD, d1, ...
class DomainCycle {
 public:
  DomainCycle(const TrainSchedule& sched, const std::map<int, DomainSampler*>& samplers);

  int next_domain() const { return order_[position_ % order_.size()]; }
  DomainBatch next();
  // One batch per domain, in order.
  std::vector<DomainBatch> next_cycle();
  std::size_t domains() const { return order_.size(); }

 private:
  std::vector<int> order_;
  std::map<int, DomainSampler*> samplers_;
  int batch_size_;
  std::size_t position_ = 0;
};

struct OptimizerState {
  std::map<std::string, std::vector<double>> velocity;  // keyed by parameter name
  double lr = 0.0;
  std::int64_t updates = 0;
};

// v <- mu v + g; p <- p - lr v. No dampening, no Nesterov, no weight decay.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}

  // Parameters without a grad buffer are treated as having zero gradient.
  // Grad buffers are zeroed afterwards.
  void step(const std::vector<TaggedParam>& params, double lr);

  const OptimizerState& state() const { return state_; }
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  OptimizerState state_;
};

struct CycleMetrics {
  std::int64_t update_index = 0;
  double lr = 0.0;
  std::vector<std::pair<int, double>> domain_losses;  // in visit order
  double total_loss = 0.0;                            // sum of the per-domain mean losses
};

// Forward + mean cross-entropy + backward for each batch. Gradients accumulate;
// nothing is updated. Throws NumericError naming the domain on a NaN loss.
CycleMetrics accumulate(MdlNetwork& net, std::span<const DomainBatch> batches, std::int64_t update_index);

// accumulate() followed by one optimizer step at lr_at(update_index).
CycleMetrics accumulate_and_step(MdlNetwork& net, SgdMomentum& opt, std::span<const DomainBatch> batches,
                                 std::int64_t update_index, const TrainSchedule& sched);

struct RunRecordRow {
  std::int64_t update_index = 0;
  int domain_id = 0;
  std::optional<double> loss;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::optional<double> eval_top1;
};

struct RunRecord {
  std::vector<RunRecordRow> rows;

  void write_csv(std::ostream& os) const;
  void write_jsonl(std::ostream& os) const;
  static RunRecord read_csv(std::istream& is);
  // Equal ignoring wall-clock time.
  bool same_metrics(const RunRecord& other) const;
  // Per-domain loss of the first and last cycle.
  std::map<int, double> first_losses() const;
  std::map<int, double> last_losses() const;
};

// Returns per-domain top-1 (fraction in [0, 1]) for the current parameters.
using EvalHook = std::function<std::map<int, double>(MdlNetwork&, std::int64_t update_index)>;

struct TrainOptions {
  // Called after every update with the cycle metrics; may be empty.
  std::function<void(const CycleMetrics&)> on_cycle;
};

RunRecord train(MdlNetwork& net, const TrainSchedule& sched, const std::map<int, DomainSampler*>& samplers,
                const EvalHook& eval_hook, const TrainOptions& options = {});

}  // namespace vidmdl
