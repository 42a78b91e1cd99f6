// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "vidmdl/error.hpp"

namespace vidmdl {

void TrainSchedule::validate() const {
  if (total_iterations < 0) throw ConfigError("schedule: total_iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
  if (!(lr0 >= 0.0)) throw ConfigError("schedule: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("schedule: momentum must lie in [0, 1)");
  if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) throw ConfigError("schedule: lr_drop_factor must lie in (0, 1]");
  for (std::size_t i = 1; i < lr_drop_points.size(); ++i) {
    if (lr_drop_points[i] <= lr_drop_points[i - 1]) throw ConfigError("schedule: lr drop points must be strictly increasing");
  }
  if (eval_interval < 0) throw ConfigError("schedule: eval_interval must be >= 0");
}

double lr_at(std::int64_t update_index, const TrainSchedule& sched) {
  if (update_index < 0) throw ContractError("lr_at: update index must be >= 0");
  double lr = sched.lr0;
  for (auto drop : sched.lr_drop_points) {
    if (update_index >= drop) lr *= sched.lr_drop_factor;
  }
  return lr;
}

DomainCycle::DomainCycle(const TrainSchedule& sched, const std::map<int, DomainSampler*>& samplers)
    : order_(sched.domain_order), samplers_(samplers), batch_size_(sched.batch_size) {
  if (samplers_.empty()) throw ConfigError("domain cycle: no domains");
  if (order_.empty()) {
    for (const auto& [d, s] : samplers_) order_.push_back(d);
  }
  for (int d : order_) {
    auto it = samplers_.find(d);
    if (it == samplers_.end() || it->second == nullptr) {
      throw ConfigError("domain cycle: no sampler for domain " + std::to_string(d));
    }
    if (it->second->size() == 0) throw ConfigError("domain cycle: dataset of domain " + std::to_string(d) + " is empty");
  }
  for (const auto& [d, s] : samplers_) {
    if (std::find(order_.begin(), order_.end(), d) == order_.end()) {
      throw ConfigError("domain cycle: domain " + std::to_string(d) + " missing from the domain order");
    }
  }
}

DomainBatch DomainCycle::next() {
  const int d = next_domain();
  ++position_;
  DomainBatch batch = samplers_.at(d)->next(batch_size_);
  batch.domain_id = d;
  return batch;
}

std::vector<DomainBatch> DomainCycle::next_cycle() {
  std::vector<DomainBatch> out;
  out.reserve(order_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) out.push_back(next());
  return out;
}

void SgdMomentum::step(const std::vector<TaggedParam>& params, double lr) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto& v = state_.velocity[p.name];
    if (v.empty()) v.assign(static_cast<std::size_t>(t.numel()), 0.0);
    auto data = t.data();
    if (t.has_grad()) {
      auto g = t.grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        data[i] -= lr * v[i];
      }
      t.zero_grad();
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i];
        data[i] -= lr * v[i];
      }
    }
  }
  state_.lr = lr;
  ++state_.updates;
}

CycleMetrics accumulate(MdlNetwork& net, std::span<const DomainBatch> batches, std::int64_t update_index) {
  CycleMetrics m;
  m.update_index = update_index;
  for (const auto& batch : batches) {
    Tape tape;
    Tensor logits = net.forward(tape, batch, Mode::Train);
    Tensor loss = softmax_cross_entropy(tape, logits, batch.labels);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss " + std::to_string(value) + " for domain " + std::to_string(batch.domain_id) +
                         " at iteration " + std::to_string(update_index));
    }
    tape.backward(loss);
    m.domain_losses.emplace_back(batch.domain_id, value);
    m.total_loss += value;
  }
  return m;
}

CycleMetrics accumulate_and_step(MdlNetwork& net, SgdMomentum& opt, std::span<const DomainBatch> batches,
                                 std::int64_t update_index, const TrainSchedule& sched) {
  CycleMetrics m = accumulate(net, batches, update_index);
  m.lr = lr_at(update_index, sched);
  opt.step(net.trainable_params(), m.lr);
  return m;
}

RunRecord train(MdlNetwork& net, const TrainSchedule& sched, const std::map<int, DomainSampler*>& samplers,
                const EvalHook& eval_hook, const TrainOptions& options) {
  sched.validate();
  RunRecord record;
  DomainCycle cycle(sched, samplers);
  SgdMomentum opt(sched.momentum);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  auto evaluate = [&](std::int64_t update_index) {
    if (!eval_hook) return;
    const auto top1 = eval_hook(net, update_index);
    for (const auto& [d, acc] : top1) {
      RunRecordRow row;
      row.update_index = update_index;
      row.domain_id = d;
      row.lr = lr_at(update_index, sched);
      row.wall_ms = elapsed_ms();
      row.eval_top1 = acc;
      record.rows.push_back(row);
    }
  };

  for (std::int64_t it = 0; it < sched.total_iterations; ++it) {
    const auto batches = cycle.next_cycle();
    const CycleMetrics m = accumulate_and_step(net, opt, batches, it, sched);
    const double ms = elapsed_ms();
    for (const auto& [d, loss] : m.domain_losses) {
      RunRecordRow row;
      row.update_index = it;
      row.domain_id = d;
      row.loss = loss;
      row.lr = m.lr;
      row.wall_ms = ms;
      record.rows.push_back(row);
    }
    if (options.on_cycle) options.on_cycle(m);
    if (sched.eval_interval > 0 && (it + 1) % sched.eval_interval == 0 && it + 1 < sched.total_iterations) {
      evaluate(it + 1);
    }
  }
  evaluate(sched.total_iterations);
  return record;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunRecord::write_csv(std::ostream& os) const {
  os << "update_index,domain_id,loss,lr,wall_ms,eval_top1\n";
  for (const auto& r : rows) {
    os << r.update_index << ',' << r.domain_id << ',' << (r.loss ? fmt_double(*r.loss) : "") << ',' << fmt_double(r.lr)
       << ',' << fmt_double(r.wall_ms) << ',' << (r.eval_top1 ? fmt_double(*r.eval_top1) : "") << '\n';
  }
}

void RunRecord::write_jsonl(std::ostream& os) const {
  for (const auto& r : rows) {
    nlohmann::json j{{"update_index", r.update_index}, {"domain_id", r.domain_id}, {"lr", r.lr}, {"wall_ms", r.wall_ms}};
    if (r.loss) j["loss"] = *r.loss;
    if (r.eval_top1) j["eval_top1"] = *r.eval_top1;
    os << j.dump() << '\n';
  }
}

RunRecord RunRecord::read_csv(std::istream& is) {
  RunRecord rec;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw ParseError("run_record.csv", line_no, "expected 6 fields, found " + std::to_string(f.size()));
    try {
      RunRecordRow r;
      r.update_index = std::stoll(f[0]);
      r.domain_id = std::stoi(f[1]);
      if (!f[2].empty()) r.loss = std::stod(f[2]);
      r.lr = std::stod(f[3]);
      r.wall_ms = std::stod(f[4]);
      if (!f[5].empty()) r.eval_top1 = std::stod(f[5]);
      rec.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("run_record.csv", line_no, "malformed number");
    }
  }
  return rec;
}

bool RunRecord::same_metrics(const RunRecord& other) const {
  if (rows.size() != other.rows.size()) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = other.rows[i];
    if (a.update_index != b.update_index || a.domain_id != b.domain_id || a.loss != b.loss || a.lr != b.lr ||
        a.eval_top1 != b.eval_top1) {
      return false;
    }
  }
  return true;
}

std::map<int, double> RunRecord::first_losses() const {
  std::map<int, double> out;
  for (const auto& r : rows) {
    if (r.loss && !out.contains(r.domain_id)) out[r.domain_id] = *r.loss;
  }
  return out;
}

std::map<int, double> RunRecord::last_losses() const {
  std::map<int, double> out;
  for (const auto& r : rows) {
    if (r.loss) out[r.domain_id] = *r.loss;
  }
  return out;
}

}  // namespace vidmdl
