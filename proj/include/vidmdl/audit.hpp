// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trainable-parameter accounting. audit() is closed form from a channel spec;
// walker_count() sums the tensors of a constructed network. The two must agree.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidmdl/network.hpp"

namespace vidmdl {

struct ParamBudget {
  std::int64_t base = 0;
  std::int64_t heads = 0;
  std::int64_t adapters = 0;
  std::int64_t norms = 0;  // shared post-adapter LN
  std::int64_t total = 0;
  // Keyed by domain id (1-based position for audit()) and by location.
  std::map<int, std::int64_t> adapters_per_domain;
  std::map<int, std::int64_t> heads_per_domain;
  std::map<int, std::int64_t> adapters_per_location;

  bool operator==(const ParamBudget&) const = default;
};

struct AuditScenario {
  std::string name;
  ChannelSpec spec;
  AdapterKind kind = AdapterKind::SeparableST;
  InsertionConfig insertion = InsertionConfig::all();
  std::vector<std::int64_t> domains;  // N_d per domain
  bool trainable_base = true;
  std::int64_t base_param_count = 0;
};

ParamBudget audit(const AuditScenario& s);
ParamBudget walker_count(const MdlNetwork& net);

// Millions, rounded half-up to two decimals, as text ("1.79").
std::string megas(std::int64_t count);

// One reported number. Golden rows are compared with the published value:
// pass iff |count / 1e6 - reference| <= 0.01 on the unrounded count.
struct AuditRow {
  std::string scenario;
  std::string component;  // base, head, adap., ln, total
  std::int64_t ours = 0;
  std::optional<double> reference;
  bool golden = false;

  bool pass() const;
};

struct AuditReport {
  std::vector<AuditRow> rows;
  // Every golden row passes (vacuously true when there are none).
  bool all_pass() const;
  int golden_count() const;
  void write_text(std::ostream& os) const;
  // scenario,component,ours_M,ref_M,pass
  void write_csv(std::ostream& os) const;
};

// A table section: scenarios and, for the built-in X3D-M spec, published values.
struct AuditTable {
  std::string title;
  std::vector<AuditScenario> scenarios;
  // scenario name -> component -> published value in millions
  std::map<std::string, std::map<std::string, double>> published;
};

// Published X3D-M backbone size without its head.
inline constexpr std::int64_t kX3dmBaseParams = 2'970'000;
inline const std::vector<std::int64_t> kReferenceDomainClasses{51, 101, 400};

// Tables 1, 2, 3, 4(a), 4(b) laid out for `spec`. Published values are attached
// only when `spec` is the built-in X3D-M spec. Scenarios that need more
// locations than the spec has are dropped.
std::vector<AuditTable> reference_tables(const ChannelSpec& spec, std::int64_t base_param_count);

AuditReport render_tables(const std::vector<AuditTable>& tables);

// INI-like channel spec:
//   name = custom
//   channels = 24, 24, 48
//   feature_width = 2048
//   base_params = 2970000     (optional)
// '#' starts a comment. Errors are ParseError naming the line.
struct ChannelSpecFile {
  ChannelSpec spec;
  std::int64_t base_params = 0;
};
ChannelSpecFile parse_channel_spec(std::istream& is, const std::string& source);
ChannelSpecFile load_channel_spec(const std::filesystem::path& path);

}  // namespace vidmdl
