// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, seeded runs with on-disk artifacts, and
// aggregation of finished runs.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidmdl/audit.hpp"
#include "vidmdl/synth.hpp"
#include "vidmdl/trainer.hpp"

namespace vidmdl {

// Flat "section.key" -> value view of an INI or JSON document.
using FlatConfig = std::map<std::string, std::string>;

// INI: [section] headers, key = value lines, '#' or ';' comments.
FlatConfig parse_ini(std::istream& is, const std::string& source);
// JSON: {"section": {"key": scalar | [scalars]}}; arrays become comma lists.
FlatConfig parse_json_config(const std::string& text, const std::string& source);
// Picks the parser from the extension (.json) or the first character.
FlatConfig load_config_file(const std::filesystem::path& path);
std::string to_ini(const FlatConfig& flat);

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds{1};
  std::string output = "runs";  // relative paths resolve under the output root
  std::vector<int> active_domains;  // empty: every [domain.N] section

  std::vector<SyntheticDomain> domains;
  ToyBackboneConfig backbone;
  AdapterKind adapter = AdapterKind::SeparableST;
  InsertionConfig insertion = InsertionConfig::all();
  bool trainable_base = true;
  double gamma_init = 0.0;

  TrainSchedule schedule;
  ClipSamplerConfig sampler;
  EvalOptions eval;
  bool checkpoint = true;

  // Sweep axes: full key -> alternative values. Variants are the cartesian
  // product, in key order.
  std::map<std::string, std::vector<std::string>> sweep;

  // Throws ConfigError (unknown key, bad value, inconsistent settings) before
  // any compute happens.
  static ExperimentConfig from_flat(const FlatConfig& flat);
  FlatConfig to_flat() const;  // canonical, every key explicit, no sweep
  void validate() const;

  std::vector<SyntheticDomain> selected_domains() const;
};

// The config with one sweep point applied; `label` like "model.adapter=2d".
struct ExperimentVariant {
  std::string label;
  ExperimentConfig config;
};
std::vector<ExperimentVariant> expand_sweep(const ExperimentConfig& cfg, const FlatConfig& base);

// CRC-32 of the canonical config without the seed list, as 8 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Built-in templates named after the published tables.
std::vector<std::string> template_names();
std::optional<std::string> template_text(const std::string& name);

// Config file path or template name, plus "section.key=value" overrides.
FlatConfig resolve_config_source(const std::string& source, const std::vector<std::string>& overrides);

// VIDMDL_OUTPUT_ROOT, or the current directory.
std::filesystem::path output_root();

struct RunArtifacts {
  std::filesystem::path dir;
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<int, double> top1;  // per domain, multi-view
  ParamBudget budget;
  RunRecord record;
};

struct RunOptions {
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

// Trains and evaluates one (config, seed), writing config.ini, run_record.csv,
// run_record.jsonl, metrics.json and checkpoint.bin into `dir`.
RunArtifacts run_single(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                        const std::string& variant = "", const RunOptions& options = {});

// Every variant x seed under <root>/<output>/<name>/; also writes summary.csv.
std::vector<RunArtifacts> run_experiment(const FlatConfig& flat, const RunOptions& options = {});

// Variant x domain table of mean top-1 over seeds plus the parameter budget.
void write_summary(const std::vector<RunArtifacts>& runs, std::ostream& os);

struct ReportResult {
  std::vector<std::filesystem::path> used;
  std::vector<std::string> warnings;  // skipped directories
  std::string config_hash;
  // domain -> (mean, min, max) of the final top-1
  std::map<int, std::array<double, 3>> top1;
};

// Aggregates run directories (searching below each argument for metrics.json)
// into out_dir/summary.csv, loss.svg and accuracy.svg. Throws ConfigError when
// the runs have different config hashes.
ReportResult report_runs(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir);

}  // namespace vidmdl
