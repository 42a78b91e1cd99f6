// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "vidmdl/error.hpp"
#include "vidmdl/experiment.hpp"

using namespace vidmdl;
namespace fs = std::filesystem;

namespace {

const char* kIni = R"(# tiny run
[experiment]
name = tiny
seeds = 1, 2, 1

[model]
adapter = 2d
insertion = late-2
trainable_base = false

[backbone]
widths = 4, 4, 6, 8, 8
feature_width = 12

[schedule]
iterations = 3
batch_size = 2
lr = 0.01
lr_drops = 2

[sampler]
window_frames = 8
clip_len = 4
resize_min = 12
resize_max = 14
crop = 12
temporal_views = 2

[eval]
max_items = 4

[domain.1]
kind = motion
classes = 3
frames = 10
height = 12
width = 12
train_size = 10
val_size = 4
)";

const char* kJson = R"({
  "experiment": {"name": "tiny", "seeds": [1, 2, 1]},
  "model": {"adapter": "2d", "insertion": "late-2", "trainable_base": false},
  "backbone": {"widths": [4, 4, 6, 8, 8], "feature_width": 12},
  "schedule": {"iterations": 3, "batch_size": 2, "lr": 0.01, "lr_drops": [2]},
  "sampler": {"window_frames": 8, "clip_len": 4, "resize_min": 12, "resize_max": 14, "crop": 12, "temporal_views": 2},
  "eval": {"max_items": 4},
  "domain.1": {"kind": "motion", "classes": 3, "frames": 10, "height": 12, "width": 12, "train_size": 10, "val_size": 4}
})";

FlatConfig ini(const std::string& text) {
  std::istringstream in(text);
  return parse_ini(in, "test.ini");
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vidmdl_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("INI and JSON describe the same experiment") {
  const auto a = ExperimentConfig::from_flat(ini(kIni));
  const auto b = ExperimentConfig::from_flat(parse_json_config(kJson, "test.json"));
  CHECK(a.to_flat() == b.to_flat());
  CHECK(config_hash(a) == config_hash(b));
  CHECK(a.seeds == std::vector<std::uint64_t>{1, 2, 1});
  CHECK(a.insertion.to_string() == "late-2");
  CHECK_FALSE(a.trainable_base);
}

TEST_CASE("canonical form round-trips") {
  const auto a = ExperimentConfig::from_flat(ini(kIni));
  const auto again = ExperimentConfig::from_flat(ini(to_ini(a.to_flat())));
  CHECK(again.to_flat() == a.to_flat());
}

TEST_CASE("unknown keys and bad values are rejected before any compute") {
  auto flat = ini(kIni);
  flat["model.adaptor"] = "2d";
  CHECK_THROWS_AS(ExperimentConfig::from_flat(flat), ConfigError);
  flat = ini(kIni);
  flat["schedule.iterations"] = "many";
  CHECK_THROWS_AS(ExperimentConfig::from_flat(flat), ConfigError);
  flat = ini(kIni);
  flat["sampler.crop"] = "20";
  CHECK_THROWS_AS(ExperimentConfig::from_flat(flat), ConfigError);
  flat = ini(kIni);
  flat["model.insertion"] = "early-9";
  CHECK_THROWS_AS(ExperimentConfig::from_flat(flat), ConfigError);
}

TEST_CASE("INI parse errors carry the line number") {
  try {
    ini("[experiment]\nname = a\nname = b\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    ini("orphan = 1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  CHECK_THROWS_AS(parse_json_config("{\"a\": {\"b\": 1,}}", "x.json"), ParseError);
}

TEST_CASE("sweeps expand to the cartesian product with readable labels") {
  auto flat = ini(kIni);
  flat["sweep.model.adapter"] = "2d | (2+1)d | 3d";
  flat["sweep.model.trainable_base"] = "false | true";
  const auto cfg = ExperimentConfig::from_flat(flat);
  const auto variants = expand_sweep(cfg, flat);
  REQUIRE(variants.size() == 6);
  std::set<std::string> labels, hashes;
  for (const auto& v : variants) {
    labels.insert(v.label);
    hashes.insert(config_hash(v.config));
  }
  CHECK(labels.size() == 6);
  CHECK(hashes.size() == 6);
  CHECK(labels.count("adapter=3d,trainable_base=true") == 1);
}

TEST_CASE("config hash ignores seeds and output location") {
  auto a = ExperimentConfig::from_flat(ini(kIni));
  auto b = a;
  b.seeds = {9};
  b.output = "/elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.schedule.lr0 = 0.02;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 8);
}

TEST_CASE("every template parses and validates") {
  CHECK(template_names().size() == 4);
  for (const auto& n : template_names()) {
    const auto flat = resolve_config_source(n, {});
    const auto cfg = ExperimentConfig::from_flat(flat);
    CHECK(cfg.seeds.size() == 3);
    CHECK_FALSE(expand_sweep(cfg, flat).empty());
  }
  CHECK_THROWS_AS(resolve_config_source("no-such-template", {}), ConfigError);
  const auto flat = resolve_config_source("table1-sweep", {"schedule.iterations=5", "sweep.model.adapter="});
  CHECK(flat.at("schedule.iterations") == "5");
  CHECK(flat.count("sweep.model.adapter") == 0);
}

TEST_CASE("repeated seeds give bit-identical runs and artifacts") {
  const auto root = scratch("runs");
  auto flat = ini(kIni);
  flat["experiment.output"] = root.string();
  const auto runs = run_experiment(flat);
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].record.same_metrics(runs[2].record));
  CHECK(runs[0].top1 == runs[2].top1);
  CHECK_FALSE(runs[0].record.same_metrics(runs[1].record));
  for (const auto& r : runs) {
    for (const char* f : {"config.ini", "run_record.csv", "run_record.jsonl", "metrics.json", "checkpoint.bin"}) {
      CHECK_MESSAGE(fs::exists(r.dir / f), (r.dir / f).string());
    }
    std::ifstream in(r.dir / "run_record.csv");
    CHECK(RunRecord::read_csv(in).same_metrics(r.record));
  }
  CHECK(fs::exists(root / "tiny" / "summary.csv"));

  // The written config reproduces the run.
  const auto rerun_flat = load_config_file(runs[1].dir / "config.ini");
  const auto rerun_cfg = ExperimentConfig::from_flat(rerun_flat);
  CHECK(config_hash(rerun_cfg) == runs[1].config_hash);
  const auto again = run_single(rerun_cfg, runs[1].seed, scratch("rerun"));
  CHECK(again.record.same_metrics(runs[1].record));

  const auto report = report_runs({root / "tiny", root / "missing"}, root / "report");
  CHECK(report.used.size() == 3);
  CHECK(report.warnings.size() == 1);
  CHECK(fs::exists(root / "report" / "summary.csv"));
  CHECK(fs::exists(root / "report" / "loss.svg"));
  CHECK(fs::exists(root / "report" / "accuracy.svg"));
  fs::remove_all(root);
  fs::remove_all(fs::temp_directory_path() / "vidmdl_test_rerun");
}

TEST_CASE("report refuses runs from different configs") {
  const auto root = scratch("mixed");
  auto flat = ini(kIni);
  flat["experiment.output"] = root.string();
  flat["experiment.seeds"] = "1";
  flat["schedule.iterations"] = "1";
  flat["sweep.model.adapter"] = "2d | 3d";
  run_experiment(flat);
  CHECK_THROWS_AS(report_runs({root}, root / "report"), ConfigError);
  fs::remove_all(root);
}
