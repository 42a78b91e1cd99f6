// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// vidmdl train | audit | report | gradcheck | templates

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"

#include "vidmdl/audit.hpp"
#include "vidmdl/error.hpp"
#include "vidmdl/experiment.hpp"
#include "vidmdl/gradsuite.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitGolden = 3;
constexpr int kExitNumeric = 4;

int cmd_train(const std::string& source, const std::vector<std::string>& overrides, bool quiet) {
  const auto flat = vidmdl::resolve_config_source(source, overrides);
  vidmdl::RunOptions opts;
  if (!quiet) opts.log = [](const std::string& s) { std::cerr << s << '\n'; };
  const auto runs = vidmdl::run_experiment(flat, opts);
  vidmdl::write_summary(runs, std::cout);
  if (!runs.empty()) std::cerr << "artifacts under " << runs.front().dir.parent_path().parent_path().string() << '\n';
  return kExitOk;
}

int cmd_audit(const std::string& spec_name, const std::string& csv_path) {
  vidmdl::ChannelSpec spec;
  std::int64_t base = 0;
  if (spec_name == "x3d-m") {
    spec = vidmdl::x3dm_channel_spec();
    base = vidmdl::kX3dmBaseParams;
  } else if (std::filesystem::exists(spec_name)) {
    const auto file = vidmdl::load_channel_spec(spec_name);
    spec = file.spec;
    base = file.base_params;
  } else {
    std::cerr << "audit: unknown spec '" << spec_name << "' (built-in: x3d-m, or a channel spec file)\n";
    return kExitConfig;
  }
  const auto report = vidmdl::render_tables(vidmdl::reference_tables(spec, base));
  std::cout << "channel spec " << spec.name << ": " << spec.locations() << " locations, F = " << spec.feature_width
            << "\n\n";
  report.write_text(std::cout);
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw vidmdl::ConfigError("cannot write " + csv_path);
    report.write_csv(os);
  }
  return report.all_pass() ? kExitOk : kExitGolden;
}

int cmd_report(const std::vector<std::string>& dirs, std::string out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  if (out.empty()) out = (vidmdl::output_root() / "report").string();
  const auto res = vidmdl::report_runs(paths, out);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  if (res.used.empty()) {
    std::cerr << "report: no usable runs\n";
    return kExitConfig;
  }
  std::cout << res.used.size() << " runs, config " << res.config_hash << '\n';
  for (const auto& [id, agg] : res.top1) {
    std::cout << "domain " << id << "  top1 mean " << std::fixed << std::setprecision(4) << agg[0] << "  min " << agg[1]
              << "  max " << agg[2] << '\n';
  }
  std::cout << "wrote " << out << "/summary.csv, loss.svg, accuracy.svg\n";
  return kExitOk;
}

int cmd_gradcheck(int trials, std::uint64_t seed) {
  vidmdl::GradSuiteOptions opts;
  opts.trials = trials;
  opts.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  const auto cases = vidmdl::run_grad_suite(opts, [&](const vidmdl::GradSuiteCase& c) {
    if (!c.report.passed) ++failed;
    std::cout << (c.report.passed ? "ok   " : "FAIL ") << std::left << std::setw(30) << c.name << std::setw(18)
              << c.shape << " max rel err " << std::scientific << std::setprecision(2) << c.report.max_rel_error
              << std::defaultfloat;
    if (c.report.kinks_skipped > 0) std::cout << "  (" << c.report.kinks_skipped << " kink coords skipped)";
    std::cout << '\n';
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << cases.size() - static_cast<std::size_t>(failed) << "/" << cases.size() << " checks passed in "
            << std::fixed << std::setprecision(1) << secs << " s\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_templates(const std::string& name) {
  if (name.empty()) {
    for (const auto& n : vidmdl::template_names()) std::cout << n << '\n';
    return kExitOk;
  }
  const auto text = vidmdl::template_text(name);
  if (!text) {
    std::cerr << "unknown template '" << name << "'\n";
    return kExitConfig;
  }
  std::cout << *text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain video learning with domain-specific adapters"};
  app.require_subcommand(1);

  std::string train_source;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Run an experiment from a config file or built-in template");
  train->add_option("config", train_source, "Config file (.ini or .json) or template name")->required();
  train->add_option("--set", overrides, "Override a key: section.key=value (repeatable)");
  train->add_flag("-q,--quiet", quiet, "No progress output");

  std::string spec_name;
  std::string csv_path;
  auto* audit = app.add_subcommand("audit", "Parameter budgets against the published tables");
  audit->add_option("spec", spec_name, "x3d-m or a channel spec file")->required();
  audit->add_option("--csv", csv_path, "Also write the report as CSV");

  std::vector<std::string> dirs;
  std::string out;
  auto* report = app.add_subcommand("report", "Aggregate finished runs across seeds");
  report->add_option("dirs", dirs, "Run directories (searched recursively)")->required();
  report->add_option("--out", out, "Output directory (default: $VIDMDL_OUTPUT_ROOT/report)");

  int trials = 3;
  std::uint64_t seed = 7;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op, block and the network loss");
  grad->add_option("--trials", trials, "Random shapes per case")->check(CLI::PositiveNumber);
  grad->add_option("--seed", seed, "Seed for shapes and values");

  std::string template_name;
  auto* templates = app.add_subcommand("templates", "List built-in experiment templates or print one");
  templates->add_option("name", template_name, "Template to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_source, overrides, quiet);
    if (*audit) return cmd_audit(spec_name, csv_path);
    if (*report) return cmd_report(dirs, out);
    if (*grad) return cmd_gradcheck(trials, seed);
    if (*templates) return cmd_templates(template_name);
  } catch (const vidmdl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const vidmdl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const vidmdl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
