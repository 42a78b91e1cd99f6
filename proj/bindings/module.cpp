// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vidmdl/audit.hpp"
#include "vidmdl/error.hpp"
#include "vidmdl/experiment.hpp"
#include "vidmdl/gradsuite.hpp"
#include "vidmdl/synth.hpp"

namespace py = pybind11;
using namespace vidmdl;

namespace {

py::dict budget_dict(const ParamBudget& b) {
  py::dict d;
  d["base"] = b.base;
  d["heads"] = b.heads;
  d["adapters"] = b.adapters;
  d["norms"] = b.norms;
  d["total"] = b.total;
  d["adapters_per_domain"] = b.adapters_per_domain;
  d["heads_per_domain"] = b.heads_per_domain;
  d["adapters_per_location"] = b.adapters_per_location;
  return d;
}

py::array_t<double> clip_array(const RawClip& c) {
  py::array_t<double> out({c.frames, c.channels, c.height, c.width});
  std::copy(c.pixels.begin(), c.pixels.end(), out.mutable_data());
  return out;
}

py::array_t<double> tensor_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_vidmdl, m) {
  m.doc() = "Multi-domain video learning with domain-specific adapters";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<RoutingError>(m, "RoutingError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());

  m.def("adapter_param_count",
        [](const std::string& kind, std::int64_t channels) {
          return adapter_param_count(parse_adapter_kind(kind), channels);
        },
        py::arg("kind"), py::arg("channels"));

  m.def("audit",
        [](const std::vector<std::int64_t>& channels, std::int64_t feature_width, const std::string& kind,
           const std::string& insertion, const std::vector<std::int64_t>& domains, bool trainable_base,
           std::int64_t base_params) {
          AuditScenario s;
          s.spec = ChannelSpec{"custom", channels, feature_width};
          s.spec.validate();
          s.kind = parse_adapter_kind(kind);
          s.insertion = InsertionConfig::parse(insertion);
          s.domains = domains;
          s.trainable_base = trainable_base;
          s.base_param_count = base_params;
          return budget_dict(audit(s));
        },
        py::arg("channels"), py::arg("feature_width"), py::arg("kind") = "(2+1)d", py::arg("insertion") = "all",
        py::arg("domains") = kReferenceDomainClasses, py::arg("trainable_base") = true, py::arg("base_params") = 0,
        "Closed-form trainable parameter budget for a channel spec.");

  m.def("x3dm_channels", [] {
    const auto s = x3dm_channel_spec();
    return py::make_tuple(s.channels, s.feature_width, kX3dmBaseParams);
  });

  m.def("reference_report",
        [] {
          const auto report = render_tables(reference_tables(x3dm_channel_spec(), kX3dmBaseParams));
          py::list rows;
          for (const auto& r : report.rows) {
            py::dict d;
            d["scenario"] = r.scenario;
            d["component"] = r.component;
            d["ours"] = r.ours;
            d["reference"] = r.reference ? py::cast(*r.reference) : py::none();
            d["golden"] = r.golden;
            d["pass"] = r.pass();
            rows.append(d);
          }
          return rows;
        },
        "Every row of the published-table comparison for X3D-M.");

  m.def("grad_suite",
        [](int trials, std::uint64_t seed) {
          GradSuiteOptions opts;
          opts.trials = trials;
          opts.seed = seed;
          py::list out;
          for (const auto& c : run_grad_suite(opts)) {
            py::dict d;
            d["name"] = c.name;
            d["shape"] = c.shape;
            d["max_rel_error"] = c.report.max_rel_error;
            d["kinks_skipped"] = c.report.kinks_skipped;
            d["passed"] = c.report.passed;
            out.append(d);
          }
          return out;
        },
        py::arg("trials") = 3, py::arg("seed") = 7);

  m.def("lr_at",
        [](std::int64_t update, double lr0, const std::vector<std::int64_t>& drops, double factor) {
          TrainSchedule s;
          s.lr0 = lr0;
          s.lr_drop_points = drops;
          s.lr_drop_factor = factor;
          s.validate();
          return lr_at(update, s);
        },
        py::arg("update"), py::arg("lr0") = 0.001, py::arg("drops") = std::vector<std::int64_t>{8000, 12000},
        py::arg("factor") = 0.1);

  py::class_<SyntheticDomain>(m, "SyntheticDomain")
      .def(py::init([](const std::string& kind, int num_classes, int frames, int height, int width, int channels,
                       double noise, std::uint64_t seed, int style, int id) {
             SyntheticDomain d;
             d.kind = parse_generator_kind(kind);
             d.num_classes = num_classes;
             d.frames = frames;
             d.height = height;
             d.width = width;
             d.channels = channels;
             d.noise = noise;
             d.seed = seed;
             d.style = style;
             d.id = id;
             d.validate();
             return d;
           }),
           py::arg("kind") = "spatial", py::arg("num_classes") = 4, py::arg("frames") = 32, py::arg("height") = 32,
           py::arg("width") = 32, py::arg("channels") = 3, py::arg("noise") = 0.1, py::arg("seed") = 1,
           py::arg("style") = 0, py::arg("id") = 1)
      .def_readonly("num_classes", &SyntheticDomain::num_classes)
      .def_readonly("frames", &SyntheticDomain::frames)
      .def_property_readonly("kind", [](const SyntheticDomain& d) { return to_string(d.kind); })
      .def("clip",
           [](const SyntheticDomain& d, int class_id, std::uint64_t index) {
             return clip_array(generate_clip(d, class_id, index));
           },
           py::arg("class_id"), py::arg("index"), "Raw clip as a (T, C, H, W) array.")
      .def("item",
           [](const SyntheticDomain& d, std::uint64_t i, bool val) {
             const RawClip c = dataset_item(d, val ? Split::Val : Split::Train, i);
             return py::make_tuple(clip_array(c), c.label);
           },
           py::arg("index"), py::arg("val") = false)
      .def("eval_views",
           [](const SyntheticDomain& d, std::uint64_t i, int window, int clip_len, int resize, int crop) {
             ClipSamplerConfig cfg;
             cfg.window_frames = window;
             cfg.clip_len = clip_len;
             cfg.resize_min = cfg.resize_max = resize;
             cfg.crop = crop;
             cfg.validate();
             py::list out;
             for (const auto& v : sample_eval_views(dataset_item(d, Split::Val, i), cfg)) out.append(tensor_array(v));
             return out;
           },
           py::arg("index"), py::arg("window") = 32, py::arg("clip_len") = 16, py::arg("resize") = 24,
           py::arg("crop") = 24, "The 30 evaluation views of a validation item, each (1, T, C, crop, crop).");

  m.def("templates", &template_names);
  m.def("template_text", [](const std::string& name) {
    auto t = template_text(name);
    if (!t) throw ConfigError("unknown template '" + name + "'");
    return *t;
  });

  m.def("train",
        [](const std::string& source, const std::vector<std::string>& overrides) {
          const auto flat = resolve_config_source(source, overrides);
          std::vector<RunArtifacts> runs;
          {
            py::gil_scoped_release release;
            runs = run_experiment(flat);
          }
          py::list out;
          for (const auto& r : runs) {
            py::dict d;
            d["dir"] = r.dir;
            d["variant"] = r.variant;
            d["seed"] = r.seed;
            d["config_hash"] = r.config_hash;
            d["top1"] = r.top1;
            d["budget"] = budget_dict(r.budget);
            out.append(d);
          }
          return out;
        },
        py::arg("source"), py::arg("overrides") = std::vector<std::string>{},
        "Runs a config file or template; artifacts go under VIDMDL_OUTPUT_ROOT.");
}
