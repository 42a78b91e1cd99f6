// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/experiment.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

#include "vidmdl/error.hpp"

namespace vidmdl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

}  // namespace

FlatConfig parse_ini(std::istream& is, const std::string& source) {
  FlatConfig flat;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string text = trim(raw);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError(source, line, "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw ParseError(source, line, "empty section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source, line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (key.empty()) throw ParseError(source, line, "empty key");
    if (section.empty()) throw ParseError(source, line, "key '" + key + "' outside any [section]");
    const std::string full = section + "." + key;
    if (flat.contains(full)) throw ParseError(source, line, "duplicate key '" + full + "'");
    flat[full] = value;
  }
  return flat;
}

FlatConfig parse_json_config(const std::string& text, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(source, line, "invalid JSON");
  }
  if (!doc.is_object()) throw ConfigError(source + ": top level must be an object of sections");
  auto scalar = [&](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt(v.get<double>());
    throw ConfigError(source + ": '" + key + "' must be a scalar or a list of scalars");
  };
  FlatConfig flat;
  for (const auto& [section, body] : doc.items()) {
    if (!body.is_object()) throw ConfigError(source + ": section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      const std::string full = section + "." + key;
      if (value.is_array()) {
        std::string s;
        const std::string sep = section == "sweep" ? " | " : ", ";
        for (std::size_t i = 0; i < value.size(); ++i) s += (i ? sep : "") + scalar(value[i], full);
        flat[full] = s;
      } else {
        flat[full] = scalar(value, full);
      }
    }
  }
  return flat;
}

FlatConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (path.extension() == ".json" || (first != std::string::npos && text[first] == '{')) {
    return parse_json_config(text, path.string());
  }
  std::istringstream in(text);
  return parse_ini(in, path.string());
}

std::string to_ini(const FlatConfig& flat) {
  // Group by section; the key is the part after the last dot of the section
  // prefix ("domain.2.kind" -> [domain.2] kind).
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [full, value] : flat) {
    std::string section;
    std::string key;
    if (full.rfind("sweep.", 0) == 0) {
      section = "sweep";
      key = full.substr(6);
    } else {
      const auto dot = full.rfind('.');
      section = full.substr(0, dot);
      key = full.substr(dot + 1);
    }
    sections[section].emplace_back(key, value);
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, items] : sections) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [k, v] : items) os << k << " = " << v << '\n';
  }
  return os.str();
}

namespace {

struct Reader {
  const std::string& key;
  const std::string& value;

  [[noreturn]] void fail(const std::string& expected) const {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
  }
  std::int64_t integer() const {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size()) fail("an integer");
    return v;
  }
  double real() const {
    double v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size()) fail("a number");
    return v;
  }
  bool boolean() const {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("true or false");
  }
  template <typename T>
  std::vector<T> list() const {
    std::vector<T> out;
    if (value.empty()) return out;
    for (const auto& item : split(value, ',')) {
      Reader r{key, item};
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(r.real());
      } else {
        out.push_back(static_cast<T>(r.integer()));
      }
    }
    return out;
  }
};

}  // namespace

ExperimentConfig ExperimentConfig::from_flat(const FlatConfig& flat) {
  ExperimentConfig c;
  std::map<int, SyntheticDomain> domains;
  for (const auto& [key, value] : flat) {
    const Reader r{key, value};
    if (key.rfind("sweep.", 0) == 0) {
      std::vector<std::string> values = split(value, '|');
      if (values.empty() || std::any_of(values.begin(), values.end(), [](const auto& v) { return v.empty(); })) {
        throw ConfigError("config key '" + key + "': sweep values must be non-empty and separated by '|'");
      }
      c.sweep[key.substr(6)] = values;
      continue;
    }
    if (key.rfind("domain.", 0) == 0) {
      const auto parts = split(key, '.');
      if (parts.size() != 3) throw ConfigError("unknown key '" + key + "' (domain keys look like domain.<id>.<key>)");
      int id = 0;
      auto [p, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), id);
      if (ec != std::errc() || p != parts[1].data() + parts[1].size() || id < 1) {
        throw ConfigError("config section 'domain." + parts[1] + "': the domain id must be a positive integer");
      }
      auto [it, fresh] = domains.try_emplace(id);
      SyntheticDomain& d = it->second;
      if (fresh) {
        d.id = id;
        d.name = "domain" + std::to_string(id);
      }
      const std::string& k = parts[2];
      if (k == "name") d.name = value;
      else if (k == "kind") d.kind = parse_generator_kind(value);
      else if (k == "classes") d.num_classes = static_cast<int>(r.integer());
      else if (k == "train_size") d.train_size = static_cast<int>(r.integer());
      else if (k == "val_size") d.val_size = static_cast<int>(r.integer());
      else if (k == "frames") d.frames = static_cast<int>(r.integer());
      else if (k == "height") d.height = static_cast<int>(r.integer());
      else if (k == "width") d.width = static_cast<int>(r.integer());
      else if (k == "channels") d.channels = static_cast<int>(r.integer());
      else if (k == "noise") d.noise = r.real();
      else if (k == "style") d.style = static_cast<int>(r.integer());
      else if (k == "seed") d.seed = static_cast<std::uint64_t>(r.integer());
      else throw ConfigError("unknown key '" + key + "'");
      continue;
    }
    if (key == "experiment.name") c.name = value;
    else if (key == "experiment.seeds") c.seeds = r.list<std::uint64_t>();
    else if (key == "experiment.output") c.output = value;
    else if (key == "experiment.domains") c.active_domains = r.list<int>();
    else if (key == "experiment.checkpoint") c.checkpoint = r.boolean();
    else if (key == "model.adapter") c.adapter = parse_adapter_kind(value);
    else if (key == "model.insertion") c.insertion = InsertionConfig::parse(value);
    else if (key == "model.trainable_base") c.trainable_base = r.boolean();
    else if (key == "model.gamma_init") c.gamma_init = r.real();
    else if (key == "backbone.widths") c.backbone.widths = r.list<std::int64_t>();
    else if (key == "backbone.feature_width") c.backbone.feature_width = r.integer();
    else if (key == "backbone.temporal_kernel") c.backbone.temporal_kernel = r.integer();
    else if (key == "backbone.spatial_kernel") c.backbone.spatial_kernel = r.integer();
    else if (key == "schedule.iterations") c.schedule.total_iterations = r.integer();
    else if (key == "schedule.batch_size") c.schedule.batch_size = static_cast<int>(r.integer());
    else if (key == "schedule.lr") c.schedule.lr0 = r.real();
    else if (key == "schedule.lr_drops") c.schedule.lr_drop_points = r.list<std::int64_t>();
    else if (key == "schedule.lr_drop_factor") c.schedule.lr_drop_factor = r.real();
    else if (key == "schedule.momentum") c.schedule.momentum = r.real();
    else if (key == "schedule.eval_interval") c.schedule.eval_interval = r.integer();
    else if (key == "schedule.domain_order") c.schedule.domain_order = r.list<int>();
    else if (key == "sampler.window_frames") c.sampler.window_frames = static_cast<int>(r.integer());
    else if (key == "sampler.clip_len") c.sampler.clip_len = static_cast<int>(r.integer());
    else if (key == "sampler.resize_min") c.sampler.resize_min = static_cast<int>(r.integer());
    else if (key == "sampler.resize_max") c.sampler.resize_max = static_cast<int>(r.integer());
    else if (key == "sampler.crop") c.sampler.crop = static_cast<int>(r.integer());
    else if (key == "sampler.hflip_prob") c.sampler.hflip_prob = r.real();
    else if (key == "sampler.temporal_views") c.sampler.temporal_views = static_cast<int>(r.integer());
    else if (key == "eval.max_items") c.eval.max_items = static_cast<int>(r.integer());
    else if (key == "eval.multiview") c.eval.multiview = r.boolean();
    else throw ConfigError("unknown key '" + key + "'");
  }
  for (auto& [id, d] : domains) c.domains.push_back(d);
  c.validate();
  return c;
}

std::vector<SyntheticDomain> ExperimentConfig::selected_domains() const {
  if (active_domains.empty()) return domains;
  std::vector<SyntheticDomain> out;
  for (int id : active_domains) {
    auto it = std::find_if(domains.begin(), domains.end(), [&](const SyntheticDomain& d) { return d.id == id; });
    if (it == domains.end()) throw ConfigError("experiment.domains: no [domain." + std::to_string(id) + "] section");
    out.push_back(*it);
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment.name must not be empty");
  if (name.find('/') != std::string::npos) throw ConfigError("experiment.name must not contain '/'");
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (domains.empty()) throw ConfigError("config defines no [domain.N] sections");
  std::set<int> seen;
  for (int id : active_domains) {
    if (!seen.insert(id).second) throw ConfigError("experiment.domains lists domain " + std::to_string(id) + " twice");
  }
  const auto selected = selected_domains();
  for (const auto& d : selected) {
    d.validate();
    if (d.channels != selected.front().channels) throw ConfigError("all domains must have the same channel count");
    if (d.frames < sampler.window_frames) {
      throw ConfigError("domain " + std::to_string(d.id) + ": " + std::to_string(d.frames) +
                        " frames is shorter than sampler.window_frames = " + std::to_string(sampler.window_frames));
    }
    if (std::min(d.height, d.width) < sampler.crop) {
      throw ConfigError("domain " + std::to_string(d.id) + ": frames are smaller than sampler.crop");
    }
  }
  if (backbone.widths.size() < 1) throw ConfigError("backbone.widths must list at least one width");
  for (auto w : backbone.widths) {
    if (w < 1) throw ConfigError("backbone.widths must be positive");
  }
  if (backbone.feature_width < 1) throw ConfigError("backbone.feature_width must be positive");
  if (backbone.temporal_kernel < 1 || backbone.temporal_kernel % 2 == 0) {
    throw ConfigError("backbone.temporal_kernel must be odd and positive");
  }
  if (backbone.spatial_kernel < 1 || backbone.spatial_kernel % 2 == 0) {
    throw ConfigError("backbone.spatial_kernel must be odd and positive");
  }
  insertion.resolve(static_cast<int>(backbone.widths.size()));
  schedule.validate();
  if (!schedule.domain_order.empty()) {
    std::set<int> order(schedule.domain_order.begin(), schedule.domain_order.end());
    std::set<int> ids;
    for (const auto& d : selected) ids.insert(d.id);
    if (order != ids || order.size() != schedule.domain_order.size()) {
      throw ConfigError("schedule.domain_order must list every active domain exactly once");
    }
  }
  sampler.validate();
  if (eval.max_items < 0) throw ConfigError("eval.max_items must be >= 0");
  if (!std::isfinite(gamma_init)) throw ConfigError("model.gamma_init must be finite");
}

FlatConfig ExperimentConfig::to_flat() const {
  FlatConfig f;
  f["experiment.name"] = name;
  f["experiment.seeds"] = join(seeds);
  f["experiment.output"] = output;
  f["experiment.domains"] = join(active_domains);
  f["experiment.checkpoint"] = checkpoint ? "true" : "false";
  f["model.adapter"] = to_string(adapter);
  f["model.insertion"] = insertion.to_string();
  f["model.trainable_base"] = trainable_base ? "true" : "false";
  f["model.gamma_init"] = fmt(gamma_init);
  f["backbone.widths"] = join(backbone.widths);
  f["backbone.feature_width"] = std::to_string(backbone.feature_width);
  f["backbone.temporal_kernel"] = std::to_string(backbone.temporal_kernel);
  f["backbone.spatial_kernel"] = std::to_string(backbone.spatial_kernel);
  f["schedule.iterations"] = std::to_string(schedule.total_iterations);
  f["schedule.batch_size"] = std::to_string(schedule.batch_size);
  f["schedule.lr"] = fmt(schedule.lr0);
  f["schedule.lr_drops"] = join(schedule.lr_drop_points);
  f["schedule.lr_drop_factor"] = fmt(schedule.lr_drop_factor);
  f["schedule.momentum"] = fmt(schedule.momentum);
  f["schedule.eval_interval"] = std::to_string(schedule.eval_interval);
  f["schedule.domain_order"] = join(schedule.domain_order);
  f["sampler.window_frames"] = std::to_string(sampler.window_frames);
  f["sampler.clip_len"] = std::to_string(sampler.clip_len);
  f["sampler.resize_min"] = std::to_string(sampler.resize_min);
  f["sampler.resize_max"] = std::to_string(sampler.resize_max);
  f["sampler.crop"] = std::to_string(sampler.crop);
  f["sampler.hflip_prob"] = fmt(sampler.hflip_prob);
  f["sampler.temporal_views"] = std::to_string(sampler.temporal_views);
  f["eval.max_items"] = std::to_string(eval.max_items);
  f["eval.multiview"] = eval.multiview ? "true" : "false";
  for (const auto& d : domains) {
    const std::string p = "domain." + std::to_string(d.id) + ".";
    f[p + "name"] = d.name;
    f[p + "kind"] = to_string(d.kind);
    f[p + "classes"] = std::to_string(d.num_classes);
    f[p + "train_size"] = std::to_string(d.train_size);
    f[p + "val_size"] = std::to_string(d.val_size);
    f[p + "frames"] = std::to_string(d.frames);
    f[p + "height"] = std::to_string(d.height);
    f[p + "width"] = std::to_string(d.width);
    f[p + "channels"] = std::to_string(d.channels);
    f[p + "noise"] = fmt(d.noise);
    f[p + "style"] = std::to_string(d.style);
    f[p + "seed"] = std::to_string(d.seed);
  }
  return f;
}

std::vector<ExperimentVariant> expand_sweep(const ExperimentConfig& cfg, const FlatConfig& base) {
  FlatConfig plain;
  for (const auto& [k, v] : base) {
    if (k.rfind("sweep.", 0) != 0) plain[k] = v;
  }
  std::vector<ExperimentVariant> out;
  if (cfg.sweep.empty()) {
    out.push_back({"", cfg});
    out.back().config.sweep.clear();
    return out;
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> axes(cfg.sweep.begin(), cfg.sweep.end());
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    FlatConfig flat = plain;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& [key, values] = axes[a];
      flat[key] = values[idx[a]];
      label += (a ? "," : "") + key.substr(key.find('.') + 1) + "=" + values[idx[a]];
    }
    ExperimentConfig c;
    try {
      c = ExperimentConfig::from_flat(flat);
    } catch (const ConfigError& e) {
      throw ConfigError("sweep point " + label + ": " + e.what());
    }
    out.push_back({label, c});
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  FlatConfig f = cfg.to_flat();
  f.erase("experiment.seeds");
  f.erase("experiment.output");
  const std::string text = to_ini(f);
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

namespace {

// Desk-scale geometry shared by the templates: 20-frame 20x20 clips, 16-frame
// windows, 16 px crops.
constexpr const char* kDeskCommon = R"([model]
adapter = (2+1)d
insertion = all
trainable_base = true

[schedule]
iterations = 300
batch_size = 8
lr = 0.01
lr_drops = 225
momentum = 0.9

[sampler]
window_frames = 16
clip_len = 16
resize_min = 16
resize_max = 20
crop = 16
temporal_views = 10

[eval]
multiview = true
)";

constexpr const char* kTwoDomains = R"(
[domain.1]
name = patterns
kind = spatial
classes = 4
train_size = 200
val_size = 60
frames = 20
height = 20
width = 20

[domain.2]
name = motion
kind = motion
classes = 4
train_size = 200
val_size = 60
frames = 20
height = 20
width = 20
)";

constexpr const char* kThreeDomains = R"(
[domain.1]
name = small
kind = mixed
style = 1
noise = 1.0
classes = 4
train_size = 200
val_size = 100
frames = 20
height = 20
width = 20

[domain.2]
name = medium
kind = mixed
style = 2
noise = 0.6
classes = 4
train_size = 1000
val_size = 100
frames = 20
height = 20
width = 20

[domain.3]
name = large
kind = mixed
style = 3
noise = 0.6
classes = 4
train_size = 5000
val_size = 100
frames = 20
height = 20
width = 20
)";

struct Template {
  const char* name;
  const char* header;
  const char* domains;
};

const Template kTemplates[] = {
    {"table1-sweep", "[experiment]\nname = table1-sweep\nseeds = 1, 2, 3\n\n[sweep]\nmodel.adapter = 2d | (2+1)d | 3d\n\n",
     kTwoDomains},
    {"table2-fixvstrain",
     "[experiment]\nname = table2-fixvstrain\nseeds = 1, 2, 3\n\n[sweep]\nmodel.trainable_base = false | true\n\n",
     kTwoDomains},
    {"table3-placement",
     "[experiment]\nname = table3-placement\nseeds = 1, 2, 3\n\n[sweep]\nmodel.insertion = early-1 | early-3 | late-3 | "
     "late-1 | multi-head | all\n\n",
     kTwoDomains},
    {"table4-domains",
     "[experiment]\nname = table4-domains\nseeds = 1, 2, 3\n\n[sweep]\nexperiment.domains = 1 | 1, 2 | 1, 2, 3\n\n",
     kThreeDomains},
};

}  // namespace

std::vector<std::string> template_names() {
  std::vector<std::string> out;
  for (const auto& t : kTemplates) out.emplace_back(t.name);
  return out;
}

std::optional<std::string> template_text(const std::string& name) {
  for (const auto& t : kTemplates) {
    if (name == t.name) return std::string(t.header) + kDeskCommon + t.domains;
  }
  return std::nullopt;
}

FlatConfig resolve_config_source(const std::string& source, const std::vector<std::string>& overrides) {
  FlatConfig flat;
  if (std::filesystem::exists(source)) {
    flat = load_config_file(source);
  } else if (auto text = template_text(source)) {
    std::istringstream in(*text);
    flat = parse_ini(in, source);
  } else {
    std::string names;
    for (const auto& n : template_names()) names += " " + n;
    throw ConfigError("'" + source + "' is neither a config file nor a template (templates:" + names + ")");
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' must look like section.key=value");
    const std::string key = trim(o.substr(0, eq));
    const std::string value = trim(o.substr(eq + 1));
    if (value.empty() && key.rfind("sweep.", 0) == 0) {
      flat.erase(key);
    } else {
      flat[key] = value;
    }
  }
  return flat;
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("VIDMDL_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return std::filesystem::current_path();
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, int domain_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain_id), 0x53414d50u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

nlohmann::json budget_json(const ParamBudget& b) {
  return {{"base", b.base}, {"heads", b.heads}, {"adapters", b.adapters}, {"norms", b.norms}, {"total", b.total}};
}

std::string sanitize(const std::string& label) {
  std::string s;
  for (char c : label) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || std::string("._=,+()-").find(c) != std::string::npos;
    s.push_back(ok ? c : '_');
  }
  return s;
}

}  // namespace

RunArtifacts run_single(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                        const std::string& variant, const RunOptions& options) {
  cfg.validate();
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };
  std::filesystem::create_directories(dir);
  const auto domains = cfg.selected_domains();

  ExperimentConfig snapshot = cfg;
  snapshot.seeds = {seed};
  snapshot.sweep.clear();
  const std::string hash = config_hash(snapshot);
  {
    std::ofstream os(dir / "config.ini");
    os << "# " << (variant.empty() ? cfg.name : cfg.name + " " + variant) << ", config hash " << hash << "\n"
       << to_ini(snapshot.to_flat());
  }

  ToyBackboneConfig bcfg = cfg.backbone;
  bcfg.in_channels = domains.front().channels;
  std::vector<DomainSpec> specs;
  for (const auto& d : domains) specs.push_back(d.spec());
  MdlNetwork net(make_toy_backbone(bcfg, seed), specs, cfg.adapter, cfg.insertion, cfg.trainable_base, seed,
                 cfg.gamma_init);

  std::vector<std::unique_ptr<SyntheticSampler>> owned;
  std::map<int, DomainSampler*> samplers;
  for (const auto& d : domains) {
    owned.push_back(std::make_unique<SyntheticSampler>(d, cfg.sampler, mix_seed(seed, d.id)));
    samplers[d.id] = owned.back().get();
  }

  std::map<int, double> final_top1;
  EvalHook hook = [&](MdlNetwork& n, std::int64_t update) {
    std::map<int, double> acc;
    for (const auto& d : domains) acc[d.id] = evaluate_top1(n, d, cfg.sampler, cfg.eval);
    if (update == cfg.schedule.total_iterations) final_top1 = acc;
    std::ostringstream os;
    os << "eval @" << update;
    for (const auto& [id, a] : acc) os << "  d" << id << " top1 " << std::fixed << std::setprecision(3) << a;
    log(os.str());
    return acc;
  };
  TrainOptions topts;
  const std::int64_t every = std::max<std::int64_t>(1, cfg.schedule.total_iterations / 10);
  topts.on_cycle = [&](const CycleMetrics& m) {
    if ((m.update_index + 1) % every != 0) return;
    std::ostringstream os;
    os << "update " << m.update_index + 1 << "/" << cfg.schedule.total_iterations << " lr " << m.lr;
    for (const auto& [id, l] : m.domain_losses) os << "  d" << id << " loss " << std::setprecision(4) << l;
    log(os.str());
  };

  RunArtifacts art;
  art.dir = dir;
  art.variant = variant;
  art.seed = seed;
  art.config_hash = hash;
  art.budget = walker_count(net);
  art.record = train(net, cfg.schedule, samplers, hook, topts);
  art.top1 = final_top1;

  {
    std::ofstream os(dir / "run_record.csv");
    art.record.write_csv(os);
  }
  {
    std::ofstream os(dir / "run_record.jsonl");
    art.record.write_jsonl(os);
  }
  nlohmann::json metrics;
  metrics["name"] = cfg.name;
  metrics["variant"] = variant;
  metrics["seed"] = seed;
  metrics["config_hash"] = hash;
  metrics["updates"] = cfg.schedule.total_iterations;
  for (const auto& [id, a] : art.top1) metrics["top1"][std::to_string(id)] = a;
  for (const auto& [id, l] : art.record.last_losses()) metrics["final_loss"][std::to_string(id)] = l;
  metrics["budget"] = budget_json(art.budget);
  {
    std::ofstream os(dir / "metrics.json");
    os << metrics.dump(2) << '\n';
  }
  if (cfg.checkpoint) {
    save_checkpoint(net, dir / "checkpoint.bin", "config_hash=" + hash + " seed=" + std::to_string(seed));
  }
  return art;
}

std::vector<RunArtifacts> run_experiment(const FlatConfig& flat, const RunOptions& options) {
  const ExperimentConfig cfg = ExperimentConfig::from_flat(flat);
  const auto variants = expand_sweep(cfg, flat);  // validates every sweep point before any compute
  std::filesystem::path base = cfg.output;
  if (base.is_relative()) base = output_root() / base;
  base /= cfg.name;

  std::vector<RunArtifacts> runs;
  for (const auto& v : variants) {
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
      const std::uint64_t seed = cfg.seeds[k];
      const auto dir = base / (v.label.empty() ? "base" : sanitize(v.label)) /
                       ("run" + std::to_string(k) + "-seed" + std::to_string(seed));
      if (options.log) options.log("== " + (v.label.empty() ? cfg.name : v.label) + " seed " + std::to_string(seed));
      runs.push_back(run_single(v.config, seed, dir, v.label, options));
    }
  }
  std::filesystem::create_directories(base);
  std::ofstream os(base / "summary.csv");
  write_summary(runs, os);
  return runs;
}

void write_summary(const std::vector<RunArtifacts>& runs, std::ostream& os) {
  struct Acc {
    std::map<int, std::vector<double>> top1;
    ParamBudget budget;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> by_variant;
  for (const auto& r : runs) {
    if (!by_variant.contains(r.variant)) order.push_back(r.variant);
    auto& a = by_variant[r.variant];
    for (const auto& [id, v] : r.top1) a.top1[id].push_back(v);
    a.budget = r.budget;
  }
  os << "variant,domain_id,mean_top1,min_top1,max_top1,seeds,params_total,params_base,params_heads,params_adapters,"
        "params_norms\n";
  for (const auto& name : order) {
    const auto& a = by_variant[name];
    for (const auto& [id, vals] : a.top1) {
      double mean = 0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      os << '"' << name << "\"," << id << ',' << fmt(mean) << ',' << fmt(*std::min_element(vals.begin(), vals.end()))
         << ',' << fmt(*std::max_element(vals.begin(), vals.end())) << ',' << vals.size() << ',' << a.budget.total
         << ',' << a.budget.base << ',' << a.budget.heads << ',' << a.budget.adapters << ',' << a.budget.norms << '\n';
    }
  }
}

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

void write_svg(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
               const std::vector<Series>& series) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!any) {
        x0 = x1 = x;
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream os(path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\""
     << " font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">update</text>\n";
  os << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 14 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4;
    const double xv = x0 + (x1 - x0) * i / 4;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << yv
       << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(4)
       << xv << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % (sizeof(colors) / sizeof(colors[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[i].points) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    const double ly = T + 16 * static_cast<double>(i);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << series[i].label << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

ReportResult report_runs(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir) {
  ReportResult res;
  std::vector<std::filesystem::path> runs;
  for (const auto& d : dirs) {
    std::vector<std::filesystem::path> found;
    if (std::filesystem::exists(d / "metrics.json")) {
      found.push_back(d);
    } else if (std::filesystem::is_directory(d)) {
      for (const auto& e : std::filesystem::recursive_directory_iterator(d)) {
        if (e.is_regular_file() && e.path().filename() == "metrics.json") found.push_back(e.path().parent_path());
      }
      std::sort(found.begin(), found.end());
    }
    if (found.empty()) res.warnings.push_back(d.string() + ": no run artifacts (metrics.json), skipped");
    for (auto& f : found) {
      if (!std::filesystem::exists(f / "run_record.csv")) {
        res.warnings.push_back(f.string() + ": run_record.csv missing, skipped");
        continue;
      }
      runs.push_back(f);
    }
  }

  std::map<int, std::vector<double>> top1;
  std::map<int, std::map<std::int64_t, std::vector<double>>> loss, acc;
  std::set<std::string> hashes;
  for (const auto& r : runs) {
    nlohmann::json m;
    try {
      std::ifstream is(r / "metrics.json");
      m = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception&) {
      res.warnings.push_back(r.string() + ": unreadable metrics.json, skipped");
      continue;
    }
    const std::string hash = m.value("config_hash", "");
    hashes.insert(hash);
    if (hashes.size() > 1) {
      std::string list;
      for (const auto& h : hashes) list += " " + h;
      throw ConfigError("report: runs come from different configs (hashes" + list + "); refusing to aggregate");
    }
    res.config_hash = hash;
    if (m.contains("top1")) {
      for (const auto& [id, v] : m["top1"].items()) top1[std::stoi(id)].push_back(v.get<double>());
    }
    std::ifstream rs(r / "run_record.csv");
    const RunRecord rec = RunRecord::read_csv(rs);
    for (const auto& row : rec.rows) {
      if (row.loss) loss[row.domain_id][row.update_index].push_back(*row.loss);
      if (row.eval_top1) acc[row.domain_id][row.update_index].push_back(*row.eval_top1);
    }
    res.used.push_back(r);
  }

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "summary.csv");
    os << "config_hash,domain_id,mean_top1,min_top1,max_top1,runs\n";
    for (const auto& [id, vals] : top1) {
      double mean = 0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      const std::array<double, 3> agg{mean, *std::min_element(vals.begin(), vals.end()),
                                      *std::max_element(vals.begin(), vals.end())};
      res.top1[id] = agg;
      os << res.config_hash << ',' << id << ',' << fmt(agg[0]) << ',' << fmt(agg[1]) << ',' << fmt(agg[2]) << ','
         << vals.size() << '\n';
    }
  }
  auto curves = [](const std::map<int, std::map<std::int64_t, std::vector<double>>>& src) {
    std::vector<Series> out;
    for (const auto& [id, by_update] : src) {
      Series s{"domain " + std::to_string(id), {}};
      for (const auto& [u, vals] : by_update) {
        double mean = 0;
        for (double v : vals) mean += v;
        s.points.emplace_back(static_cast<double>(u), mean / static_cast<double>(vals.size()));
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  write_svg(out_dir / "loss.svg", "training loss (mean over runs)", "loss", curves(loss));
  write_svg(out_dir / "accuracy.svg", "validation top-1 (mean over runs)", "top-1", curves(acc));
  return res;
}

}  // namespace vidmdl
