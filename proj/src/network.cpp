// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidmdl/network.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <functional>

#include "vidmdl/error.hpp"

namespace vidmdl {

namespace {

std::mt19937_64 head_rng(std::uint64_t seed, int domain_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain_id), 0x4eadu};
  return std::mt19937_64(seq);
}

std::string domain_part(int id) { return "d" + std::to_string(id); }
std::string location_part(int loc) { return "l" + std::to_string(loc); }

Tensor buffer_tensor(const std::vector<double>& v) {
  return Tensor::from({static_cast<std::int64_t>(v.size())}, v);
}

void for_each_tensor(LayerStack& stack, std::map<int, AdapterBank>& banks, std::map<int, LinearHead>& heads,
                     SharedPostNorm& post, const std::function<void(Tensor&)>& fn) {
  for (auto& layer : stack.layers) {
    fn(layer.conv.weight);
    if (layer.conv.has_bias()) fn(layer.conv.bias);
    fn(layer.bn.gamma);
    fn(layer.bn.beta);
  }
  for (auto& [d, bank] : banks) {
    for (auto& [loc, blk] : bank.blocks) {
      for (auto& k : blk.convs) fn(k.weight);
      fn(blk.bn.gamma);
      fn(blk.bn.beta);
    }
  }
  for (auto& [d, head] : heads) {
    fn(head.weight);
    fn(head.bias);
  }
  for (auto& [loc, ln] : post.norms) {
    fn(ln.gamma);
    fn(ln.beta);
  }
}

}  // namespace

InsertionConfig InsertionConfig::parse(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "all") return all();
  if (t == "multi-head" || t == "multihead" || t == "none") return multi_head();
  auto parse_count = [&](std::size_t prefix) {
    try {
      std::size_t used = 0;
      int x = std::stoi(t.substr(prefix), &used);
      if (used != t.size() - prefix || x < 0) throw ConfigError("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("insertion config '" + text + "': expected a non-negative count after the dash");
    }
  };
  if (t.rfind("early-", 0) == 0) return early(parse_count(6));
  if (t.rfind("late-", 0) == 0) return late(parse_count(5));
  throw ConfigError("unknown insertion config '" + text + "' (expected all, early-x, late-x or multi-head)");
}

std::set<int> InsertionConfig::resolve(int locations) const {
  std::set<int> out;
  switch (type_) {
    case Type::All:
      for (int l = 1; l <= locations; ++l) out.insert(l);
      break;
    case Type::MultiHead:
      break;
    case Type::Early:
    case Type::Late:
      if (x_ > locations) {
        throw ConfigError("insertion config " + to_string() + " needs " + std::to_string(x_) + " locations, backbone has " +
                          std::to_string(locations));
      }
      for (int i = 0; i < x_; ++i) out.insert(type_ == Type::Early ? 1 + i : locations - i);
      break;
  }
  return out;
}

std::string InsertionConfig::to_string() const {
  switch (type_) {
    case Type::All: return "all";
    case Type::MultiHead: return "multi-head";
    case Type::Early: return "early-" + std::to_string(x_);
    case Type::Late: return "late-" + std::to_string(x_);
  }
  return "?";
}

std::string to_string(ParamTag tag) {
  switch (tag) {
    case ParamTag::Base: return "base";
    case ParamTag::Head: return "head";
    case ParamTag::Adapter: return "adapter";
    case ParamTag::Norm: return "ln";
  }
  return "?";
}

MdlNetwork::MdlNetwork(LayerStack backbone, const std::vector<DomainSpec>& domains, AdapterKind kind,
                       InsertionConfig config, bool trainable_base, std::uint64_t seed, double adapter_gamma_init)
    : backbone_(std::move(backbone)),
      kind_(kind),
      config_(config),
      trainable_base_(trainable_base),
      seed_(seed),
      gamma_init_(adapter_gamma_init) {
  locations_ = config_.resolve(backbone_.insertion_locations());
  post_norms_ = SharedPostNorm::make(backbone_.channel_spec("backbone"), locations_);
  backbone_.set_trainable(trainable_base_);
  for (const auto& d : domains) add_domain(d);
}

void MdlNetwork::add_domain(const DomainSpec& domain) {
  if (domain.num_classes < 2) {
    throw ConfigError("domain " + std::to_string(domain.id) + ": at least 2 classes are required");
  }
  if (heads_.contains(domain.id)) throw ConfigError("domain id " + std::to_string(domain.id) + " is already present");
  domains_.push_back(domain);
  banks_.emplace(domain.id, build_bank(domain.id, backbone_.channel_spec("backbone"), kind_, locations_, seed_, gamma_init_));
  auto rng = head_rng(seed_, domain.id);
  LinearHead head = LinearHead::make(domain.num_classes, backbone_.feature_width(), rng);
  head.weight.set_requires_grad(true);
  head.bias.set_requires_grad(true);
  heads_.emplace(domain.id, std::move(head));
  auto& stats = base_bn_stats_[domain.id];
  for (const auto& layer : backbone_.layers) {
    const std::size_t c = layer.bn.running_mean.size();
    stats.push_back({std::vector<double>(c, 0.0), std::vector<double>(c, 1.0)});
  }
}

const std::vector<MdlNetwork::BnStats>& MdlNetwork::base_bn_stats(int domain_id) const {
  auto it = base_bn_stats_.find(domain_id);
  if (it == base_bn_stats_.end()) throw RoutingError("unknown domain id " + std::to_string(domain_id));
  return it->second;
}

const DomainSpec& MdlNetwork::domain(int id) const {
  auto it = std::find_if(domains_.begin(), domains_.end(), [&](const DomainSpec& d) { return d.id == id; });
  if (it == domains_.end()) throw RoutingError("unknown domain id " + std::to_string(id));
  return *it;
}

Tensor MdlNetwork::forward(Tape& tape, const Tensor& clips, int domain_id, Mode mode, ForwardProbe* probe) {
  auto bank = banks_.find(domain_id);
  auto head = heads_.find(domain_id);
  if (bank == banks_.end() || head == heads_.end()) {
    throw RoutingError("mdl_forward: unknown domain id " + std::to_string(domain_id));
  }
  AdapterRoute route{&bank->second, &post_norms_, locations_};
  auto& stats = base_bn_stats_.at(domain_id);
  auto swap_stats = [&] {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      std::swap(backbone_.layers[i].bn.running_mean, stats[i].mean);
      std::swap(backbone_.layers[i].bn.running_var, stats[i].var);
    }
  };
  swap_stats();
  try {
    Tensor out = stack_forward(tape, clips, backbone_, route, head->second, mode, probe);
    swap_stats();
    return out;
  } catch (...) {
    swap_stats();
    throw;
  }
}

std::vector<TaggedParam> MdlNetwork::all_params() const {
  std::vector<TaggedParam> out;
  for (auto& [name, t] : backbone_.named_params()) out.push_back({ParamTag::Base, "base/" + name, t});
  for (const auto& [d, bank] : banks_) {
    for (const auto& [loc, blk] : bank.blocks) {
      for (auto& [name, t] : blk.named_params()) {
        out.push_back({ParamTag::Adapter, "adapter/" + domain_part(d) + "/" + location_part(loc) + "/" + name, t});
      }
    }
  }
  for (const auto& [d, head] : heads_) {
    out.push_back({ParamTag::Head, "head/" + domain_part(d) + "/weight", head.weight});
    out.push_back({ParamTag::Head, "head/" + domain_part(d) + "/bias", head.bias});
  }
  for (const auto& [loc, ln] : post_norms_.norms) {
    out.push_back({ParamTag::Norm, "ln/" + location_part(loc) + "/gamma", ln.gamma});
    out.push_back({ParamTag::Norm, "ln/" + location_part(loc) + "/beta", ln.beta});
  }
  return out;
}

std::vector<TaggedParam> MdlNetwork::trainable_params() const {
  auto params = all_params();
  if (!trainable_base_) {
    std::erase_if(params, [](const TaggedParam& p) { return p.tag == ParamTag::Base; });
  }
  return params;
}

void MdlNetwork::set_trainable_base(bool on) {
  trainable_base_ = on;
  backbone_.set_trainable(on);
}

void MdlNetwork::zero_grad() {
  for (auto& p : all_params()) {
    if (p.tensor.has_grad()) p.tensor.zero_grad();
  }
}

MdlNetwork MdlNetwork::clone() const {
  MdlNetwork copy = *this;
  for_each_tensor(copy.backbone_, copy.banks_, copy.heads_, copy.post_norms_, [](Tensor& t) {
    Tensor c = t.clone();
    if (t.has_grad()) {
      auto src = t.grad();
      std::copy(src.begin(), src.end(), c.grad().begin());
    }
    t = c;
  });
  return copy;
}

std::map<std::string, Tensor> MdlNetwork::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : all_params()) out.emplace(p.name, p.tensor);
  for (const auto& [d, stats] : base_bn_stats_) {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const std::string prefix = "bnstats/" + domain_part(d) + "/M" + std::to_string(i + 1) + ".";
      out.emplace(prefix + "running_mean", buffer_tensor(stats[i].mean));
      out.emplace(prefix + "running_var", buffer_tensor(stats[i].var));
    }
  }
  for (const auto& [d, bank] : banks_) {
    for (const auto& [loc, blk] : bank.blocks) {
      const std::string prefix = "adapter/" + domain_part(d) + "/" + location_part(loc) + "/bn.";
      out.emplace(prefix + "running_mean", buffer_tensor(blk.bn.running_mean));
      out.emplace(prefix + "running_var", buffer_tensor(blk.bn.running_var));
    }
  }
  return out;
}

void MdlNetwork::load_state(const std::map<std::string, Tensor>& state) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = state.find(name);
    if (it == state.end()) throw ConfigError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw DimensionError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                           ", network expects " + shape_str(shape));
    }
    return it->second;
  };
  for (auto& p : all_params()) {
    const auto& src = fetch(p.name, p.tensor.shape());
    std::copy(src.data().begin(), src.data().end(), p.tensor.data().begin());
  }
  auto load_buffer = [&](const std::string& name, std::vector<double>& dst) {
    const auto& src = fetch(name, {static_cast<std::int64_t>(dst.size())});
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  };
  for (auto& [d, stats] : base_bn_stats_) {
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const std::string prefix = "bnstats/" + domain_part(d) + "/M" + std::to_string(i + 1) + ".";
      load_buffer(prefix + "running_mean", stats[i].mean);
      load_buffer(prefix + "running_var", stats[i].var);
    }
  }
  for (auto& [d, bank] : banks_) {
    for (auto& [loc, blk] : bank.blocks) {
      const std::string prefix = "adapter/" + domain_part(d) + "/" + location_part(loc) + "/bn.";
      load_buffer(prefix + "running_mean", blk.bn.running_mean);
      load_buffer(prefix + "running_var", blk.bn.running_var);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'V', 'M', 'D', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ConfigError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const MdlNetwork& net, const std::filesystem::path& path, const std::string& header) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<std::uint64_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto state = net.state();
  put(os, static_cast<std::uint64_t>(state.size()));
  for (const auto& [name, t] : state) {
    put(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put(os, static_cast<std::int64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw ConfigError("checkpoint: write failed for " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path, std::string* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("checkpoint: " + path.string() + " is not a vidmdl checkpoint");
  }
  if (get<std::uint32_t>(is, "version") != kVersion) throw ConfigError("checkpoint: unsupported version");
  const auto header_len = get<std::uint64_t>(is, "header length");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) throw ConfigError("checkpoint: truncated header");
  if (header) *header = text;
  const auto count = get<std::uint64_t>(is, "tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw ConfigError("checkpoint: truncated name");
    const auto rank = get<std::uint32_t>(is, "rank of " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::int64_t>(is, "shape of " + name);
    std::vector<double> values(static_cast<std::size_t>(numel_of(shape)));
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw ConfigError("checkpoint: truncated data for " + name);
    }
    out.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace vidmdl
