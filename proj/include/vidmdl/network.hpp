// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// The multi-domain model: a shared layer stack, one adapter bank and one head
// per domain, and a layer norm per insertion location shared by all domains.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vidmdl/adapter.hpp"
#include "vidmdl/backbone.hpp"

namespace vidmdl {

struct DomainSpec {
  int id = 0;
  std::string name;
  int num_classes = 0;
};

// Which locations carry adapters, out of 1..L-2.
class InsertionConfig {
 public:
  enum class Type { All, Early, Late, MultiHead };

  static InsertionConfig all() { return {Type::All, 0}; }
  static InsertionConfig early(int x) { return {Type::Early, x}; }
  static InsertionConfig late(int x) { return {Type::Late, x}; }
  static InsertionConfig multi_head() { return {Type::MultiHead, 0}; }
  // "all", "early-3", "late-1", "multi-head"
  static InsertionConfig parse(const std::string& text);

  // `locations` is L-2. Early(x) = {1..x}; Late(x) = {L-1-x .. L-2}.
  std::set<int> resolve(int locations) const;
  std::string to_string() const;

  Type type() const { return type_; }
  int count() const { return x_; }

 private:
  InsertionConfig(Type t, int x) : type_(t), x_(x) {}
  Type type_;
  int x_;
};

// All samples in a batch come from one domain.
struct DomainBatch {
  Tensor clips;  // (B, T, C, H, W)
  std::vector<int> labels;
  int domain_id = 0;
};

enum class ParamTag { Base, Head, Adapter, Norm };
std::string to_string(ParamTag tag);

struct TaggedParam {
  ParamTag tag;
  std::string name;  // checkpoint name, e.g. "adapter/d2/l3/spatial.weight"
  Tensor tensor;
};

class MdlNetwork {
 public:
  MdlNetwork(LayerStack backbone, const std::vector<DomainSpec>& domains, AdapterKind kind, InsertionConfig config,
             bool trainable_base, std::uint64_t seed, double adapter_gamma_init = 0.0);

  // Adds a bank and head for a new domain; other domains are untouched.
  void add_domain(const DomainSpec& domain);

  Tensor forward(Tape& tape, const Tensor& clips, int domain_id, Mode mode, ForwardProbe* probe = nullptr);
  Tensor forward(Tape& tape, const DomainBatch& batch, Mode mode) {
    return forward(tape, batch.clips, batch.domain_id, mode);
  }

  // Adapters, heads and shared norms always; backbone only when trainable_base.
  std::vector<TaggedParam> trainable_params() const;
  // Every parameter regardless of trainability.
  std::vector<TaggedParam> all_params() const;

  void set_trainable_base(bool on);
  bool trainable_base() const { return trainable_base_; }
  void zero_grad();

  // Deep copy: no tensor storage is shared with the original.
  MdlNetwork clone() const;

  AdapterKind adapter_kind() const { return kind_; }
  const InsertionConfig& insertion() const { return config_; }
  const std::set<int>& locations() const { return locations_; }
  const std::vector<DomainSpec>& domains() const { return domains_; }
  const DomainSpec& domain(int id) const;

  LayerStack& backbone() { return backbone_; }
  const LayerStack& backbone() const { return backbone_; }
  std::map<int, AdapterBank>& banks() { return banks_; }
  const std::map<int, AdapterBank>& banks() const { return banks_; }
  std::map<int, LinearHead>& heads() { return heads_; }
  const std::map<int, LinearHead>& heads() const { return heads_; }
  SharedPostNorm& post_norms() { return post_norms_; }
  const SharedPostNorm& post_norms() const { return post_norms_; }

  // Backbone BN affine parameters are shared, but each domain keeps its own
  // running statistics; they are swapped in for that domain's forward pass.
  struct BnStats {
    std::vector<double> mean;
    std::vector<double> var;
  };
  const std::vector<BnStats>& base_bn_stats(int domain_id) const;

  // Parameters plus BN running statistics, keyed by checkpoint name.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state);

 private:
  LayerStack backbone_;
  AdapterKind kind_;
  InsertionConfig config_;
  std::set<int> locations_;
  std::vector<DomainSpec> domains_;
  std::map<int, AdapterBank> banks_;
  std::map<int, LinearHead> heads_;
  SharedPostNorm post_norms_;
  std::map<int, std::vector<BnStats>> base_bn_stats_;
  bool trainable_base_;
  std::uint64_t seed_;
  double gamma_init_;
};

// Flat archive: magic, header text, then (name, shape, float64 data) records.
void save_checkpoint(const MdlNetwork& net, const std::filesystem::path& path, const std::string& header);
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path, std::string* header = nullptr);

}  // namespace vidmdl
