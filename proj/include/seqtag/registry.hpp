// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "seqtag/adapters.hpp"
#include "seqtag/encoder.hpp"

namespace seqtag {

struct RouterModel;  // router.hpp

// Ordered BIO tag set. Order is canonical: serialization and head layout
// depend on it.
struct LabelScheme {
  std::string id;
  std::vector<std::string> tags;

  void validate() const;  // contains O; every I-X has a matching B-X
  std::vector<std::string> entity_types() const;
  int tag_index(const std::string& tag) const;  // -1 when unknown
  bool operator==(const LabelScheme& other) const = default;
};

struct ClassifierHead {
  std::string id;
  std::string scheme_id;
  Tensor w;  // [d_model, n_tags]
  Tensor b;  // [n_tags]
  bool frozen = false;

  std::vector<double> flat_weights() const;
};

// Temporarily freezes a head for the duration of a scope.
class HeadFreezeGuard {
 public:
  explicit HeadFreezeGuard(ClassifierHead& head);
  ~HeadFreezeGuard();
  HeadFreezeGuard(const HeadFreezeGuard&) = delete;
  HeadFreezeGuard& operator=(const HeadFreezeGuard&) = delete;

 private:
  ClassifierHead& head_;
  bool prev_frozen_;
};

struct Bundle;
Bundle load_bundle(const std::string& path);

// domain -> (adapter, head); adapters are exclusive to a domain, heads are
// shared between domains whose schemes are byte-identical.
class DomainRegistry {
 public:
  struct Binding {
    std::string adapter_id;
    std::string head_id;
  };

  // Creates a fresh adapter for the domain; reuses a head when an identical
  // scheme is already registered, otherwise creates one.
  Binding register_domain(const std::string& domain, const LabelScheme& scheme,
                          const EncoderConfig& cfg, AdapterKind kind,
                          const AdapterHyper& hyper, Rng& rng);

  struct Resolved {
    const AdapterSet* adapter;
    const ClassifierHead* head;
    const LabelScheme* scheme;
  };
  Resolved resolve(const std::string& domain) const;

  bool has_domain(const std::string& domain) const;
  std::vector<std::string> domains() const;  // registration order

  AdapterSet& adapter(const std::string& adapter_id);
  ClassifierHead& head(const std::string& head_id);
  const LabelScheme& scheme(const std::string& scheme_id) const;
  const Binding& binding(const std::string& domain) const;

  // Replaces a domain's adapter tensors (used after fine-tuning a replica).
  void replace_adapter(const std::string& domain, AdapterSet adapter);

  std::vector<std::string> head_ids() const;
  std::vector<std::string> adapter_ids() const;

  const AdapterSet& adapter(const std::string& adapter_id) const;
  const ClassifierHead& head(const std::string& head_id) const;

 private:
  friend Bundle load_bundle(const std::string& path);
  std::vector<std::string> domain_order_;
  std::map<std::string, Binding> bindings_;
  std::map<std::string, AdapterSet> adapters_;
  std::map<std::string, ClassifierHead> heads_;
  std::map<std::string, LabelScheme> schemes_;
  std::vector<std::string> head_order_;
  int next_head_ = 0;
};

ClassifierHead init_head(const std::string& id, const LabelScheme& scheme,
                         const EncoderConfig& cfg, Rng& rng);

// ---- bundle serialization ----
//
// Single file: magic line, manifest length, JSON manifest (format version,
// encoder config, schemes, domain map, named-array index with shapes, byte
// offsets and checksums), then one payload of row-major little-endian
// doubles. save -> load -> save is byte-exact.

struct Bundle {
  CoreModel core;
  DomainRegistry registry;
  std::shared_ptr<RouterModel> router;  // may be null
};

void save_bundle(const DomainRegistry& reg, const CoreModel& core,
                 const std::string& path, const RouterModel* router = nullptr);
Bundle load_bundle(const std::string& path);

}  // namespace seqtag
