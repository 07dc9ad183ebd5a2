// SPDX-License-Identifier: Apache-2.0
#include "seqtag/registry.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqtag/router.hpp"

namespace seqtag {

using ordered_json = nlohmann::ordered_json;

void LabelScheme::validate() const {
  if (std::find(tags.begin(), tags.end(), "O") == tags.end()) {
    throw ParamError("scheme '" + id + "' lacks the O tag");
  }
  for (const auto& t : tags) {
    if (t == "O") continue;
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      throw ParamError("scheme '" + id + "' has malformed tag '" + t + "'");
    }
    if (t[0] == 'I') {
      const std::string want = "B-" + t.substr(2);
      if (std::find(tags.begin(), tags.end(), want) == tags.end()) {
        throw ParamError("scheme '" + id + "': " + t + " has no matching " + want);
      }
    }
  }
}

std::vector<std::string> LabelScheme::entity_types() const {
  std::vector<std::string> types;
  for (const auto& t : tags) {
    if (t.rfind("B-", 0) == 0) types.push_back(t.substr(2));
  }
  return types;
}

int LabelScheme::tag_index(const std::string& tag) const {
  auto it = std::find(tags.begin(), tags.end(), tag);
  return it == tags.end() ? -1 : static_cast<int>(it - tags.begin());
}

std::vector<double> ClassifierHead::flat_weights() const {
  std::vector<double> out(w.data());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return out;
}

HeadFreezeGuard::HeadFreezeGuard(ClassifierHead& head)
    : head_(head), prev_frozen_(head.frozen) {
  head_.frozen = true;
  head_.w.set_requires_grad(false);
  head_.b.set_requires_grad(false);
}

HeadFreezeGuard::~HeadFreezeGuard() {
  head_.frozen = prev_frozen_;
  head_.w.set_requires_grad(!prev_frozen_);
  head_.b.set_requires_grad(!prev_frozen_);
}

ClassifierHead init_head(const std::string& id, const LabelScheme& scheme,
                         const EncoderConfig& cfg, Rng& rng) {
  scheme.validate();
  ClassifierHead h;
  h.id = id;
  h.scheme_id = scheme.id;
  h.w = Tensor::randn({static_cast<std::size_t>(cfg.d_model), scheme.tags.size()},
                      rng, 0.02, true);
  h.b = Tensor::zeros({scheme.tags.size()}, true);
  return h;
}

DomainRegistry::Binding DomainRegistry::register_domain(
    const std::string& domain, const LabelScheme& scheme, const EncoderConfig& cfg,
    AdapterKind kind, const AdapterHyper& hyper, Rng& rng) {
  if (bindings_.count(domain)) {
    throw ContractError("domain '" + domain + "' already registered");
  }
  scheme.validate();
  auto sit = schemes_.find(scheme.id);
  if (sit != schemes_.end()) {
    if (!(sit->second == scheme)) {
      throw ContractError("scheme id '" + scheme.id +
                          "' re-registered with different tags");
    }
  } else {
    schemes_.emplace(scheme.id, scheme);
  }

  // Reuse a head only on exact scheme equality (same tags, same order).
  std::string head_id;
  for (const auto& hid : head_order_) {
    if (heads_.at(hid).scheme_id == scheme.id) {
      head_id = hid;
      break;
    }
  }
  if (head_id.empty()) {
    head_id = "head_" + std::to_string(next_head_++);
    heads_.emplace(head_id, init_head(head_id, scheme, cfg, rng));
    head_order_.push_back(head_id);
  }

  const std::string adapter_id = "adapter_" + domain;
  if (adapters_.count(adapter_id)) {
    throw ContractError("adapter id '" + adapter_id + "' already present");
  }
  adapters_.emplace(adapter_id, init_adapter(kind, cfg, hyper, rng, adapter_id));

  Binding b{adapter_id, head_id};
  bindings_.emplace(domain, b);
  domain_order_.push_back(domain);
  return b;
}

DomainRegistry::Resolved DomainRegistry::resolve(const std::string& domain) const {
  auto it = bindings_.find(domain);
  if (it == bindings_.end()) {
    std::ostringstream os;
    os << "unknown domain '" << domain << "'; registered domains:";
    for (const auto& d : domain_order_) os << " " << d;
    throw LookupError(os.str());
  }
  const AdapterSet& a = adapters_.at(it->second.adapter_id);
  const ClassifierHead& h = heads_.at(it->second.head_id);
  return Resolved{&a, &h, &schemes_.at(h.scheme_id)};
}

bool DomainRegistry::has_domain(const std::string& domain) const {
  return bindings_.count(domain) > 0;
}

std::vector<std::string> DomainRegistry::domains() const { return domain_order_; }

AdapterSet& DomainRegistry::adapter(const std::string& adapter_id) {
  auto it = adapters_.find(adapter_id);
  if (it == adapters_.end()) throw LookupError("unknown adapter '" + adapter_id + "'");
  return it->second;
}

ClassifierHead& DomainRegistry::head(const std::string& head_id) {
  auto it = heads_.find(head_id);
  if (it == heads_.end()) throw LookupError("unknown head '" + head_id + "'");
  return it->second;
}

const LabelScheme& DomainRegistry::scheme(const std::string& scheme_id) const {
  auto it = schemes_.find(scheme_id);
  if (it == schemes_.end()) throw LookupError("unknown scheme '" + scheme_id + "'");
  return it->second;
}

const DomainRegistry::Binding& DomainRegistry::binding(const std::string& domain) const {
  auto it = bindings_.find(domain);
  if (it == bindings_.end()) throw LookupError("unknown domain '" + domain + "'");
  return it->second;
}

void DomainRegistry::replace_adapter(const std::string& domain, AdapterSet adapter) {
  const Binding& b = binding(domain);
  adapter.id = b.adapter_id;
  adapters_.at(b.adapter_id) = std::move(adapter);
}

const AdapterSet& DomainRegistry::adapter(const std::string& adapter_id) const {
  return const_cast<DomainRegistry*>(this)->adapter(adapter_id);
}

const ClassifierHead& DomainRegistry::head(const std::string& head_id) const {
  return const_cast<DomainRegistry*>(this)->head(head_id);
}

std::vector<std::string> DomainRegistry::head_ids() const { return head_order_; }

std::vector<std::string> DomainRegistry::adapter_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : domain_order_) ids.push_back(bindings_.at(d).adapter_id);
  return ids;
}

// ---- bundle io ----

namespace {

constexpr const char* kMagic = "SEQTAG-BUNDLE";
constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(const unsigned char* bytes, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

static_assert(std::endian::native == std::endian::little,
              "bundle payload assumes a little-endian host");

struct ArrayWriter {
  ordered_json index = ordered_json::array();
  std::string payload;

  void add(const std::string& name, const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
    const std::size_t nbytes = t.numel() * sizeof(double);
    ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = payload.size();
    e["bytes"] = nbytes;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes, nbytes)));
    e["fnv1a64"] = std::string(buf);
    index.push_back(e);
    payload.append(reinterpret_cast<const char*>(bytes), nbytes);
  }
};

class ArrayReader {
 public:
  ArrayReader(const ordered_json& index, const std::string& payload)
      : payload_(payload) {
    for (const auto& e : index) entries_[e["name"].get<std::string>()] = e;
  }

  Tensor read(const std::string& name, bool requires_grad) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw BundleError("bundle missing array '" + name + "'");
    const auto& e = it->second;
    const std::size_t offset = e["offset"].get<std::size_t>();
    const std::size_t nbytes = e["bytes"].get<std::size_t>();
    if (offset + nbytes > payload_.size()) {
      throw BundleError("truncated payload: array '" + name + "' extends past end");
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload_.data()) + offset;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes, nbytes)));
    if (e["fnv1a64"].get<std::string>() != buf) {
      throw BundleError("checksum mismatch on array '" + name + "'");
    }
    std::vector<std::size_t> shape = e["shape"].get<std::vector<std::size_t>>();
    std::vector<double> values(nbytes / sizeof(double));
    std::memcpy(values.data(), bytes, nbytes);
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

 private:
  std::map<std::string, ordered_json> entries_;
  const std::string& payload_;
};

void write_core_arrays(ArrayWriter& w, const CoreModel& core, const std::string& ns) {
  w.add(ns + "/tok_emb", core.tok_emb);
  w.add(ns + "/pos_emb", core.pos_emb);
  for (std::size_t l = 0; l < core.layers.size(); ++l) {
    const auto& layer = core.layers[l];
    const std::string p = ns + "/layer" + std::to_string(l) + "/";
    w.add(p + "wq", layer.wq);
    w.add(p + "wk", layer.wk);
    w.add(p + "wv", layer.wv);
    w.add(p + "wo", layer.wo);
    w.add(p + "w1", layer.w1);
    w.add(p + "w2", layer.w2);
    w.add(p + "ln1_gain", layer.ln1_gain);
    w.add(p + "ln1_bias", layer.ln1_bias);
    w.add(p + "ln2_gain", layer.ln2_gain);
    w.add(p + "ln2_bias", layer.ln2_bias);
  }
  w.add(ns + "/final_ln_gain", core.final_ln_gain);
  w.add(ns + "/final_ln_bias", core.final_ln_bias);
}

CoreModel read_core_arrays(ArrayReader& r, const EncoderConfig& cfg,
                           const std::string& ns) {
  CoreModel core;
  core.cfg = cfg;
  core.tok_emb = r.read(ns + "/tok_emb", false);
  core.pos_emb = r.read(ns + "/pos_emb", false);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = ns + "/layer" + std::to_string(l) + "/";
    EncoderLayer layer;
    layer.wq = r.read(p + "wq", false);
    layer.wk = r.read(p + "wk", false);
    layer.wv = r.read(p + "wv", false);
    layer.wo = r.read(p + "wo", false);
    layer.w1 = r.read(p + "w1", false);
    layer.w2 = r.read(p + "w2", false);
    layer.ln1_gain = r.read(p + "ln1_gain", false);
    layer.ln1_bias = r.read(p + "ln1_bias", false);
    layer.ln2_gain = r.read(p + "ln2_gain", false);
    layer.ln2_bias = r.read(p + "ln2_bias", false);
    core.layers.push_back(layer);
  }
  core.final_ln_gain = r.read(ns + "/final_ln_gain", false);
  core.final_ln_bias = r.read(ns + "/final_ln_bias", false);
  core.frozen = true;
  return core;
}

void write_adapter_arrays(ArrayWriter& w, const AdapterSet& a, const std::string& ns) {
  if (a.kind == AdapterKind::lora) {
    for (std::size_t l = 0; l < a.lora.per_layer.size(); ++l) {
      for (const auto& [name, mats] : a.lora.per_layer[l]) {
        const std::string p = ns + "/layer" + std::to_string(l) + "/" + name;
        w.add(p + "/a", mats.a);
        w.add(p + "/b", mats.b);
      }
    }
  } else {
    for (std::size_t l = 0; l < a.prefix.per_layer.size(); ++l) {
      if (!a.prefix.per_layer[l].keys.defined()) continue;
      const std::string p = ns + "/layer" + std::to_string(l);
      w.add(p + "/keys", a.prefix.per_layer[l].keys);
      w.add(p + "/values", a.prefix.per_layer[l].values);
    }
  }
}

ordered_json adapter_meta(const AdapterSet& a) {
  ordered_json m;
  m["id"] = a.id;
  m["kind"] = to_string(a.kind);
  m["trained_on"] = a.trained_on;
  if (a.kind == AdapterKind::lora) {
    m["r"] = a.lora.r;
    m["alpha"] = a.lora.alpha;
    m["targets"] = a.lora.targets;
  } else {
    m["p"] = a.prefix.p;
  }
  return m;
}

AdapterSet read_adapter(ArrayReader& r, const ordered_json& meta,
                        const EncoderConfig& cfg, const std::string& ns) {
  AdapterSet a;
  a.id = meta["id"].get<std::string>();
  a.kind = adapter_kind_from_string(meta["kind"].get<std::string>());
  a.trained_on = meta["trained_on"].get<std::string>();
  if (a.kind == AdapterKind::lora) {
    a.lora.r = meta["r"].get<int>();
    a.lora.alpha = meta["alpha"].get<double>();
    a.lora.targets = meta["targets"].get<std::vector<std::string>>();
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::map<std::string, LoraAdapter::TargetMats> mats;
      for (const auto& t : a.lora.targets) {
        const std::string p = ns + "/layer" + std::to_string(l) + "/" + t;
        mats.emplace(t, LoraAdapter::TargetMats{r.read(p + "/a", false),
                                                r.read(p + "/b", false)});
      }
      a.lora.per_layer.push_back(std::move(mats));
    }
  } else {
    a.prefix.p = meta["p"].get<int>();
    for (int l = 0; l < cfg.n_layers; ++l) {
      PrefixAdapter::LayerPrefix lp;
      if (a.prefix.p > 0) {
        const std::string p = ns + "/layer" + std::to_string(l);
        lp.keys = r.read(p + "/keys", false);
        lp.values = r.read(p + "/values", false);
      }
      a.prefix.per_layer.push_back(lp);
    }
  }
  return a;
}

}  // namespace

void save_bundle(const DomainRegistry& reg, const CoreModel& core,
                 const std::string& path, const RouterModel* router) {
  ArrayWriter w;
  ordered_json manifest;
  manifest["format"] = kMagic;
  manifest["version"] = kFormatVersion;

  ordered_json enc;
  enc["n_layers"] = core.cfg.n_layers;
  enc["d_model"] = core.cfg.d_model;
  enc["n_heads"] = core.cfg.n_heads;
  enc["d_ff"] = core.cfg.d_ff;
  enc["vocab_size"] = core.cfg.vocab_size;
  enc["max_seq_len"] = core.cfg.max_seq_len;
  enc["ln_eps"] = core.cfg.ln_eps;
  manifest["encoder"] = enc;

  write_core_arrays(w, core, "core");

  ordered_json schemes = ordered_json::array();
  {
    // stable order: scheme ids sorted
    std::vector<std::string> sids;
    for (const auto& hid : reg.head_ids()) sids.push_back(reg.head(hid).scheme_id);
    std::sort(sids.begin(), sids.end());
    sids.erase(std::unique(sids.begin(), sids.end()), sids.end());
    for (const auto& sid : sids) {
      ordered_json s;
      s["id"] = sid;
      s["tags"] = reg.scheme(sid).tags;
      schemes.push_back(s);
    }
  }
  manifest["schemes"] = schemes;

  ordered_json heads = ordered_json::array();
  for (const auto& hid : reg.head_ids()) {
    const ClassifierHead& h = reg.head(hid);
    ordered_json e;
    e["id"] = hid;
    e["scheme"] = h.scheme_id;
    heads.push_back(e);
    w.add("heads/" + hid + "/w", h.w);
    w.add("heads/" + hid + "/b", h.b);
  }
  manifest["heads"] = heads;

  ordered_json domains = ordered_json::array();
  for (const auto& d : reg.domains()) {
    const auto& b = reg.binding(d);
    ordered_json e;
    e["domain"] = d;
    e["adapter"] = b.adapter_id;
    e["head"] = b.head_id;
    e["meta"] = adapter_meta(reg.adapter(b.adapter_id));
    domains.push_back(e);
    write_adapter_arrays(w, reg.adapter(b.adapter_id), "adapters/" + b.adapter_id);
  }
  manifest["domains"] = domains;

  if (router != nullptr) {
    ordered_json rj;
    rj["domains"] = router->domains;
    rj["group_size"] = router->cfg.group_size;
    rj["max_tokens"] = router->cfg.max_tokens;
    rj["adapter"] = adapter_meta(router->adapter);
    manifest["router"] = rj;
    write_adapter_arrays(w, router->adapter, "router/adapter");
    w.add("router/w", router->w);
    w.add("router/b", router->b);
  }

  manifest["arrays"] = w.index;

  const std::string mtext = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BundleError("cannot open '" + path + "' for writing");
  out << kMagic << "\n";
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  out.write(w.payload.data(), static_cast<std::streamsize>(w.payload.size()));
  if (!out) throw BundleError("short write to '" + path + "'");
}

Bundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot open bundle '" + path + "'");
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw BundleError("bad magic in '" + path + "'");
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
  if (!in) throw BundleError("truncated bundle header");
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw BundleError("truncated manifest");
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  ordered_json manifest;
  try {
    manifest = ordered_json::parse(mtext);
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(std::string("manifest parse failure: ") + e.what());
  }
  if (manifest["version"].get<int>() != kFormatVersion) {
    throw BundleError("unsupported bundle version " +
                      std::to_string(manifest["version"].get<int>()));
  }

  EncoderConfig cfg;
  const auto& enc = manifest["encoder"];
  cfg.n_layers = enc["n_layers"].get<int>();
  cfg.d_model = enc["d_model"].get<int>();
  cfg.n_heads = enc["n_heads"].get<int>();
  cfg.d_ff = enc["d_ff"].get<int>();
  cfg.vocab_size = enc["vocab_size"].get<int>();
  cfg.max_seq_len = enc["max_seq_len"].get<int>();
  cfg.ln_eps = enc["ln_eps"].get<double>();

  std::size_t expected = 0;
  for (const auto& e : manifest["arrays"]) {
    expected = std::max(expected, e["offset"].get<std::size_t>() + e["bytes"].get<std::size_t>());
  }
  if (payload.size() < expected) throw BundleError("truncated payload");

  ArrayReader r(manifest["arrays"], payload);

  Bundle bundle;
  bundle.core = read_core_arrays(r, cfg, "core");

  std::map<std::string, LabelScheme> schemes;
  for (const auto& s : manifest["schemes"]) {
    LabelScheme sc;
    sc.id = s["id"].get<std::string>();
    sc.tags = s["tags"].get<std::vector<std::string>>();
    schemes.emplace(sc.id, sc);
  }

  DomainRegistry& reg = bundle.registry;
  for (const auto& s : manifest["heads"]) {
    const std::string hid = s["id"].get<std::string>();
    const std::string sid = s["scheme"].get<std::string>();
    ClassifierHead h;
    h.id = hid;
    h.scheme_id = sid;
    h.w = r.read("heads/" + hid + "/w", false);
    h.b = r.read("heads/" + hid + "/b", false);
    reg.heads_.emplace(hid, std::move(h));
    reg.head_order_.push_back(hid);
    reg.schemes_.emplace(sid, schemes.at(sid));
  }
  reg.next_head_ = static_cast<int>(reg.head_order_.size());

  for (const auto& e : manifest["domains"]) {
    const std::string domain = e["domain"].get<std::string>();
    const std::string aid = e["adapter"].get<std::string>();
    AdapterSet a = read_adapter(r, e["meta"], cfg, "adapters/" + aid);
    reg.adapters_.emplace(aid, std::move(a));
    reg.bindings_.emplace(domain,
                          DomainRegistry::Binding{aid, e["head"].get<std::string>()});
    reg.domain_order_.push_back(domain);
  }

  if (manifest.contains("router")) {
    const auto& rj = manifest["router"];
    auto router = std::make_shared<RouterModel>();
    router->domains = rj["domains"].get<std::vector<std::string>>();
    router->cfg.group_size = rj["group_size"].get<int>();
    router->cfg.max_tokens = rj["max_tokens"].get<int>();
    router->cfg.domains = router->domains;
    router->adapter = read_adapter(r, rj["adapter"], cfg, "router/adapter");
    router->w = r.read("router/w", false);
    router->b = r.read("router/b", false);
    bundle.router = router;
  }

  return bundle;
}

}  // namespace seqtag
