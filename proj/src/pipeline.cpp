// SPDX-License-Identifier: Apache-2.0
#include "seqtag/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "seqtag/errors.hpp"

namespace seqtag {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

const LabelScheme& builtin_scheme(const std::string& id) {
  static const std::map<std::string, LabelScheme> schemes = {
      {scheme_rich21().id, scheme_rich21()},
      {scheme_compact9().id, scheme_compact9()}};
  auto it = schemes.find(id);
  if (it == schemes.end()) throw DataError("unknown label scheme '" + id + "'");
  return it->second;
}

void reject_unknown_keys(const ordered_json& j, const std::string& where,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end()) {
      throw ParamError("unknown config key '" + where + key + "'");
    }
  }
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write '" + path + "'");
}

ordered_json report_to_json(const TrainReport& r) {
  ordered_json j;
  j["train_loss"] = r.train_loss;
  j["dev_f1"] = r.dev_f1;
  j["best_epoch"] = r.best_epoch;
  j["stopped_epoch"] = r.stopped_epoch;
  j["seconds"] = r.seconds;
  return j;
}

std::map<std::string, std::string> domain_schemes(const Corpus& corpus) {
  std::map<std::string, std::string> m;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& s : *split) m.emplace(s.domain, s.scheme_id);
  }
  return m;
}

}  // namespace

// ---- config ----

SyntheticSpec ExperimentConfig::synth_spec() const {
  SyntheticSpec spec = default_desk_spec(seed);
  spec.vocab_size = synth_vocab_size;
  spec.ambiguity_rate = ambiguity_rate;
  for (auto& d : spec.domains) {
    d.budget = std::max(10, static_cast<int>(d.budget * budget_scale));
  }
  return spec;
}

void ExperimentConfig::validate() const {
  EncoderConfig e = encoder;
  if (e.vocab_size == 0) e.vocab_size = 1;  // filled from the tokenizer later
  e.validate();
  train.validate();
  router_train.validate();
  if (budget_scale <= 0.0) throw ParamError("budget_scale must be > 0");
  if (pretrain_epochs < 1) throw ParamError("pretrain_epochs must be >= 1");
  if (pretrain_lr <= 0.0) throw ParamError("pretrain_lr must be > 0");
  if (grid_min > grid_max) throw ParamError("grid_min must be <= grid_max");
  if (grid_coarse_step < 1) throw ParamError("grid_coarse_step must be >= 1");
  if (grid_refine_radius < 0) throw ParamError("grid_refine_radius must be >= 0");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("config parse failure: ") + e.what());
  }
  reject_unknown_keys(j, "", {"seed", "corpus_dir", "bundle_path", "reports_path",
                              "adapter", "encoder", "train", "pretrain", "router",
                              "synth", "grid"});
  if (!j.contains("seed")) throw ParamError("config must set 'seed'");

  ExperimentConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  maybe(j, "corpus_dir", cfg.corpus_dir);
  maybe(j, "bundle_path", cfg.bundle_path);
  maybe(j, "reports_path", cfg.reports_path);

  if (j.contains("adapter")) {
    const auto& a = j.at("adapter");
    reject_unknown_keys(a, "adapter.",
                        {"kind", "lora_r", "lora_alpha", "prefix_len", "init_std"});
    if (a.contains("kind")) {
      cfg.adapter_kind = adapter_kind_from_string(a.at("kind").get<std::string>());
    }
    maybe(a, "lora_r", cfg.hyper.lora_r);
    maybe(a, "lora_alpha", cfg.hyper.lora_alpha);
    maybe(a, "prefix_len", cfg.hyper.prefix_len);
    maybe(a, "init_std", cfg.hyper.init_std);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    reject_unknown_keys(e, "encoder.",
                        {"n_layers", "d_model", "n_heads", "d_ff", "max_seq_len"});
    maybe(e, "n_layers", cfg.encoder.n_layers);
    maybe(e, "d_model", cfg.encoder.d_model);
    maybe(e, "n_heads", cfg.encoder.n_heads);
    maybe(e, "d_ff", cfg.encoder.d_ff);
    maybe(e, "max_seq_len", cfg.encoder.max_seq_len);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown_keys(t, "train.", {"batch_size", "lr", "max_epochs", "patience",
                                      "eval_every", "pooled_epochs"});
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "max_epochs", cfg.train.max_epochs);
    maybe(t, "patience", cfg.train.patience);
    maybe(t, "eval_every", cfg.train.eval_every);
    maybe(t, "pooled_epochs", cfg.train.pooled_epochs);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown_keys(p, "pretrain.", {"lr", "epochs"});
    maybe(p, "lr", cfg.pretrain_lr);
    maybe(p, "epochs", cfg.pretrain_epochs);
  }
  if (j.contains("router")) {
    const auto& r = j.at("router");
    reject_unknown_keys(r, "router.", {"group_size", "max_tokens", "batch_size",
                                       "lr", "max_epochs", "patience"});
    maybe(r, "group_size", cfg.router.group_size);
    maybe(r, "max_tokens", cfg.router.max_tokens);
    maybe(r, "batch_size", cfg.router_train.batch_size);
    maybe(r, "lr", cfg.router_train.lr);
    maybe(r, "max_epochs", cfg.router_train.max_epochs);
    maybe(r, "patience", cfg.router_train.patience);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(s, "synth.",
                        {"budget_scale", "vocab_size", "ambiguity_rate"});
    maybe(s, "budget_scale", cfg.budget_scale);
    maybe(s, "vocab_size", cfg.synth_vocab_size);
    maybe(s, "ambiguity_rate", cfg.ambiguity_rate);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown_keys(g, "grid.", {"min", "max", "coarse_step", "refine_radius"});
    maybe(g, "min", cfg.grid_min);
    maybe(g, "max", cfg.grid_max);
    maybe(g, "coarse_step", cfg.grid_coarse_step);
    maybe(g, "refine_radius", cfg.grid_refine_radius);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json(slurp(path));
}

// ---- corpus files ----

void save_corpus(const Corpus& corpus, const SyntheticSpec& spec,
                 const std::string& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "seqtag-corpus";
  manifest["version"] = 1;
  manifest["seed"] = spec.seed;
  ordered_json domains = ordered_json::array();
  for (const auto& d : spec.domains) {
    ordered_json dj;
    dj["name"] = d.name;
    dj["scheme"] = d.scheme_id;
    for (const auto& [split_name, split] :
         std::initializer_list<std::pair<const char*, const std::vector<Sentence>*>>{
             {"train", &corpus.train}, {"dev", &corpus.dev}, {"test", &corpus.test}}) {
      std::vector<Sentence> mine;
      for (const auto& s : *split) {
        if (s.domain == d.name) mine.push_back(s);
      }
      dj["counts"][split_name] = mine.size();
      fs::create_directories(fs::path(dir) / split_name);
      spill((fs::path(dir) / split_name / (d.name + ".conll")).string(),
            to_conll(mine));
    }
    domains.push_back(dj);
  }
  manifest["domains"] = domains;
  spill((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Corpus load_corpus(const std::string& dir) {
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(slurp((fs::path(dir) / "manifest.json").string()));
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("corpus manifest parse failure: ") + e.what());
  }
  if (manifest.value("format", "") != "seqtag-corpus") {
    throw DataError("not a corpus directory: " + dir);
  }
  Corpus corpus;
  for (const auto& dj : manifest.at("domains")) {
    const std::string name = dj.at("name").get<std::string>();
    const LabelScheme& scheme = builtin_scheme(dj.at("scheme").get<std::string>());
    for (const auto& [split_name, split] :
         std::initializer_list<std::pair<const char*, std::vector<Sentence>*>>{
             {"train", &corpus.train}, {"dev", &corpus.dev}, {"test", &corpus.test}}) {
      auto parsed =
          parse_conll(slurp((fs::path(dir) / split_name / (name + ".conll")).string()),
                      scheme);
      for (auto& s : parsed.sentences) {
        s.domain = name;
        s.scheme_id = scheme.id;
        split->push_back(std::move(s));
      }
    }
  }
  return corpus;
}

void save_vocab(const Tokenizer& tok, const std::string& path) {
  std::ostringstream ss;
  // Reserved ids 0..2 are rebuilt by Tokenizer::build; store the rest in
  // id order so first-seen insertion reproduces the mapping exactly.
  for (int i = 3; i < tok.vocab_size(); ++i) ss << tok.token_of(i) << "\n";
  spill(path, ss.str());
}

Tokenizer load_vocab(const std::string& path) {
  std::istringstream in(slurp(path));
  Sentence s;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      s.tokens.push_back(line);
      s.labels.push_back("O");
    }
  }
  return Tokenizer::build({s});
}

// ---- commands ----

int cmd_synth(const ExperimentConfig& cfg, std::ostream& err) {
  try {
    const SyntheticSpec spec = cfg.synth_spec();
    const Corpus corpus = generate_synthetic(spec);
    save_corpus(corpus, spec, cfg.corpus_dir);
    return 0;
  } catch (const std::exception& e) {
    err << "synth: " << e.what() << "\n";
    return 1;
  }
}

namespace {

// Baseline bundles reuse the bundle container: the fully fine-tuned core
// plus neutral LoRA adapters (B = 0, an exact no-op) so the registry's
// resolve/tag path works unchanged.
void save_baseline_bundle(const BaselineModel& model,
                          const std::vector<std::string>& domains,
                          const EncoderConfig& ecfg, std::uint64_t seed,
                          const std::string& path) {
  DomainRegistry reg;
  Rng rng(seed ^ 0xb11dba5eULL);
  const LabelScheme& scheme = builtin_scheme(model.scheme_id);
  for (const auto& d : domains) {
    auto binding = reg.register_domain(d, scheme, ecfg, AdapterKind::lora,
                                       AdapterHyper{}, rng);
    reg.head(binding.head_id).w.data() = model.head.w.data();
    reg.head(binding.head_id).b.data() = model.head.b.data();
  }
  save_bundle(reg, model.core, path);
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const std::string& baseline,
              const std::string& domain, std::ostream& err) {
  try {
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const Tokenizer tok = Tokenizer::build(corpus.train);
    EncoderConfig ecfg = cfg.encoder;
    ecfg.vocab_size = tok.vocab_size();

    Rng rng(cfg.seed);
    CoreModel core = CoreModel::init(ecfg, rng);
    TrainConfig pcfg = cfg.train;
    pcfg.seed = cfg.seed;
    pcfg.lr = cfg.pretrain_lr;
    const TrainReport pretrain_report =
        pretrain_core(core, corpus, tok, pcfg, cfg.pretrain_epochs);

    const auto schemes_of = domain_schemes(corpus);
    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;

    if (baseline == "general" || baseline == "specialized") {
      std::vector<std::string> scheme_ids;
      for (const auto& [d, s] : schemes_of) {
        if (std::find(scheme_ids.begin(), scheme_ids.end(), s) == scheme_ids.end()) {
          scheme_ids.push_back(s);
        }
      }
      save_vocab(tok, cfg.bundle_path + ".vocab");
      if (baseline == "general") {
        for (const auto& sid : scheme_ids) {
          std::vector<std::string> members;
          for (const auto& [d, s] : schemes_of) {
            if (s == sid) members.push_back(d);
          }
          const BaselineModel model = train_general_baseline(
              core, corpus, members, builtin_scheme(sid), tok, tcfg);
          save_baseline_bundle(model, members, ecfg, cfg.seed,
                               cfg.bundle_path + ".general-" + sid);
        }
      } else {
        if (domain.empty()) throw ParamError("--baseline specialized needs --domain");
        auto it = schemes_of.find(domain);
        if (it == schemes_of.end()) throw LookupError("unknown domain '" + domain + "'");
        std::vector<std::string> members;
        for (const auto& [d, s] : schemes_of) {
          if (s == it->second) members.push_back(d);
        }
        const BaselineModel model = train_specialized_baseline(
            core, corpus, members, domain, builtin_scheme(it->second), tok, tcfg);
        save_baseline_bundle(model, {domain}, ecfg, cfg.seed,
                             cfg.bundle_path + ".specialized-" + domain);
      }
      return 0;
    }
    if (!baseline.empty()) throw ParamError("unknown baseline '" + baseline + "'");

    freeze_core(core);
    const std::vector<double> frozen_snapshot = core.flat_weights();

    DomainRegistry reg;
    Rng arng(cfg.seed ^ 0xada97e25ULL);
    for (const auto& d : corpus.domain_names()) {
      reg.register_domain(d, builtin_scheme(schemes_of.at(d)), ecfg,
                          cfg.adapter_kind, cfg.hyper, arng);
    }

    ordered_json reports;
    reports["pretrain"] = report_to_json(pretrain_report);

    // Phase 1 per shared head: pooled adapter over the head's domains.
    // Phase 2: per-domain replicas fine-tuned with the head frozen.
    for (const auto& head_id : reg.head_ids()) {
      ClassifierHead& head = reg.head(head_id);
      std::vector<std::string> members;
      for (const auto& d : reg.domains()) {
        if (reg.binding(d).head_id == head_id) members.push_back(d);
      }
      AdapterSet pooled = init_adapter(cfg.adapter_kind, ecfg, cfg.hyper, arng,
                                       "pooled-" + head.scheme_id);
      reports["pooled"][head.scheme_id] = report_to_json(
          pretrain_pooled(core, pooled, head, corpus, members, tok, tcfg));
      for (const auto& d : members) {
        FinetuneResult fr = finetune_domain(core, pooled, head, corpus, d, tok, tcfg);
        reports["finetune"][d] = report_to_json(fr.report);
        reg.replace_adapter(d, std::move(fr.adapter));
      }
    }

    RouterConfig rcfg = cfg.router;
    rcfg.domains = corpus.domain_names();
    TrainConfig rtcfg = cfg.router_train;
    rtcfg.seed = cfg.seed;
    RouterTrainResult rr = train_router(core, corpus, tok, rcfg, rtcfg);
    reports["router"] = report_to_json(rr.report);
    reports["router"]["dev_accuracy"] = rr.dev_accuracy;

    if (core.flat_weights() != frozen_snapshot) {
      reports["partial"] = true;
      spill(cfg.reports_path, reports.dump(2) + "\n");
      err << "train: frozen core drifted during adapter training; "
          << "partial reports written, no bundle\n";
      return 1;
    }

    save_bundle(reg, core, cfg.bundle_path, &rr.model);
    save_vocab(tok, cfg.bundle_path + ".vocab");
    spill(cfg.reports_path, reports.dump(2) + "\n");
    return 0;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << "\n";
    return 1;
  }
}

namespace {

// token[<TAB>tag] lines, blank line between sentences; tags optional.
std::vector<Sentence> read_tokens(std::istream& in) {
  std::vector<Sentence> sentences;
  Sentence cur;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!cur.tokens.empty()) sentences.push_back(std::move(cur)), cur = {};
      continue;
    }
    const auto tab = line.find('\t');
    cur.tokens.push_back(line.substr(0, tab));
    cur.labels.push_back(tab == std::string::npos ? "O" : line.substr(tab + 1));
  }
  if (!cur.tokens.empty()) sentences.push_back(std::move(cur));
  return sentences;
}

void write_tagged(std::ostream& out, const std::vector<std::string>& tokens,
                  const std::vector<std::string>& tags) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i] << "\t" << tags[i] << "\n";
  }
  out << "\n";
}

}  // namespace

int cmd_tag(const ExperimentConfig& cfg, const std::string& domain, bool route,
            std::istream& in, std::ostream& out, std::ostream& err) {
  try {
    const Bundle bundle = load_bundle(cfg.bundle_path);
    const Tokenizer tok = load_vocab(cfg.bundle_path + ".vocab");
    const std::vector<Sentence> sentences = read_tokens(in);
    if (route) {
      if (!bundle.router) throw LookupError("bundle has no router");
      const RoutingOutput routed =
          route_and_tag(bundle.registry, bundle.core, *bundle.router, tok, sentences,
                        bundle.router->cfg);
      for (const auto& g : routed.groups) {
        err << "# group of " << g.member_index.size() << " -> " << g.predicted_domain
            << "\n";
      }
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        write_tagged(out, sentences[i].tokens, routed.tags[i]);
      }
      return 0;
    }
    if (!bundle.registry.has_domain(domain)) {
      std::string known;
      for (const auto& d : bundle.registry.domains()) {
        known += (known.empty() ? "" : ", ") + d;
      }
      err << "tag: unknown domain '" << domain << "'; known: " << known << "\n";
      return 1;
    }
    const auto resolved = bundle.registry.resolve(domain);
    for (const auto& s : sentences) {
      write_tagged(out, s.tokens,
                   predict_tags(bundle.core, resolved.adapter, *resolved.head,
                                *resolved.scheme, tok, s.tokens));
    }
    return 0;
  } catch (const std::exception& e) {
    err << "tag: " << e.what() << "\n";
    return 1;
  }
}

namespace {

// One model row of the eval table: F1 per evaluated domain.
std::map<std::string, double> eval_bundle_row(const Bundle& bundle,
                                              const Tokenizer& tok,
                                              const Corpus& corpus,
                                              const std::vector<std::string>& domains) {
  std::map<std::string, double> row;
  for (const auto& d : domains) {
    const auto resolved = bundle.registry.resolve(d);
    const auto gold = corpus.of_domain(Split::test, d);
    if (gold.empty()) continue;
    std::vector<std::vector<std::string>> pred;
    for (const auto& s : gold) {
      pred.push_back(predict_tags(bundle.core, resolved.adapter, *resolved.head,
                                  *resolved.scheme, tok, s.tokens));
    }
    row[d] = entity_f1(gold, pred).micro.f1;
  }
  return row;
}

}  // namespace

int cmd_eval(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const Tokenizer tok = load_vocab(cfg.bundle_path + ".vocab");
    const std::vector<std::string> domains = corpus.domain_names();

    ordered_json table;
    const Bundle main_bundle = load_bundle(cfg.bundle_path);
    for (const auto& d : domains) {
      if (!main_bundle.registry.has_domain(d)) {
        throw LookupError("corpus domain '" + d + "' missing from bundle");
      }
    }
    const std::string kind =
        to_string(main_bundle.registry
                      .adapter(main_bundle.registry.adapter_ids().front())
                      .kind);
    table["multi-" + kind] = eval_bundle_row(main_bundle, tok, corpus, domains);

    std::map<std::string, double> general_row;
    for (const auto& sid : {scheme_rich21().id, scheme_compact9().id}) {
      const std::string path = cfg.bundle_path + ".general-" + sid;
      if (!fs::exists(path)) continue;
      const Bundle b = load_bundle(path);
      for (auto& [d, f1] : eval_bundle_row(b, tok, corpus, b.registry.domains())) {
        general_row[d] = f1;
      }
    }
    if (!general_row.empty()) table["general"] = general_row;

    std::map<std::string, double> specialized_row;
    for (const auto& d : domains) {
      const std::string path = cfg.bundle_path + ".specialized-" + d;
      if (!fs::exists(path)) continue;
      const Bundle b = load_bundle(path);
      for (auto& [dom, f1] : eval_bundle_row(b, tok, corpus, {d})) {
        specialized_row[dom] = f1;
      }
    }
    if (!specialized_row.empty()) table["specialized"] = specialized_row;

    out << table.dump(2) << "\n";
    // Human-readable rendering of the same data.
    out << std::left << std::setw(16) << "model";
    for (const auto& d : domains) out << std::setw(9) << d;
    out << "\n";
    for (const auto& [model, row] : table.items()) {
      out << std::setw(16) << model;
      for (const auto& d : domains) {
        if (row.contains(d)) {
          out << std::setw(9) << std::fixed << std::setprecision(3)
              << row.at(d).get<double>();
        } else {
          out << std::setw(9) << "-";
        }
      }
      out << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "eval: " << e.what() << "\n";
    return 1;
  }
}

int cmd_gridsearch(const ExperimentConfig& cfg, std::ostream& out,
                   std::ostream& err) {
  try {
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const Tokenizer tok = Tokenizer::build(corpus.train);
    EncoderConfig ecfg = cfg.encoder;
    ecfg.vocab_size = tok.vocab_size();

    Rng rng(cfg.seed);
    CoreModel core = CoreModel::init(ecfg, rng);
    TrainConfig pcfg = cfg.train;
    pcfg.seed = cfg.seed;
    pcfg.lr = cfg.pretrain_lr;
    pretrain_core(core, corpus, tok, pcfg, cfg.pretrain_epochs);
    freeze_core(core);

    const auto schemes_of = domain_schemes(corpus);
    const std::string sid = schemes_of.begin()->second;
    std::vector<std::string> members;
    for (const auto& [d, s] : schemes_of) {
      if (s == sid) members.push_back(d);
    }
    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;

    // The paper-style sweep: prefix length against pooled dev F1.
    const auto objective = [&](const std::vector<int>& point) {
      AdapterHyper hyper = cfg.hyper;
      hyper.prefix_len = point[0];
      Rng arng(cfg.seed ^ 0x961dULL);
      AdapterSet adapter = init_adapter(AdapterKind::prefix, ecfg, hyper, arng,
                                        "grid-p" + std::to_string(point[0]));
      Rng hrng(cfg.seed ^ 0x961d4eadULL);
      ClassifierHead head = init_head("grid-head", builtin_scheme(sid), ecfg, hrng);
      const TrainReport rep =
          pretrain_pooled(core, adapter, head, corpus, members, tok, tcfg);
      return rep.dev_f1.empty() ? 0.0 : rep.dev_f1.back();
    };

    GridSpec spec;
    spec.names = {"prefix_len"};
    spec.ranges = {{cfg.grid_min, cfg.grid_max}};
    spec.coarse_step = cfg.grid_coarse_step;
    spec.refine_radius = cfg.grid_refine_radius;
    const GridResult result = grid_search(objective, spec);

    ordered_json j;
    j["best"] = {{"prefix_len", result.best[0]}};
    j["best_score"] = result.best_score;
    ordered_json rows = ordered_json::array();
    for (const auto& [point, score] : result.table) {
      rows.push_back({{"prefix_len", point[0]}, {"score", score}});
    }
    j["table"] = rows;
    out << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "gridsearch: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace seqtag
