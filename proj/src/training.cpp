// SPDX-License-Identifier: Apache-2.0
#include "seqtag/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace seqtag {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParamError("batch_size must be >= 1");
  if (lr <= 0.0) throw ParamError("lr must be > 0");
  if (patience < 1) throw ParamError("patience must be >= 1");
  if (max_epochs < 1) throw ParamError("max_epochs must be >= 1");
}

// ---- spans & F1 ----

std::vector<SpanEntity> extract_entities(const std::vector<std::string>& labels) {
  std::vector<SpanEntity> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i].rfind("B-", 0) == 0) {
      SpanEntity e;
      e.type = labels[i].substr(2);
      e.begin = i;
      std::size_t j = i + 1;
      while (j < labels.size() && labels[j] == "I-" + e.type) ++j;
      e.end = j;
      spans.push_back(e);
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

F1Score score_from(const Counts& c) {
  F1Score s;
  s.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                              : (c.fn == 0 ? 1.0 : 0.0);
  s.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                           : (c.fp == 0 ? 1.0 : 0.0);
  s.f1 = (s.precision + s.recall > 0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace

EvalResult entity_f1(const std::vector<Sentence>& gold,
                     const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("entity_f1: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted sequences");
  }
  std::map<std::string, Counts> per_domain;
  Counts micro;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].labels.size() != pred[i].size()) {
      throw ContractError("entity_f1: length mismatch at sentence " + std::to_string(i));
    }
    const auto gspans = extract_entities(gold[i].labels);
    const auto pspans = extract_entities(pred[i]);
    Counts& c = per_domain[gold[i].domain];
    for (const auto& p : pspans) {
      const bool hit = std::find(gspans.begin(), gspans.end(), p) != gspans.end();
      if (hit) {
        ++c.tp;
        ++micro.tp;
      } else {
        ++c.fp;
        ++micro.fp;
      }
    }
    for (const auto& g : gspans) {
      if (std::find(pspans.begin(), pspans.end(), g) == pspans.end()) {
        ++c.fn;
        ++micro.fn;
      }
    }
  }
  EvalResult res;
  for (const auto& [d, c] : per_domain) res.per_domain[d] = score_from(c);
  res.micro = score_from(micro);
  return res;
}

// ---- prediction ----

namespace {

std::vector<std::string> decode_logits(const Tensor& logits, const LabelScheme& scheme,
                                       std::size_t n_tokens) {
  // position 0 is [CLS]
  std::vector<std::string> tags;
  tags.reserve(n_tokens);
  for (std::size_t i = 1; i <= n_tokens; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    tags.push_back(scheme.tags[best]);
  }
  repair_bio(tags);
  return tags;
}

Tensor head_logits(const Tensor& hidden, const ClassifierHead& head) {
  return add_rowvec(matmul(hidden, head.w), head.b);
}

}  // namespace

std::vector<std::string> predict_tags(const CoreModel& core, const AdapterSet* adapter,
                                      const ClassifierHead& head,
                                      const LabelScheme& scheme, const Tokenizer& tok,
                                      const std::vector<std::string>& tokens) {
  NoGradGuard ng;
  const auto ids = encode_tokens(tok, tokens, core.cfg.max_seq_len);
  Tensor hidden = encoder_forward(core, ids, adapter);
  Tensor logits = head_logits(hidden, head);
  auto tags = decode_logits(logits, scheme, ids.size() - 1);
  // tokens lost to truncation are tagged O
  while (tags.size() < tokens.size()) tags.push_back("O");
  return tags;
}

std::vector<std::string> predict_tags_baseline(const BaselineModel& model,
                                               const LabelScheme& scheme,
                                               const Tokenizer& tok,
                                               const std::vector<std::string>& tokens) {
  return predict_tags(model.core, nullptr, model.head, scheme, tok, tokens);
}

// ---- shared train loop ----

namespace {

struct SchemeHeads {
  std::map<std::string, ClassifierHead*> by_scheme;
};

double dev_micro_f1(const CoreModel& core, const AdapterSet* adapter,
                    const std::map<std::string, ClassifierHead*>& heads,
                    const std::map<std::string, const LabelScheme*>& schemes,
                    const std::vector<Sentence>& dev, const Tokenizer& tok) {
  std::vector<std::vector<std::string>> preds;
  preds.reserve(dev.size());
  for (const auto& s : dev) {
    preds.push_back(predict_tags(core, adapter, *heads.at(s.scheme_id),
                                 *schemes.at(s.scheme_id), tok, s.tokens));
  }
  return entity_f1(dev, preds).micro.f1;
}

struct LoopResult {
  TrainReport report;
};

// A parameter legitimately sits out a batch when the batch holds no
// sentence of its scheme (multi-scheme training keeps one head per scheme
// in the parameter list). Adam still applies its moment decay in that
// case, exactly as it does once a previously-touched grad buffer is
// zeroed, so materialize empty grads as zeros rather than tripping the
// optimizer's missing-gradient contract check.
void step_all(const std::vector<Tensor>& params, AdamOptimizer& opt) {
  for (Tensor p : params) {
    if (p.requires_grad() && !p.has_grad()) p.grad();
  }
  opt.step(params);
}

// One epoch of shuffled minibatch training over per-sentence losses.
double run_epoch(const std::vector<Sentence>& train,
                 const std::function<Tensor(const Sentence&)>& loss_fn,
                 const std::vector<Tensor>& params, AdamOptimizer& opt,
                 int batch_size, Rng& rng) {
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double total = 0.0;
  std::size_t in_batch = 0;
  for (std::size_t idx : order) {
    Tensor loss = loss_fn(train[idx]);
    total += loss.scalar();
    backward(scale(loss, 1.0 / static_cast<double>(batch_size)));
    if (++in_batch == static_cast<std::size_t>(batch_size)) {
      step_all(params, opt);
      in_batch = 0;
    }
  }
  if (in_batch > 0) step_all(params, opt);
  return train.empty() ? 0.0 : total / static_cast<double>(train.size());
}

// Full loop with optional early stopping on dev F1 and best-checkpoint
// restore.
TrainReport train_loop(const std::vector<Sentence>& train,
                       const std::vector<Sentence>& dev,
                       const std::function<Tensor(const Sentence&)>& loss_fn,
                       const std::function<double()>& dev_eval,
                       const std::vector<Tensor>& params, const TrainConfig& cfg,
                       int max_epochs, bool early_stop) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty()) throw DataError("empty training split");
  AdamOptimizer opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(cfg.seed ^ 0xdead5eedULL);
  TrainReport report;
  double best_f1 = -1.0;
  int since_best = 0;
  std::vector<std::vector<double>> best_snapshot;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    report.train_loss.push_back(
        run_epoch(train, loss_fn, params, opt, cfg.batch_size, rng));
    report.stopped_epoch = epoch;
    const bool eval_now = !dev.empty() && (epoch % std::max(1, cfg.eval_every) == 0);
    if (!eval_now) continue;
    const double f1 = dev_eval();
    report.dev_f1.push_back(f1);
    if (f1 > best_f1) {
      best_f1 = f1;
      report.best_epoch = epoch;
      since_best = 0;
      best_snapshot.clear();
      for (const Tensor& p : params) best_snapshot.push_back(p.data());
    } else {
      ++since_best;
      if (early_stop && since_best >= cfg.patience) break;
    }
  }
  if (!best_snapshot.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const_cast<Tensor&>(params[i]).data() = best_snapshot[i];
    }
  }
  if (report.best_epoch == 0) report.best_epoch = report.stopped_epoch;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::function<Tensor(const Sentence&)> token_loss_fn(
    const CoreModel& core, const AdapterSet* adapter,
    std::map<std::string, ClassifierHead*> heads,
    std::map<std::string, const LabelScheme*> schemes, const Tokenizer& tok) {
  return [&core, adapter, heads = std::move(heads), schemes = std::move(schemes),
          &tok](const Sentence& s) {
    const auto enc = encode_sentence(tok, s, *schemes.at(s.scheme_id),
                                     core.cfg.max_seq_len);
    Tensor hidden = encoder_forward(core, enc.ids, adapter);
    Tensor logits = head_logits(hidden, *heads.at(s.scheme_id));
    return cross_entropy(logits, enc.labels, kIgnoreIndex);
  };
}

}  // namespace

// ---- core pre-training ----

TrainReport pretrain_core(CoreModel& core, const Corpus& corpus, const Tokenizer& tok,
                          const TrainConfig& cfg, int epochs) {
  if (core.frozen) throw ContractError("pretrain_core on a frozen core");
  if (corpus.train.empty()) throw DataError("pretrain_core: empty corpus");

  // Throwaway heads, one per scheme present.
  std::map<std::string, LabelScheme> schemes;
  for (const auto& s : corpus.train) {
    if (!schemes.count(s.scheme_id)) {
      schemes[s.scheme_id] =
          s.scheme_id == scheme_rich21().id ? scheme_rich21() : scheme_compact9();
    }
  }
  Rng rng(cfg.seed ^ 0xc0dec0deULL);
  std::map<std::string, ClassifierHead> tmp_heads;
  std::map<std::string, ClassifierHead*> heads;
  std::map<std::string, const LabelScheme*> scheme_ptrs;
  for (auto& [sid, scheme] : schemes) {
    tmp_heads.emplace(sid, init_head("pretrain_" + sid, scheme, core.cfg, rng));
    scheme_ptrs[sid] = &schemes.at(sid);
  }
  for (auto& [sid, h] : tmp_heads) heads[sid] = &h;

  // Auxiliary identity head: each position also predicts its own token id.
  // Tag supervision alone collapses every O context word onto one "O"
  // prototype, which would strip the corpus statistics the router reads;
  // reconstruction keeps token representations distinct, the way masked-LM
  // pre-training does for the full-size model this core stands in for.
  const std::size_t vocab = static_cast<std::size_t>(core.cfg.vocab_size);
  const std::size_t d = static_cast<std::size_t>(core.cfg.d_model);
  Tensor id_w = Tensor::randn({d, vocab}, rng, 0.02, true);
  Tensor id_b = Tensor::zeros({vocab}, true);

  std::vector<Tensor> params = core.parameters();
  for (auto& [sid, h] : tmp_heads) {
    params.push_back(h.w);
    params.push_back(h.b);
  }
  params.push_back(id_w);
  params.push_back(id_b);

  auto loss = [&core, &tok, heads, scheme_ptrs, id_w, id_b](const Sentence& s) {
    const auto enc = encode_sentence(tok, s, *scheme_ptrs.at(s.scheme_id),
                                     core.cfg.max_seq_len);
    Tensor hidden = encoder_forward(core, enc.ids, nullptr);
    const ClassifierHead& h = *heads.at(s.scheme_id);
    Tensor tag_logits = add_rowvec(matmul(hidden, h.w), h.b);
    Tensor tag = cross_entropy(tag_logits, enc.labels, kIgnoreIndex);
    std::vector<int> targets = enc.ids;
    targets[0] = kIgnoreIndex;  // [CLS] reconstructs nothing
    Tensor id_logits = add_rowvec(matmul(hidden, id_w), id_b);
    // The reconstruction term is weighted up so that token identity stays
    // legible in the hidden states even once the tag loss has converged;
    // the router reads corpus statistics from these frozen features.
    return add(tag, scale(cross_entropy(id_logits, targets, kIgnoreIndex), 3.0));
  };
  auto dev_eval = [&]() {
    return dev_micro_f1(core, nullptr, heads, scheme_ptrs, corpus.dev, tok);
  };
  return train_loop(corpus.train, corpus.dev, loss, dev_eval, params, cfg, epochs,
                    /*early_stop=*/false);
}

// ---- two-phase adapter training ----

TrainReport pretrain_pooled(const CoreModel& core, AdapterSet& adapter,
                            ClassifierHead& head, const Corpus& corpus,
                            const std::vector<std::string>& domains,
                            const Tokenizer& tok, const TrainConfig& cfg,
                            PoolingMode mode, const std::string& exclude_domain) {
  if (!core.frozen) throw ContractError("pretrain_pooled requires a frozen core");
  std::vector<Sentence> train, dev;
  for (const auto& d : domains) {
    if (mode == PoolingMode::exclude_target && d == exclude_domain) continue;
    for (const auto& s : corpus.of_domain(Split::train, d)) train.push_back(s);
    for (const auto& s : corpus.of_domain(Split::dev, d)) dev.push_back(s);
  }
  const LabelScheme* scheme = nullptr;
  static std::map<std::string, LabelScheme> known{
      {scheme_rich21().id, scheme_rich21()}, {scheme_compact9().id, scheme_compact9()}};
  for (const auto& s : train) {
    if (s.scheme_id != head.scheme_id) {
      throw ContractError("pooled domain '" + s.domain + "' uses scheme '" +
                          s.scheme_id + "' but head expects '" + head.scheme_id + "'");
    }
  }
  scheme = &known.at(head.scheme_id);

  std::map<std::string, ClassifierHead*> heads{{head.scheme_id, &head}};
  std::map<std::string, const LabelScheme*> schemes{{head.scheme_id, scheme}};
  std::vector<Tensor> params = trainable_params(adapter, &head);
  auto loss = token_loss_fn(core, &adapter, heads, schemes, tok);
  auto dev_eval = [&, schemes]() {
    return dev_micro_f1(core, &adapter, heads, schemes, dev, tok);
  };
  TrainReport rep = train_loop(train, dev, loss, dev_eval, params, cfg,
                               cfg.pooled_epochs, /*early_stop=*/false);
  adapter.trained_on = "pooled";
  return rep;
}

FinetuneResult finetune_domain(const CoreModel& core, const AdapterSet& pooled_adapter,
                               ClassifierHead& head, const Corpus& corpus,
                               const std::string& domain, const Tokenizer& tok,
                               const TrainConfig& cfg) {
  if (!core.frozen) throw ContractError("finetune_domain requires a frozen core");
  const auto train = corpus.of_domain(Split::train, domain);
  const auto dev = corpus.of_domain(Split::dev, domain);
  if (train.empty()) throw DataError("no training sentences for domain '" + domain + "'");

  FinetuneResult res;
  res.adapter = replicate(pooled_adapter, pooled_adapter.id + "@" + domain);
  res.adapter.trained_on = domain;

  static std::map<std::string, LabelScheme> known{
      {scheme_rich21().id, scheme_rich21()}, {scheme_compact9().id, scheme_compact9()}};
  const LabelScheme* scheme = &known.at(head.scheme_id);

  HeadFreezeGuard freeze(head);
  std::map<std::string, ClassifierHead*> heads{{head.scheme_id, &head}};
  std::map<std::string, const LabelScheme*> schemes{{head.scheme_id, scheme}};
  std::vector<Tensor> params = trainable_params(res.adapter, &head);  // head frozen
  auto loss = token_loss_fn(core, &res.adapter, heads, schemes, tok);
  auto dev_eval = [&, heads, schemes]() {
    return dev_micro_f1(core, &res.adapter, heads, schemes, dev, tok);
  };
  res.report = train_loop(train, dev, loss, dev_eval, params, cfg, cfg.max_epochs,
                          /*early_stop=*/true);
  return res;
}

// ---- baselines ----

namespace {

BaselineModel full_finetune(const CoreModel& pretrained_core, const Corpus& corpus,
                            const std::vector<std::string>& domains,
                            const LabelScheme& scheme, const Tokenizer& tok,
                            const TrainConfig& cfg, const std::string& target_domain) {
  for (const auto& d : domains) {
    for (const auto& s : corpus.of_domain(Split::train, d)) {
      if (s.scheme_id != scheme.id) {
        throw ContractError("baseline over mixed schemes: domain '" + d +
                            "' is not '" + scheme.id + "'");
      }
    }
  }
  BaselineModel model;
  model.core = pretrained_core.clone();  // production core never touched
  model.scheme_id = scheme.id;
  Rng rng(cfg.seed ^ 0xba5e11f3ULL);
  model.head = init_head("baseline_" + scheme.id, scheme, model.core.cfg, rng);

  std::map<std::string, ClassifierHead*> heads{{scheme.id, &model.head}};
  std::map<std::string, const LabelScheme*> schemes{{scheme.id, &scheme}};
  std::vector<Tensor> params = model.core.parameters();
  params.push_back(model.head.w);
  params.push_back(model.head.b);

  std::vector<Sentence> train, dev;
  for (const auto& d : domains) {
    for (const auto& s : corpus.of_domain(Split::train, d)) train.push_back(s);
    for (const auto& s : corpus.of_domain(Split::dev, d)) dev.push_back(s);
  }
  auto loss = token_loss_fn(model.core, nullptr, heads, schemes, tok);
  auto dev_eval = [&model, heads, schemes, dev, &tok]() {
    return dev_micro_f1(model.core, nullptr, heads, schemes, dev, tok);
  };
  train_loop(train, dev, loss, dev_eval, params, cfg, cfg.max_epochs,
             /*early_stop=*/true);

  if (!target_domain.empty()) {
    // second stage: specialize on the target domain only
    const auto ttrain = corpus.of_domain(Split::train, target_domain);
    const auto tdev = corpus.of_domain(Split::dev, target_domain);
    if (ttrain.empty()) {
      throw DataError("no sentences for target domain '" + target_domain + "'");
    }
    auto tdev_eval = [&model, heads, schemes, tdev, &tok]() {
      return dev_micro_f1(model.core, nullptr, heads, schemes, tdev, tok);
    };
    train_loop(ttrain, tdev, loss, tdev_eval, params, cfg, cfg.max_epochs,
               /*early_stop=*/true);
    model.kind = "specialized";
    model.target_domain = target_domain;
  } else {
    model.kind = "general";
  }
  return model;
}

}  // namespace

BaselineModel train_general_baseline(const CoreModel& pretrained_core,
                                     const Corpus& corpus,
                                     const std::vector<std::string>& domains,
                                     const LabelScheme& scheme, const Tokenizer& tok,
                                     const TrainConfig& cfg) {
  return full_finetune(pretrained_core, corpus, domains, scheme, tok, cfg, "");
}

BaselineModel specialize_baseline(const BaselineModel& general, const Corpus& corpus,
                                  const std::string& target_domain,
                                  const LabelScheme& scheme, const Tokenizer& tok,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (general.scheme_id != scheme.id) {
    throw ContractError("general baseline is '" + general.scheme_id +
                        "', not '" + scheme.id + "'");
  }
  BaselineModel model;
  model.core = general.core.clone();
  model.scheme_id = scheme.id;
  model.head = general.head;
  model.head.w = general.head.w.clone();
  model.head.b = general.head.b.clone();
  model.kind = "specialized";
  model.target_domain = target_domain;

  std::map<std::string, ClassifierHead*> heads{{scheme.id, &model.head}};
  std::map<std::string, const LabelScheme*> schemes{{scheme.id, &scheme}};
  std::vector<Tensor> params = model.core.parameters();
  params.push_back(model.head.w);
  params.push_back(model.head.b);

  const auto train = corpus.of_domain(Split::train, target_domain);
  const auto dev = corpus.of_domain(Split::dev, target_domain);
  if (train.empty()) {
    throw DataError("no sentences for target domain '" + target_domain + "'");
  }
  auto loss = token_loss_fn(model.core, nullptr, heads, schemes, tok);
  auto dev_eval = [&model, heads, schemes, dev, &tok]() {
    return dev_micro_f1(model.core, nullptr, heads, schemes, dev, tok);
  };
  train_loop(train, dev, loss, dev_eval, params, cfg, cfg.max_epochs,
             /*early_stop=*/true);
  return model;
}

BaselineModel train_specialized_baseline(const CoreModel& pretrained_core,
                                         const Corpus& corpus,
                                         const std::vector<std::string>& domains,
                                         const std::string& target_domain,
                                         const LabelScheme& scheme,
                                         const Tokenizer& tok,
                                         const TrainConfig& cfg) {
  if (std::find(domains.begin(), domains.end(), target_domain) == domains.end()) {
    throw DataError("target domain '" + target_domain + "' not in baseline domain set");
  }
  return full_finetune(pretrained_core, corpus, domains, scheme, tok, cfg,
                       target_domain);
}

// ---- grid search ----

GridResult grid_search(const std::function<double(const std::vector<int>&)>& objective,
                       const GridSpec& spec) {
  if (spec.ranges.empty()) throw ParamError("grid search needs at least one range");
  for (const auto& [lo, hi] : spec.ranges) {
    if (lo > hi) throw ParamError("empty grid range");
  }
  if (spec.coarse_step < 1) throw ParamError("coarse step must be >= 1");

  GridResult res;
  std::map<std::vector<int>, double> seen;
  auto eval = [&](const std::vector<int>& point) {
    auto it = seen.find(point);
    if (it != seen.end()) return it->second;
    const double v = objective(point);
    seen.emplace(point, v);
    res.table.emplace_back(point, v);
    return v;
  };
  bool have_best = false;
  auto consider = [&](const std::vector<int>& point) {
    const double v = eval(point);
    if (!have_best || v > res.best_score) {
      have_best = true;
      res.best_score = v;
      res.best = point;
    }
  };

  // Cross-product sweep in ascending lexicographic order so plateau ties
  // resolve to the smallest point.
  auto sweep = [&](const std::vector<std::pair<int, int>>& bounds, int step) {
    std::vector<int> point(bounds.size());
    std::function<void(std::size_t)> rec = [&](std::size_t dim) {
      if (dim == bounds.size()) {
        consider(point);
        return;
      }
      for (int v = bounds[dim].first; v <= bounds[dim].second; v += step) {
        point[dim] = v;
        rec(dim + 1);
      }
    };
    rec(0);
  };

  sweep(spec.ranges, spec.coarse_step);

  std::vector<std::pair<int, int>> refine(spec.ranges.size());
  const std::vector<int> coarse_best = res.best;
  for (std::size_t d = 0; d < spec.ranges.size(); ++d) {
    refine[d] = {std::max(spec.ranges[d].first, coarse_best[d] - spec.refine_radius),
                 std::min(spec.ranges[d].second, coarse_best[d] + spec.refine_radius)};
  }
  // The refined pass may only improve on (not tie away from) the coarse
  // winner; re-sweeping from the box floor keeps the smallest-argmax rule.
  have_best = false;
  res.best.clear();
  sweep(refine, 1);
  // coarse winner still counts if the box excludes a better point elsewhere
  if (seen.at(coarse_best) > res.best_score ||
      (seen.at(coarse_best) == res.best_score && coarse_best < res.best)) {
    res.best = coarse_best;
    res.best_score = seen.at(coarse_best);
  }
  return res;
}

}  // namespace seqtag
