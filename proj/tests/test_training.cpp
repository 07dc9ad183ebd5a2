// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "seqtag/training.hpp"

using namespace seqtag;

namespace {

// Brute-force span scorer: enumerate every (type, begin, end) triple and
// test membership in both label sequences independently of the library's
// span walker.
struct OracleCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

std::set<std::tuple<std::string, std::size_t, std::size_t>> oracle_spans(
    const std::vector<std::string>& labels, const std::vector<std::string>& types) {
  std::set<std::tuple<std::string, std::size_t, std::size_t>> out;
  const std::size_t n = labels.size();
  for (const auto& ty : types) {
    for (std::size_t b = 0; b < n; ++b) {
      if (labels[b] != "B-" + ty) continue;
      std::size_t e = b + 1;
      while (e < n && labels[e] == "I-" + ty) ++e;
      out.insert({ty, b, e});
    }
  }
  return out;
}

std::vector<std::string> random_bio(Rng& rng, const std::vector<std::string>& types,
                                    std::size_t len) {
  std::vector<std::string> out;
  while (out.size() < len) {
    if (rng.bernoulli(0.45)) {
      const auto& ty = types[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(types.size()) - 1))];
      const std::size_t span =
          std::min(len - out.size(), static_cast<std::size_t>(rng.uniform_int(1, 3)));
      out.push_back("B-" + ty);
      for (std::size_t i = 1; i < span; ++i) out.push_back("I-" + ty);
    } else {
      out.push_back("O");
    }
  }
  return out;
}

}  // namespace

TEST_CASE("extract_entities walks exact spans") {
  auto spans = extract_entities({"B-PER", "I-PER", "O", "B-LOC", "B-PER", "I-LOC"});
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].type == "PER");
  CHECK(spans[0].begin == 0);
  CHECK(spans[0].end == 2);
  CHECK(spans[1].type == "LOC");
  CHECK(spans[1].begin == 3);
  CHECK(spans[1].end == 4);
  // B-PER followed by I-LOC: the PER span is length one; the dangling
  // I-LOC belongs to no entity
  CHECK(spans[2].type == "PER");
  CHECK(spans[2].begin == 4);
  CHECK(spans[2].end == 5);
}

TEST_CASE("entity_f1 hand cases") {
  Sentence s;
  s.tokens = {"a", "b", "c", "d"};
  s.domain = "d";
  s.scheme_id = "s";

  SUBCASE("perfect prediction") {
    s.labels = {"B-PER", "I-PER", "O", "B-LOC"};
    auto r = entity_f1({s}, {{"B-PER", "I-PER", "O", "B-LOC"}});
    CHECK(r.micro.precision == 1.0);
    CHECK(r.micro.recall == 1.0);
    CHECK(r.micro.f1 == 1.0);
  }
  SUBCASE("boundary error kills the span") {
    s.labels = {"B-PER", "I-PER", "O", "O"};
    auto r = entity_f1({s}, {{"B-PER", "O", "O", "O"}});
    CHECK(r.micro.f1 == 0.0);
  }
  SUBCASE("type error kills the span") {
    s.labels = {"B-PER", "O", "O", "O"};
    auto r = entity_f1({s}, {{"B-LOC", "O", "O", "O"}});
    CHECK(r.micro.f1 == 0.0);
  }
  SUBCASE("half right") {
    s.labels = {"B-PER", "O", "B-LOC", "O"};
    auto r = entity_f1({s}, {{"B-PER", "O", "O", "O"}});
    CHECK(r.micro.precision == 1.0);
    CHECK(r.micro.recall == 0.5);
    CHECK(r.micro.f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("no entities anywhere is a perfect score") {
    s.labels = {"O", "O", "O", "O"};
    auto r = entity_f1({s}, {{"O", "O", "O", "O"}});
    CHECK(r.micro.f1 == 1.0);
  }
  SUBCASE("length mismatch throws") {
    s.labels = {"O", "O", "O", "O"};
    CHECK_THROWS_AS(entity_f1({s}, {{"O"}}), ContractError);
    CHECK_THROWS_AS(entity_f1({s}, {}), ContractError);
  }
}

TEST_CASE("entity_f1 agrees with a brute-force oracle on 1000 random cases") {
  const std::vector<std::string> types{"PER", "ORG", "LOC", "MISC"};
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = static_cast<std::size_t>(rng.uniform_int(1, 12));
    Sentence s;
    s.domain = "d";
    s.scheme_id = "s";
    s.tokens.assign(len, "w");
    s.labels = random_bio(rng, types, len);
    auto pred = random_bio(rng, types, len);

    const auto g = oracle_spans(s.labels, types);
    const auto p = oracle_spans(pred, types);
    OracleCounts c;
    for (const auto& sp : p) {
      if (g.count(sp)) ++c.tp;
      else ++c.fp;
    }
    for (const auto& sp : g) {
      if (!p.count(sp)) ++c.fn;
    }
    const double prec =
        c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : (c.fn == 0 ? 1.0 : 0.0);
    const double rec =
        c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : (c.fp == 0 ? 1.0 : 0.0);
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;

    auto r = entity_f1({s}, {pred});
    REQUIRE(r.micro.precision == doctest::Approx(prec).epsilon(1e-12));
    REQUIRE(r.micro.recall == doctest::Approx(rec).epsilon(1e-12));
    REQUIRE(r.micro.f1 == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("per-domain scores are split out") {
  Sentence s1, s2;
  s1.tokens = s2.tokens = {"a", "b"};
  s1.domain = "x";
  s2.domain = "y";
  s1.labels = {"B-PER", "O"};
  s2.labels = {"B-PER", "O"};
  auto r = entity_f1({s1, s2}, {{"B-PER", "O"}, {"O", "O"}});
  CHECK(r.per_domain.at("x").f1 == 1.0);
  CHECK(r.per_domain.at("y").f1 == 0.0);
  CHECK(r.micro.recall == 0.5);
}

TEST_CASE("grid search finds 18 on the quadratic") {
  GridSpec spec;
  spec.names = {"p"};
  spec.ranges = {{2, 34}};
  int evals = 0;
  auto res = grid_search(
      [&](const std::vector<int>& x) {
        ++evals;
        const double d = x[0] - 18.0;
        return -d * d;
      },
      spec);
  CHECK(res.best == std::vector<int>{18});
  CHECK(res.best_score == 0.0);
  // coarse pass hits 2,10,18,26,34; refinement sweeps 11..25 (18 cached)
  CHECK(evals == 5 + 15 - 1);
  CHECK(res.table.size() == static_cast<std::size_t>(evals));
  CHECK(res.table.front().first == std::vector<int>{2});
}

TEST_CASE("grid search plateau resolves to the smallest point") {
  GridSpec spec;
  spec.ranges = {{2, 34}};
  auto res = grid_search([](const std::vector<int>&) { return 1.0; }, spec);
  CHECK(res.best == std::vector<int>{2});
  CHECK(res.best_score == 1.0);
}

TEST_CASE("grid search clamps refinement to the range") {
  GridSpec spec;
  spec.ranges = {{2, 20}};
  // maximum at the upper edge
  auto res = grid_search(
      [](const std::vector<int>& x) { return static_cast<double>(x[0]); }, spec);
  CHECK(res.best == std::vector<int>{20});
  for (const auto& [pt, v] : res.table) {
    CHECK(pt[0] >= 2);
    CHECK(pt[0] <= 20);
  }
}

TEST_CASE("grid search in two dimensions") {
  GridSpec spec;
  spec.names = {"a", "b"};
  spec.ranges = {{0, 32}, {0, 32}};
  auto res = grid_search(
      [](const std::vector<int>& x) {
        const double da = x[0] - 13.0, db = x[1] - 21.0;
        return -(da * da + db * db);
      },
      spec);
  CHECK(res.best == std::vector<int>{13, 21});
}

TEST_CASE("grid search input validation") {
  GridSpec spec;
  CHECK_THROWS_AS(grid_search([](const std::vector<int>&) { return 0.0; }, spec),
                  ParamError);
  spec.ranges = {{5, 2}};
  CHECK_THROWS_AS(grid_search([](const std::vector<int>&) { return 0.0; }, spec),
                  ParamError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}

// ---- small end-to-end training fixtures ----

namespace {

struct TinyWorld {
  Corpus corpus;
  Tokenizer tok;
  CoreModel core;
  TrainConfig cfg;

  explicit TinyWorld(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.vocab_size = 30;
    spec.seed = seed;
    spec.ambiguity_rate = 0.4;
    DomainSpec d1{"alpha", scheme_compact9().id, 60};
    DomainSpec d2{"beta", scheme_compact9().id, 60};
    spec.domains = {d1, d2};
    AmbiguousEntity e;
    e.surface = {"delta"};
    e.label_map = {{"alpha", "PER"}, {"beta", "ORG"}};
    e.weight = {{"alpha", 1.0}, {"beta", 1.0}};
    spec.ambiguous_entities = {e};
    corpus = generate_synthetic(spec);

    std::vector<Sentence> all = corpus.train;
    all.insert(all.end(), corpus.dev.begin(), corpus.dev.end());
    all.insert(all.end(), corpus.test.begin(), corpus.test.end());
    tok = Tokenizer::build(all);

    EncoderConfig ecfg;
    ecfg.n_layers = 1;
    ecfg.d_model = 16;
    ecfg.n_heads = 2;
    ecfg.d_ff = 32;
    ecfg.vocab_size = tok.vocab_size();
    ecfg.max_seq_len = 64;
    Rng rng(seed);
    core = CoreModel::init(ecfg, rng);

    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.lr = 5e-3;  // hot enough for a tiny fixture
    cfg.max_epochs = 4;
  }
};

}  // namespace

TEST_CASE("pretrain_core reduces the loss and needs an unfrozen core") {
  TinyWorld w(5);
  auto report = pretrain_core(w.core, w.corpus, w.tok, w.cfg, 2);
  REQUIRE(report.train_loss.size() == 2);
  CHECK(report.train_loss[1] < report.train_loss[0]);

  freeze_core(w.core);
  CHECK_THROWS_AS(pretrain_core(w.core, w.corpus, w.tok, w.cfg, 1), ContractError);
}

TEST_CASE("training with lr ~ 0 leaves the weights unchanged") {
  TinyWorld w(6);
  auto before = w.core.flat_weights();
  TrainConfig cfg = w.cfg;
  cfg.lr = 0.0;
  pretrain_core(w.core, w.corpus, w.tok, cfg, 1);
  CHECK(w.core.flat_weights() == before);
}

TEST_CASE("pooled pretraining trains adapter and head but not the core") {
  TinyWorld w(7);
  pretrain_core(w.core, w.corpus, w.tok, w.cfg, 1);
  freeze_core(w.core);

  Rng rng(8);
  AdapterHyper hyper;
  hyper.prefix_len = 4;
  AdapterSet adapter =
      init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a");
  ClassifierHead head = init_head("h", scheme_compact9(), w.core.cfg, rng);

  const auto core_before = w.core.flat_weights();
  const auto adapter_before = adapter.flat_weights();
  const auto head_before = head.flat_weights();
  TrainConfig cfg = w.cfg;
  cfg.pooled_epochs = 1;
  auto rep = pretrain_pooled(w.core, adapter, head, w.corpus, {"alpha", "beta"},
                             w.tok, cfg);
  CHECK(w.core.flat_weights() == core_before);    // frozen core untouched
  CHECK(adapter.flat_weights() != adapter_before);
  CHECK(head.flat_weights() != head_before);
  CHECK(adapter.trained_on == "pooled");
  CHECK(rep.train_loss.size() == 1);

  // scheme mismatch is rejected
  ClassifierHead rich = init_head("r", scheme_rich21(), w.core.cfg, rng);
  AdapterSet a2 = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a2");
  CHECK_THROWS_AS(
      pretrain_pooled(w.core, a2, rich, w.corpus, {"alpha"}, w.tok, cfg),
      ContractError);
}

TEST_CASE("exclude-target pooling skips the held-out domain") {
  TinyWorld w(9);
  freeze_core(w.core);
  Rng rng(10);
  AdapterHyper hyper;
  hyper.prefix_len = 2;
  AdapterSet a = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a");
  ClassifierHead head = init_head("h", scheme_compact9(), w.core.cfg, rng);
  TrainConfig cfg = w.cfg;
  cfg.pooled_epochs = 1;
  // holding out one of two domains must still train (on the other)
  CHECK_NOTHROW(pretrain_pooled(w.core, a, head, w.corpus, {"alpha", "beta"},
                                w.tok, cfg, PoolingMode::exclude_target, "beta"));
  // holding out everything leaves no data
  AdapterSet a2 = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a2");
  CHECK_THROWS_AS(pretrain_pooled(w.core, a2, head, w.corpus, {"beta"}, w.tok, cfg,
                                  PoolingMode::exclude_target, "beta"),
                  DataError);
}

TEST_CASE("finetune freezes the head and returns an independent replica") {
  TinyWorld w(11);
  pretrain_core(w.core, w.corpus, w.tok, w.cfg, 1);
  freeze_core(w.core);
  Rng rng(12);
  AdapterHyper hyper;
  hyper.prefix_len = 4;
  AdapterSet pooled = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a");
  ClassifierHead head = init_head("h", scheme_compact9(), w.core.cfg, rng);
  TrainConfig cfg = w.cfg;
  cfg.pooled_epochs = 1;
  pretrain_pooled(w.core, pooled, head, w.corpus, {"alpha", "beta"}, w.tok, cfg);

  const auto head_before = head.flat_weights();
  const auto pooled_before = pooled.flat_weights();
  cfg.max_epochs = 2;
  auto res = finetune_domain(w.core, pooled, head, w.corpus, "alpha", w.tok, cfg);
  CHECK(head.flat_weights() == head_before);        // frozen for phase two
  CHECK_FALSE(head.frozen);                         // guard released
  CHECK(pooled.flat_weights() == pooled_before);    // replica trained, not source
  CHECK(res.adapter.flat_weights() != pooled_before);
  CHECK(res.adapter.trained_on == "alpha");
  CHECK(res.report.stopped_epoch <= cfg.max_epochs);

  CHECK_THROWS_AS(
      finetune_domain(w.core, pooled, head, w.corpus, "nope", w.tok, cfg),
      DataError);
}

TEST_CASE("early stopping halts within the budget and keeps the best epoch") {
  TinyWorld w(13);
  pretrain_core(w.core, w.corpus, w.tok, w.cfg, 1);
  freeze_core(w.core);
  Rng rng(14);
  AdapterHyper hyper;
  hyper.prefix_len = 4;
  AdapterSet pooled = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a");
  ClassifierHead head = init_head("h", scheme_compact9(), w.core.cfg, rng);
  TrainConfig cfg = w.cfg;
  cfg.pooled_epochs = 1;
  pretrain_pooled(w.core, pooled, head, w.corpus, {"alpha", "beta"}, w.tok, cfg);
  cfg.max_epochs = 10;
  cfg.patience = 2;
  auto res = finetune_domain(w.core, pooled, head, w.corpus, "alpha", w.tok, cfg);
  CHECK(res.report.stopped_epoch <= 10);
  CHECK(res.report.best_epoch <= res.report.stopped_epoch);
  REQUIRE_FALSE(res.report.dev_f1.empty());
  const double best =
      *std::max_element(res.report.dev_f1.begin(), res.report.dev_f1.end());
  CHECK(res.report.dev_f1[res.report.best_epoch - 1] == best);
}

TEST_CASE("predict_tags emits one valid tag per token") {
  TinyWorld w(15);
  freeze_core(w.core);
  Rng rng(16);
  AdapterHyper hyper;
  hyper.prefix_len = 2;
  AdapterSet a = init_adapter(AdapterKind::prefix, w.core.cfg, hyper, rng, "a");
  ClassifierHead head = init_head("h", scheme_compact9(), w.core.cfg, rng);
  const auto& s = w.corpus.test.front();
  auto tags = predict_tags(w.core, &a, head, scheme_compact9(), w.tok, s.tokens);
  CHECK(tags.size() == s.tokens.size());
  CHECK(is_valid_bio(tags));
  for (const auto& t : tags) CHECK(scheme_compact9().tag_index(t) >= 0);
}

TEST_CASE("baselines train and beat chance on their own data") {
  TinyWorld w(17);
  pretrain_core(w.core, w.corpus, w.tok, w.cfg, 2);
  freeze_core(w.core);
  TrainConfig cfg = w.cfg;
  cfg.max_epochs = 3;
  auto general = train_general_baseline(w.core, w.corpus, {"alpha", "beta"},
                                        scheme_compact9(), w.tok, cfg);
  CHECK(general.kind == "general");
  // the production core is untouched by baseline training
  CHECK(w.core.frozen);

  auto spec = train_specialized_baseline(w.core, w.corpus, {"alpha", "beta"},
                                         "alpha", scheme_compact9(), w.tok, cfg);
  CHECK(spec.kind == "specialized");
  CHECK(spec.target_domain == "alpha");

  const auto test = w.corpus.of_domain(Split::test, "alpha");
  std::vector<std::vector<std::string>> preds;
  for (const auto& s : test) {
    preds.push_back(predict_tags_baseline(spec, scheme_compact9(), w.tok, s.tokens));
  }
  auto r = entity_f1(test, preds);
  CHECK(r.micro.f1 > 0.2);

  CHECK_THROWS_AS(train_specialized_baseline(w.core, w.corpus, {"alpha"}, "beta",
                                             scheme_compact9(), w.tok, cfg),
                  DataError);
}
