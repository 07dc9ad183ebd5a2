// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seqtag/data.hpp"
#include "seqtag/registry.hpp"

namespace seqtag {

struct TrainConfig {
  int batch_size = 16;
  double lr = 1e-4;
  int max_epochs = 10;
  int patience = 2;
  std::uint64_t seed = 0;
  int eval_every = 1;
  int pooled_epochs = 2;  // phase-1 "couple of epochs"

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> dev_f1;      // per evaluated epoch
  int best_epoch = 0;              // 1-based
  int stopped_epoch = 0;
  double seconds = 0.0;
};

enum class PoolingMode { all_domains, exclude_target };

// ---- prediction & evaluation ----

std::vector<std::string> predict_tags(const CoreModel& core, const AdapterSet* adapter,
                                      const ClassifierHead& head,
                                      const LabelScheme& scheme, const Tokenizer& tok,
                                      const std::vector<std::string>& tokens);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalResult {
  std::map<std::string, F1Score> per_domain;
  F1Score micro;
};

// Exact-span entity matching: correct iff type and both boundaries match.
EvalResult entity_f1(const std::vector<Sentence>& gold,
                     const std::vector<std::vector<std::string>>& pred);

struct SpanEntity {
  std::string type;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  auto operator<=>(const SpanEntity&) const = default;
};

std::vector<SpanEntity> extract_entities(const std::vector<std::string>& labels);

// ---- core pre-training ----

// Trains the unfrozen core as a token classifier on the pooled corpus with
// one throwaway head per scheme; the ParsBERT stand-in.
TrainReport pretrain_core(CoreModel& core, const Corpus& corpus, const Tokenizer& tok,
                          const TrainConfig& cfg, int epochs = 3);

// ---- two-phase adapter training ----

TrainReport pretrain_pooled(const CoreModel& core, AdapterSet& adapter,
                            ClassifierHead& head, const Corpus& corpus,
                            const std::vector<std::string>& domains,
                            const Tokenizer& tok, const TrainConfig& cfg,
                            PoolingMode mode = PoolingMode::all_domains,
                            const std::string& exclude_domain = "");

struct FinetuneResult {
  AdapterSet adapter;
  TrainReport report;
};

FinetuneResult finetune_domain(const CoreModel& core, const AdapterSet& pooled_adapter,
                               ClassifierHead& head, const Corpus& corpus,
                               const std::string& domain, const Tokenizer& tok,
                               const TrainConfig& cfg);

// ---- baselines ----

struct BaselineModel {
  CoreModel core;        // fully fine-tuned copy
  ClassifierHead head;
  std::string scheme_id;
  std::string kind;      // "general" or "specialized"
  std::string target_domain;  // specialized only
};

BaselineModel train_general_baseline(const CoreModel& pretrained_core,
                                     const Corpus& corpus,
                                     const std::vector<std::string>& domains,
                                     const LabelScheme& scheme, const Tokenizer& tok,
                                     const TrainConfig& cfg);

BaselineModel train_specialized_baseline(const CoreModel& pretrained_core,
                                         const Corpus& corpus,
                                         const std::vector<std::string>& domains,
                                         const std::string& target_domain,
                                         const LabelScheme& scheme,
                                         const Tokenizer& tok,
                                         const TrainConfig& cfg);

// Second specialization stage only, starting from an already trained
// general baseline; equivalent to train_specialized_baseline when the
// general model was trained with the same config.
BaselineModel specialize_baseline(const BaselineModel& general, const Corpus& corpus,
                                  const std::string& target_domain,
                                  const LabelScheme& scheme, const Tokenizer& tok,
                                  const TrainConfig& cfg);

std::vector<std::string> predict_tags_baseline(const BaselineModel& model,
                                               const LabelScheme& scheme,
                                               const Tokenizer& tok,
                                               const std::vector<std::string>& tokens);

// ---- grid search ----

struct GridSpec {
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> ranges;  // inclusive
  int coarse_step = 8;
  int refine_radius = 7;
};

struct GridResult {
  std::vector<int> best;
  double best_score = 0.0;
  std::vector<std::pair<std::vector<int>, double>> table;  // evaluation order
};

// Coarse pass at the spec'd stride, then exhaustive refinement around the
// coarse argmax. Ties break toward the lexicographically smallest point.
GridResult grid_search(const std::function<double(const std::vector<int>&)>& objective,
                       const GridSpec& spec);

}  // namespace seqtag
