// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "seqtag/data.hpp"
#include "seqtag/registry.hpp"
#include "seqtag/training.hpp"

namespace seqtag {

struct RouterConfig {
  int group_size = 8;
  int max_tokens = 512;
  std::vector<std::string> domains;

  void validate(const EncoderConfig& enc) const;
};

// Domain classifier over grouped inputs: its own adapter on the frozen
// core plus a linear layer on the pooled [CLS] state.
struct RouterModel {
  AdapterSet adapter;
  Tensor w;  // [d_model, n_domains]
  Tensor b;  // [n_domains]
  std::vector<std::string> domains;
  RouterConfig cfg;

  std::vector<Tensor> parameters() const;
  std::vector<double> flat_weights() const;
};

struct RoutedGroup {
  std::vector<std::string> tokens;        // concatenated, truncated
  std::vector<std::size_t> member_index;  // indices into the input stream
  std::string predicted_domain;           // filled by routing
  std::vector<double> scores;
};

// Greedy grouping of consecutive sentences: up to group_size members; the
// member that would push the token total past max_tokens ends the group,
// and the concatenation is cut to the first max_tokens tokens.
std::vector<RoutedGroup> build_groups(const std::vector<Sentence>& sentences,
                                      const RouterConfig& cfg);

struct RouterTrainResult {
  RouterModel model;
  TrainReport report;
  double dev_accuracy = 0.0;
};

RouterTrainResult train_router(const CoreModel& core, const Corpus& corpus,
                               const Tokenizer& tok, const RouterConfig& cfg,
                               const TrainConfig& train_cfg);

struct GroupPrediction {
  std::string domain;
  std::vector<double> scores;  // probability vector over cfg.domains
};

GroupPrediction classify_group(const RouterModel& router, const CoreModel& core,
                               const Tokenizer& tok,
                               const std::vector<std::string>& group_tokens);

struct RoutingOutput {
  std::vector<std::vector<std::string>> tags;  // per input sentence, input order
  std::vector<RoutedGroup> groups;
};

RoutingOutput route_and_tag(const DomainRegistry& reg, const CoreModel& core,
                            const RouterModel& router, const Tokenizer& tok,
                            const std::vector<Sentence>& sentences,
                            const RouterConfig& cfg);

// Fraction of dev groups classified into their true domain.
double router_group_accuracy(const RouterModel& router, const CoreModel& core,
                             const Tokenizer& tok,
                             const std::vector<Sentence>& dev_sentences,
                             const RouterConfig& cfg);

}  // namespace seqtag
