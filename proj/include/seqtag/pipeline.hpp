// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

#include "seqtag/data.hpp"
#include "seqtag/router.hpp"
#include "seqtag/training.hpp"

namespace seqtag {

// One experiment, one config file, one seed. Every command reads the same
// structure; unknown keys are rejected so typos fail loudly.
struct ExperimentConfig {
  std::uint64_t seed = 0;  // mandatory in the file

  std::string corpus_dir = "corpus";
  std::string bundle_path = "model.bundle";
  std::string reports_path = "reports.json";

  AdapterKind adapter_kind = AdapterKind::prefix;
  AdapterHyper hyper;
  EncoderConfig encoder;  // vocab_size filled from the tokenizer at train time

  // Pooled pre-train + per-domain fine-tunes. Small batches give the small
  // domains enough optimizer steps per epoch to learn their minority
  // readings within the early-stop budget; lr 5e-2 suits the adapter/head
  // parameter scale.
  TrainConfig train{
      .batch_size = 4, .lr = 5e-2, .max_epochs = 12, .patience = 3, .pooled_epochs = 10};
  double pretrain_lr = 1e-3;
  int pretrain_epochs = 6;
  TrainConfig router_train{.lr = 2e-2, .max_epochs = 80, .patience = 15};
  RouterConfig router;         // domains filled from the corpus at train time

  // Synthetic-corpus knobs layered over default_desk_spec(seed).
  double budget_scale = 1.0;
  int synth_vocab_size = 700;
  double ambiguity_rate = 0.3;

  // gridsearch: prefix-length sweep bounds.
  int grid_min = 2;
  int grid_max = 34;
  int grid_coarse_step = 8;
  int grid_refine_radius = 7;

  SyntheticSpec synth_spec() const;
  void validate() const;

  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

// ---- corpus files ----

// Writes <dir>/manifest.json plus <dir>/<split>/<domain>.conll for every
// domain and split. Deterministic for a fixed spec.
void save_corpus(const Corpus& corpus, const SyntheticSpec& spec,
                 const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Rebuilds the tokenizer saved next to a bundle (one token per line).
void save_vocab(const Tokenizer& tok, const std::string& path);
Tokenizer load_vocab(const std::string& path);

// ---- commands ----
// Each returns a process exit code: 0 iff all outputs were written.

int cmd_synth(const ExperimentConfig& cfg, std::ostream& err);
int cmd_train(const ExperimentConfig& cfg, const std::string& baseline,
              const std::string& domain, std::ostream& err);
int cmd_tag(const ExperimentConfig& cfg, const std::string& domain, bool route,
            std::istream& in, std::ostream& out, std::ostream& err);
int cmd_eval(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_gridsearch(const ExperimentConfig& cfg, std::ostream& out,
                   std::ostream& err);

}  // namespace seqtag
