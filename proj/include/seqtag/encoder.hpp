// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "seqtag/tensor.hpp"

namespace seqtag {

struct AdapterSet;  // adapters.hpp

struct EncoderConfig {
  int n_layers = 2;
  int d_model = 32;
  int n_heads = 2;
  int d_ff = 64;
  int vocab_size = 0;  // set from the tokenizer
  int max_seq_len = 512;
  double ln_eps = 1e-5;

  void validate() const;
};

// One transformer encoder layer's weights (post-LN, no projection biases).
struct EncoderLayer {
  Tensor wq, wk, wv, wo;      // [d_model, d_model]
  Tensor w1;                  // [d_model, d_ff]
  Tensor w2;                  // [d_ff, d_model]
  Tensor ln1_gain, ln1_bias;  // after attention residual
  Tensor ln2_gain, ln2_bias;  // after ffn residual
};

// The shared backbone. Frozen in production; trainable only while being
// pre-trained from scratch.
struct CoreModel {
  EncoderConfig cfg;
  Tensor tok_emb;  // [vocab, d_model]
  Tensor pos_emb;  // [max_seq_len, d_model]
  std::vector<EncoderLayer> layers;
  Tensor final_ln_gain, final_ln_bias;
  bool frozen = false;

  static CoreModel init(const EncoderConfig& cfg, Rng& rng);

  std::vector<Tensor> parameters() const;
  CoreModel clone() const;           // deep copy, unfrozen
  void set_requires_grad(bool v);

  // Flattened weight bytes in a fixed order; used for byte-equality checks.
  std::vector<double> flat_weights() const;
};

void freeze_core(CoreModel& model);

// Hidden states [len, d_model] for the given (already encoded) token ids.
// n_valid < len masks trailing positions out of attention; by default every
// position is real.
Tensor encoder_forward(const CoreModel& model, const std::vector<int>& token_ids,
                       const AdapterSet* adapter = nullptr,
                       std::optional<std::size_t> n_valid = std::nullopt);

}  // namespace seqtag
