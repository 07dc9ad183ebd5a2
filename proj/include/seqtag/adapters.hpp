// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "seqtag/encoder.hpp"
#include "seqtag/tensor.hpp"

namespace seqtag {

struct ClassifierHead;  // registry.hpp

enum class AdapterKind { lora, prefix };

std::string to_string(AdapterKind k);
AdapterKind adapter_kind_from_string(const std::string& s);

// Low-rank delta on targeted projections: W'x = Wx + (alpha/r) * B (A x).
// B starts at zero so a fresh adapter is an exact no-op.
struct LoraAdapter {
  int r = 3;
  double alpha = 1.0;
  std::vector<std::string> targets = {"wq", "wv"};  // per-layer projection names
  struct TargetMats {
    Tensor a;  // [r, d_in]
    Tensor b;  // [d_out, r]
  };
  // layer index -> target name -> matrices, ordered for stable serialization
  std::vector<std::map<std::string, TargetMats>> per_layer;
};

// Learned per-layer key/value positions prepended to attention context.
struct PrefixAdapter {
  int p = 18;
  struct LayerPrefix {
    Tensor keys;    // [p, d_model]
    Tensor values;  // [p, d_model]
  };
  std::vector<LayerPrefix> per_layer;
};

struct AdapterHyper {
  int lora_r = 3;
  double lora_alpha = 1.0;
  std::vector<std::string> lora_targets = {"wq", "wv"};
  int prefix_len = 18;
  double init_std = 0.02;
};

struct AdapterSet {
  std::string id;
  AdapterKind kind = AdapterKind::prefix;
  LoraAdapter lora;      // valid when kind == lora
  PrefixAdapter prefix;  // valid when kind == prefix
  std::string trained_on;

  std::vector<Tensor> parameters() const;
  std::vector<double> flat_weights() const;
};

AdapterSet init_adapter(AdapterKind kind, const EncoderConfig& cfg,
                        const AdapterHyper& hyper, Rng& rng,
                        const std::string& id);

// Deep copy with independent tensors.
AdapterSet replicate(const AdapterSet& adapter, const std::string& new_id);

// New core with W' = W + (alpha/r) B A folded into every targeted
// projection. Not idempotent: merging the same adapter twice adds 2 deltas.
CoreModel merge_lora(const CoreModel& core, const LoraAdapter& adapter);

// The exact tensors a training phase may update: the adapter's, plus the
// head's when one is given and not frozen. Never a core tensor.
std::vector<Tensor> trainable_params(const AdapterSet& adapter,
                                     const ClassifierHead* head);

}  // namespace seqtag
