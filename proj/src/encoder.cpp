// SPDX-License-Identifier: Apache-2.0
#include "seqtag/encoder.hpp"

#include <cmath>
#include <string>

#include "seqtag/adapters.hpp"

namespace seqtag {

void EncoderConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 ||
      vocab_size <= 0 || max_seq_len < 1 || ln_eps <= 0) {
    throw ParamError("encoder config fields must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ParamError("d_model " + std::to_string(d_model) +
                     " not divisible by n_heads " + std::to_string(n_heads));
  }
}

CoreModel CoreModel::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  CoreModel m;
  m.cfg = cfg;
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t ff = static_cast<std::size_t>(cfg.d_ff);
  const double std0 = 0.02;
  m.tok_emb = Tensor::randn({static_cast<std::size_t>(cfg.vocab_size), d}, rng, std0, true);
  m.pos_emb = Tensor::randn({static_cast<std::size_t>(cfg.max_seq_len), d}, rng, std0, true);
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer layer;
    layer.wq = Tensor::randn({d, d}, rng, std0, true);
    layer.wk = Tensor::randn({d, d}, rng, std0, true);
    layer.wv = Tensor::randn({d, d}, rng, std0, true);
    layer.wo = Tensor::randn({d, d}, rng, std0, true);
    layer.w1 = Tensor::randn({d, ff}, rng, std0, true);
    layer.w2 = Tensor::randn({ff, d}, rng, std0, true);
    layer.ln1_gain = Tensor({d}, std::vector<double>(d, 1.0), true);
    layer.ln1_bias = Tensor::zeros({d}, true);
    layer.ln2_gain = Tensor({d}, std::vector<double>(d, 1.0), true);
    layer.ln2_bias = Tensor::zeros({d}, true);
    m.layers.push_back(layer);
  }
  m.final_ln_gain = Tensor({d}, std::vector<double>(d, 1.0), true);
  m.final_ln_bias = Tensor::zeros({d}, true);
  return m;
}

std::vector<Tensor> CoreModel::parameters() const {
  std::vector<Tensor> ps{tok_emb, pos_emb};
  for (const auto& l : layers) {
    for (const Tensor& t : {l.wq, l.wk, l.wv, l.wo, l.w1, l.w2, l.ln1_gain,
                            l.ln1_bias, l.ln2_gain, l.ln2_bias}) {
      ps.push_back(t);
    }
  }
  ps.push_back(final_ln_gain);
  ps.push_back(final_ln_bias);
  return ps;
}

CoreModel CoreModel::clone() const {
  CoreModel m;
  m.cfg = cfg;
  m.frozen = false;
  m.tok_emb = tok_emb.clone();
  m.pos_emb = pos_emb.clone();
  for (const auto& l : layers) {
    EncoderLayer c;
    c.wq = l.wq.clone();
    c.wk = l.wk.clone();
    c.wv = l.wv.clone();
    c.wo = l.wo.clone();
    c.w1 = l.w1.clone();
    c.w2 = l.w2.clone();
    c.ln1_gain = l.ln1_gain.clone();
    c.ln1_bias = l.ln1_bias.clone();
    c.ln2_gain = l.ln2_gain.clone();
    c.ln2_bias = l.ln2_bias.clone();
    m.layers.push_back(c);
  }
  m.final_ln_gain = final_ln_gain.clone();
  m.final_ln_bias = final_ln_bias.clone();
  m.set_requires_grad(true);
  return m;
}

void CoreModel::set_requires_grad(bool v) {
  for (Tensor t : parameters()) t.set_requires_grad(v);
}

std::vector<double> CoreModel::flat_weights() const {
  std::vector<double> out;
  for (const Tensor& t : parameters()) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return out;
}

void freeze_core(CoreModel& model) {
  model.set_requires_grad(false);
  model.frozen = true;
}

namespace {

// x [n, d_in] through projection `name`, with the LoRA delta when targeted.
Tensor project(const Tensor& x, const Tensor& w, const std::string& name,
               const LoraAdapter* lora, std::size_t layer_idx) {
  Tensor out = matmul(x, w);
  if (lora != nullptr) {
    auto it = lora->per_layer[layer_idx].find(name);
    if (it != lora->per_layer[layer_idx].end()) {
      // (x A^T) B^T scaled by alpha/r
      Tensor low = matmul_nt(x, it->second.a);
      Tensor delta = matmul_nt(low, it->second.b);
      out = add(out, scale(delta, lora->alpha / static_cast<double>(lora->r)));
    }
  }
  return out;
}

}  // namespace

Tensor encoder_forward(const CoreModel& model, const std::vector<int>& token_ids,
                       const AdapterSet* adapter,
                       std::optional<std::size_t> n_valid) {
  const EncoderConfig& cfg = model.cfg;
  const std::size_t n = token_ids.size();
  if (n == 0) throw DataError("encoder_forward on empty input");
  if (n > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw ShapeError("input length " + std::to_string(n) + " exceeds max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  }
  for (int id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw LookupError("token id " + std::to_string(id) + " outside vocab of " +
                        std::to_string(cfg.vocab_size));
    }
  }
  const std::size_t valid = n_valid.value_or(n);
  if (valid > n) throw ShapeError("n_valid exceeds sequence length");

  const LoraAdapter* lora = nullptr;
  const PrefixAdapter* prefix = nullptr;
  if (adapter != nullptr) {
    if (adapter->kind == AdapterKind::lora) {
      lora = &adapter->lora;
    } else if (adapter->prefix.p > 0) {
      prefix = &adapter->prefix;
    }
  }

  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t nh = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t dh = d / nh;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t p = prefix ? static_cast<std::size_t>(prefix->p) : 0;

  Tensor x = add(embedding(model.tok_emb, token_ids), slice_rows(model.pos_emb, 0, n));

  // Additive attention mask over key positions: prefix keys and valid real
  // positions attendable, padded tail blocked.
  Tensor mask;
  if (valid < n) {
    Tensor m({n, p + n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = p + valid; j < p + n; ++j) m.at(i, j) = -1e9;
    mask = m;
  }

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const EncoderLayer& layer = model.layers[li];

    Tensor q = project(x, layer.wq, "wq", lora, li);
    Tensor k = project(x, layer.wk, "wk", lora, li);
    Tensor v = project(x, layer.wv, "wv", lora, li);
    if (prefix) {
      k = concat_rows(prefix->per_layer[li].keys, k);
      v = concat_rows(prefix->per_layer[li].values, v);
    }

    std::vector<Tensor> head_outs;
    head_outs.reserve(nh);
    for (std::size_t h = 0; h < nh; ++h) {
      Tensor qh = slice_cols(q, h * dh, dh);
      Tensor kh = slice_cols(k, h * dh, dh);
      Tensor vh = slice_cols(v, h * dh, dh);
      Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dh);
      if (mask.defined()) scores = add(scores, mask);
      Tensor attn = softmax(scores, 1);
      head_outs.push_back(matmul(attn, vh));
    }
    Tensor ctx = nh == 1 ? head_outs[0] : concat_cols(head_outs);
    Tensor attn_out = project(ctx, layer.wo, "wo", lora, li);
    x = layer_norm(add(x, attn_out), layer.ln1_gain, layer.ln1_bias, cfg.ln_eps);

    Tensor ffn = matmul(gelu(matmul(x, layer.w1)), layer.w2);
    x = layer_norm(add(x, ffn), layer.ln2_gain, layer.ln2_bias, cfg.ln_eps);
  }

  return layer_norm(x, model.final_ln_gain, model.final_ln_bias, cfg.ln_eps);
}

}  // namespace seqtag
