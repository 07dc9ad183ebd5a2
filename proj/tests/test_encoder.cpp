// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqtag/adapters.hpp"
#include "seqtag/encoder.hpp"

using namespace seqtag;

namespace {

EncoderConfig toy_cfg(int vocab = 11) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.max_seq_len = 16;
  return cfg;
}

// Plain loops, no Tensor machinery: one attention head over given matrices.
std::vector<std::vector<double>> oracle_attention(
    const std::vector<std::vector<double>>& q,
    const std::vector<std::vector<double>>& k,
    const std::vector<std::vector<double>>& v) {
  const std::size_t n = q.size(), m = k.size(), d = q[0].size();
  std::vector<std::vector<double>> out(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < d; ++t) s += q[i][t] * k[j][t];
      scores[j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, scores[j]);
    }
    double z = 0;
    for (auto& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < d; ++t) out[i][t] += scores[j] / z * v[j][t];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg = toy_cfg();
  CHECK_NOTHROW(cfg.validate());
  cfg.d_model = 33;  // not divisible by n_heads
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = toy_cfg();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = toy_cfg();
  cfg.ln_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}

TEST_CASE("forward shape, determinism, and position sensitivity") {
  Rng rng(7);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  NoGradGuard ng;
  std::vector<int> ids{2, 5, 6, 7};
  Tensor h1 = encoder_forward(m, ids);
  CHECK(h1.rows() == 4);
  CHECK(h1.cols() == 32);
  Tensor h2 = encoder_forward(m, ids);
  CHECK(h1.data() == h2.data());  // bitwise deterministic

  // swapping two tokens must change their hidden states (position embeddings)
  Tensor h3 = encoder_forward(m, {2, 6, 5, 7});
  CHECK(h1.data() != h3.data());

  CHECK_THROWS_AS(encoder_forward(m, {}), DataError);
  CHECK_THROWS_AS(encoder_forward(m, {2, 99}), LookupError);  // id out of vocab
}

TEST_CASE("attention core matches a hand-rolled oracle") {
  // Single layer, single head, identity-ish weights so the encoder's
  // attention block can be compared against plain-loop attention.
  Rng rng(13);
  EncoderConfig cfg = toy_cfg();
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_model = 4;
  cfg.d_ff = 4;
  CoreModel m = CoreModel::init(cfg, rng);
  NoGradGuard ng;

  std::vector<int> ids{1, 3, 4};
  // Recompute the attention sublayer by hand from the model's own weights.
  std::vector<std::vector<double>> x(ids.size(), std::vector<double>(4));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      x[i][j] = m.tok_emb.at(ids[i], j) + m.pos_emb.at(i, j);
    }
  }
  auto project = [&](const Tensor& w) {
    std::vector<std::vector<double>> out(x.size(), std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t t = 0; t < 4; ++t) out[i][j] += x[i][t] * w.at(t, j);
      }
    }
    return out;
  };
  auto attn = oracle_attention(project(m.layers[0].wq), project(m.layers[0].wk),
                               project(m.layers[0].wv));

  // The library's value for the same sublayer, extracted by running the
  // full forward with FFN and LN neutralized is fragile; instead compare
  // against the tensor-op composition directly.
  Tensor xt({ids.size(), 4});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) xt.at(i, j) = x[i][j];
  }
  Tensor q = matmul(xt, m.layers[0].wq);
  Tensor k = matmul(xt, m.layers[0].wk);
  Tensor v = matmul(xt, m.layers[0].wv);
  Tensor scores = scale(matmul_nt(q, k), 1.0 / 2.0);  // sqrt(4)
  Tensor a = matmul(softmax(scores, 1), v);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(a.at(i, j) == doctest::Approx(attn[i][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("empty adapters are exactly neutral") {
  Rng rng(21);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  NoGradGuard ng;
  std::vector<int> ids{2, 3, 4, 5, 6};
  Tensor base = encoder_forward(m, ids);

  AdapterHyper hyper;
  Rng arng(22);
  AdapterSet lora = init_adapter(AdapterKind::lora, m.cfg, hyper, arng, "l");
  Tensor with_lora = encoder_forward(m, ids, &lora);
  for (std::size_t i = 0; i < base.numel(); ++i) {
    CHECK(std::abs(with_lora.data()[i] - base.data()[i]) <= 1e-12);
  }

  AdapterHyper ph;
  ph.prefix_len = 0;
  AdapterSet pfx = init_adapter(AdapterKind::prefix, m.cfg, hyper, arng, "p");
  AdapterSet pfx0 = init_adapter(AdapterKind::prefix, m.cfg, ph, arng, "p0");
  Tensor with_p0 = encoder_forward(m, ids, &pfx0);
  for (std::size_t i = 0; i < base.numel(); ++i) {
    CHECK(std::abs(with_p0.data()[i] - base.data()[i]) <= 1e-12);
  }
  // a non-empty freshly initialized prefix must NOT be neutral
  Tensor with_p = encoder_forward(m, ids, &pfx);
  CHECK(with_p.data() != base.data());
}

TEST_CASE("prefix changes scores but output length stays put") {
  Rng rng(31);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  NoGradGuard ng;
  AdapterHyper hyper;
  Rng arng(32);
  AdapterSet pfx = init_adapter(AdapterKind::prefix, m.cfg, hyper, arng, "p");
  Tensor h = encoder_forward(m, {2, 3, 4}, &pfx);
  CHECK(h.rows() == 3);
  CHECK(h.cols() == 32);
}

TEST_CASE("freeze contract") {
  Rng rng(41);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  CHECK_FALSE(m.frozen);
  for (const auto& p : m.parameters()) CHECK(p.requires_grad());
  freeze_core(m);
  CHECK(m.frozen);
  for (const auto& p : m.parameters()) CHECK_FALSE(p.requires_grad());

  CoreModel c = m.clone();
  CHECK_FALSE(c.frozen);
  for (const auto& p : c.parameters()) CHECK(p.requires_grad());
  // deep copy: mutating the clone leaves the original alone
  c.tok_emb.at(0, 0) += 1.0;
  CHECK(m.tok_emb.at(0, 0) != c.tok_emb.at(0, 0));
  CHECK(m.flat_weights() != c.flat_weights());
}

TEST_CASE("parameter census") {
  Rng rng(51);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  // tok+pos + 2*(6 mats + 4 ln vecs) + final ln pair
  CHECK(m.parameters().size() == 2 + 2 * 10 + 2);
  std::size_t total = 0;
  for (const auto& p : m.parameters()) total += p.numel();
  CHECK(m.flat_weights().size() == total);
}

TEST_CASE("gradients flow through the encoder") {
  Rng rng(61);
  EncoderConfig cfg = toy_cfg();
  cfg.n_layers = 1;
  cfg.d_model = 4;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  CoreModel m = CoreModel::init(cfg, rng);
  Tensor h = encoder_forward(m, {1, 2, 3});
  Tensor loss = sum(h);
  backward(loss);
  bool any = false;
  for (double g : m.tok_emb.grad()) any = any || g != 0.0;
  CHECK(any);
  any = false;
  for (double g : m.layers[0].wq.grad()) any = any || g != 0.0;
  CHECK(any);
}

TEST_CASE("n_valid masks trailing positions out of attention") {
  Rng rng(71);
  CoreModel m = CoreModel::init(toy_cfg(), rng);
  NoGradGuard ng;
  // with mask, the valid rows must equal the unpadded forward's rows
  Tensor full = encoder_forward(m, {2, 3, 4});
  Tensor padded = encoder_forward(m, {2, 3, 4, 0, 0}, nullptr, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 32; ++j) {
      CHECK(padded.at(i, j) == doctest::Approx(full.at(i, j)).epsilon(1e-9));
    }
  }
}
