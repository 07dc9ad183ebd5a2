// SPDX-License-Identifier: Apache-2.0
#include "seqtag/adapters.hpp"

#include <algorithm>

#include "seqtag/registry.hpp"

namespace seqtag {

std::string to_string(AdapterKind k) {
  return k == AdapterKind::lora ? "lora" : "prefix";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
  if (s == "lora") return AdapterKind::lora;
  if (s == "prefix") return AdapterKind::prefix;
  throw ParamError("unknown adapter kind '" + s + "'");
}

std::vector<Tensor> AdapterSet::parameters() const {
  std::vector<Tensor> ps;
  if (kind == AdapterKind::lora) {
    for (const auto& layer : lora.per_layer) {
      for (const auto& [name, mats] : layer) {
        ps.push_back(mats.a);
        ps.push_back(mats.b);
      }
    }
  } else {
    for (const auto& layer : prefix.per_layer) {
      ps.push_back(layer.keys);
      ps.push_back(layer.values);
    }
  }
  return ps;
}

std::vector<double> AdapterSet::flat_weights() const {
  std::vector<double> out;
  for (const Tensor& t : parameters()) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return out;
}

AdapterSet init_adapter(AdapterKind kind, const EncoderConfig& cfg,
                        const AdapterHyper& hyper, Rng& rng,
                        const std::string& id) {
  AdapterSet set;
  set.id = id;
  set.kind = kind;
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  if (kind == AdapterKind::lora) {
    if (hyper.lora_r < 1) throw ParamError("lora r must be >= 1");
    set.lora.r = hyper.lora_r;
    set.lora.alpha = hyper.lora_alpha;
    set.lora.targets = hyper.lora_targets;
    const std::size_t r = static_cast<std::size_t>(hyper.lora_r);
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::map<std::string, LoraAdapter::TargetMats> mats;
      for (const std::string& t : hyper.lora_targets) {
        LoraAdapter::TargetMats m;
        m.a = Tensor::randn({r, d}, rng, hyper.init_std, true);
        m.b = Tensor::zeros({d, r}, true);  // exact no-op at init
        mats.emplace(t, m);
      }
      set.lora.per_layer.push_back(std::move(mats));
    }
  } else {
    if (hyper.prefix_len < 0) throw ParamError("prefix length must be >= 0");
    set.prefix.p = hyper.prefix_len;
    const std::size_t p = static_cast<std::size_t>(hyper.prefix_len);
    for (int l = 0; l < cfg.n_layers; ++l) {
      PrefixAdapter::LayerPrefix lp;
      if (p > 0) {
        lp.keys = Tensor::randn({p, d}, rng, hyper.init_std, true);
        lp.values = Tensor::randn({p, d}, rng, hyper.init_std, true);
      } else {
        lp.keys = Tensor();
        lp.values = Tensor();
      }
      set.prefix.per_layer.push_back(lp);
    }
  }
  return set;
}

AdapterSet replicate(const AdapterSet& adapter, const std::string& new_id) {
  AdapterSet copy;
  copy.id = new_id;
  copy.kind = adapter.kind;
  copy.trained_on = adapter.trained_on;
  if (adapter.kind == AdapterKind::lora) {
    copy.lora.r = adapter.lora.r;
    copy.lora.alpha = adapter.lora.alpha;
    copy.lora.targets = adapter.lora.targets;
    for (const auto& layer : adapter.lora.per_layer) {
      std::map<std::string, LoraAdapter::TargetMats> mats;
      for (const auto& [name, m] : layer) {
        mats.emplace(name, LoraAdapter::TargetMats{m.a.clone(), m.b.clone()});
      }
      copy.lora.per_layer.push_back(std::move(mats));
    }
  } else {
    copy.prefix.p = adapter.prefix.p;
    for (const auto& layer : adapter.prefix.per_layer) {
      PrefixAdapter::LayerPrefix lp;
      lp.keys = layer.keys.defined() ? layer.keys.clone() : Tensor();
      lp.values = layer.values.defined() ? layer.values.clone() : Tensor();
      if (lp.keys.defined()) {
        lp.keys.set_requires_grad(true);
        lp.values.set_requires_grad(true);
      }
      copy.prefix.per_layer.push_back(lp);
    }
  }
  if (copy.kind == AdapterKind::lora) {
    for (auto& layer : copy.lora.per_layer) {
      for (auto& [name, m] : layer) {
        m.a.set_requires_grad(true);
        m.b.set_requires_grad(true);
      }
    }
  }
  return copy;
}

CoreModel merge_lora(const CoreModel& core, const LoraAdapter& adapter) {
  CoreModel merged = core.clone();
  merged.set_requires_grad(false);
  const double scaling = adapter.alpha / static_cast<double>(adapter.r);
  if (adapter.per_layer.size() != merged.layers.size()) {
    throw ShapeError("adapter layer count does not match core");
  }
  for (std::size_t li = 0; li < merged.layers.size(); ++li) {
    for (const auto& [name, mats] : adapter.per_layer[li]) {
      Tensor* w = nullptr;
      if (name == "wq") w = &merged.layers[li].wq;
      else if (name == "wk") w = &merged.layers[li].wk;
      else if (name == "wv") w = &merged.layers[li].wv;
      else if (name == "wo") w = &merged.layers[li].wo;
      else throw LookupError("lora target '" + name + "' not present in core");
      const std::size_t d_in = w->rows(), d_out = w->cols();
      if (mats.a.cols() != d_in || mats.b.rows() != d_out) {
        throw ShapeError("lora shapes " + mats.a.shape_str() + "/" +
                         mats.b.shape_str() + " do not fit target " + name +
                         " of shape " + w->shape_str());
      }
      // Projections compute x*W, so the folded delta is (B A)^T = A^T B^T.
      const std::size_t r = mats.a.rows();
      for (std::size_t i = 0; i < d_in; ++i) {
        for (std::size_t j = 0; j < d_out; ++j) {
          double acc = 0.0;
          for (std::size_t l = 0; l < r; ++l) acc += mats.a.at(l, i) * mats.b.at(j, l);
          w->at(i, j) += scaling * acc;
        }
      }
    }
  }
  merged.frozen = core.frozen;
  return merged;
}

std::vector<Tensor> trainable_params(const AdapterSet& adapter,
                                     const ClassifierHead* head) {
  std::vector<Tensor> ps = adapter.parameters();
  if (head != nullptr && !head->frozen) {
    ps.push_back(head->w);
    ps.push_back(head->b);
  }
  return ps;
}

}  // namespace seqtag
