// SPDX-License-Identifier: Apache-2.0
#include "seqtag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "seqtag/kernels.hpp"

namespace seqtag {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

thread_local std::vector<std::function<void()>> g_tape;
thread_local bool g_grad_enabled = true;

bool track(const Tensor& t) {
  return g_grad_enabled && t.requires_grad();
}

void accumulate(Tensor t, const std::vector<double>& delta) {
  auto& g = t.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

std::string shape_to_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero dimension in shape " + shape_to_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data.assign(shape_numel(impl_->shape), 0.0);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (double& x : t.data()) x = rng.normal(0.0, stddev);
  return t;
}

double Tensor::scalar() const {
  if (!is_scalar()) throw ShapeError("scalar() on tensor of shape " + shape_str());
  return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) {
    throw ContractError("gradient requested but never populated");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tensor::copy_data_from(const Tensor& other) {
  if (other.impl_->shape != impl_->shape) {
    throw ShapeError("copy_data_from shape mismatch " + shape_str() + " vs " +
                     other.shape_str());
  }
  impl_->data = other.impl_->data;
}

std::string Tensor::shape_str() const { return shape_to_str(impl_->shape); }

// ---- tape ----

bool Tape::enabled() { return g_grad_enabled; }
void Tape::record(std::function<void()> backfn) { g_tape.push_back(std::move(backfn)); }
std::size_t Tape::size() { return g_tape.size(); }
void Tape::clear() { g_tape.clear(); }

void Tape::replay_reverse_and_clear() {
  for (auto it = g_tape.rbegin(); it != g_tape.rend(); ++it) (*it)();
  g_tape.clear();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (track(a) || track(b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::record([ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* go = oc.grad().data();
      if (ac.requires_grad()) {
        kernels::matmul_nt_acc(go, bc.data().data(), ac.grad().data(), m, n, k);
      }
      if (bc.requires_grad()) {
        kernels::matmul_tn_acc(ac.data().data(), go, bc.grad().data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matmul_nt shape mismatch " + a.shape_str() + " x " +
                     b.shape_str() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  kernels::matmul_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (track(a) || track(b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::record([ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* go = oc.grad().data();
      // dA += dC * B ; dB += dC^T * A
      if (ac.requires_grad()) {
        kernels::matmul_nn_acc(go, bc.data().data(), ac.grad().data(), m, n, k);
      }
      if (bc.requires_grad()) {
        kernels::matmul_tn_acc(go, ac.data().data(), bc.grad().data(), n, m, k);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (track(a) || track(b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      if (ac.requires_grad()) accumulate(ac, oc.grad());
      if (bc.requires_grad()) accumulate(bc, oc.grad());
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.ndim() != 2 || v.numel() != a.cols()) {
    throw ShapeError("add_rowvec shape mismatch " + a.shape_str() + " + " +
                     v.shape_str());
  }
  Tensor out(a.shape());
  const std::size_t n = a.rows(), d = a.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = a.at(i, j) + v.at(j);
  if (track(a) || track(v)) {
    out.set_requires_grad(true);
    Tensor ac = a, vc = v, oc = out;
    Tape::record([ac, vc, oc, n, d]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) accumulate(ac, go);
      if (vc.requires_grad()) {
        auto& gv = vc.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gv[j] += go[i * d + j];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (track(a) || track(b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bc.at(i);
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * ac.at(i);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * c;
  if (track(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::record([ac, oc, c]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * c;
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
    throw ShapeError("concat_rows shape mismatch " + a.shape_str() + " / " +
                     b.shape_str());
  }
  const std::size_t d = a.cols();
  Tensor out({a.rows() + b.rows(), d});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.numel());
  if (track(a) || track(b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const std::size_t off = ac.numel();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[off + i];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len) {
  if (a.ndim() != 2 || start + len > a.rows()) {
    throw ShapeError("slice_rows out of range on " + a.shape_str());
  }
  const std::size_t d = a.cols();
  Tensor out({len, d});
  std::copy(a.data().begin() + start * d, a.data().begin() + (start + len) * d,
            out.data().begin());
  if (track(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::record([ac, oc, start, d, len]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < len * d; ++i) ga[start * d + i] += go[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  if (a.ndim() != 2 || start + len > a.cols()) {
    throw ShapeError("slice_cols out of range on " + a.shape_str());
  }
  const std::size_t n = a.rows(), d = a.cols();
  Tensor out({n, len});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = a.at(i, start + j);
  if (track(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::record([ac, oc, start, n, d, len]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < len; ++j)
          ga[i * d + start + j] += go[i * len + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols on empty list");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.rows() != n) {
      throw ShapeError("concat_cols row mismatch at " + p.shape_str());
    }
    total += p.cols();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.cols();
    any_grad = any_grad || track(p);
  }
  if (any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::record([pc, oc, n, total]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      std::size_t off = 0;
      for (const auto& p : pc) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          Tensor pm = p;
          auto& gp = pm.grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += go[i * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.ndim() == 1) {
    if (axis != 0) throw ShapeError("softmax axis out of range for 1-D input");
  } else if (x.ndim() == 2) {
    if (axis != 0 && axis != 1) throw ShapeError("softmax axis out of range for 2-D input");
  } else {
    throw ShapeError("softmax supports 1-D and 2-D tensors, got " + x.shape_str());
  }
  // Normalize to a rows-view: 1-D and axis=1 both mean per-row over the
  // last dim; axis=0 on 2-D works on columns.
  const bool by_cols = (x.ndim() == 2 && axis == 0);
  const std::size_t nrow = x.ndim() == 1 ? 1 : x.rows();
  const std::size_t ncol = x.ndim() == 1 ? x.numel() : x.cols();
  Tensor out(x.shape());
  auto run = [&](std::size_t count, std::size_t len, auto idx) {
    for (std::size_t r = 0; r < count; ++r) {
      double mx = x.at(idx(r, 0));
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x.at(idx(r, j)));
      double denom = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(x.at(idx(r, j)) - mx);
        out.at(idx(r, j)) = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) out.at(idx(r, j)) /= denom;
    }
  };
  if (by_cols) {
    run(ncol, nrow, [&](std::size_t r, std::size_t j) { return j * ncol + r; });
  } else {
    run(nrow, ncol, [&](std::size_t r, std::size_t j) { return r * ncol + j; });
  }
  if (track(x)) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::record([xc, oc, by_cols, nrow, ncol]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      auto& gx = xc.grad();
      auto backrun = [&](std::size_t count, std::size_t len, auto idx) {
        for (std::size_t r = 0; r < count; ++r) {
          double dots = 0.0;
          for (std::size_t j = 0; j < len; ++j) dots += go[idx(r, j)] * oc.at(idx(r, j));
          for (std::size_t j = 0; j < len; ++j) {
            gx[idx(r, j)] += oc.at(idx(r, j)) * (go[idx(r, j)] - dots);
          }
        }
      };
      if (by_cols) {
        backrun(ncol, nrow, [&](std::size_t r, std::size_t j) { return j * ncol + r; });
      } else {
        backrun(nrow, ncol, [&](std::size_t r, std::size_t j) { return r * ncol + j; });
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (eps <= 0.0) throw ParamError("layer_norm eps must be positive");
  if (x.ndim() != 2 || gain.numel() != x.cols() || bias.numel() != x.cols()) {
    throw ShapeError("layer_norm shape mismatch x=" + x.shape_str() + " gain=" +
                     gain.shape_str() + " bias=" + bias.shape_str());
  }
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out({n, d});
  // keep normalized rows and inverse stddev for backward
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x.at(i, j) - mean) * is;
      (*xhat)[i * d + j] = h;
      out.at(i, j) = gain.at(j) * h + bias.at(j);
    }
  }
  if (track(x) || track(gain) || track(bias)) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gain, bc = bias, oc = out;
    Tape::record([xc, gc, bc, oc, xhat, inv_std, n, d]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (gc.requires_grad()) {
        auto& gg = gc.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * (*xhat)[i * d + j];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
      }
      if (xc.requires_grad()) {
        auto& gx = xc.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double mean_gy = 0.0, mean_gyh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gy = go[i * d + j] * gc.at(j);
            mean_gy += gy;
            mean_gyh += gy * (*xhat)[i * d + j];
          }
          mean_gy /= static_cast<double>(d);
          mean_gyh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double gy = go[i * d + j] * gc.at(j);
            gx[i * d + j] +=
                (gy - mean_gy - (*xhat)[i * d + j] * mean_gyh) * (*inv_std)[i];
          }
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.at(i);
    out.at(i) = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  if (track(x)) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::record([xc, oc]() mutable {
      if (!oc.has_grad()) return;
      constexpr double inv_sqrt2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      const auto& go = oc.grad();
      auto& gx = xc.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = xc.at(i);
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw ShapeError("embedding table must be 2-D");
  const std::size_t d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw LookupError("token id " + std::to_string(id) + " outside vocab of " +
                        std::to_string(table.rows()));
    }
  }
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = table.at(static_cast<std::size_t>(ids[i]), j);
  if (track(table)) {
    out.set_requires_grad(true);
    Tensor tc = table, oc = out;
    std::vector<int> idc = ids;
    Tape::record([tc, oc, idc, d]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      Tensor tm = tc;
      auto& gt = tm.grad();
      for (std::size_t i = 0; i < idc.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          gt[static_cast<std::size_t>(idc[i]) * d + j] += go[i * d + j];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index) {
  if (logits.ndim() != 2 || logits.rows() != targets.size()) {
    throw ShapeError("cross_entropy: logits " + logits.shape_str() + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  std::size_t valid = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw ParamError("cross_entropy target " + std::to_string(t) +
                       " outside class range [0," + std::to_string(c) + ")");
    }
    ++valid;
  }
  if (valid == 0) throw DataError("cross_entropy: every position is ignored (empty loss)");
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(logits.at(i, j) - mx);
      (*probs)[i * c + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= denom;
    if (targets[i] != ignore_index) {
      total -= std::log((*probs)[i * c + static_cast<std::size_t>(targets[i])]);
    }
  }
  Tensor out({1}, std::vector<double>{total / static_cast<double>(valid)});
  if (track(logits)) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    std::vector<int> tc = targets;
    Tape::record([lc, oc, tc, probs, n, c, valid, ignore_index]() mutable {
      if (!oc.has_grad()) return;
      const double upstream = oc.grad()[0];
      Tensor lm = lc;
      auto& gl = lm.grad();
      const double inv = upstream / static_cast<double>(valid);
      for (std::size_t i = 0; i < n; ++i) {
        if (tc[i] == ignore_index) continue;
        for (std::size_t j = 0; j < c; ++j) {
          double g = (*probs)[i * c + j];
          if (j == static_cast<std::size_t>(tc[i])) g -= 1.0;
          gl[i * c + j] += g * inv;
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  Tensor out({1}, std::vector<double>{s});
  if (track(x)) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::record([xc, oc]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0];
      auto& gx = xc.grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

void backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ShapeError("backward requires a scalar loss, got " + loss.shape_str());
  }
  if (!loss.requires_grad()) {
    // Graph of constants only; nothing to do beyond dropping stale records.
    Tape::clear();
    return;
  }
  Tensor l = loss;
  l.grad()[0] += 1.0;
  Tape::replay_reverse_and_clear();
}

// ---- Adam ----

void AdamOptimizer::step(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (!p.requires_grad()) {
      throw ContractError("adam_step: tensor does not require grad");
    }
    if (!p.has_grad()) {
      throw ContractError("adam_step: missing gradient on a trainable tensor");
    }
  }
  for (Tensor p : params) {
    State& st = state_[p.impl()];
    if (st.m.empty()) {
      st.m.assign(p.numel(), 0.0);
      st.v.assign(p.numel(), 0.0);
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    auto& g = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      p.at(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace seqtag
