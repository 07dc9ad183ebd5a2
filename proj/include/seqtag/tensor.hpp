// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqtag/errors.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

// Row-major dense tensor of 64-bit floats with optional gradient buffer.
// Tensor is a cheap shared handle; ops below record backward closures on
// the ambient tape when gradients are enabled and an input requires them.
struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t rows() const { return impl_->shape.at(0); }
  std::size_t cols() const { return impl_->shape.at(1); }
  bool is_scalar() const { return numel() == 1; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double& at(std::size_t i) { return impl_->data[i]; }
  double at(std::size_t i) const { return impl_->data[i]; }
  double& at(std::size_t i, std::size_t j) { return impl_->data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }
  double scalar() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad();            // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy with its own buffers (grad not copied).
  Tensor clone() const;
  // Overwrite this tensor's values from another of identical shape.
  void copy_data_from(const Tensor& other);

  TensorImpl* impl() const { return impl_.get(); }
  std::string shape_str() const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Ambient per-thread tape of backward closures. One tape per training
// context; forward passes that should not build a graph run under
// NoGradGuard.
class Tape {
 public:
  static bool enabled();
  static void record(std::function<void()> backfn);
  static std::size_t size();
  static void clear();
  static void replay_reverse_and_clear();
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- primitive ops ----

Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);        // [m,k] x [n,k]^T
Tensor add(const Tensor& a, const Tensor& b);              // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& v);       // [n,d] + [d]
Tensor mul(const Tensor& a, const Tensor& b);              // elementwise
Tensor scale(const Tensor& a, double c);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor softmax(const Tensor& x, int axis);                 // 1-D or 2-D
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
Tensor gelu(const Tensor& x);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index);
Tensor sum(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Reverse pass from a scalar loss; populates grads of every reachable
// requires_grad tensor and clears the tape.
void backward(const Tensor& loss);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one Adam update to every tensor in params (all must require
  // grad and hold a gradient), then zeroes their grads.
  void step(const std::vector<Tensor>& params);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  struct State {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamConfig cfg_;
  std::unordered_map<TensorImpl*, State> state_;
};

}  // namespace seqtag
