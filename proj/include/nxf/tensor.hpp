// Copyright 2026 nextformer.cpp contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "nxf/error.hpp"
#include "nxf/random.hpp"

namespace nxf {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Compute dtype. Values are held as doubles either way; F32 rounds every
// op result through single precision, giving an inference-only reduced
// precision mode behind the same API. Gradients require F64.
enum class Dtype { F64, F32 };

struct TensorNode {
  Shape shape;
  Dtype dtype = Dtype::F64;
  bool requires_grad = false;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same extent as value
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  ~TensorNode();
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Dense row-major tensor. The handle has value semantics; copies share the
// underlying node, and a fresh node is produced by every op. Gradients
// accumulate additively into leaf nodes across backward() calls until
// zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Dtype dtype = Dtype::F64);
  static Tensor full(Shape shape, double v, Dtype dtype = Dtype::F64);
  static Tensor from_vector(Shape shape, std::vector<double> data,
                            Dtype dtype = Dtype::F64);
  static Tensor scalar(double v, Dtype dtype = Dtype::F64);
  static Tensor randn(Shape shape, RandomSource& rng, double stddev = 1.0,
                      Dtype dtype = Dtype::F64);
  static Tensor rand_uniform(Shape shape, RandomSource& rng, double lo,
                             double hi, Dtype dtype = Dtype::F64);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t dim(int axis) const;  // negative axis counts from the back
  int64_t numel() const;
  Dtype dtype() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool enable);

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaf editing (optimizers, tests)
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // scalar tensors only
  double at(std::initializer_list<int64_t> index) const;

  // Reverse-mode sweep from a scalar; fan-out gradients sum.
  void backward();

  bool all_finite() const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// While alive, ops record no autograd tape (inference mode).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Elementwise; the second operand may be a trailing-suffix broadcast of the
// first (e.g. [T,d] + [d]). No other implicit broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// Per-leading-channel scale: x[C,...] * g[C].
Tensor scale_channels(const Tensor& x, const Tensor& g);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
// Rows [begin, end) along axis 0.
Tensor slice0(const Tensor& x, int64_t begin, int64_t end);
Tensor concat0(const std::vector<Tensor>& xs);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
// Rows with no allowed column throw MaskError. allow is row-major [rows x cols].
Tensor masked_softmax(const Tensor& scores, const std::vector<uint8_t>& allow);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact-Phi form
Tensor swish(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
// Gated linear unit over the last axis (must be even): out = a * sigmoid(b).
Tensor glu(const Tensor& x);

// out[i,:] = table[ids[i],:]; backward scatter-adds.
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids);
// out[i,j] = m[i, idx[i*cols + j]] for a [rows x n] input.
Tensor gather_cols(const Tensor& m, const std::vector<int64_t>& idx,
                   int64_t cols);

// Inverted dropout; eval mode returns x untouched and draws nothing.
Tensor dropout(const Tensor& x, double p, bool train, RandomSource& rng);

Tensor cast(const Tensor& x, Dtype dtype);

}  // namespace nxf
