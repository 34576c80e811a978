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

#include "nxf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "nxf/detail/autograd.hpp"

namespace nxf {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

TensorNode::~TensorNode() {
  // Iterative release of the parent chain; long tapes would otherwise
  // recurse once per node.
  std::vector<std::shared_ptr<TensorNode>> stack;
  stack.swap(parents);
  while (!stack.empty()) {
    std::shared_ptr<TensorNode> p = std::move(stack.back());
    stack.pop_back();
    if (p && p.use_count() == 1) {
      for (auto& gp : p->parents) stack.push_back(std::move(gp));
      p->parents.clear();
    }
  }
}

namespace {

thread_local bool g_grad_enabled = true;

inline void round_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

namespace detail {

Dtype promote(Dtype a, Dtype b) {
  return (a == Dtype::F32 && b == Dtype::F32) ? Dtype::F32 : Dtype::F64;
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value,
                                      Dtype dtype) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->dtype = dtype;
  if (dtype == Dtype::F32) round_f32(value);
  n->value = std::move(value);
  return n;
}

Tensor wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.node() = std::move(n);
  return t;
}

// Attaches the backward closure when the tape is recording. `fn` is invoked
// with gradients already ensured on the output node.
void attach(Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void()> fn) {
  if (!g_grad_enabled) return;
  bool needed = false;
  for (const Tensor& t : inputs) needed = needed || t.requires_grad();
  if (!needed) return;
  auto& on = out.node();
  on->requires_grad = true;
  for (const Tensor& t : inputs) on->parents.push_back(t.node());
  on->backward_fn = std::move(fn);
}

void accumulate(TensorNode* n, const double* g, int64_t count) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  double* dst = n->grad.data();
  for (int64_t i = 0; i < count; ++i) dst[i] += g[i];
}

}  // namespace detail

using detail::accumulate;
using detail::attach;
using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn;
using detail::make_node;
using detail::promote;
using detail::wrap;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// True iff b's shape is a strict trailing suffix of a's.
bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() >= a.size()) return false;
  for (size_t i = 0; i < b.size(); ++i) {
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// GEMM kernels. Each output element accumulates over the inner dimension in
// ascending order, independent of the matrix extents, which keeps chunked
// and full-sequence passes bit-identical.
// ---------------------------------------------------------------------------

namespace detail {

void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    double* __restrict__ crow = c + i * n;
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict__ brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] = a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* __restrict__ arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* __restrict__ brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

// c[m,n] = a[p,m]^T * b[p,n]; accumulation over p ascending.
void gemm_tn(const double* a, const double* b, double* c, int64_t p, int64_t m,
             int64_t n) {
  std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (int64_t q = 0; q < p; ++q) {
    const double* arow = a + q * m;
    const double* __restrict__ brow = b + q * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* __restrict__ crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

namespace {

struct AxisSpan {
  int64_t outer, len, inner;
};

AxisSpan axis_span(const Shape& s, int axis) {
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("axis out of range for shape " + shape_str(s));
  AxisSpan sp{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[i];
  for (int i = axis + 1; i < r; ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, Dtype dtype) {
  const int64_t n = shape_numel(shape);
  return wrap(make_node(std::move(shape), std::vector<double>(n, 0.0), dtype));
}

Tensor Tensor::full(Shape shape, double v, Dtype dtype) {
  const int64_t n = shape_numel(shape);
  return wrap(make_node(std::move(shape), std::vector<double>(n, v), dtype));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, Dtype dtype) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("from_vector: " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  return wrap(make_node(std::move(shape), std::move(data), dtype));
}

Tensor Tensor::scalar(double v, Dtype dtype) {
  return wrap(make_node(Shape{}, std::vector<double>{v}, dtype));
}

Tensor Tensor::randn(Shape shape, RandomSource& rng, double stddev,
                     Dtype dtype) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.gaussian() * stddev;
  return wrap(make_node(std::move(shape), std::move(v), dtype));
}

Tensor Tensor::rand_uniform(Shape shape, RandomSource& rng, double lo,
                            double hi, Dtype dtype) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return wrap(make_node(std::move(shape), std::move(v), dtype));
}

const Shape& Tensor::shape() const { return node_->shape; }

int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("dim: axis out of range for " + shape_str(s));
  return s[axis];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }

Dtype Tensor::dtype() const { return node_->dtype; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool enable) {
  if (enable && node_->dtype != Dtype::F64)
    throw ConfigError("gradients require F64 tensors");
  node_->requires_grad = enable;
  if (enable) node_->ensure_grad();
  return *this;
}

const std::vector<double>& Tensor::data() const { return node_->value; }
std::vector<double>& Tensor::mutable_data() { return node_->value; }

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw Error("grad(): tensor does not track gradients");
  const_cast<TensorNode*>(node_.get())->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor has " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size())
    throw ShapeError("at(): rank mismatch for " + shape_str(s));
  int64_t flat = 0;
  int i = 0;
  for (int64_t ix : index) {
    flat = flat * s[i] + ix;
    ++i;
  }
  return node_->value[flat];
}

bool Tensor::all_finite() const {
  for (double v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::backward() {
  if (numel() != 1) throw ShapeError("backward(): loss must be scalar");
  if (!node_->requires_grad)
    throw Error("backward(): tensor does not track gradients");

  // Iterative post-order DFS for a reverse-topological schedule.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn();
    }
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const bool bcast = is_suffix(a.shape(), b.shape());
  if (!bcast) check_same_shape(a, b, name);

  const int64_t n = a.numel();
  const int64_t bn = b.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  std::vector<double> v(n);
  switch (op) {
    case BinOp::Add:
      for (int64_t i = 0; i < n; ++i) v[i] = pa[i] + pb[i % bn];
      break;
    case BinOp::Sub:
      for (int64_t i = 0; i < n; ++i) v[i] = pa[i] - pb[i % bn];
      break;
    case BinOp::Mul:
      for (int64_t i = 0; i < n; ++i) v[i] = pa[i] * pb[i % bn];
      break;
  }
  Tensor out = wrap(make_node(a.shape(), std::move(v),
                              promote(a.dtype(), b.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* an = a.node().get();
  TensorNode* bn_node = b.node().get();
  attach(out, {a, b}, [on, an, bn_node, op, n, bn]() {
    const double* g = on->grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* da = an->grad.data();
      const double* pb2 = bn_node->value.data();
      switch (op) {
        case BinOp::Add:
          for (int64_t i = 0; i < n; ++i) da[i] += g[i];
          break;
        case BinOp::Sub:
          for (int64_t i = 0; i < n; ++i) da[i] += g[i];
          break;
        case BinOp::Mul:
          for (int64_t i = 0; i < n; ++i) da[i] += g[i] * pb2[i % bn];
          break;
      }
    }
    if (bn_node->requires_grad) {
      bn_node->ensure_grad();
      double* db = bn_node->grad.data();
      const double* pa2 = an->value.data();
      switch (op) {
        case BinOp::Add:
          for (int64_t i = 0; i < n; ++i) db[i % bn] += g[i];
          break;
        case BinOp::Sub:
          for (int64_t i = 0; i < n; ++i) db[i % bn] -= g[i];
          break;
        case BinOp::Mul:
          for (int64_t i = 0; i < n; ++i) db[i % bn] += g[i] * pa2[i];
          break;
      }
    }
  });
  return out;
}

Tensor unary_op(const Tensor& x, const char* /*name*/,
                const std::function<double(double)>& f,
                const std::function<double(double, double)>& df_by_x_and_y) {
  const int64_t n = x.numel();
  const double* px = x.data().data();
  std::vector<double> v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = f(px[i]);
  Tensor out = wrap(make_node(x.shape(), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, n, df_by_x_and_y]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    const double* xv = xn->value.data();
    const double* yv = on->value.data();
    double* dx = xn->grad.data();
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * df_by_x_and_y(xv[i], yv[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }

Tensor scale(const Tensor& a, double s) {
  return unary_op(a, "scale", [s](double x) { return x * s; },
                  [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, "add_scalar", [s](double x) { return x + s; },
                  [](double, double) { return 1.0; });
}

Tensor scale_channels(const Tensor& x, const Tensor& g) {
  if (g.rank() != 1 || g.dim(0) != x.dim(0)) {
    throw ShapeError("scale_channels: " + shape_str(x.shape()) + " vs " +
                     shape_str(g.shape()));
  }
  const int64_t c = x.dim(0);
  const int64_t inner = x.numel() / c;
  const double* px = x.data().data();
  const double* pg = g.data().data();
  std::vector<double> v(x.numel());
  for (int64_t i = 0; i < c; ++i) {
    const double gv = pg[i];
    for (int64_t j = 0; j < inner; ++j) v[i * inner + j] = px[i * inner + j] * gv;
  }
  Tensor out = wrap(make_node(x.shape(), std::move(v),
                              promote(x.dtype(), g.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  TensorNode* gn = g.node().get();
  attach(out, {x, g}, [on, xn, gn, c, inner]() {
    const double* gr = on->grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      double* dx = xn->grad.data();
      const double* pg2 = gn->value.data();
      for (int64_t i = 0; i < c; ++i)
        for (int64_t j = 0; j < inner; ++j)
          dx[i * inner + j] += gr[i * inner + j] * pg2[i];
    }
    if (gn->requires_grad) {
      gn->ensure_grad();
      double* dg = gn->grad.data();
      const double* px2 = xn->value.data();
      for (int64_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < inner; ++j)
          acc += gr[i * inner + j] * px2[i * inner + j];
        dg[i] += acc;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n);
  gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
  Tensor out = wrap(make_node(Shape{m, n}, std::move(v),
                              promote(a.dtype(), b.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  attach(out, {a, b}, [on, an, bn, m, k, n]() {
    const double* g = on->grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      std::vector<double> da(m * k);
      gemm_nt(g, bn->value.data(), da.data(), m, n, k);  // g[m,n] * b[k,n]^T
      accumulate(an, da.data(), m * k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      std::vector<double> db(k * n);
      gemm_tn(an->value.data(), g, db.data(), m, k, n);  // a^T * g
      accumulate(bn, db.data(), k * n);
    }
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> v(m * n);
  gemm_nt(a.data().data(), b.data().data(), v.data(), m, k, n);
  Tensor out = wrap(make_node(Shape{m, n}, std::move(v),
                              promote(a.dtype(), b.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  attach(out, {a, b}, [on, an, bn, m, k, n]() {
    const double* g = on->grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      std::vector<double> da(m * k);
      gemm_nn(g, bn->value.data(), da.data(), m, n, k);  // g[m,n] * b[n,k]
      accumulate(an, da.data(), m * k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      std::vector<double> db(n * k);
      gemm_tn(g, an->value.data(), db.data(), m, n, k);  // g^T[n,m] * a[m,k]
      accumulate(bn, db.data(), n * k);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  }
  Tensor out = wrap(make_node(std::move(shape), x.data(), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn]() {
    accumulate(xn, on->grad.data(), static_cast<int64_t>(on->grad.size()));
  });
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r)
    throw ShapeError("permute: axes rank mismatch for " + shape_str(x.shape()));
  const Shape& in = x.shape();
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in[axes[i]];

  std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in[i + 1];
  for (int i = r - 2; i >= 0; --i)
    out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

  // map[i]: flat offset stride in input per step of output axis i
  std::vector<int64_t> map(r);
  for (int i = 0; i < r; ++i) map[i] = in_strides[axes[i]];

  const int64_t n = x.numel();
  const double* px = x.data().data();
  std::vector<double> v(n);
  std::vector<int64_t> idx(r, 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += idx[i] * map[i];
    v[o] = px[src];
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor out = wrap(make_node(std::move(out_shape), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  Shape oshape = out.shape();
  attach(out, {x}, [on, xn, oshape, map, r, n]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    double* dx = xn->grad.data();
    std::vector<int64_t> idx2(r, 0);
    for (int64_t o = 0; o < n; ++o) {
      int64_t src = 0;
      for (int i = 0; i < r; ++i) src += idx2[i] * map[i];
      dx[src] += g[o];
      for (int i = r - 1; i >= 0; --i) {
        if (++idx2[i] < oshape[i]) break;
        idx2[i] = 0;
      }
    }
  });
  return out;
}

Tensor slice0(const Tensor& x, int64_t begin, int64_t end) {
  if (x.rank() < 1 || begin < 0 || end > x.dim(0) || begin >= end) {
    throw ShapeError("slice0: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " +
                     shape_str(x.shape()));
  }
  const int64_t inner = x.numel() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  std::vector<double> v(x.data().begin() + begin * inner,
                        x.data().begin() + end * inner);
  Tensor out = wrap(make_node(std::move(out_shape), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, begin, inner]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    double* dx = xn->grad.data() + begin * inner;
    const int64_t n = static_cast<int64_t>(on->grad.size());
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i];
  });
  return out;
}

Tensor concat0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat0: no inputs");
  Shape out_shape = xs[0].shape();
  int64_t rows = 0;
  Dtype dt = xs[0].dtype();
  for (const Tensor& t : xs) {
    Shape s = t.shape();
    if (s.size() != out_shape.size())
      throw ShapeError("concat0: rank mismatch");
    for (size_t i = 1; i < s.size(); ++i)
      if (s[i] != out_shape[i])
        throw ShapeError("concat0: trailing shape mismatch " + shape_str(s) +
                         " vs " + shape_str(out_shape));
    rows += s[0];
    dt = promote(dt, t.dtype());
  }
  out_shape[0] = rows;
  std::vector<double> v;
  v.reserve(shape_numel(out_shape));
  for (const Tensor& t : xs) v.insert(v.end(), t.data().begin(), t.data().end());
  Tensor out = wrap(make_node(std::move(out_shape), std::move(v), dt));

  bool needed = false;
  for (const Tensor& t : xs) needed = needed || t.requires_grad();
  if (g_grad_enabled && needed) {
    auto& on_sp = out.node();
    on_sp->requires_grad = true;
    std::vector<TensorNode*> raw;
    for (const Tensor& t : xs) {
      on_sp->parents.push_back(t.node());
      raw.push_back(t.node().get());
    }
    TensorNode* on = on_sp.get();
    on_sp->backward_fn = [on, raw]() {
      const double* g = on->grad.data();
      int64_t off = 0;
      for (TensorNode* p : raw) {
        const int64_t n = static_cast<int64_t>(p->value.size());
        if (p->requires_grad) {
          p->ensure_grad();
          double* dst = p->grad.data();
          for (int64_t i = 0; i < n; ++i) dst[i] += g[off + i];
        }
        off += n;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

namespace {

Tensor softmax_impl(const Tensor& x, int axis, bool log_form) {
  const AxisSpan sp = axis_span(x.shape(), axis);
  const double* px = x.data().data();
  std::vector<double> v(x.numel());
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      const int64_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t l = 0; l < sp.len; ++l)
        mx = std::max(mx, px[base + l * sp.inner]);
      double denom = 0.0;
      for (int64_t l = 0; l < sp.len; ++l)
        denom += std::exp(px[base + l * sp.inner] - mx);
      if (log_form) {
        const double log_denom = std::log(denom);
        for (int64_t l = 0; l < sp.len; ++l)
          v[base + l * sp.inner] = px[base + l * sp.inner] - mx - log_denom;
      } else {
        for (int64_t l = 0; l < sp.len; ++l)
          v[base + l * sp.inner] = std::exp(px[base + l * sp.inner] - mx) / denom;
      }
    }
  }
  Tensor out = wrap(make_node(x.shape(), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, sp, log_form]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    const double* y = on->value.data();
    double* dx = xn->grad.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t in = 0; in < sp.inner; ++in) {
        const int64_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t i = base + l * sp.inner;
          dot += log_form ? g[i] : g[i] * y[i];
        }
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t i = base + l * sp.inner;
          if (log_form) {
            dx[i] += g[i] - std::exp(y[i]) * dot;
          } else {
            dx[i] += y[i] * (g[i] - dot);
          }
        }
      }
    }
  });
  return out;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) { return softmax_impl(x, axis, false); }
Tensor log_softmax(const Tensor& x, int axis) { return softmax_impl(x, axis, true); }

Tensor masked_softmax(const Tensor& scores, const std::vector<uint8_t>& allow) {
  if (scores.rank() != 2)
    throw ShapeError("masked_softmax: need 2-D scores, got " +
                     shape_str(scores.shape()));
  const int64_t rows = scores.dim(0), cols = scores.dim(1);
  if (static_cast<int64_t>(allow.size()) != rows * cols)
    throw ShapeError("masked_softmax: mask size " +
                     std::to_string(allow.size()) + " vs scores " +
                     shape_str(scores.shape()));
  const double* px = scores.data().data();
  std::vector<double> v(rows * cols);
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = px + i * cols;
    const uint8_t* arow = allow.data() + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < cols; ++j)
      if (arow[j] && row[j] > mx) mx = row[j];
    if (mx == -std::numeric_limits<double>::infinity())
      throw MaskError("masked_softmax: row " + std::to_string(i) +
                      " has no allowed column");
    double denom = 0.0;
    for (int64_t j = 0; j < cols; ++j)
      denom += arow[j] ? std::exp(row[j] - mx) : 0.0;
    double* orow = v.data() + i * cols;
    for (int64_t j = 0; j < cols; ++j)
      orow[j] = arow[j] ? std::exp(row[j] - mx) / denom : 0.0;
  }
  Tensor out = wrap(make_node(scores.shape(), std::move(v), scores.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = scores.node().get();
  attach(out, {scores}, [on, xn, rows, cols]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    const double* y = on->value.data();
    double* dx = xn->grad.data();
    for (int64_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
      for (int64_t j = 0; j < cols; ++j) {
        const int64_t k = i * cols + j;
        dx[k] += y[k] * (g[k] - dot);  // masked entries have y == 0
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = wrap(make_node(Shape{}, std::vector<double>{acc}, x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = on->grad[0];
    for (double& d : xn->grad) d += g;
  });
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return phi + v * pdf;
      });
}

Tensor swish(const Tensor& x) {
  return unary_op(
      x, "swish",
      [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s + v * s * (1.0 - s);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, "sigmoid",
                  [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(x, "tanh", [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor glu(const Tensor& x) {
  const Shape& s = x.shape();
  const int64_t last = s.back();
  if (last % 2 != 0)
    throw ShapeError("glu: last extent must be even, got " + shape_str(s));
  const int64_t half = last / 2;
  const int64_t lanes = x.numel() / last;
  Shape out_shape = s;
  out_shape.back() = half;
  const double* px = x.data().data();
  std::vector<double> v(lanes * half);
  for (int64_t l = 0; l < lanes; ++l) {
    const double* row = px + l * last;
    double* orow = v.data() + l * half;
    for (int64_t j = 0; j < half; ++j) {
      const double s_gate = 1.0 / (1.0 + std::exp(-row[half + j]));
      orow[j] = row[j] * s_gate;
    }
  }
  Tensor out = wrap(make_node(std::move(out_shape), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, lanes, half, last]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    const double* xv = xn->value.data();
    double* dx = xn->grad.data();
    for (int64_t l = 0; l < lanes; ++l) {
      const double* row = xv + l * last;
      double* drow = dx + l * last;
      const double* grow = g + l * half;
      for (int64_t j = 0; j < half; ++j) {
        const double s_gate = 1.0 / (1.0 + std::exp(-row[half + j]));
        drow[j] += grow[j] * s_gate;
        drow[half + j] += grow[j] * row[j] * s_gate * (1.0 - s_gate);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Gather / dropout / cast
// ---------------------------------------------------------------------------

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids) {
  if (table.rank() != 2)
    throw ShapeError("gather_rows: table must be 2-D, got " +
                     shape_str(table.shape()));
  const int64_t rows = table.dim(0), width = table.dim(1);
  for (int64_t id : ids) {
    if (id < 0 || id >= rows)
      throw ShapeError("gather_rows: id " + std::to_string(id) +
                       " outside table " + shape_str(table.shape()));
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  const double* pt = table.data().data();
  std::vector<double> v(n * width);
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(v.data() + i * width, pt + ids[i] * width,
                sizeof(double) * width);
  Tensor out = wrap(make_node(Shape{n, width}, std::move(v), table.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* tn = table.node().get();
  attach(out, {table}, [on, tn, ids, width, n]() {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    const double* g = on->grad.data();
    double* dt = tn->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      double* dst = dt + ids[i] * width;
      const double* src = g + i * width;
      for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
  return out;
}

Tensor gather_cols(const Tensor& m, const std::vector<int64_t>& idx,
                   int64_t cols) {
  if (m.rank() != 2)
    throw ShapeError("gather_cols: need 2-D input, got " + shape_str(m.shape()));
  const int64_t rows = m.dim(0), n = m.dim(1);
  if (static_cast<int64_t>(idx.size()) != rows * cols)
    throw ShapeError("gather_cols: index count mismatch");
  const double* pm = m.data().data();
  std::vector<double> v(rows * cols);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) {
      const int64_t c = idx[i * cols + j];
      if (c < 0 || c >= n)
        throw ShapeError("gather_cols: column index out of range");
      v[i * cols + j] = pm[i * n + c];
    }
  }
  Tensor out = wrap(make_node(Shape{rows, cols}, std::move(v), m.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* mn = m.node().get();
  attach(out, {m}, [on, mn, idx, rows, cols, n]() {
    if (!mn->requires_grad) return;
    mn->ensure_grad();
    const double* g = on->grad.data();
    double* dm = mn->grad.data();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j)
        dm[i * n + idx[i * cols + j]] += g[i * cols + j];
  });
  return out;
}

Tensor dropout(const Tensor& x, double p, bool train, RandomSource& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  const int64_t n = x.numel();
  const double inv_keep = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(n);
  const double* px = x.data().data();
  std::vector<double> v(n);
  for (int64_t i = 0; i < n; ++i) {
    const double m = (rng.uniform() >= p) ? inv_keep : 0.0;
    (*mask)[i] = m;
    v[i] = px[i] * m;
  }
  Tensor out = wrap(make_node(x.shape(), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, mask, n]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    double* dx = xn->grad.data();
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * (*mask)[i];
  });
  return out;
}

Tensor cast(const Tensor& x, Dtype dtype) {
  if (x.dtype() == dtype) return x;
  if (x.requires_grad())
    throw ConfigError("cast: cannot change dtype of a gradient-tracking tensor");
  return wrap(make_node(x.shape(), x.data(), dtype));
}

}  // namespace nxf
