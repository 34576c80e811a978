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

#include "nxf/nn.hpp"

#include <cmath>
#include <cstring>

#include "nxf/detail/autograd.hpp"

namespace nxf {

using detail::attach;
using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn;
using detail::make_node;
using detail::promote;
using detail::wrap;

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out,
                      RandomSource& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::rand_uniform(std::move(shape), rng, -limit, limit);
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvSpec
// ---------------------------------------------------------------------------

void ConvSpec::validate() const {
  if (kernel_t < 1 || kernel_f < 1)
    throw ConfigError("conv: kernel extents must be >= 1");
  if (stride_t < 1 || stride_f < 1)
    throw ConfigError("conv: strides must be >= 1");
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError("conv: channel counts must be >= 1");
  if (depthwise && in_channels != out_channels)
    throw ConfigError("conv: depthwise requires in == out channels");
}

int64_t ConvSpec::out_extent_t(int64_t t) const {
  if (pad == PadMode::Valid || pad == PadMode::ValidTimeSameFreq) {
    if (t < kernel_t) throw ShapeError("conv: valid padding needs T >= kernel");
    return (t - kernel_t) / stride_t + 1;
  }
  return ceil_div(t, stride_t);
}

int64_t ConvSpec::out_extent_f(int64_t f) const {
  if (pad == PadMode::Valid) {
    if (f < kernel_f) throw ShapeError("conv: valid padding needs F >= kernel");
    return (f - kernel_f) / stride_f + 1;
  }
  return ceil_div(f, stride_f);
}

int64_t ConvSpec::weight_count() const {
  return depthwise ? out_channels * kernel_t * kernel_f
                   : out_channels * in_channels * kernel_t * kernel_f;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
              const Tensor& bias) {
  spec.validate();
  if (x.rank() != 3)
    throw ShapeError("conv2d: input must be [C,T,F], got " +
                     shape_str(x.shape()));
  const int64_t ci_n = x.dim(0), t_in = x.dim(1), f_in = x.dim(2);
  if (ci_n != spec.in_channels)
    throw ShapeError("conv2d: input channels " + shape_str(x.shape()) +
                     " vs spec in=" + std::to_string(spec.in_channels));
  if (t_in == 0 || f_in == 0)
    throw ShapeError("conv2d: zero-size input " + shape_str(x.shape()));
  const Shape want_w = spec.depthwise
                           ? Shape{spec.out_channels, spec.kernel_t, spec.kernel_f}
                           : Shape{spec.out_channels, spec.in_channels,
                                   spec.kernel_t, spec.kernel_f};
  if (weight.shape() != want_w)
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) +
                     " vs expected " + shape_str(want_w));
  if (bias.defined() && bias.shape() != Shape{spec.out_channels})
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                     " vs out channels " + std::to_string(spec.out_channels));

  const int64_t t_out = spec.out_extent_t(t_in);
  const int64_t f_out = spec.out_extent_f(f_in);
  const int64_t co_n = spec.out_channels;

  // time-axis left pad
  int64_t pad_t = 0;
  if (spec.pad == PadMode::Same) {
    pad_t = std::max<int64_t>(
                (t_out - 1) * spec.stride_t + spec.kernel_t - t_in, 0) /
            2;
  } else if (spec.pad == PadMode::CausalTimeSameFreq) {
    pad_t = spec.kernel_t - 1;  // window ends exactly at t' * stride_t
  }
  int64_t pad_f = 0;
  if (spec.pad != PadMode::Valid) {
    pad_f = std::max<int64_t>(
                (f_out - 1) * spec.stride_f + spec.kernel_f - f_in, 0) /
            2;
  }
  if (spec.pad == PadMode::ValidTimeSameFreq) pad_t = 0;

  // Pointwise fast path: 1x1 stride-1 dense conv is a GEMM over positions.
  const bool pointwise = !spec.depthwise && spec.kernel_t == 1 &&
                         spec.kernel_f == 1 && spec.stride_t == 1 &&
                         spec.stride_f == 1;

  const double* px = x.data().data();
  const double* pw = weight.data().data();
  const double* pb = bias.defined() ? bias.data().data() : nullptr;
  std::vector<double> v(co_n * t_out * f_out);

  if (pointwise) {
    gemm_nn(pw, px, v.data(), co_n, ci_n, t_in * f_in);
    if (pb) {
      for (int64_t co = 0; co < co_n; ++co) {
        double* row = v.data() + co * t_in * f_in;
        for (int64_t i = 0; i < t_in * f_in; ++i) row[i] += pb[co];
      }
    }
  } else {
    // Tap-outer ordering: every output element still accumulates its
    // contributions in ascending (ci, kt, kf) order, matching the
    // nested-loop oracle bit for bit, while the inner loops stream over
    // contiguous rows.
    const int64_t ktn = spec.kernel_t, kfn = spec.kernel_f;
    const int64_t st = spec.stride_t, sf = spec.stride_f;
    for (int64_t co = 0; co < co_n; ++co) {
      double* vc = v.data() + co * t_out * f_out;
      const double bias_v = pb ? pb[co] : 0.0;
      for (int64_t i = 0; i < t_out * f_out; ++i) vc[i] = bias_v;
      const int64_t ci_lo = spec.depthwise ? co : 0;
      const int64_t ci_hi = spec.depthwise ? co + 1 : ci_n;
      for (int64_t ci = ci_lo; ci < ci_hi; ++ci) {
        const double* xc = px + ci * t_in * f_in;
        const double* wc = spec.depthwise
                               ? pw + co * ktn * kfn
                               : pw + (co * ci_n + ci) * ktn * kfn;
        for (int64_t kt = 0; kt < ktn; ++kt) {
          // valid output rows for this tap: 0 <= to*st - pad_t + kt < t_in
          int64_t to_lo = (pad_t - kt + st - 1) / st;
          if (to_lo < 0) to_lo = 0;
          const int64_t tnum = t_in - 1 - kt + pad_t;
          int64_t to_hi = tnum < 0 ? 0 : tnum / st + 1;
          if (to_hi > t_out) to_hi = t_out;
          for (int64_t kf = 0; kf < kfn; ++kf) {
            const double wv = wc[kt * kfn + kf];
            int64_t fo_lo = (pad_f - kf + sf - 1) / sf;
            if (fo_lo < 0) fo_lo = 0;
            const int64_t fnum = f_in - 1 - kf + pad_f;
            int64_t fo_hi = fnum < 0 ? 0 : fnum / sf + 1;
            if (fo_hi > f_out) fo_hi = f_out;
            for (int64_t to = to_lo; to < to_hi; ++to) {
              const int64_t ti = to * st - pad_t + kt;
              double* __restrict__ orow = vc + to * f_out;
              const double* __restrict__ xrow = xc + ti * f_in - pad_f + kf;
              if (sf == 1) {
                for (int64_t fo = fo_lo; fo < fo_hi; ++fo)
                  orow[fo] += wv * xrow[fo];
              } else {
                for (int64_t fo = fo_lo; fo < fo_hi; ++fo)
                  orow[fo] += wv * xrow[fo * sf];
              }
            }
          }
        }
      }
    }
  }

  Tensor out = wrap(make_node(Shape{co_n, t_out, f_out}, std::move(v),
                              promote(x.dtype(), weight.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  TensorNode* wn = weight.node().get();
  TensorNode* bn = bias.defined() ? bias.node().get() : nullptr;
  ConvSpec sp = spec;
  auto bwd = [on, xn, wn, bn, sp, t_in, f_in, t_out, f_out, co_n, ci_n, pad_t,
              pad_f]() {
    const double* g = on->grad.data();
    const bool need_x = xn->requires_grad;
    const bool need_w = wn->requires_grad;
    const bool need_b = bn && bn->requires_grad;
    if (need_x) xn->ensure_grad();
    if (need_w) wn->ensure_grad();
    if (need_b) bn->ensure_grad();
    if (!need_x && !need_w && !need_b) return;

    const double* px2 = xn->value.data();
    const double* pw2 = wn->value.data();
    const int64_t ktn = sp.kernel_t, kfn = sp.kernel_f;
    const bool pointwise2 = !sp.depthwise && ktn == 1 && kfn == 1 &&
                            sp.stride_t == 1 && sp.stride_f == 1;
    if (pointwise2) {
      const int64_t npos = t_in * f_in;
      if (need_x) {
        std::vector<double> dx(ci_n * npos);
        gemm_tn(pw2, g, dx.data(), co_n, ci_n, npos);
        detail::accumulate(xn, dx.data(), ci_n * npos);
      }
      if (need_w) {
        std::vector<double> dw(co_n * ci_n);
        gemm_nt(g, px2, dw.data(), co_n, npos, ci_n);
        detail::accumulate(wn, dw.data(), co_n * ci_n);
      }
      if (need_b) {
        double* db = bn->grad.data();
        for (int64_t co = 0; co < co_n; ++co) {
          double acc = 0.0;
          const double* grow = g + co * npos;
          for (int64_t i = 0; i < npos; ++i) acc += grow[i];
          db[co] += acc;
        }
      }
      return;
    }

    double* dx = need_x ? xn->grad.data() : nullptr;
    double* dw = need_w ? wn->grad.data() : nullptr;
    double* db = need_b ? bn->grad.data() : nullptr;
    for (int64_t co = 0; co < co_n; ++co) {
      const int64_t ci_lo = sp.depthwise ? co : 0;
      const int64_t ci_hi = sp.depthwise ? co + 1 : ci_n;
      for (int64_t to = 0; to < t_out; ++to) {
        const int64_t t0 = to * sp.stride_t - pad_t;
        for (int64_t fo = 0; fo < f_out; ++fo) {
          const int64_t f0 = fo * sp.stride_f - pad_f;
          const double gv = g[(co * t_out + to) * f_out + fo];
          if (gv == 0.0) continue;
          if (db) db[co] += gv;
          for (int64_t ci = ci_lo; ci < ci_hi; ++ci) {
            const int64_t woff = sp.depthwise ? co * ktn * kfn
                                              : (co * ci_n + ci) * ktn * kfn;
            for (int64_t kt = 0; kt < ktn; ++kt) {
              const int64_t ti = t0 + kt;
              if (ti < 0 || ti >= t_in) continue;
              for (int64_t kf = 0; kf < kfn; ++kf) {
                const int64_t fi = f0 + kf;
                if (fi < 0 || fi >= f_in) continue;
                const int64_t xoff = (ci * t_in + ti) * f_in + fi;
                if (dx) dx[xoff] += gv * pw2[woff + kt * kfn + kf];
                if (dw) dw[woff + kt * kfn + kf] += gv * px2[xoff];
              }
            }
          }
        }
      }
    }
  };
  if (bias.defined()) {
    attach(out, {x, weight, bias}, bwd);
  } else {
    attach(out, {x, weight}, bwd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// depthwise_conv1d over [T, d]
// ---------------------------------------------------------------------------

namespace {

// shared by the padded and valid 1-D depthwise variants; output frame m
// covers input rows [m + first_tap - pad_left, ...].
Tensor depthwise_conv1d_impl(const Tensor& x, const Tensor& weight,
                             const Tensor& bias, int64_t pad_left,
                             int64_t t_out);

}  // namespace

Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, bool causal) {
  const int64_t k = weight.rank() == 2 ? weight.dim(0) : 0;
  const int64_t pad_left = causal ? k - 1 : (k - 1) / 2;
  return depthwise_conv1d_impl(x, weight, bias, pad_left,
                               x.rank() == 2 ? x.dim(0) : 0);
}

Tensor depthwise_conv1d_valid(const Tensor& x, const Tensor& weight,
                              const Tensor& bias) {
  const int64_t k = weight.rank() == 2 ? weight.dim(0) : 0;
  const int64_t t_out = (x.rank() == 2 ? x.dim(0) : 0) - k + 1;
  if (t_out < 1)
    throw ShapeError("depthwise_conv1d_valid: input " + shape_str(x.shape()) +
                     " shorter than kernel " + shape_str(weight.shape()));
  return depthwise_conv1d_impl(x, weight, bias, 0, t_out);
}

namespace {

Tensor depthwise_conv1d_impl(const Tensor& x, const Tensor& weight,
                             const Tensor& bias, int64_t pad_left,
                             int64_t t_out) {
  if (x.rank() != 2)
    throw ShapeError("depthwise_conv1d: input must be [T,d], got " +
                     shape_str(x.shape()));
  const int64_t t_in = x.dim(0), d = x.dim(1);
  if (t_in == 0) throw ShapeError("depthwise_conv1d: zero-size input");
  if (weight.rank() != 2 || weight.dim(1) != d)
    throw ShapeError("depthwise_conv1d: weight " + shape_str(weight.shape()) +
                     " vs input " + shape_str(x.shape()));
  if (bias.defined() && bias.shape() != Shape{d})
    throw ShapeError("depthwise_conv1d: bias " + shape_str(bias.shape()));
  const int64_t k = weight.dim(0);

  const double* px = x.data().data();
  const double* pw = weight.data().data();
  const double* pb = bias.defined() ? bias.data().data() : nullptr;
  std::vector<double> v(t_out * d);
  for (int64_t t = 0; t < t_out; ++t) {
    double* orow = v.data() + t * d;
    if (pb) {
      std::memcpy(orow, pb, sizeof(double) * d);
    } else {
      std::memset(orow, 0, sizeof(double) * d);
    }
    for (int64_t i = 0; i < k; ++i) {
      const int64_t ti = t - pad_left + i;
      if (ti < 0 || ti >= t_in) continue;
      const double* xrow = px + ti * d;
      const double* wrow = pw + i * d;
      for (int64_t c = 0; c < d; ++c) orow[c] += wrow[c] * xrow[c];
    }
  }
  Tensor out = wrap(make_node(Shape{t_out, d}, std::move(v),
                              promote(x.dtype(), weight.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  TensorNode* wn = weight.node().get();
  TensorNode* bn = bias.defined() ? bias.node().get() : nullptr;
  auto bwd = [on, xn, wn, bn, t_in, t_out, d, k, pad_left]() {
    const double* g = on->grad.data();
    const bool need_x = xn->requires_grad;
    const bool need_w = wn->requires_grad;
    const bool need_b = bn && bn->requires_grad;
    if (need_x) xn->ensure_grad();
    if (need_w) wn->ensure_grad();
    if (need_b) bn->ensure_grad();
    const double* px2 = xn->value.data();
    const double* pw2 = wn->value.data();
    for (int64_t t = 0; t < t_out; ++t) {
      const double* grow = g + t * d;
      if (need_b) {
        double* db = bn->grad.data();
        for (int64_t c = 0; c < d; ++c) db[c] += grow[c];
      }
      for (int64_t i = 0; i < k; ++i) {
        const int64_t ti = t - pad_left + i;
        if (ti < 0 || ti >= t_in) continue;
        if (need_x) {
          double* dxrow = xn->grad.data() + ti * d;
          const double* wrow = pw2 + i * d;
          for (int64_t c = 0; c < d; ++c) dxrow[c] += grow[c] * wrow[c];
        }
        if (need_w) {
          double* dwrow = wn->grad.data() + i * d;
          const double* xrow = px2 + ti * d;
          for (int64_t c = 0; c < d; ++c) dwrow[c] += grow[c] * xrow[c];
        }
      }
    }
  };
  if (bias.defined()) {
    attach(out, {x, weight, bias}, bwd);
  } else {
    attach(out, {x, weight}, bwd);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, int axis) {
  const int r = x.rank();
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("layer_norm: axis out of range for " + shape_str(x.shape()));
  const int64_t len = x.shape()[a];
  if (gamma.shape() != Shape{len} || beta.shape() != Shape{len})
    throw ShapeError("layer_norm: params " + shape_str(gamma.shape()) +
                     " vs normalized extent " + std::to_string(len));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[i];
  for (int i = a + 1; i < r; ++i) inner *= x.shape()[i];

  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pbeta = beta.data().data();
  std::vector<double> v(x.numel());
  // per-lane inverse stddev, kept for backward
  auto inv_std = std::make_shared<std::vector<double>>(outer * inner);
  auto means = std::make_shared<std::vector<double>>(outer * inner);
  // Lane accumulation runs over l ascending in both layouts; the blocked
  // form just walks memory contiguously when the normalized axis is not
  // the innermost one.
  for (int64_t o = 0; o < outer; ++o) {
    const int64_t obase = o * len * inner;
    double* mu_lane = means->data() + o * inner;
    double* inv_lane = inv_std->data() + o * inner;
    std::fill(mu_lane, mu_lane + inner, 0.0);
    for (int64_t l = 0; l < len; ++l) {
      const double* __restrict__ row = px + obase + l * inner;
      for (int64_t in = 0; in < inner; ++in) mu_lane[in] += row[in];
    }
    for (int64_t in = 0; in < inner; ++in)
      mu_lane[in] /= static_cast<double>(len);
    std::fill(inv_lane, inv_lane + inner, 0.0);
    for (int64_t l = 0; l < len; ++l) {
      const double* __restrict__ row = px + obase + l * inner;
      for (int64_t in = 0; in < inner; ++in) {
        const double dlt = row[in] - mu_lane[in];
        inv_lane[in] += dlt * dlt;
      }
    }
    for (int64_t in = 0; in < inner; ++in)
      inv_lane[in] = 1.0 / std::sqrt(inv_lane[in] / static_cast<double>(len) + eps);
    for (int64_t l = 0; l < len; ++l) {
      const double* __restrict__ row = px + obase + l * inner;
      double* __restrict__ orow = v.data() + obase + l * inner;
      const double g2 = pg[l], b2 = pbeta[l];
      for (int64_t in = 0; in < inner; ++in)
        orow[in] = (row[in] - mu_lane[in]) * inv_lane[in] * g2 + b2;
    }
  }
  Tensor out = wrap(make_node(x.shape(), std::move(v),
                              promote(x.dtype(), gamma.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  TensorNode* gn = gamma.node().get();
  TensorNode* bn = beta.node().get();
  attach(out, {x, gamma, beta},
         [on, xn, gn, bn, inv_std, means, outer, inner, len]() {
    const double* g = on->grad.data();
    const bool need_x = xn->requires_grad;
    const bool need_g = gn->requires_grad;
    const bool need_b = bn->requires_grad;
    if (need_x) xn->ensure_grad();
    if (need_g) gn->ensure_grad();
    if (need_b) bn->ensure_grad();
    const double* px2 = xn->value.data();
    const double* pg2 = gn->value.data();
    const double n_inv = 1.0 / static_cast<double>(len);
    std::vector<double> sum_dxh(inner), sum_dxh_xh(inner);
    for (int64_t o = 0; o < outer; ++o) {
      const int64_t obase = o * len * inner;
      const double* mu_lane = means->data() + o * inner;
      const double* inv_lane = inv_std->data() + o * inner;
      if (need_g || need_b) {
        for (int64_t l = 0; l < len; ++l) {
          const double* grow = g + obase + l * inner;
          const double* xrow = px2 + obase + l * inner;
          double acc_b = 0.0, acc_g = 0.0;
          for (int64_t in = 0; in < inner; ++in) {
            acc_b += grow[in];
            acc_g += grow[in] * (xrow[in] - mu_lane[in]) * inv_lane[in];
          }
          if (need_b) bn->grad[l] += acc_b;
          if (need_g) gn->grad[l] += acc_g;
        }
      }
      if (need_x) {
        std::fill(sum_dxh.begin(), sum_dxh.end(), 0.0);
        std::fill(sum_dxh_xh.begin(), sum_dxh_xh.end(), 0.0);
        for (int64_t l = 0; l < len; ++l) {
          const double* grow = g + obase + l * inner;
          const double* xrow = px2 + obase + l * inner;
          const double gl = pg2[l];
          for (int64_t in = 0; in < inner; ++in) {
            const double dxh = grow[in] * gl;
            sum_dxh[in] += dxh;
            sum_dxh_xh[in] += dxh * (xrow[in] - mu_lane[in]) * inv_lane[in];
          }
        }
        for (int64_t l = 0; l < len; ++l) {
          const double* grow = g + obase + l * inner;
          const double* xrow = px2 + obase + l * inner;
          double* __restrict__ dxrow = xn->grad.data() + obase + l * inner;
          const double gl = pg2[l];
          for (int64_t in = 0; in < inner; ++in) {
            const double dxh = grow[in] * gl;
            const double xh = (xrow[in] - mu_lane[in]) * inv_lane[in];
            dxrow[in] += inv_lane[in] * (dxh - n_inv * sum_dxh[in] -
                                         xh * n_inv * sum_dxh_xh[in]);
          }
        }
      }
    }
  });
  return out;
}

Tensor zero_from(const Tensor& x, int axis, int64_t start) {
  const int r = x.rank();
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("zero_from: axis out of range for " + shape_str(x.shape()));
  const int64_t len = x.shape()[a];
  if (start < 0 || start > len)
    throw ShapeError("zero_from: start " + std::to_string(start) +
                     " outside extent " + std::to_string(len));
  if (start == len) return x;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[i];
  for (int i = a + 1; i < r; ++i) inner *= x.shape()[i];

  std::vector<double> v = x.data();
  for (int64_t o = 0; o < outer; ++o)
    std::fill(v.begin() + (o * len + start) * inner,
              v.begin() + (o + 1) * len * inner, 0.0);
  Tensor out = detail::wrap(
      detail::make_node(x.shape(), std::move(v), x.dtype()));
  TensorNode* on = out.node().get();
  TensorNode* xn = x.node().get();
  attach(out, {x}, [on, xn, outer, inner, len, start]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = on->grad.data();
    double* dx = xn->grad.data();
    for (int64_t o = 0; o < outer; ++o) {
      const int64_t base = o * len * inner;
      for (int64_t i = 0; i < start * inner; ++i) dx[base + i] += g[base + i];
    }
  });
  return out;
}

LayerNorm LayerNorm::make(int64_t dim) {
  LayerNorm ln;
  ln.gamma = Tensor::full({dim}, 1.0);
  ln.beta = Tensor::zeros({dim});
  return ln;
}

Tensor LayerNorm::forward(const Tensor& x, int axis) const {
  return layer_norm(x, gamma, beta, eps, axis);
}

// ---------------------------------------------------------------------------
// Activations / Linear
// ---------------------------------------------------------------------------

Tensor activation(const Tensor& x, Act kind) {
  switch (kind) {
    case Act::Gelu:
      return gelu(x);
    case Act::Swish:
      return swish(x);
    case Act::Relu:
      return relu(x);
    case Act::Glu:
      return glu(x);
  }
  throw ConfigError("activation: unknown kind");
}

Linear Linear::make(int64_t in, int64_t out, RandomSource& rng, bool bias) {
  Linear l;
  l.w = xavier_uniform({in, out}, in, out, rng);
  if (bias) l.b = Tensor::zeros({out});
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, w);
  return b.defined() ? add(y, b) : y;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

Tensor sinusoid_table(const std::vector<int64_t>& positions, int64_t dim) {
  const int64_t n = static_cast<int64_t>(positions.size());
  std::vector<double> v(n * dim);
  for (int64_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(positions[i]);
    for (int64_t kpair = 0; kpair * 2 < dim; ++kpair) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(kpair) /
                                static_cast<double>(dim));
      v[i * dim + 2 * kpair] = std::sin(pos * freq);
      if (2 * kpair + 1 < dim) v[i * dim + 2 * kpair + 1] = std::cos(pos * freq);
    }
  }
  return Tensor::from_vector({n, dim}, std::move(v));
}

std::vector<uint8_t> full_mask(int64_t rows, int64_t cols) {
  return std::vector<uint8_t>(rows * cols, 1);
}

MultiHeadAttention MultiHeadAttention::make(int64_t dim, int heads,
                                            PosEncoding pos,
                                            double attn_dropout,
                                            RandomSource& rng) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("attention: dim " + std::to_string(dim) +
                      " not divisible by heads " + std::to_string(heads));
  MultiHeadAttention m;
  m.dim = dim;
  m.heads = heads;
  m.pos = pos;
  m.attn_dropout = attn_dropout;
  m.wq = Linear::make(dim, dim, rng);
  m.wk = Linear::make(dim, dim, rng);
  m.wv = Linear::make(dim, dim, rng);
  m.wo = Linear::make(dim, dim, rng);
  if (pos == PosEncoding::Relative) {
    m.wpos = Linear::make(dim, dim, rng, /*bias=*/false);
    m.bias_u = Tensor::randn({heads, dim / heads}, rng, 0.02);
    m.bias_v = Tensor::randn({heads, dim / heads}, rng, 0.02);
  }
  return m;
}

int64_t MultiHeadAttention::param_count() const {
  int64_t n = wq.param_count() + wk.param_count() + wv.param_count() +
              wo.param_count();
  if (pos == PosEncoding::Relative)
    n += wpos.param_count() + bias_u.numel() + bias_v.numel();
  return n;
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k,
                                   const Tensor& v,
                                   const std::vector<uint8_t>& allow,
                                   bool train, RandomSource& rng,
                                   int64_t q_pos_offset) const {
  if (k.shape() != v.shape() || k.rank() != 2 || k.dim(1) != dim)
    throw ShapeError("attention: key " + shape_str(k.shape()) + " / value " +
                     shape_str(v.shape()) + " mismatch");
  return attend(q, wk.forward(k), wv.forward(v), allow, train, rng,
                q_pos_offset);
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k_proj,
                                  const Tensor& v_proj,
                                  const std::vector<uint8_t>& allow,
                                  bool train, RandomSource& rng,
                                  int64_t q_pos_offset) const {
  if (q.rank() != 2 || q.dim(1) != dim)
    throw ShapeError("attention: query " + shape_str(q.shape()) + " vs dim " +
                     std::to_string(dim));
  const Tensor& kp = k_proj;
  const Tensor& vp = v_proj;
  if (kp.shape() != vp.shape() || kp.dim(1) != dim)
    throw ShapeError("attention: key " + shape_str(kp.shape()) + " / value " +
                     shape_str(vp.shape()) + " mismatch");
  const int64_t tq = q.dim(0), tk = kp.dim(0);
  if (static_cast<int64_t>(allow.size()) != tq * tk)
    throw ShapeError("attention: mask size " + std::to_string(allow.size()) +
                     " vs " + std::to_string(tq * tk));
  const int64_t dh = dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor qp = wq.forward(q);
  Tensor qh = permute(reshape(qp, {tq, heads, dh}), {1, 0, 2});
  Tensor kh = permute(reshape(kp, {tk, heads, dh}), {1, 0, 2});
  Tensor vh = permute(reshape(vp, {tk, heads, dh}), {1, 0, 2});

  Tensor rel;  // [heads, n_dist, dh]
  std::vector<int64_t> dist_index;
  int64_t lo = 0;
  if (pos == PosEncoding::Relative) {
    lo = q_pos_offset - (tk - 1);
    const int64_t hi = q_pos_offset + tq - 1;
    std::vector<int64_t> dists;
    dists.reserve(hi - lo + 1);
    for (int64_t d2 = lo; d2 <= hi; ++d2) dists.push_back(d2);
    Tensor table = sinusoid_table(dists, dim);
    Tensor r = wpos.forward(table);  // [n_dist, dim]
    rel = permute(reshape(r, {static_cast<int64_t>(dists.size()), heads, dh}),
                  {1, 0, 2});
    dist_index.resize(tq * tk);
    for (int64_t i = 0; i < tq; ++i)
      for (int64_t j = 0; j < tk; ++j)
        dist_index[i * tk + j] = (q_pos_offset + i - j) - lo;
  }

  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh1 = reshape(slice0(qh, h, h + 1), {tq, dh});
    Tensor kh1 = reshape(slice0(kh, h, h + 1), {tk, dh});
    Tensor vh1 = reshape(slice0(vh, h, h + 1), {tk, dh});
    Tensor scores;
    if (pos == PosEncoding::Relative) {
      Tensor u1 = reshape(slice0(bias_u, h, h + 1), {dh});
      Tensor v1 = reshape(slice0(bias_v, h, h + 1), {dh});
      Tensor rh1 = reshape(slice0(rel, h, h + 1), {rel.dim(1), dh});
      Tensor ac = matmul_nt(add(qh1, u1), kh1);                     // content
      Tensor bd = gather_cols(matmul_nt(add(qh1, v1), rh1),         // position
                              dist_index, tk);
      scores = add(ac, bd);
    } else {
      scores = matmul_nt(qh1, kh1);
    }
    Tensor w = masked_softmax(scale(scores, inv_sqrt_dh), allow);
    w = dropout(w, attn_dropout, train, rng);
    head_outs.push_back(reshape(matmul(w, vh1), {1, tq, dh}));
  }
  Tensor stacked = concat0(head_outs);                 // [heads, tq, dh]
  Tensor merged = reshape(permute(stacked, {1, 0, 2}), {tq, dim});
  return wo.forward(merged);
}

// ---------------------------------------------------------------------------
// Residual branch
// ---------------------------------------------------------------------------

Tensor residual_branch(const Tensor& x, const Tensor& branch,
                       const Tensor& ls_gamma, double sd_p, bool train,
                       RandomSource& rng, bool channels_first) {
  if (x.shape() != branch.shape())
    throw ShapeError("residual_branch: " + shape_str(x.shape()) + " vs " +
                     shape_str(branch.shape()));
  if (sd_p < 0.0 || sd_p >= 1.0)
    throw ConfigError("residual_branch: drop probability must be in [0,1)");
  Tensor scaled = branch;
  if (ls_gamma.defined()) {
    scaled = channels_first ? scale_channels(branch, ls_gamma)
                            : mul(branch, ls_gamma);
  }
  if (sd_p > 0.0) {
    if (train) {
      if (rng.uniform() < sd_p) return x;  // whole-branch drop
    } else {
      scaled = scale(scaled, 1.0 - sd_p);
    }
  }
  return add(x, scaled);
}

}  // namespace nxf
