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
#include <string>
#include <vector>

#include "nxf/tensor.hpp"

namespace nxf {

// ---------------------------------------------------------------------------
// Convolutions. Spatial layout is [C, T, F] with time first.
// ---------------------------------------------------------------------------

enum class PadMode {
  Same,                // centered zero padding, output extent ceil(n/stride)
  CausalTimeSameFreq,  // past-only on time, centered on frequency
  Valid,               // no padding
  ValidTimeSameFreq,   // no time padding, centered on frequency (streaming)
};

struct ConvSpec {
  int64_t kernel_t = 1, kernel_f = 1;
  int64_t stride_t = 1, stride_f = 1;
  int64_t in_channels = 1, out_channels = 1;
  PadMode pad = PadMode::Same;
  bool depthwise = false;

  void validate() const;
  int64_t out_extent_t(int64_t t) const;
  int64_t out_extent_f(int64_t f) const;
  int64_t weight_count() const;  // excluding bias
};

// x [C_in, T, F]; weight [C_out, C_in, kt, kf], or [C, kt, kf] when depthwise;
// bias [C_out] (may be undefined). Under CausalTimeSameFreq the output at
// time t depends only on inputs at times <= t * stride_t.
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
              const Tensor& bias);

// Per-channel 1-D convolution over [T, d]; weight [k, d], bias [d] optional.
// Equivalent to the kf=1, F=1 degenerate case of depthwise conv2d.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, bool causal);
// No-padding variant emitting T-k+1 frames; streaming runs this over
// [cached tail ++ chunk].
Tensor depthwise_conv1d_valid(const Tensor& x, const Tensor& weight,
                              const Tensor& bias);

// ---------------------------------------------------------------------------
// Normalization / activations
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, int axis);

// Zeroes every slice with index >= start along `axis`; gradients for the
// zeroed region are dropped. Keeps padding frames exactly zero between
// pipeline stages so padded and exact-length runs agree bit for bit.
Tensor zero_from(const Tensor& x, int axis, int64_t start);

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  static LayerNorm make(int64_t dim);
  Tensor forward(const Tensor& x, int axis = -1) const;
  int64_t param_count() const { return gamma.numel() + beta.numel(); }
};

enum class Act { Gelu, Swish, Relu, Glu };

Tensor activation(const Tensor& x, Act kind);

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]; undefined when bias-free

  static Linear make(int64_t in, int64_t out, RandomSource& rng,
                     bool bias = true);
  Tensor forward(const Tensor& x) const;  // [T, in] -> [T, out]
  int64_t param_count() const { return w.numel() + (b.defined() ? b.numel() : 0); }
};

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

enum class PosEncoding { Relative, Absolute, None };

// Sinusoidal table for the given (possibly negative) positions, [n, dim].
Tensor sinusoid_table(const std::vector<int64_t>& positions, int64_t dim);

std::vector<uint8_t> full_mask(int64_t rows, int64_t cols);

struct MultiHeadAttention {
  int64_t dim = 0;
  int heads = 1;
  PosEncoding pos = PosEncoding::Relative;
  double attn_dropout = 0.0;
  Linear wq, wk, wv, wo;
  Linear wpos;            // relative only, bias-free
  Tensor bias_u, bias_v;  // [heads, dim/heads], relative only

  static MultiHeadAttention make(int64_t dim, int heads, PosEncoding pos,
                                 double attn_dropout, RandomSource& rng);

  // q [Tq, d]; k, v [Tk, d]; allow is a row-major [Tq x Tk] mask where true
  // means "may attend". q_pos_offset is the global index of q row 0 when the
  // key sequence starts at global index 0 (used by streaming).
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<uint8_t>& allow, bool train,
                 RandomSource& rng, int64_t q_pos_offset = 0) const;
  // Same but with keys/values already through wk/wv; streaming caches these.
  Tensor attend(const Tensor& q, const Tensor& k_proj, const Tensor& v_proj,
                const std::vector<uint8_t>& allow, bool train,
                RandomSource& rng, int64_t q_pos_offset = 0) const;

  int64_t param_count() const;
};

// ---------------------------------------------------------------------------
// Residual branch with LayerScale and stochastic depth
// ---------------------------------------------------------------------------

// Train: x + Bernoulli(keep = 1-p) * (gamma ⊙ branch); eval: x + (1-p) * (...).
// gamma may be undefined (no LayerScale). channels_first selects whether
// gamma indexes axis 0 ([C,T,F] layout) or the trailing axis ([T,d] layout).
// Eval mode never reads the RandomSource.
Tensor residual_branch(const Tensor& x, const Tensor& branch,
                       const Tensor& ls_gamma, double sd_p, bool train,
                       RandomSource& rng, bool channels_first);

}  // namespace nxf
