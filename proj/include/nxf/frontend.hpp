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

#include <functional>
#include <string>
#include <vector>

#include "nxf/nn.hpp"
#include "nxf/tensor.hpp"

namespace nxf {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// ---------------------------------------------------------------------------
// ConvNeXt block: depthwise 7x7 -> LN (channels) -> pointwise c->4c -> GELU
// -> pointwise 4c->c -> LayerScale -> stochastic-depth residual.
// ---------------------------------------------------------------------------

struct ConvNextBlock {
  int64_t channels = 0;
  int64_t kernel = 7;
  bool causal = false;
  double sd_p = 0.1;
  Tensor dw_w, dw_b;    // [c,k,k], [c]
  LayerNorm norm;       // over channels
  Tensor pw1_w, pw1_b;  // [4c,c,1,1], [4c]
  Tensor pw2_w, pw2_b;  // [c,4c,1,1], [c]
  Tensor ls_gamma;      // [c]

  static ConvNextBlock make(int64_t channels, double sd_p, bool causal,
                            double ls_init, RandomSource& rng);
  // x [c,T,F] -> [c,T,F]
  Tensor forward(const Tensor& x, bool train, RandomSource& rng) const;
  // Chunked inference; `tail` holds the depthwise conv's left context.
  Tensor forward_stream(const Tensor& chunk, Tensor& tail) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// ---------------------------------------------------------------------------
// CNTF: staged ConvNeXt frontend. 10ms input frames, 40ms output frames.
// ---------------------------------------------------------------------------

struct CntfConfig {
  int64_t base_channels = 56;  // stage channels are c, 2c, 3c
  int stage_blocks[3] = {3, 3, 3};
  int64_t feat_dim = 80;
  int64_t out_dim = 256;
  bool causal = false;
  double sd_p = 0.1;
  double ls_init = 1e-6;

  void validate() const;
};

struct CntfStreamState {
  Tensor ds1_tail;
  std::vector<Tensor> stage1_tails;
  Tensor ds2_tail;
  std::vector<Tensor> stage2_tails;
  std::vector<Tensor> stage3_tails;  // ds3 has kernel 1 on time: no tail
};

struct CntfFrontend {
  CntfConfig cfg;
  Tensor ds1_w, ds1_b;  // conv 1->c, kernel=stride=2x2, then LN
  LayerNorm ds1_norm;
  std::vector<ConvNextBlock> stage1;
  LayerNorm ds2_norm;  // LN then conv c->2c, kernel=stride=2x2
  Tensor ds2_w, ds2_b;
  std::vector<ConvNextBlock> stage2;
  LayerNorm ds3_norm;  // LN then conv 2c->3c, kernel=stride=1x2 (freq only)
  Tensor ds3_w, ds3_b;
  std::vector<ConvNextBlock> stage3;
  Linear out_proj;  // 3c * F/8 -> d

  static CntfFrontend make(const CntfConfig& cfg, RandomSource& rng);
  // x [T, feat_dim] -> [ceil(T/4), out_dim]; T >= 4. valid_frames < T marks
  // trailing padding, which is kept at exactly zero through every stage.
  Tensor forward(const Tensor& x, bool train, RandomSource& rng,
                 int64_t valid_frames = -1) const;
  // causal chunked inference; chunk length must be a multiple of 4
  Tensor forward_stream(const Tensor& chunk, CntfStreamState& state) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// ---------------------------------------------------------------------------
// Baseline frontends sharing the CNTF output contract (40ms frames, dim d).
// ---------------------------------------------------------------------------

enum class FrontendKind { Cntf, ConformerSubsampling, Cnn8 };

struct LegacyFrontendConfig {
  FrontendKind variant = FrontendKind::ConformerSubsampling;
  int64_t channels = 256;  // conformer subsampling uses out_dim channels
  int64_t feat_dim = 80;
  int64_t out_dim = 256;
  bool causal = false;
};

struct LegacyStreamState {
  std::vector<Tensor> conv_tails;
};

struct LegacyFrontend {
  LegacyFrontendConfig cfg;
  std::vector<ConvSpec> specs;
  std::vector<Tensor> conv_w, conv_b;
  Linear out_proj;

  static LegacyFrontend make(const LegacyFrontendConfig& cfg, RandomSource& rng);
  // [T,F] -> [ceil(T/4), d]
  Tensor forward(const Tensor& x, int64_t valid_frames = -1) const;
  Tensor forward_stream(const Tensor& chunk, LegacyStreamState& state) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// time-axis helpers for [C,T,F] tensors
Tensor time_concat(const Tensor& a, const Tensor& b);
Tensor time_tail(const Tensor& x, int64_t n);

}  // namespace nxf
