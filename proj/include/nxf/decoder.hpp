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

#include <string>
#include <vector>

#include "nxf/ctc.hpp"
#include "nxf/frontend.hpp"  // ParamVisitor
#include "nxf/nn.hpp"

namespace nxf {

struct DecoderConfig {
  int num_layers = 6;
  int64_t dim = 256;
  int heads = 4;
  int64_t ffn_dim = 2048;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int64_t vocab = 0;  // CTC classes including blank 0

  int64_t sos_eos() const { return vocab; }  // appended class
  int64_t num_classes() const { return vocab + 1; }
  void validate() const;
};

struct DecoderLayer {
  LayerNorm norm_self, norm_src, norm_ff;
  MultiHeadAttention self_attn, src_attn;
  Linear ff_in, ff_out;

  static DecoderLayer make(const DecoderConfig& cfg, RandomSource& rng);
  Tensor forward(const Tensor& x, const Tensor& memory, bool train,
                 RandomSource& rng) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

// Autoregressive Transformer decoder with absolute sinusoidal positions and
// causal self-attention over the target side.
struct TransformerDecoder {
  DecoderConfig cfg;
  Tensor embed;  // [vocab+1, dim]
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;
  Linear out_proj;  // dim -> vocab+1

  static TransformerDecoder make(const DecoderConfig& cfg, RandomSource& rng);
  // Teacher-forced logits for the given decoder input token ids.
  Tensor forward_logits(const std::vector<int64_t>& tokens,
                        const Tensor& memory, bool train,
                        RandomSource& rng) const;
  // Mean label-smoothed cross-entropy with input sos+y and target y+eos.
  Tensor attention_loss(const Tensor& memory, const LabelSequence& y,
                        bool train, RandomSource& rng) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// Mean label-smoothed NLL: (1-eps) on the target, eps spread uniformly over
// the remaining classes.
Tensor label_smoothed_nll(const Tensor& logits,
                          const std::vector<int64_t>& targets, double eps);

// Eq-style convex combination: alpha * ctc + (1 - alpha) * att.
Tensor joint_loss(const Tensor& l_ctc, const Tensor& l_att, double alpha);

struct LossBreakdown {
  double ctc = 0.0;
  double att = 0.0;
  double alpha = 0.0;
  double joint = 0.0;
  bool ctc_feasible = true;
  Tensor joint_tensor;  // differentiable scalar
};

}  // namespace nxf
