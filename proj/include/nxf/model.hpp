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

#include "nxf/decoder.hpp"
#include "nxf/encoder.hpp"

namespace nxf {

// Full CTC/AED model: encoder, linear CTC head over [blank, labels], and an
// attention decoder sharing the encoder output.
struct ModelConfig {
  std::string preset;
  EncoderConfig encoder;
  DecoderConfig decoder;
  int64_t vocab = 0;   // CTC classes including blank 0
  double alpha = 0.3;  // CTC weight in the joint objective

  void validate() const;

  // conformer_s, conformer_l, nextformer_s, nextformer_l, nextformer_xs
  static ModelConfig from_preset(const std::string& name);
  static const std::vector<std::string>& preset_names();
  // component-study variant: nextformer_s with the CNTF swapped for the
  // 8-layer CNN stack
  static ModelConfig nextformer_s_cnn8();
};

struct Model {
  ModelConfig cfg;
  Encoder encoder;
  Linear ctc_head;  // dim -> vocab
  TransformerDecoder decoder;

  static Model make(const ModelConfig& cfg, uint64_t seed);

  Tensor encode(const Tensor& features, bool train, RandomSource& rng) const;
  // log-softmax CTC scores for H
  Tensor ctc_log_probs(const Tensor& encoded) const;
  LossBreakdown loss(const Tensor& features, const LabelSequence& y,
                     bool train, RandomSource& rng) const;
  std::vector<int64_t> greedy_transcribe(const Tensor& features) const;

  void visit(const ParamVisitor& v);
  int64_t param_count() const;
  void set_trainable(bool enable);
  void zero_grads();
};

}  // namespace nxf
