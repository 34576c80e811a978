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

#include "nxf/frontend.hpp"
#include "nxf/nn.hpp"
#include "nxf/tensor.hpp"

namespace nxf {

// ---------------------------------------------------------------------------
// Chunk attention masks
// ---------------------------------------------------------------------------

struct ChunkSpec {
  enum class Mode { Full, Fixed, Dynamic };
  Mode mode = Mode::Full;
  // post-frontend (40ms) frames per chunk; even, >= 2
  int64_t chunk_frames = 16;

  void validate() const;
};

// Row-major [frames x frames] allow mask: position i attends j iff
// chunk(j) <= chunk(i) with chunk(i) = floor(i / chunk_size). Dynamic mode
// draws per call: probability 1/2 full attention, else a uniformly chosen
// even chunk size in [2, 50].
std::vector<uint8_t> make_chunk_mask(int64_t frames, const ChunkSpec& spec,
                                     RandomSource& rng);
// Fixed-size variant used internally once a size has been resolved.
std::vector<uint8_t> chunk_mask_fixed(int64_t frames, int64_t chunk_size);

// ---------------------------------------------------------------------------
// FSMN-style two-tap stride-2 downsampling
// ---------------------------------------------------------------------------

// out[m] = taps[0] ⊙ h[2m+1] + taps[1] ⊙ h[2m]; output length floor(T/2).
// Strictly causal: output m reads nothing after frame 2m+1.
Tensor fsmn_downsample(const Tensor& h, const Tensor& taps);

struct AdditionalDownsample {
  Tensor taps;  // [2, d]
  LayerNorm norm;

  static AdditionalDownsample make(int64_t dim, RandomSource& rng);
  // fsmn -> swish -> layer norm
  Tensor forward(const Tensor& h) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// ---------------------------------------------------------------------------
// Conformer block
// ---------------------------------------------------------------------------

struct ConformerConfig {
  int64_t dim = 256;
  int heads = 4;
  int64_t ffn_dim = 2048;
  int64_t conv_kernel = 15;
  double dropout = 0.1;
  double attn_dropout = 0.1;
  bool causal = false;
  PosEncoding pos = PosEncoding::Relative;
};

struct ConformerStreamState {
  Tensor k_cache, v_cache;  // projected keys/values, [frames_seen, dim]
  Tensor conv_tail;         // depthwise conv left context, [kernel-1, dim]
  int64_t frames_seen = 0;
};

struct ConformerBlock {
  ConformerConfig cfg;
  LayerNorm norm_ff1, norm_mha, norm_conv, norm_ff2, norm_final;
  Linear ff1_in, ff1_out, ff2_in, ff2_out;
  MultiHeadAttention mha;
  Linear conv_pw1;          // d -> 2d, gated by GLU
  Tensor conv_dw_w, conv_dw_b;  // [kernel, d], [d]
  LayerNorm conv_norm;
  Linear conv_pw2;  // d -> d

  static ConformerBlock make(const ConformerConfig& cfg, RandomSource& rng);
  // x [T, d]; allow [T x T]; valid_rows < T zeroes trailing frames before the
  // convolution module so padded batches match exact-length runs.
  Tensor forward(const Tensor& x, const std::vector<uint8_t>& allow, bool train,
                 RandomSource& rng, int64_t valid_rows = -1) const;
  Tensor forward_stream(const Tensor& chunk, ConformerStreamState& state) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

// ---------------------------------------------------------------------------
// Encoder: frontend -> N/2 blocks -> optional mid downsample -> N/2 blocks
// ---------------------------------------------------------------------------

struct EncoderConfig {
  FrontendKind frontend = FrontendKind::Cntf;
  CntfConfig cntf;
  LegacyFrontendConfig legacy;
  int num_layers = 12;
  int64_t dim = 256;
  int heads = 4;
  int64_t ffn_dim = 2048;
  int64_t conv_kernel = 15;
  bool mid_downsample = true;
  int downsample_position = 6;  // conformer layers before the module
  bool causal = false;
  PosEncoding pos = PosEncoding::Relative;
  double dropout = 0.1;
  double attn_dropout = 0.1;
  ChunkSpec chunk;

  void validate() const;
};

struct StreamState {
  CntfStreamState cntf;
  LegacyStreamState legacy;
  std::vector<ConformerStreamState> layers;
  Tensor fsmn_pending;      // carried frame when a chunk ends mid-pair
  int64_t frames_in = 0;    // 10ms input frames consumed
  int64_t frames_mid = 0;   // 40ms frames entering the first block
  int64_t frames_out = 0;   // encoder frames emitted
};

struct Encoder {
  EncoderConfig cfg;
  CntfFrontend cntf;
  LegacyFrontend legacy;
  std::vector<ConformerBlock> layers;
  AdditionalDownsample mid;

  static Encoder make(const EncoderConfig& cfg, RandomSource& rng);

  // x [T, 80] with T >= 8 -> [M, d]; M = floor(ceil(T/4)/2) with the mid
  // downsample, ceil(T/4) without. Dynamic chunk specs draw from `rng` in
  // train mode. valid_input_frames masks padding for batched runs.
  Tensor forward(const Tensor& x, bool train, RandomSource& rng,
                 int64_t valid_input_frames = -1) const;
  // One causal streaming step; chunk length must be a positive multiple of 8.
  // Concatenated outputs equal the full-utterance causal forward.
  Tensor stream_step(const Tensor& chunk, StreamState& state) const;

  int64_t out_frames(int64_t t) const;
  Tensor frontend_forward(const Tensor& x, bool train, RandomSource& rng,
                          int64_t valid_frames = -1) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  int64_t param_count() const;
};

}  // namespace nxf
