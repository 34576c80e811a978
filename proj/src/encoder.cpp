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

#include "nxf/encoder.hpp"

#include <cmath>

#include "nxf/detail/autograd.hpp"

namespace nxf {

using detail::attach;
using detail::make_node;
using detail::promote;
using detail::wrap;

// ---------------------------------------------------------------------------
// Chunk masks
// ---------------------------------------------------------------------------

void ChunkSpec::validate() const {
  if (mode == Mode::Fixed) {
    if (chunk_frames < 2 || chunk_frames % 2 != 0)
      throw ConfigError("chunk size must be even and >= 2, got " +
                        std::to_string(chunk_frames));
  }
}

std::vector<uint8_t> chunk_mask_fixed(int64_t frames, int64_t chunk_size) {
  std::vector<uint8_t> allow(frames * frames, 0);
  for (int64_t i = 0; i < frames; ++i) {
    const int64_t limit =
        chunk_size > 0 ? (i / chunk_size + 1) * chunk_size : frames;
    const int64_t hi = std::min(limit, frames);
    for (int64_t j = 0; j < hi; ++j) allow[i * frames + j] = 1;
  }
  return allow;
}

namespace {

// 0 means full attention
int64_t draw_dynamic_chunk(RandomSource& rng) {
  if (rng.uniform() < 0.5) return 0;
  const int64_t idx = static_cast<int64_t>(rng.uniform() * 25.0);  // 0..24
  return 2 * (std::min<int64_t>(idx, 24) + 1);                     // 2..50
}

}  // namespace

std::vector<uint8_t> make_chunk_mask(int64_t frames, const ChunkSpec& spec,
                                     RandomSource& rng) {
  spec.validate();
  switch (spec.mode) {
    case ChunkSpec::Mode::Full:
      return chunk_mask_fixed(frames, 0);
    case ChunkSpec::Mode::Fixed:
      return chunk_mask_fixed(frames, spec.chunk_frames);
    case ChunkSpec::Mode::Dynamic:
      return chunk_mask_fixed(frames, draw_dynamic_chunk(rng));
  }
  throw ConfigError("chunk mask: unknown mode");
}

// ---------------------------------------------------------------------------
// FSMN downsample
// ---------------------------------------------------------------------------

Tensor fsmn_downsample(const Tensor& h, const Tensor& taps) {
  if (h.rank() != 2)
    throw ShapeError("fsmn_downsample: input must be [T,d], got " +
                     shape_str(h.shape()));
  const int64_t t = h.dim(0), d = h.dim(1);
  if (t < 2)
    throw ShapeError("fsmn_downsample: need at least 2 frames, got " +
                     std::to_string(t));
  if (taps.shape() != Shape{2, d})
    throw ShapeError("fsmn_downsample: taps " + shape_str(taps.shape()) +
                     " vs input " + shape_str(h.shape()));
  const int64_t m_out = t / 2;
  const double* ph = h.data().data();
  const double* pw = taps.data().data();  // [w0 | w1]
  std::vector<double> v(m_out * d);
  for (int64_t m = 0; m < m_out; ++m) {
    const double* even = ph + (2 * m) * d;
    const double* odd = ph + (2 * m + 1) * d;
    double* orow = v.data() + m * d;
    for (int64_t c = 0; c < d; ++c)
      orow[c] = pw[c] * odd[c] + pw[d + c] * even[c];
  }
  Tensor out = wrap(make_node(Shape{m_out, d}, std::move(v),
                              promote(h.dtype(), taps.dtype())));
  TensorNode* on = out.node().get();
  TensorNode* hn = h.node().get();
  TensorNode* wn = taps.node().get();
  attach(out, {h, taps}, [on, hn, wn, m_out, d]() {
    const double* g = on->grad.data();
    const bool need_h = hn->requires_grad;
    const bool need_w = wn->requires_grad;
    if (need_h) hn->ensure_grad();
    if (need_w) wn->ensure_grad();
    const double* ph2 = hn->value.data();
    const double* pw2 = wn->value.data();
    for (int64_t m = 0; m < m_out; ++m) {
      const double* grow = g + m * d;
      for (int64_t c = 0; c < d; ++c) {
        if (need_h) {
          hn->grad[(2 * m + 1) * d + c] += grow[c] * pw2[c];
          hn->grad[(2 * m) * d + c] += grow[c] * pw2[d + c];
        }
        if (need_w) {
          wn->grad[c] += grow[c] * ph2[(2 * m + 1) * d + c];
          wn->grad[d + c] += grow[c] * ph2[(2 * m) * d + c];
        }
      }
    }
  });
  return out;
}

AdditionalDownsample AdditionalDownsample::make(int64_t dim,
                                                RandomSource& rng) {
  (void)rng;
  AdditionalDownsample ds;
  ds.taps = Tensor::full({2, dim}, 0.5);  // starts as pairwise averaging
  ds.norm = LayerNorm::make(dim);
  return ds;
}

Tensor AdditionalDownsample::forward(const Tensor& h) const {
  return norm.forward(swish(fsmn_downsample(h, taps)));
}

void AdditionalDownsample::visit(const std::string& prefix,
                                 const ParamVisitor& v) {
  v(prefix + ".taps", taps);
  v(prefix + ".norm.gamma", norm.gamma);
  v(prefix + ".norm.beta", norm.beta);
}

int64_t AdditionalDownsample::param_count() const {
  return taps.numel() + norm.param_count();
}

// ---------------------------------------------------------------------------
// Conformer block
// ---------------------------------------------------------------------------

ConformerBlock ConformerBlock::make(const ConformerConfig& cfg,
                                    RandomSource& rng) {
  if (cfg.dim < 1 || cfg.heads < 1 || cfg.dim % cfg.heads != 0)
    throw ConfigError("conformer: dim/heads invalid");
  ConformerBlock b;
  b.cfg = cfg;
  b.norm_ff1 = LayerNorm::make(cfg.dim);
  b.norm_mha = LayerNorm::make(cfg.dim);
  b.norm_conv = LayerNorm::make(cfg.dim);
  b.norm_ff2 = LayerNorm::make(cfg.dim);
  b.norm_final = LayerNorm::make(cfg.dim);
  b.ff1_in = Linear::make(cfg.dim, cfg.ffn_dim, rng);
  b.ff1_out = Linear::make(cfg.ffn_dim, cfg.dim, rng);
  b.ff2_in = Linear::make(cfg.dim, cfg.ffn_dim, rng);
  b.ff2_out = Linear::make(cfg.ffn_dim, cfg.dim, rng);
  b.mha = MultiHeadAttention::make(cfg.dim, cfg.heads, cfg.pos,
                                   cfg.attn_dropout, rng);
  b.conv_pw1 = Linear::make(cfg.dim, 2 * cfg.dim, rng);
  const double lim = std::sqrt(6.0 / (2.0 * cfg.conv_kernel));
  b.conv_dw_w =
      Tensor::rand_uniform({cfg.conv_kernel, cfg.dim}, rng, -lim, lim);
  b.conv_dw_b = Tensor::zeros({cfg.dim});
  b.conv_norm = LayerNorm::make(cfg.dim);
  b.conv_pw2 = Linear::make(cfg.dim, cfg.dim, rng);
  return b;
}

namespace {

// zero rows >= valid so no-frame positions cannot leak through convolutions
Tensor zero_invalid_rows(const Tensor& x, int64_t valid) {
  if (valid < 0 || valid >= x.dim(0)) return x;
  std::vector<double> m(x.numel(), 0.0);
  const int64_t d = x.dim(1);
  std::fill(m.begin(), m.begin() + valid * d, 1.0);
  return mul(x, Tensor::from_vector(x.shape(), std::move(m)));
}

}  // namespace

Tensor ConformerBlock::forward(const Tensor& x,
                               const std::vector<uint8_t>& allow, bool train,
                               RandomSource& rng, int64_t valid_rows) const {
  if (x.rank() != 2 || x.dim(1) != cfg.dim)
    throw ShapeError("conformer_block: input " + shape_str(x.shape()) +
                     " vs dim " + std::to_string(cfg.dim));
  const double p = cfg.dropout;
  Tensor h = x;
  {
    Tensor f = ff1_out.forward(
        dropout(swish(ff1_in.forward(norm_ff1.forward(h))), p, train, rng));
    h = add(h, scale(dropout(f, p, train, rng), 0.5));
  }
  {
    Tensor a_in = norm_mha.forward(h);
    Tensor a = mha.forward(a_in, a_in, a_in, allow, train, rng);
    h = add(h, dropout(a, p, train, rng));
  }
  {
    Tensor c = zero_invalid_rows(norm_conv.forward(h), valid_rows);
    c = glu(conv_pw1.forward(c));
    c = depthwise_conv1d(c, conv_dw_w, conv_dw_b, cfg.causal);
    c = conv_pw2.forward(swish(conv_norm.forward(c)));
    h = add(h, dropout(c, p, train, rng));
  }
  {
    Tensor f = ff2_out.forward(
        dropout(swish(ff2_in.forward(norm_ff2.forward(h))), p, train, rng));
    h = add(h, scale(dropout(f, p, train, rng), 0.5));
  }
  return norm_final.forward(h);
}

Tensor ConformerBlock::forward_stream(const Tensor& chunk,
                                      ConformerStreamState& state) const {
  if (!cfg.causal)
    throw ConfigError("conformer_block: streaming requires causal mode");
  RandomSource quiet(0);
  const int64_t tc = chunk.dim(0);
  Tensor h = chunk;
  {
    Tensor f = ff1_out.forward(swish(ff1_in.forward(norm_ff1.forward(h))));
    h = add(h, scale(f, 0.5));
  }
  {
    Tensor a_in = norm_mha.forward(h);
    Tensor k_new = mha.wk.forward(a_in);
    Tensor v_new = mha.wv.forward(a_in);
    state.k_cache =
        state.k_cache.defined() ? concat0({state.k_cache, k_new}) : k_new;
    state.v_cache =
        state.v_cache.defined() ? concat0({state.v_cache, v_new}) : v_new;
    Tensor a = mha.attend(a_in, state.k_cache, state.v_cache,
                          full_mask(tc, state.k_cache.dim(0)), false, quiet,
                          /*q_pos_offset=*/state.frames_seen);
    h = add(h, a);
  }
  {
    Tensor c = glu(conv_pw1.forward(norm_conv.forward(h)));
    if (!state.conv_tail.defined())
      state.conv_tail = Tensor::zeros({cfg.conv_kernel - 1, cfg.dim});
    Tensor ext = concat0({state.conv_tail, c});
    state.conv_tail = slice0(ext, ext.dim(0) - (cfg.conv_kernel - 1), ext.dim(0));
    c = depthwise_conv1d_valid(ext, conv_dw_w, conv_dw_b);
    c = conv_pw2.forward(swish(conv_norm.forward(c)));
    h = add(h, c);
  }
  {
    Tensor f = ff2_out.forward(swish(ff2_in.forward(norm_ff2.forward(h))));
    h = add(h, scale(f, 0.5));
  }
  state.frames_seen += tc;
  return norm_final.forward(h);
}

void ConformerBlock::visit(const std::string& prefix, const ParamVisitor& v) {
  auto ln = [&](const std::string& name, LayerNorm& n) {
    v(prefix + "." + name + ".gamma", n.gamma);
    v(prefix + "." + name + ".beta", n.beta);
  };
  auto lin = [&](const std::string& name, Linear& l) {
    v(prefix + "." + name + ".w", l.w);
    if (l.b.defined()) v(prefix + "." + name + ".b", l.b);
  };
  ln("norm_ff1", norm_ff1);
  lin("ff1_in", ff1_in);
  lin("ff1_out", ff1_out);
  ln("norm_mha", norm_mha);
  lin("mha.wq", mha.wq);
  lin("mha.wk", mha.wk);
  lin("mha.wv", mha.wv);
  lin("mha.wo", mha.wo);
  if (mha.pos == PosEncoding::Relative) {
    lin("mha.wpos", mha.wpos);
    v(prefix + ".mha.bias_u", mha.bias_u);
    v(prefix + ".mha.bias_v", mha.bias_v);
  }
  ln("norm_conv", norm_conv);
  lin("conv_pw1", conv_pw1);
  v(prefix + ".conv_dw.w", conv_dw_w);
  v(prefix + ".conv_dw.b", conv_dw_b);
  ln("conv_norm", conv_norm);
  lin("conv_pw2", conv_pw2);
  ln("norm_ff2", norm_ff2);
  lin("ff2_in", ff2_in);
  lin("ff2_out", ff2_out);
  ln("norm_final", norm_final);
}

int64_t ConformerBlock::param_count() const {
  int64_t n = 0;
  auto self = const_cast<ConformerBlock*>(this);
  self->visit("", [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder: need at least one layer");
  if (mid_downsample &&
      (downsample_position < 1 || downsample_position > num_layers - 1))
    throw ConfigError("encoder: downsample position must be in [1, N-1]");
  if (dim % heads != 0) throw ConfigError("encoder: dim not divisible by heads");
  chunk.validate();
}

Encoder Encoder::make(const EncoderConfig& cfg, RandomSource& rng) {
  cfg.validate();
  Encoder e;
  e.cfg = cfg;
  if (cfg.frontend == FrontendKind::Cntf) {
    CntfConfig fc = cfg.cntf;
    fc.out_dim = cfg.dim;
    fc.causal = cfg.causal;
    e.cntf = CntfFrontend::make(fc, rng);
    e.cfg.cntf = fc;
  } else {
    LegacyFrontendConfig lc = cfg.legacy;
    lc.variant = cfg.frontend;
    lc.out_dim = cfg.dim;
    lc.causal = cfg.causal;
    if (cfg.frontend == FrontendKind::ConformerSubsampling)
      lc.channels = cfg.dim;
    e.legacy = LegacyFrontend::make(lc, rng);
    e.cfg.legacy = lc;
  }
  ConformerConfig bc;
  bc.dim = cfg.dim;
  bc.heads = cfg.heads;
  bc.ffn_dim = cfg.ffn_dim;
  bc.conv_kernel = cfg.conv_kernel;
  bc.dropout = cfg.dropout;
  bc.attn_dropout = cfg.attn_dropout;
  bc.causal = cfg.causal;
  bc.pos = cfg.pos == PosEncoding::Relative ? PosEncoding::Relative
                                            : PosEncoding::None;
  for (int i = 0; i < cfg.num_layers; ++i)
    e.layers.push_back(ConformerBlock::make(bc, rng));
  if (cfg.mid_downsample) e.mid = AdditionalDownsample::make(cfg.dim, rng);
  return e;
}

Tensor Encoder::frontend_forward(const Tensor& x, bool train,
                                 RandomSource& rng,
                                 int64_t valid_frames) const {
  return cfg.frontend == FrontendKind::Cntf
             ? cntf.forward(x, train, rng, valid_frames)
             : legacy.forward(x, valid_frames);
}

namespace {

// chunk[i][j] && padding validity; rows past `valid` keep the chunk mask so
// they stay legal even though their output is discarded.
std::vector<uint8_t> combine_valid(std::vector<uint8_t> allow, int64_t frames,
                                   int64_t valid) {
  if (valid < 0 || valid >= frames) return allow;
  for (int64_t i = 0; i < valid; ++i)
    for (int64_t j = valid; j < frames; ++j) allow[i * frames + j] = 0;
  return allow;
}

Tensor add_abs_positions(const Tensor& h, int64_t offset) {
  std::vector<int64_t> pos(h.dim(0));
  for (int64_t i = 0; i < h.dim(0); ++i) pos[i] = offset + i;
  return add(h, sinusoid_table(pos, h.dim(1)));
}

}  // namespace

Tensor Encoder::forward(const Tensor& x, bool train, RandomSource& rng,
                        int64_t valid_input_frames) const {
  if (x.rank() != 2)
    throw ShapeError("encoder: input must be [T,80], got " +
                     shape_str(x.shape()));
  if (x.dim(0) < 8)
    throw ShapeError("encoder: need at least 8 input frames, got " +
                     std::to_string(x.dim(0)));
  Tensor h = frontend_forward(x, train, rng, valid_input_frames);
  if (cfg.pos == PosEncoding::Absolute) h = add_abs_positions(h, 0);
  const int64_t tf = h.dim(0);
  int64_t valid_f =
      valid_input_frames < 0 ? tf : (valid_input_frames + 3) / 4;
  if (valid_f > tf) valid_f = tf;

  // one chunk size per call; both frame rates derive from it
  int64_t cs = 0;
  switch (cfg.chunk.mode) {
    case ChunkSpec::Mode::Full:
      cs = 0;
      break;
    case ChunkSpec::Mode::Fixed:
      cfg.chunk.validate();
      cs = cfg.chunk.chunk_frames;
      break;
    case ChunkSpec::Mode::Dynamic:
      cs = train ? draw_dynamic_chunk(rng) : 0;
      break;
  }

  const int split = cfg.mid_downsample ? cfg.downsample_position
                                       : cfg.num_layers;
  {
    std::vector<uint8_t> allow =
        combine_valid(chunk_mask_fixed(tf, cs), tf, valid_f);
    for (int i = 0; i < split; ++i)
      h = layers[i].forward(h, allow, train, rng, valid_f);
  }
  if (cfg.mid_downsample) {
    h = mid.forward(h);
    const int64_t tm = h.dim(0);
    const int64_t valid_m = std::min(valid_f / 2, tm);
    std::vector<uint8_t> allow =
        combine_valid(chunk_mask_fixed(tm, cs / 2), tm, valid_m);
    for (int i = split; i < cfg.num_layers; ++i)
      h = layers[i].forward(h, allow, train, rng, valid_m);
  }
  return h;
}

Tensor Encoder::stream_step(const Tensor& chunk, StreamState& state) const {
  if (!cfg.causal) throw ConfigError("encoder: streaming requires causal mode");
  if (chunk.rank() != 2 || chunk.dim(0) <= 0 || chunk.dim(0) % 8 != 0)
    throw ConfigError(
        "encoder: stream chunks must be positive multiples of 8 input frames");
  NoGradGuard inference;
  if (state.layers.empty()) state.layers.resize(cfg.num_layers);

  Tensor h = cfg.frontend == FrontendKind::Cntf
                 ? cntf.forward_stream(chunk, state.cntf)
                 : legacy.forward_stream(chunk, state.legacy);
  if (cfg.pos == PosEncoding::Absolute)
    h = add_abs_positions(h, state.frames_mid);
  state.frames_in += chunk.dim(0);
  state.frames_mid += h.dim(0);

  const int split = cfg.mid_downsample ? cfg.downsample_position
                                       : cfg.num_layers;
  for (int i = 0; i < split; ++i)
    h = layers[i].forward_stream(h, state.layers[i]);
  if (cfg.mid_downsample) {
    Tensor cat = state.fsmn_pending.defined()
                     ? concat0({state.fsmn_pending, h})
                     : h;
    const int64_t pairs = cat.dim(0) / 2;
    state.fsmn_pending = (cat.dim(0) % 2 != 0)
                             ? slice0(cat, cat.dim(0) - 1, cat.dim(0))
                             : Tensor();
    h = mid.forward(slice0(cat, 0, 2 * pairs));
    for (int i = split; i < cfg.num_layers; ++i)
      h = layers[i].forward_stream(h, state.layers[i]);
  }
  state.frames_out += h.dim(0);
  return h;
}

int64_t Encoder::out_frames(int64_t t) const {
  const int64_t tf = (t + 3) / 4;
  return cfg.mid_downsample ? tf / 2 : tf;
}

void Encoder::visit(const std::string& prefix, const ParamVisitor& v) {
  if (cfg.frontend == FrontendKind::Cntf) {
    cntf.visit(prefix + ".frontend", v);
  } else {
    legacy.visit(prefix + ".frontend", v);
  }
  for (size_t i = 0; i < layers.size(); ++i)
    layers[i].visit(prefix + ".layer" + std::to_string(i), v);
  if (cfg.mid_downsample) mid.visit(prefix + ".mid_ds", v);
}

int64_t Encoder::param_count() const {
  int64_t n = 0;
  auto self = const_cast<Encoder*>(this);
  self->visit("", [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace nxf
