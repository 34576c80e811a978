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

#include "nxf/frontend.hpp"

#include <cmath>

namespace nxf {

namespace {

Tensor conv_weight(Shape shape, int64_t fan_in, int64_t fan_out,
                   RandomSource& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::rand_uniform(std::move(shape), rng, -limit, limit);
}

ConvSpec make_spec(int64_t kt, int64_t kf, int64_t st, int64_t sf, int64_t ci,
                   int64_t co, bool causal, bool depthwise = false) {
  ConvSpec s;
  s.kernel_t = kt;
  s.kernel_f = kf;
  s.stride_t = st;
  s.stride_f = sf;
  s.in_channels = ci;
  s.out_channels = co;
  s.pad = causal ? PadMode::CausalTimeSameFreq : PadMode::Same;
  s.depthwise = depthwise;
  return s;
}

// Chunked causal conv: run valid-on-time over [tail ++ chunk]. The tail holds
// the previous kernel_t-1 input frames (zeros at stream start), so outputs
// match the full causal pass frame for frame.
Tensor stream_conv(const Tensor& chunk, ConvSpec spec, const Tensor& w,
                   const Tensor& b, Tensor& tail) {
  if (chunk.dim(1) % spec.stride_t != 0)
    throw ConfigError("stream_conv: chunk length " +
                      std::to_string(chunk.dim(1)) +
                      " not a multiple of stride " +
                      std::to_string(spec.stride_t));
  if (spec.kernel_t == 1) {
    spec.pad = PadMode::CausalTimeSameFreq;
    return conv2d(chunk, spec, w, b);
  }
  if (!tail.defined())
    tail = Tensor::zeros({spec.in_channels, spec.kernel_t - 1, chunk.dim(2)});
  Tensor ext = time_concat(tail, chunk);
  tail = time_tail(ext, spec.kernel_t - 1);
  spec.pad = PadMode::ValidTimeSameFreq;
  return conv2d(ext, spec, w, b);
}

int64_t count_params(const std::function<void(const ParamVisitor&)>& visit_all) {
  int64_t n = 0;
  visit_all([&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace

Tensor time_concat(const Tensor& a, const Tensor& b) {
  if (!a.defined()) return b;
  Tensor at = permute(a, {1, 0, 2});
  Tensor bt = permute(b, {1, 0, 2});
  return permute(concat0({at, bt}), {1, 0, 2});
}

Tensor time_tail(const Tensor& x, int64_t n) {
  Tensor xt = permute(x, {1, 0, 2});
  return permute(slice0(xt, xt.dim(0) - n, xt.dim(0)), {1, 0, 2});
}

// ---------------------------------------------------------------------------
// ConvNextBlock
// ---------------------------------------------------------------------------

ConvNextBlock ConvNextBlock::make(int64_t channels, double sd_p, bool causal,
                                  double ls_init, RandomSource& rng) {
  ConvNextBlock b;
  b.channels = channels;
  b.causal = causal;
  b.sd_p = sd_p;
  const int64_t k = b.kernel;
  b.dw_w = conv_weight({channels, k, k}, k * k, k * k, rng);
  b.dw_b = Tensor::zeros({channels});
  b.norm = LayerNorm::make(channels);
  const int64_t expand = 4 * channels;
  b.pw1_w = conv_weight({expand, channels, 1, 1}, channels, expand, rng);
  b.pw1_b = Tensor::zeros({expand});
  b.pw2_w = conv_weight({channels, expand, 1, 1}, expand, channels, rng);
  b.pw2_b = Tensor::zeros({channels});
  b.ls_gamma = Tensor::full({channels}, ls_init);
  return b;
}

Tensor ConvNextBlock::forward(const Tensor& x, bool train,
                              RandomSource& rng) const {
  if (x.dim(0) != channels)
    throw ShapeError("convnext_block: input " + shape_str(x.shape()) +
                     " vs channels " + std::to_string(channels));
  ConvSpec dw = make_spec(kernel, kernel, 1, 1, channels, channels, causal,
                          /*depthwise=*/true);
  Tensor b = conv2d(x, dw, dw_w, dw_b);
  b = norm.forward(b, 0);
  b = conv2d(b, make_spec(1, 1, 1, 1, channels, 4 * channels, causal), pw1_w,
             pw1_b);
  b = gelu(b);
  b = conv2d(b, make_spec(1, 1, 1, 1, 4 * channels, channels, causal), pw2_w,
             pw2_b);
  return residual_branch(x, b, ls_gamma, sd_p, train, rng,
                         /*channels_first=*/true);
}

Tensor ConvNextBlock::forward_stream(const Tensor& chunk, Tensor& tail) const {
  ConvSpec dw = make_spec(kernel, kernel, 1, 1, channels, channels, true,
                          /*depthwise=*/true);
  Tensor b = stream_conv(chunk, dw, dw_w, dw_b, tail);
  b = norm.forward(b, 0);
  b = conv2d(b, make_spec(1, 1, 1, 1, channels, 4 * channels, true), pw1_w,
             pw1_b);
  b = gelu(b);
  b = conv2d(b, make_spec(1, 1, 1, 1, 4 * channels, channels, true), pw2_w,
             pw2_b);
  RandomSource unused(0);
  return residual_branch(chunk, b, ls_gamma, sd_p, /*train=*/false, unused,
                         /*channels_first=*/true);
}

void ConvNextBlock::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".dw.w", dw_w);
  v(prefix + ".dw.b", dw_b);
  v(prefix + ".norm.gamma", norm.gamma);
  v(prefix + ".norm.beta", norm.beta);
  v(prefix + ".pw1.w", pw1_w);
  v(prefix + ".pw1.b", pw1_b);
  v(prefix + ".pw2.w", pw2_w);
  v(prefix + ".pw2.b", pw2_b);
  v(prefix + ".ls", ls_gamma);
}

int64_t ConvNextBlock::param_count() const {
  auto self = const_cast<ConvNextBlock*>(this);
  return count_params([self](const ParamVisitor& v) { self->visit("", v); });
}

// ---------------------------------------------------------------------------
// CntfFrontend
// ---------------------------------------------------------------------------

void CntfConfig::validate() const {
  if (base_channels < 1) throw ConfigError("cntf: base channels must be >= 1");
  if (feat_dim < 8 || feat_dim % 8 != 0)
    throw ConfigError("cntf: feature dim must be a positive multiple of 8");
  for (int i = 0; i < 3; ++i)
    if (stage_blocks[i] < 1)
      throw ConfigError("cntf: every stage needs at least one block");
  if (out_dim < 1) throw ConfigError("cntf: output dim must be >= 1");
}

CntfFrontend CntfFrontend::make(const CntfConfig& cfg, RandomSource& rng) {
  cfg.validate();
  CntfFrontend f;
  f.cfg = cfg;
  const int64_t c = cfg.base_channels;
  f.ds1_w = conv_weight({c, 1, 2, 2}, 4, 4 * c, rng);
  f.ds1_b = Tensor::zeros({c});
  f.ds1_norm = LayerNorm::make(c);
  for (int i = 0; i < cfg.stage_blocks[0]; ++i)
    f.stage1.push_back(ConvNextBlock::make(c, cfg.sd_p, cfg.causal, cfg.ls_init, rng));
  f.ds2_norm = LayerNorm::make(c);
  f.ds2_w = conv_weight({2 * c, c, 2, 2}, 4 * c, 8 * c, rng);
  f.ds2_b = Tensor::zeros({2 * c});
  for (int i = 0; i < cfg.stage_blocks[1]; ++i)
    f.stage2.push_back(ConvNextBlock::make(2 * c, cfg.sd_p, cfg.causal, cfg.ls_init, rng));
  f.ds3_norm = LayerNorm::make(2 * c);
  f.ds3_w = conv_weight({3 * c, 2 * c, 1, 2}, 4 * c, 6 * c, rng);
  f.ds3_b = Tensor::zeros({3 * c});
  for (int i = 0; i < cfg.stage_blocks[2]; ++i)
    f.stage3.push_back(ConvNextBlock::make(3 * c, cfg.sd_p, cfg.causal, cfg.ls_init, rng));
  f.out_proj = Linear::make(3 * c * (cfg.feat_dim / 8), cfg.out_dim, rng);
  return f;
}

Tensor CntfFrontend::forward(const Tensor& x, bool train, RandomSource& rng,
                             int64_t valid_frames) const {
  if (x.rank() != 2 || x.dim(1) != cfg.feat_dim)
    throw ShapeError("cntf: input " + shape_str(x.shape()) +
                     " vs feature dim " + std::to_string(cfg.feat_dim));
  const int64_t t = x.dim(0);
  if (t < 4)
    throw ShapeError("cntf: input too short (" + std::to_string(t) +
                     " frames, need >= 4)");
  const bool masked = valid_frames >= 0 && valid_frames < t;
  // keeps trailing padding frames identically zero after ops that would
  // otherwise write bias/beta values into them
  auto zf = [&](Tensor h, int64_t valid) {
    return masked && valid < h.dim(1) ? zero_from(h, 1, valid) : h;
  };
  const int64_t c = cfg.base_channels;
  int64_t v = masked ? valid_frames : t;
  Tensor h = reshape(masked ? zero_from(x, 0, valid_frames) : x,
                     {1, t, cfg.feat_dim});
  h = conv2d(h, make_spec(2, 2, 2, 2, 1, c, cfg.causal), ds1_w, ds1_b);
  v = (v + 1) / 2;
  h = zf(ds1_norm.forward(h, 0), v);
  for (const auto& blk : stage1) h = zf(blk.forward(h, train, rng), v);
  h = zf(ds2_norm.forward(h, 0), v);
  h = conv2d(h, make_spec(2, 2, 2, 2, c, 2 * c, cfg.causal), ds2_w, ds2_b);
  v = (v + 1) / 2;
  h = zf(h, v);
  for (const auto& blk : stage2) h = zf(blk.forward(h, train, rng), v);
  h = zf(ds3_norm.forward(h, 0), v);
  h = zf(conv2d(h, make_spec(1, 2, 1, 2, 2 * c, 3 * c, cfg.causal), ds3_w,
                ds3_b),
         v);
  for (const auto& blk : stage3) h = zf(blk.forward(h, train, rng), v);
  // [3c, T/4, F/8] -> [T/4, 3c * F/8] -> [T/4, d]
  Tensor flat = reshape(permute(h, {1, 0, 2}), {h.dim(1), h.dim(0) * h.dim(2)});
  return out_proj.forward(flat);
}

Tensor CntfFrontend::forward_stream(const Tensor& chunk,
                                    CntfStreamState& state) const {
  if (!cfg.causal) throw ConfigError("cntf: streaming requires causal mode");
  if (chunk.rank() != 2 || chunk.dim(1) != cfg.feat_dim)
    throw ShapeError("cntf: chunk " + shape_str(chunk.shape()));
  if (chunk.dim(0) % 4 != 0)
    throw ConfigError("cntf: chunk length " + std::to_string(chunk.dim(0)) +
                      " not a multiple of 4");
  if (state.stage1_tails.empty()) {
    state.stage1_tails.resize(stage1.size());
    state.stage2_tails.resize(stage2.size());
    state.stage3_tails.resize(stage3.size());
  }
  const int64_t c = cfg.base_channels;
  Tensor h = reshape(chunk, {1, chunk.dim(0), cfg.feat_dim});
  h = stream_conv(h, make_spec(2, 2, 2, 2, 1, c, true), ds1_w, ds1_b,
                  state.ds1_tail);
  h = ds1_norm.forward(h, 0);
  for (size_t i = 0; i < stage1.size(); ++i)
    h = stage1[i].forward_stream(h, state.stage1_tails[i]);
  h = ds2_norm.forward(h, 0);
  h = stream_conv(h, make_spec(2, 2, 2, 2, c, 2 * c, true), ds2_w, ds2_b,
                  state.ds2_tail);
  for (size_t i = 0; i < stage2.size(); ++i)
    h = stage2[i].forward_stream(h, state.stage2_tails[i]);
  h = ds3_norm.forward(h, 0);
  h = conv2d(h, make_spec(1, 2, 1, 2, 2 * c, 3 * c, true), ds3_w, ds3_b);
  for (size_t i = 0; i < stage3.size(); ++i)
    h = stage3[i].forward_stream(h, state.stage3_tails[i]);
  Tensor flat = reshape(permute(h, {1, 0, 2}), {h.dim(1), h.dim(0) * h.dim(2)});
  return out_proj.forward(flat);
}

void CntfFrontend::visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".ds1.w", ds1_w);
  v(prefix + ".ds1.b", ds1_b);
  v(prefix + ".ds1.norm.gamma", ds1_norm.gamma);
  v(prefix + ".ds1.norm.beta", ds1_norm.beta);
  for (size_t i = 0; i < stage1.size(); ++i)
    stage1[i].visit(prefix + ".stage1." + std::to_string(i), v);
  v(prefix + ".ds2.norm.gamma", ds2_norm.gamma);
  v(prefix + ".ds2.norm.beta", ds2_norm.beta);
  v(prefix + ".ds2.w", ds2_w);
  v(prefix + ".ds2.b", ds2_b);
  for (size_t i = 0; i < stage2.size(); ++i)
    stage2[i].visit(prefix + ".stage2." + std::to_string(i), v);
  v(prefix + ".ds3.norm.gamma", ds3_norm.gamma);
  v(prefix + ".ds3.norm.beta", ds3_norm.beta);
  v(prefix + ".ds3.w", ds3_w);
  v(prefix + ".ds3.b", ds3_b);
  for (size_t i = 0; i < stage3.size(); ++i)
    stage3[i].visit(prefix + ".stage3." + std::to_string(i), v);
  v(prefix + ".out.w", out_proj.w);
  v(prefix + ".out.b", out_proj.b);
}

int64_t CntfFrontend::param_count() const {
  auto self = const_cast<CntfFrontend*>(this);
  return count_params([self](const ParamVisitor& v) { self->visit("", v); });
}

// ---------------------------------------------------------------------------
// LegacyFrontend
// ---------------------------------------------------------------------------

LegacyFrontend LegacyFrontend::make(const LegacyFrontendConfig& cfg,
                                    RandomSource& rng) {
  if (cfg.variant == FrontendKind::Cntf)
    throw ConfigError("legacy frontend: use CntfFrontend for the CNTF variant");
  if (cfg.feat_dim % 4 != 0)
    throw ConfigError("legacy frontend: feature dim must be a multiple of 4");
  LegacyFrontend f;
  f.cfg = cfg;
  auto add_conv = [&](int64_t ci, int64_t co, int64_t stride) {
    f.specs.push_back(make_spec(3, 3, stride, stride, ci, co, cfg.causal));
    f.conv_w.push_back(
        conv_weight({co, ci, 3, 3}, ci * 9, co * 9, rng));
    f.conv_b.push_back(Tensor::zeros({co}));
  };
  if (cfg.variant == FrontendKind::ConformerSubsampling) {
    // two 3x3 stride-2x2 convolutions then a per-frame linear
    add_conv(1, cfg.out_dim, 2);
    add_conv(cfg.out_dim, cfg.out_dim, 2);
    f.out_proj =
        Linear::make(cfg.out_dim * (cfg.feat_dim / 4), cfg.out_dim, rng);
  } else {  // Cnn8: strides 2,1,1,1,2,1,1,1 at a fixed width
    const int64_t ch = cfg.channels;
    const int strides[8] = {2, 1, 1, 1, 2, 1, 1, 1};
    for (int i = 0; i < 8; ++i) add_conv(i == 0 ? 1 : ch, ch, strides[i]);
    f.out_proj = Linear::make(ch * (cfg.feat_dim / 4), cfg.out_dim, rng);
  }
  return f;
}

Tensor LegacyFrontend::forward(const Tensor& x, int64_t valid_frames) const {
  if (x.rank() != 2 || x.dim(1) != cfg.feat_dim)
    throw ShapeError("legacy frontend: input " + shape_str(x.shape()));
  if (x.dim(0) < 4)
    throw ShapeError("legacy frontend: input too short (" +
                     std::to_string(x.dim(0)) + " frames, need >= 4)");
  const bool masked = valid_frames >= 0 && valid_frames < x.dim(0);
  int64_t v = masked ? valid_frames : x.dim(0);
  Tensor h = reshape(masked ? zero_from(x, 0, valid_frames) : x,
                     {1, x.dim(0), cfg.feat_dim});
  Tensor block2;
  for (size_t i = 0; i < specs.size(); ++i) {
    h = relu(conv2d(h, specs[i], conv_w[i], conv_b[i]));
    v = (v + specs[i].stride_t - 1) / specs[i].stride_t;
    if (masked && v < h.dim(1)) h = zero_from(h, 1, v);
    if (cfg.variant == FrontendKind::Cnn8) {
      if (i == 1) block2 = h;
      if (i == 3) h = add(h, block2);  // residual joining blocks 2 -> 4
    }
  }
  Tensor flat = reshape(permute(h, {1, 0, 2}), {h.dim(1), h.dim(0) * h.dim(2)});
  return out_proj.forward(flat);
}

Tensor LegacyFrontend::forward_stream(const Tensor& chunk,
                                      LegacyStreamState& state) const {
  if (!cfg.causal)
    throw ConfigError("legacy frontend: streaming requires causal mode");
  if (chunk.dim(0) % 4 != 0)
    throw ConfigError("legacy frontend: chunk length not a multiple of 4");
  if (state.conv_tails.empty()) state.conv_tails.resize(specs.size());
  Tensor h = reshape(chunk, {1, chunk.dim(0), cfg.feat_dim});
  Tensor block2;
  for (size_t i = 0; i < specs.size(); ++i) {
    h = relu(stream_conv(h, specs[i], conv_w[i], conv_b[i],
                         state.conv_tails[i]));
    if (cfg.variant == FrontendKind::Cnn8) {
      if (i == 1) block2 = h;
      if (i == 3) h = add(h, block2);
    }
  }
  Tensor flat = reshape(permute(h, {1, 0, 2}), {h.dim(1), h.dim(0) * h.dim(2)});
  return out_proj.forward(flat);
}

void LegacyFrontend::visit(const std::string& prefix, const ParamVisitor& v) {
  for (size_t i = 0; i < conv_w.size(); ++i) {
    v(prefix + ".conv" + std::to_string(i) + ".w", conv_w[i]);
    v(prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]);
  }
  v(prefix + ".out.w", out_proj.w);
  v(prefix + ".out.b", out_proj.b);
}

int64_t LegacyFrontend::param_count() const {
  auto self = const_cast<LegacyFrontend*>(this);
  return count_params([self](const ParamVisitor& v) { self->visit("", v); });
}

}  // namespace nxf
