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

#include "nxf/analysis.hpp"

#include <ostream>

#include "nxf/gradcheck.hpp"

namespace nxf {

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t linear_params(int64_t in, int64_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

int64_t norm_params(int64_t dim) { return 2 * dim; }

// one ConvNeXt block at channel width ch
int64_t convnext_block_params(int64_t ch) {
  int64_t n = ch * 7 * 7 + ch;     // depthwise + bias
  n += norm_params(ch);            // channel LN
  n += linear_params(ch, 4 * ch);  // pointwise expansion
  n += linear_params(4 * ch, ch);  // pointwise projection
  n += ch;                         // LayerScale
  return n;
}

int64_t cntf_params(const CntfConfig& cfg, int64_t dim) {
  const int64_t c = cfg.base_channels;
  int64_t n = c * 1 * 2 * 2 + c + norm_params(c);  // stem conv + LN
  n += cfg.stage_blocks[0] * convnext_block_params(c);
  n += norm_params(c) + (2 * c) * c * 2 * 2 + 2 * c;  // LN + conv c->2c
  n += cfg.stage_blocks[1] * convnext_block_params(2 * c);
  n += norm_params(2 * c) + (3 * c) * (2 * c) * 1 * 2 + 3 * c;  // LN + conv
  n += cfg.stage_blocks[2] * convnext_block_params(3 * c);
  n += linear_params(3 * c * (cfg.feat_dim / 8), dim);
  return n;
}

int64_t legacy_params(FrontendKind kind, int64_t channels, int64_t feat,
                      int64_t dim) {
  if (kind == FrontendKind::ConformerSubsampling) {
    int64_t n = dim * 1 * 3 * 3 + dim;
    n += dim * dim * 3 * 3 + dim;
    n += linear_params(dim * (feat / 4), dim);
    return n;
  }
  // cnn8
  int64_t n = channels * 1 * 3 * 3 + channels;
  n += 7 * (channels * channels * 3 * 3 + channels);
  n += linear_params(channels * (feat / 4), dim);
  return n;
}

int64_t attention_params(int64_t dim, int heads, PosEncoding pos) {
  int64_t n = 4 * linear_params(dim, dim);  // q, k, v, o
  if (pos == PosEncoding::Relative) {
    n += linear_params(dim, dim, /*bias=*/false);  // position projection
    n += 2 * (heads * (dim / heads));              // content/position biases
  }
  return n;
}

int64_t conformer_layer_params(const EncoderConfig& cfg) {
  const int64_t d = cfg.dim;
  int64_t n = 5 * norm_params(d);  // ff1, mha, conv, ff2, final
  n += 2 * (linear_params(d, cfg.ffn_dim) + linear_params(cfg.ffn_dim, d));
  n += attention_params(d, cfg.heads,
                        cfg.pos == PosEncoding::Relative
                            ? PosEncoding::Relative
                            : PosEncoding::None);
  n += linear_params(d, 2 * d);        // conv pointwise 1
  n += cfg.conv_kernel * d + d;        // depthwise kernel
  n += norm_params(d);                 // conv module norm
  n += linear_params(d, d);            // conv pointwise 2
  return n;
}

int64_t decoder_layer_params(const DecoderConfig& cfg) {
  const int64_t d = cfg.dim;
  int64_t n = 3 * norm_params(d);
  n += 2 * attention_params(d, cfg.heads, PosEncoding::None);
  n += linear_params(d, cfg.ffn_dim) + linear_params(cfg.ffn_dim, d);
  return n;
}

}  // namespace

int64_t ParamReport::get(const std::string& name) const {
  for (const auto& [k, v] : breakdown)
    if (k == name) return v;
  throw ConfigError("param report: no entry '" + name + "'");
}

int64_t FlopsReport::get(const std::string& name) const {
  for (const auto& [k, v] : breakdown)
    if (k == name) return v;
  throw ConfigError("flops report: no entry '" + name + "'");
}

ParamReport count_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamReport rep;
  const EncoderConfig& e = cfg.encoder;
  const int64_t frontend =
      e.frontend == FrontendKind::Cntf
          ? cntf_params(e.cntf, e.dim)
          : legacy_params(e.frontend,
                          e.frontend == FrontendKind::ConformerSubsampling
                              ? e.dim
                              : e.legacy.channels,
                          e.frontend == FrontendKind::Cntf
                              ? e.cntf.feat_dim
                              : e.legacy.feat_dim,
                          e.dim);
  rep.breakdown.emplace_back("frontend", frontend);
  const int64_t per_layer = conformer_layer_params(e);
  rep.breakdown.emplace_back("encoder_layer", per_layer);
  rep.breakdown.emplace_back("encoder_layers", per_layer * e.num_layers);
  const int64_t mid = e.mid_downsample ? 2 * e.dim + norm_params(e.dim) : 0;
  rep.breakdown.emplace_back("mid_downsample", mid);
  const int64_t ctc = linear_params(e.dim, cfg.vocab);
  rep.breakdown.emplace_back("ctc_head", ctc);
  const DecoderConfig& dc = cfg.decoder;
  int64_t dec = dc.num_classes() * dc.dim;  // embedding
  dec += dc.num_layers * decoder_layer_params(dc);
  dec += norm_params(dc.dim);
  dec += linear_params(dc.dim, dc.num_classes());
  rep.breakdown.emplace_back("decoder", dec);
  rep.total = frontend + per_layer * e.num_layers + mid + ctc + dec;
  rep.breakdown.emplace_back("total", rep.total);
  return rep;
}

std::array<int64_t, 3> cntf_stage_pointwise_macs(const CntfConfig& cfg,
                                                 int64_t input_frames) {
  const int64_t c = cfg.base_channels;
  const int64_t t1 = ceil_div(input_frames, 2);
  const int64_t t2 = ceil_div(t1, 2);
  const int64_t f1 = ceil_div(cfg.feat_dim, 2);
  const int64_t f2 = ceil_div(f1, 2);
  const int64_t f3 = ceil_div(f2, 2);
  auto stage = [](int64_t ch, int64_t positions, int blocks) {
    return static_cast<int64_t>(blocks) * 2 * (ch * 4 * ch) * positions;
  };
  return {stage(c, t1 * f1, cfg.stage_blocks[0]),
          stage(2 * c, t2 * f2, cfg.stage_blocks[1]),
          stage(3 * c, t2 * f3, cfg.stage_blocks[2])};
}

FlopsReport count_flops(const ModelConfig& cfg, int64_t input_frames) {
  cfg.validate();
  if (input_frames < 1)
    throw ConfigError("count_flops: need at least one input frame");
  FlopsReport rep;
  rep.convention =
      "1 MAC = 1 FLOP; encoder only; conv/linear/attention kernels incl. "
      "relative-position projections; biases/norms/activations excluded";
  const EncoderConfig& e = cfg.encoder;
  const int64_t d = e.dim;
  const int64_t feat = e.frontend == FrontendKind::Cntf ? e.cntf.feat_dim
                                                        : e.legacy.feat_dim;
  const int64_t t1 = ceil_div(input_frames, 2);
  const int64_t t2 = ceil_div(t1, 2);
  const int64_t f1 = ceil_div(feat, 2);
  const int64_t f2 = ceil_div(f1, 2);

  int64_t frontend = 0;
  if (e.frontend == FrontendKind::Cntf) {
    const int64_t c = e.cntf.base_channels;
    const int64_t f3 = ceil_div(f2, 2);
    auto block = [](int64_t ch, int64_t pos) {
      return 49 * ch * pos + 8 * ch * ch * pos;  // depthwise + two pointwise convs
    };
    frontend += 4 * c * t1 * f1;  // stem 2x2
    frontend += e.cntf.stage_blocks[0] * block(c, t1 * f1);
    frontend += 4 * c * (2 * c) * t2 * f2;  // downsampler 2
    frontend += e.cntf.stage_blocks[1] * block(2 * c, t2 * f2);
    frontend += 2 * (2 * c) * (3 * c) * t2 * f3;  // downsampler 3
    frontend += e.cntf.stage_blocks[2] * block(3 * c, t2 * f3);
    frontend += (3 * c * f3) * d * t2;  // output projection
  } else if (e.frontend == FrontendKind::ConformerSubsampling) {
    frontend += 9 * 1 * d * t1 * f1;
    frontend += 9 * d * d * t2 * f2;
    frontend += (d * f2) * d * t2;
  } else {  // cnn8
    const int64_t ch = e.legacy.channels;
    frontend += 9 * 1 * ch * t1 * f1;
    frontend += 3 * 9 * ch * ch * t1 * f1;
    frontend += 9 * ch * ch * t2 * f2;
    frontend += 3 * 9 * ch * ch * t2 * f2;
    frontend += (ch * f2) * d * t2;
  }

  // per-layer costs at a given frame count
  auto layer_attention = [&](int64_t t) {
    int64_t n = 4 * d * d * t;     // q,k,v,o projections
    n += 2 * t * t * d;            // scores and mixing
    if (e.pos == PosEncoding::Relative) {
      n += (2 * t - 1) * d * d;    // position table projection
      n += t * (2 * t - 1) * d;    // position scores
    }
    return n;
  };
  auto layer_ffn = [&](int64_t t) { return 4 * d * e.ffn_dim * t; };
  auto layer_conv = [&](int64_t t) {
    return 2 * d * d * t + e.conv_kernel * d * t + d * d * t;
  };

  const int64_t tf = ceil_div(input_frames, 4);
  const int64_t tm = e.mid_downsample ? tf / 2 : tf;
  const int split = e.mid_downsample ? e.downsample_position : e.num_layers;
  int64_t attention = 0, ffn = 0, conv = 0;
  for (int i = 0; i < e.num_layers; ++i) {
    const int64_t t = i < split ? tf : tm;
    attention += layer_attention(t);
    ffn += layer_ffn(t);
    conv += layer_conv(t);
  }
  const int64_t mid = e.mid_downsample ? 2 * d * tm : 0;

  rep.breakdown.emplace_back("frontend", frontend);
  rep.breakdown.emplace_back("attention", attention);
  rep.breakdown.emplace_back("ffn", ffn);
  rep.breakdown.emplace_back("conv_module", conv);
  rep.breakdown.emplace_back("mid_downsample", mid);
  rep.total = frontend + attention + ffn + conv + mid;
  rep.breakdown.emplace_back("total", rep.total);
  return rep;
}

GradSuiteResult run_grad_suite(Model& model, double epsilon, double tolerance,
                               std::ostream* log) {
  // fixed tiny utterance: enough frames for two encoder outputs and a
  // two-label transcript
  RandomSource data_rng(20260318);
  Tensor features = Tensor::randn({16, 80}, data_rng, 0.5);
  LabelSequence labels{{1, 2}};

  auto joint = [&]() {
    RandomSource quiet(0);
    LossBreakdown loss = model.loss(features, labels, /*train=*/false, quiet);
    return loss.joint_tensor;
  };

  GradSuiteResult result;
  result.tolerance = tolerance;
  std::vector<std::pair<std::string, Tensor>> params;
  model.visit([&params](const std::string& name, Tensor& t) {
    params.emplace_back(name, t);
  });
  for (auto& [name, tensor] : params) {
    GradCheckReport rep = grad_check(
        [&](const Tensor&) { return joint(); }, tensor, epsilon);
    result.per_param.emplace_back(name, rep.max_rel_err);
    result.coordinates += tensor.numel();
    if (rep.max_rel_err > result.worst) {
      result.worst = rep.max_rel_err;
      result.worst_param = name;
    }
    if (log) {
      (*log) << "gradcheck " << name << " rel_err=" << rep.max_rel_err
             << (rep.max_rel_err <= tolerance ? "" : "  FAIL") << "\n";
    }
  }
  result.pass = result.worst <= tolerance;
  return result;
}

}  // namespace nxf
