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

#include "nxf/decoder.hpp"

#include <cmath>

namespace nxf {

void DecoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("decoder: need at least one layer");
  if (dim < 1 || heads < 1 || dim % heads != 0)
    throw ConfigError("decoder: dim/heads invalid");
  if (vocab < 2) throw ConfigError("decoder: vocab must include blank + labels");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("decoder: label smoothing must be in [0,1)");
}

DecoderLayer DecoderLayer::make(const DecoderConfig& cfg, RandomSource& rng) {
  DecoderLayer l;
  l.norm_self = LayerNorm::make(cfg.dim);
  l.norm_src = LayerNorm::make(cfg.dim);
  l.norm_ff = LayerNorm::make(cfg.dim);
  l.self_attn = MultiHeadAttention::make(cfg.dim, cfg.heads, PosEncoding::None,
                                         cfg.dropout, rng);
  l.src_attn = MultiHeadAttention::make(cfg.dim, cfg.heads, PosEncoding::None,
                                        cfg.dropout, rng);
  l.ff_in = Linear::make(cfg.dim, cfg.ffn_dim, rng);
  l.ff_out = Linear::make(cfg.ffn_dim, cfg.dim, rng);
  return l;
}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory, bool train,
                             RandomSource& rng) const {
  const int64_t n = x.dim(0), m = memory.dim(0);
  const double p = self_attn.attn_dropout;
  Tensor h = x;
  {
    std::vector<uint8_t> tri(n * n, 0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j <= i; ++j) tri[i * n + j] = 1;
    Tensor a_in = norm_self.forward(h);
    Tensor a = self_attn.forward(a_in, a_in, a_in, tri, train, rng);
    h = add(h, dropout(a, p, train, rng));
  }
  {
    Tensor a = src_attn.forward(norm_src.forward(h), memory, memory,
                                full_mask(n, m), train, rng);
    h = add(h, dropout(a, p, train, rng));
  }
  {
    Tensor f = ff_out.forward(
        dropout(swish(ff_in.forward(norm_ff.forward(h))), p, train, rng));
    h = add(h, dropout(f, p, train, rng));
  }
  return h;
}

void DecoderLayer::visit(const std::string& prefix, const ParamVisitor& v) {
  auto ln = [&](const std::string& name, LayerNorm& n) {
    v(prefix + "." + name + ".gamma", n.gamma);
    v(prefix + "." + name + ".beta", n.beta);
  };
  auto lin = [&](const std::string& name, Linear& l) {
    v(prefix + "." + name + ".w", l.w);
    if (l.b.defined()) v(prefix + "." + name + ".b", l.b);
  };
  ln("norm_self", norm_self);
  lin("self.wq", self_attn.wq);
  lin("self.wk", self_attn.wk);
  lin("self.wv", self_attn.wv);
  lin("self.wo", self_attn.wo);
  ln("norm_src", norm_src);
  lin("src.wq", src_attn.wq);
  lin("src.wk", src_attn.wk);
  lin("src.wv", src_attn.wv);
  lin("src.wo", src_attn.wo);
  ln("norm_ff", norm_ff);
  lin("ff_in", ff_in);
  lin("ff_out", ff_out);
}

TransformerDecoder TransformerDecoder::make(const DecoderConfig& cfg,
                                            RandomSource& rng) {
  cfg.validate();
  TransformerDecoder d;
  d.cfg = cfg;
  d.embed = Tensor::randn({cfg.num_classes(), cfg.dim}, rng,
                          1.0 / std::sqrt(static_cast<double>(cfg.dim)));
  for (int i = 0; i < cfg.num_layers; ++i)
    d.layers.push_back(DecoderLayer::make(cfg, rng));
  d.final_norm = LayerNorm::make(cfg.dim);
  d.out_proj = Linear::make(cfg.dim, cfg.num_classes(), rng);
  return d;
}

Tensor TransformerDecoder::forward_logits(const std::vector<int64_t>& tokens,
                                          const Tensor& memory, bool train,
                                          RandomSource& rng) const {
  if (tokens.empty())
    throw ConfigError("decoder: need at least one input token");
  if (memory.rank() != 2 || memory.dim(1) != cfg.dim)
    throw ShapeError("decoder: memory " + shape_str(memory.shape()) +
                     " vs dim " + std::to_string(cfg.dim));
  const int64_t n = static_cast<int64_t>(tokens.size());
  std::vector<int64_t> pos(n);
  for (int64_t i = 0; i < n; ++i) pos[i] = i;
  Tensor h = add(scale(gather_rows(embed, tokens),
                       std::sqrt(static_cast<double>(cfg.dim))),
                 sinusoid_table(pos, cfg.dim));
  h = dropout(h, cfg.dropout, train, rng);
  for (const auto& layer : layers) h = layer.forward(h, memory, train, rng);
  return out_proj.forward(final_norm.forward(h));
}

Tensor TransformerDecoder::attention_loss(const Tensor& memory,
                                          const LabelSequence& y, bool train,
                                          RandomSource& rng) const {
  y.validate(cfg.vocab);
  std::vector<int64_t> input = {cfg.sos_eos()};
  input.insert(input.end(), y.ids.begin(), y.ids.end());
  std::vector<int64_t> targets = y.ids;
  targets.push_back(cfg.sos_eos());
  Tensor logits = forward_logits(input, memory, train, rng);
  return label_smoothed_nll(logits, targets, cfg.label_smoothing);
}

void TransformerDecoder::visit(const std::string& prefix,
                               const ParamVisitor& v) {
  v(prefix + ".embed", embed);
  for (size_t i = 0; i < layers.size(); ++i)
    layers[i].visit(prefix + ".layer" + std::to_string(i), v);
  v(prefix + ".final_norm.gamma", final_norm.gamma);
  v(prefix + ".final_norm.beta", final_norm.beta);
  v(prefix + ".out.w", out_proj.w);
  v(prefix + ".out.b", out_proj.b);
}

int64_t TransformerDecoder::param_count() const {
  int64_t n = 0;
  auto self = const_cast<TransformerDecoder*>(this);
  self->visit("", [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

Tensor label_smoothed_nll(const Tensor& logits,
                          const std::vector<int64_t>& targets, double eps) {
  if (logits.rank() != 2)
    throw ShapeError("label_smoothed_nll: logits must be [n, classes]");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    throw ShapeError("label_smoothed_nll: " + std::to_string(targets.size()) +
                     " targets vs " + std::to_string(n) + " rows");
  const double off = eps / static_cast<double>(k - 1);
  std::vector<double> q(n * k, off);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t t = targets[i];
    if (t < 0 || t >= k)
      throw ConfigError("label_smoothed_nll: target " + std::to_string(t) +
                        " outside [0, " + std::to_string(k - 1) + "]");
    q[i * k + t] = 1.0 - eps;
  }
  Tensor logp = log_softmax(logits, -1);
  Tensor weighted = mul(logp, Tensor::from_vector({n, k}, std::move(q)));
  return scale(sum(weighted), -1.0 / static_cast<double>(n));
}

Tensor joint_loss(const Tensor& l_ctc, const Tensor& l_att, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("joint_loss: alpha must be in [0,1], got " +
                      std::to_string(alpha));
  if (l_ctc.numel() != 1 || l_att.numel() != 1)
    throw ShapeError("joint_loss: losses must be scalars");
  return add(scale(l_ctc, alpha), scale(l_att, 1.0 - alpha));
}

}  // namespace nxf
