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

#include "nxf/model.hpp"

namespace nxf {

namespace {

// Character inventories of the corpora the S and L tables are built around.
constexpr int64_t kVocabS = 4233;
constexpr int64_t kVocabL = 5538;

ModelConfig base_config(int64_t dim, int heads, int64_t vocab) {
  ModelConfig cfg;
  cfg.vocab = vocab;
  cfg.alpha = 0.3;
  cfg.encoder.num_layers = 12;
  cfg.encoder.dim = dim;
  cfg.encoder.heads = heads;
  cfg.encoder.ffn_dim = 2048;
  cfg.encoder.conv_kernel = 15;
  cfg.encoder.dropout = 0.1;
  cfg.encoder.attn_dropout = 0.1;
  cfg.decoder.num_layers = 6;
  cfg.decoder.dim = dim;
  cfg.decoder.heads = heads;
  cfg.decoder.ffn_dim = 2048;
  cfg.decoder.dropout = 0.1;
  cfg.decoder.label_smoothing = 0.1;
  cfg.decoder.vocab = vocab;
  return cfg;
}

ModelConfig conformer(int64_t dim, int heads, int64_t vocab) {
  ModelConfig cfg = base_config(dim, heads, vocab);
  cfg.encoder.frontend = FrontendKind::ConformerSubsampling;
  cfg.encoder.mid_downsample = false;
  return cfg;
}

ModelConfig nextformer(int64_t dim, int heads, int64_t channels,
                       int64_t vocab) {
  ModelConfig cfg = base_config(dim, heads, vocab);
  cfg.encoder.frontend = FrontendKind::Cntf;
  cfg.encoder.cntf.base_channels = channels;
  cfg.encoder.cntf.stage_blocks[0] = 3;
  cfg.encoder.cntf.stage_blocks[1] = 3;
  cfg.encoder.cntf.stage_blocks[2] = 3;
  cfg.encoder.cntf.sd_p = 0.1;
  cfg.encoder.mid_downsample = true;
  cfg.encoder.downsample_position = 6;
  return cfg;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("model: alpha must be in [0,1]");
  if (encoder.dim != decoder.dim)
    throw ConfigError("model: encoder/decoder dims differ");
  if (decoder.vocab != vocab)
    throw ConfigError("model: decoder vocab mismatch");
  encoder.validate();
  decoder.validate();
}

ModelConfig ModelConfig::from_preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "conformer_s") {
    cfg = conformer(256, 4, kVocabS);
  } else if (name == "conformer_l") {
    cfg = conformer(512, 8, kVocabL);
  } else if (name == "nextformer_s") {
    cfg = nextformer(256, 4, 56, kVocabS);
  } else if (name == "nextformer_l") {
    cfg = nextformer(512, 8, 104, kVocabL);
  } else if (name == "nextformer_xs") {
    cfg = nextformer(16, 2, 8, 8);
    cfg.encoder.num_layers = 2;
    cfg.encoder.ffn_dim = 64;
    cfg.encoder.downsample_position = 1;
    cfg.encoder.cntf.stage_blocks[0] = 1;
    cfg.encoder.cntf.stage_blocks[1] = 1;
    cfg.encoder.cntf.stage_blocks[2] = 1;
    cfg.decoder.num_layers = 2;
    cfg.decoder.ffn_dim = 64;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.preset = name;
  return cfg;
}

const std::vector<std::string>& ModelConfig::preset_names() {
  static const std::vector<std::string> names = {
      "conformer_s", "conformer_l", "nextformer_s", "nextformer_l",
      "nextformer_xs"};
  return names;
}

ModelConfig ModelConfig::nextformer_s_cnn8() {
  ModelConfig cfg = from_preset("nextformer_s");
  cfg.preset = "nextformer_s_cnn8";
  cfg.encoder.frontend = FrontendKind::Cnn8;
  cfg.encoder.legacy.channels = 256;
  return cfg;
}

Model Model::make(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  RandomSource rng(seed);
  RandomSource enc_rng = rng.split(1);
  RandomSource ctc_rng = rng.split(2);
  RandomSource dec_rng = rng.split(3);
  m.encoder = Encoder::make(cfg.encoder, enc_rng);
  m.ctc_head = Linear::make(cfg.encoder.dim, cfg.vocab, ctc_rng);
  m.decoder = TransformerDecoder::make(cfg.decoder, dec_rng);
  return m;
}

Tensor Model::encode(const Tensor& features, bool train,
                     RandomSource& rng) const {
  return encoder.forward(features, train, rng);
}

Tensor Model::ctc_log_probs(const Tensor& encoded) const {
  return log_softmax(ctc_head.forward(encoded), -1);
}

LossBreakdown Model::loss(const Tensor& features, const LabelSequence& y,
                          bool train, RandomSource& rng) const {
  Tensor h = encode(features, train, rng);
  CtcResult ctc = ctc_loss(ctc_log_probs(h), y);
  Tensor att = decoder.attention_loss(h, y, train, rng);
  LossBreakdown out;
  out.ctc = ctc.loss.item();
  out.att = att.item();
  out.alpha = cfg.alpha;
  out.ctc_feasible = ctc.feasible;
  out.joint_tensor = joint_loss(ctc.loss, att, cfg.alpha);
  out.joint = out.joint_tensor.item();
  return out;
}

std::vector<int64_t> Model::greedy_transcribe(const Tensor& features) const {
  NoGradGuard inference;
  RandomSource quiet(0);
  Tensor h = encode(features, /*train=*/false, quiet);
  return ctc_greedy_decode(ctc_log_probs(h));
}

void Model::visit(const ParamVisitor& v) {
  encoder.visit("enc", v);
  v("ctc.w", ctc_head.w);
  v("ctc.b", ctc_head.b);
  decoder.visit("dec", v);
}

int64_t Model::param_count() const {
  int64_t n = 0;
  const_cast<Model*>(this)->visit(
      [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

void Model::set_trainable(bool enable) {
  visit([enable](const std::string&, Tensor& t) {
    t.set_requires_grad(enable);
  });
}

void Model::zero_grads() {
  visit([](const std::string&, Tensor& t) {
    if (t.requires_grad()) t.zero_grad();
  });
}

}  // namespace nxf
