// Parameter/FLOPs accounting and file formats.

#include <cmath>
#include <cstdio>
#include <string>

#include "doctest.h"
#include "nxf/analysis.hpp"
#include "nxf/io.hpp"

using namespace nxf;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, double stddev = 1.0) {
  RandomSource rng(seed);
  return Tensor::randn(std::move(shape), rng, stddev);
}

std::string temp_path(const char* name) {
  return std::string("/tmp/nxf_test_") + name;
}

std::string read_bytes(const std::string& path) {
  FILE* f = fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string bytes;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, f)) > 0) bytes.append(buf, n);
  fclose(f);
  return bytes;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  FILE* f = fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  fwrite(bytes.data(), 1, bytes.size(), f);
  fclose(f);
}

}  // namespace

TEST_SUITE_BEGIN("analysis");

TEST_CASE("single linear layer count") {
  // 256 -> 256 with bias: 256^2 + 256
  ModelConfig cfg = ModelConfig::from_preset("nextformer_xs");
  Model m = Model::make(cfg, 1);
  CHECK(m.decoder.layers[0].self_attn.wq.param_count() == 16 * 16 + 16);
  RandomSource rng(2);
  Linear l = Linear::make(256, 256, rng);
  CHECK(l.param_count() == 65792);
}

TEST_CASE("analytic parameter count equals instantiated count exactly") {
  for (const std::string& name : ModelConfig::preset_names()) {
    ModelConfig cfg = ModelConfig::from_preset(name);
    ParamReport rep = count_params(cfg);
    Model m = Model::make(cfg, 7);
    CHECK(rep.total == m.param_count());
    // breakdown adds up
    CHECK(rep.total == rep.get("frontend") + rep.get("encoder_layers") +
                           rep.get("mid_downsample") + rep.get("ctc_head") +
                           rep.get("decoder"));
  }
  // the cnn8 study variant too
  ModelConfig cnn8 = ModelConfig::nextformer_s_cnn8();
  Model m8 = Model::make(cnn8, 7);
  CHECK(count_params(cnn8).total == m8.param_count());
}

TEST_CASE("preset parameter totals match the published configurations") {
  const struct {
    const char* name;
    double published;  // millions
  } rows[] = {
      {"conformer_s", 46.3},
      {"conformer_l", 116.9},
      {"nextformer_s", 46.1},
      {"nextformer_l", 115.1},
  };
  for (const auto& row : rows) {
    ParamReport rep = count_params(ModelConfig::from_preset(row.name));
    const double m = static_cast<double>(rep.total) / 1e6;
    INFO(row.name, " -> ", m, "M");
    CHECK(std::abs(m - row.published) / row.published < 0.02);
  }
  // near-parity between the S variants
  const double cs =
      static_cast<double>(count_params(ModelConfig::from_preset("conformer_s")).total);
  const double ns =
      static_cast<double>(count_params(ModelConfig::from_preset("nextformer_s")).total);
  CHECK(std::abs(ns - cs) / cs < 0.02);
  CHECK(ns < cs);
}

TEST_CASE("closed-form conv cost and FLOPs totals") {
  // one 3x3 conv, 1->256 channels, stride 2x2, 1000x80 input:
  // 9 * 1 * 256 * 500 * 40 MACs exactly
  ModelConfig cs = ModelConfig::from_preset("conformer_s");
  FlopsReport rep = count_flops(cs, 1000);
  const int64_t conv1 = 9LL * 1 * 256 * 500 * 40;
  CHECK(conv1 == 46080000);
  // the frontend entry starts with exactly that conv
  CHECK(rep.get("frontend") > conv1);
  CHECK(rep.total == rep.get("frontend") + rep.get("attention") +
                         rep.get("ffn") + rep.get("conv_module") +
                         rep.get("mid_downsample"));

  // absolute windows around the published figures (25%)
  const struct {
    const char* name;
    double giga;
  } rows[] = {
      {"conformer_s", 11.0},
      {"nextformer_s", 10.9},
      {"conformer_l", 30.9},
      {"nextformer_l", 30.9},
  };
  for (const auto& row : rows) {
    FlopsReport r = count_flops(ModelConfig::from_preset(row.name), 1000);
    const double g = static_cast<double>(r.total) / 1e9;
    INFO(row.name, " -> ", g, "G");
    CHECK(std::abs(g - row.giga) / row.giga < 0.25);
  }

  // convention-independent ratios
  const double fs =
      static_cast<double>(count_flops(ModelConfig::from_preset("conformer_s")).total);
  const double fn =
      static_cast<double>(count_flops(ModelConfig::from_preset("nextformer_s")).total);
  const double f8 =
      static_cast<double>(count_flops(ModelConfig::nextformer_s_cnn8()).total);
  CHECK(fn / fs > 0.9);
  CHECK(fn / fs < 1.1);
  CHECK(f8 / fn > 3.5);
  CHECK(f8 / fn < 5.5);
}

TEST_CASE("FLOPs totals are integer-reproducible and monotone in frames") {
  ModelConfig cfg = ModelConfig::from_preset("nextformer_s");
  FlopsReport a = count_flops(cfg, 1000);
  FlopsReport b = count_flops(cfg, 1000);
  CHECK(a.total == b.total);
  int64_t prev = 0;
  for (int64_t frames : {1, 10, 100, 500, 1000, 2000}) {
    const int64_t total = count_flops(cfg, frames).total;
    CHECK(total > prev);
    prev = total;
  }
  CHECK_THROWS_AS(count_flops(cfg, 0), ConfigError);
}

TEST_CASE("CNTF stage pointwise FLOPs are balanced") {
  CntfConfig cfg;
  cfg.base_channels = 56;
  auto stages = cntf_stage_pointwise_macs(cfg, 1000);
  // analytic ratio 1 : 1 : 1.125
  CHECK(stages[0] == stages[1]);
  CHECK(static_cast<double>(stages[2]) / stages[0] ==
        doctest::Approx(1.125).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double ratio =
          static_cast<double>(stages[i]) / static_cast<double>(stages[j]);
      CHECK(ratio < 1.3);
      CHECK(ratio > 1.0 / 1.3);
    }
}

TEST_CASE("feature files round-trip bit-exactly") {
  const std::string path = temp_path("feats.nxf");
  Tensor x = random_tensor({17, 80}, 5);
  write_features(path, x);
  Tensor back = read_features(path);
  REQUIRE(back.shape() == x.shape());
  // values rounded through f32 on write; a second round trip is identity
  write_features(path, back);
  Tensor again = read_features(path);
  for (int64_t i = 0; i < back.numel(); ++i)
    CHECK(back.data()[i] == again.data()[i]);

  // T = 0 is a valid empty tensor
  write_features(path, Tensor::zeros({0, 80}));
  Tensor empty = read_features(path);
  CHECK(empty.dim(0) == 0);
  CHECK(empty.dim(1) == 80);
}

TEST_CASE("feature file errors are typed and distinct") {
  const std::string path = temp_path("feats_bad.nxf");
  Tensor x = random_tensor({3, 4}, 6);
  write_features(path, x);
  std::string good = read_bytes(path);

  std::string bad_magic = good;
  bad_magic[0] = 'Z';
  write_bytes(path, bad_magic);
  CHECK_THROWS_WITH_AS(read_features(path), "feature file: bad magic",
                       FormatError);

  std::string truncated = good.substr(0, good.size() - 3);
  write_bytes(path, truncated);
  CHECK_THROWS_WITH_AS(read_features(path), "feature file: truncated payload",
                       FormatError);

  std::string bad_tag = good;
  bad_tag[12] = 9;
  write_bytes(path, bad_tag);
  CHECK_THROWS_WITH_AS(read_features(path),
                       "feature file: unsupported dtype tag 9", FormatError);

  std::string trailing = good + "x";
  write_bytes(path, trailing);
  CHECK_THROWS_AS(read_features(path), FormatError);
}

TEST_CASE("checkpoints round-trip and validate against the model") {
  const std::string path = temp_path("model.nxck");
  ModelConfig cfg = ModelConfig::from_preset("nextformer_xs");
  Model a = Model::make(cfg, 11);
  save_checkpoint(path, a);
  std::string first = read_bytes(path);

  Model b = Model::make(cfg, 99);  // different init
  load_checkpoint(path, b);
  save_checkpoint(path, b);
  CHECK(read_bytes(path) == first);  // file -> model -> file is bit-exact

  // identical behaviour after loading
  Tensor x = random_tensor({24, 80}, 12, 0.5);
  auto ha = a.greedy_transcribe(x);
  auto hb = b.greedy_transcribe(x);
  CHECK(ha == hb);

  // mismatched architecture names the first bad entry
  ModelConfig other = cfg;
  other.encoder.dim = 32;
  other.decoder.dim = 32;
  Model c = Model::make(other, 1);
  try {
    load_checkpoint(path, c);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("enc.") != std::string::npos);
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }

  // corrupted magic
  std::string bad = first;
  bad[0] = 'x';
  write_bytes(path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(path, b), "checkpoint: bad magic",
                       FormatError);
}

TEST_CASE("explicit feature normalization") {
  Tensor x = add_scalar(random_tensor({40, 80}, 30, 3.0), 2.5);
  Tensor norm = normalize_features(x);
  double mu = 0.0;
  for (double v : norm.data()) mu += v;
  mu /= static_cast<double>(norm.numel());
  CHECK(std::abs(mu) < 1e-12);
  double var = 0.0;
  for (double v : norm.data()) var += v * v;
  var /= static_cast<double>(norm.numel());
  CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_SUITE_END();
