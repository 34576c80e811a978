// CNTF frontend and baseline frontends: shapes, causality, oracles.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "nxf/frontend.hpp"
#include "nxf/gradcheck.hpp"
#include "oracles.hpp"

using namespace nxf;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, double stddev = 1.0) {
  RandomSource rng(seed);
  return Tensor::randn(std::move(shape), rng, stddev);
}

// channel LN for [C,T,F], then affine
std::vector<double> ln_channels(const std::vector<double>& x, int64_t c,
                                int64_t t, int64_t f,
                                const std::vector<double>& gamma,
                                const std::vector<double>& beta, double eps) {
  std::vector<double> y(x.size());
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t fi = 0; fi < f; ++fi) {
      double mu = 0.0;
      for (int64_t ci = 0; ci < c; ++ci) mu += x[(ci * t + ti) * f + fi];
      mu /= c;
      double var = 0.0;
      for (int64_t ci = 0; ci < c; ++ci) {
        const double d = x[(ci * t + ti) * f + fi] - mu;
        var += d * d;
      }
      var /= c;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int64_t ci = 0; ci < c; ++ci)
        y[(ci * t + ti) * f + fi] =
            (x[(ci * t + ti) * f + fi] - mu) * inv * gamma[ci] + beta[ci];
    }
  return y;
}

CntfConfig xs_cfg() {
  CntfConfig cfg;
  cfg.base_channels = 8;
  cfg.stage_blocks[0] = cfg.stage_blocks[1] = cfg.stage_blocks[2] = 1;
  cfg.out_dim = 16;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("frontend");

TEST_CASE("convnext block: zero LayerScale is the identity") {
  RandomSource rng(1);
  ConvNextBlock blk = ConvNextBlock::make(4, 0.1, false, 0.0, rng);
  Tensor x = random_tensor({4, 6, 6}, 2);
  RandomSource fwd(3);
  Tensor out = blk.forward(x, /*train=*/false, fwd);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("convnext block: eval forward is deterministic and reads no RNG") {
  RandomSource rng(5);
  ConvNextBlock blk = ConvNextBlock::make(4, 0.1, false, 1e-2, rng);
  Tensor x = random_tensor({4, 6, 6}, 6);
  RandomSource r1(7), r2(7);
  Tensor a = blk.forward(x, false, r1);
  Tensor b = blk.forward(x, false, r2);
  CHECK(r1.draws() == 0);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("convnext block matches a composition of primitive oracles") {
  const int64_t c = 4, t = 6, f = 6;
  RandomSource rng(10);
  ConvNextBlock blk = ConvNextBlock::make(c, 0.1, false, 1e-2, rng);
  // overwrite with small random params so every path is exercised
  blk.dw_b = random_tensor({c}, 11, 0.1);
  blk.norm.beta = random_tensor({c}, 12, 0.1);
  Tensor x = random_tensor({c, t, f}, 13);
  RandomSource quiet(0);
  Tensor got = blk.forward(x, /*train=*/false, quiet);

  // straight-line recomputation
  ConvSpec dw;
  dw.kernel_t = dw.kernel_f = 7;
  dw.in_channels = dw.out_channels = c;
  dw.depthwise = true;
  std::vector<double> h =
      oracle::conv2d(x.data(), c, t, f, dw, blk.dw_w.data(), blk.dw_b.data());
  h = ln_channels(h, c, t, f, blk.norm.gamma.data(), blk.norm.beta.data(),
                  blk.norm.eps);
  ConvSpec pw1;
  pw1.in_channels = c;
  pw1.out_channels = 4 * c;
  h = oracle::conv2d(h, c, t, f, pw1, blk.pw1_w.data(), blk.pw1_b.data());
  for (double& v : h) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  ConvSpec pw2;
  pw2.in_channels = 4 * c;
  pw2.out_channels = c;
  h = oracle::conv2d(h, 4 * c, t, f, pw2, blk.pw2_w.data(), blk.pw2_b.data());
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < t * f; ++i) {
      const int64_t at = ci * t * f + i;
      h[at] = x.data()[at] + 0.9 * blk.ls_gamma.data()[ci] * h[at];
    }
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got.data()[i] == doctest::Approx(h[i]).epsilon(1e-12));
}

TEST_CASE("cntf shape contract at the S scale: 1000x80 -> 250x256") {
  CntfConfig cfg;
  cfg.base_channels = 56;
  cfg.out_dim = 256;
  RandomSource rng(20);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  Tensor x = random_tensor({1000, 80}, 21);
  RandomSource quiet(0);
  Tensor h = fe.forward(x, false, quiet);
  CHECK(h.dim(0) == 250);
  CHECK(h.dim(1) == 256);
  CHECK(h.all_finite());
}

TEST_CASE("cntf frequency ladder 80 -> 40 -> 20 -> 10") {
  CntfConfig cfg = xs_cfg();
  RandomSource rng(22);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  Tensor x = reshape(random_tensor({32, 80}, 23), {1, 32, 80});
  ConvSpec s1;
  s1.kernel_t = s1.kernel_f = 2;
  s1.stride_t = s1.stride_f = 2;
  s1.in_channels = 1;
  s1.out_channels = cfg.base_channels;
  Tensor h1 = conv2d(x, s1, fe.ds1_w, fe.ds1_b);
  CHECK(h1.dim(2) == 40);
  ConvSpec s2 = s1;
  s2.in_channels = cfg.base_channels;
  s2.out_channels = 2 * cfg.base_channels;
  Tensor h2 = conv2d(h1, s2, fe.ds2_w, fe.ds2_b);
  CHECK(h2.dim(2) == 20);
  ConvSpec s3;
  s3.kernel_t = 1;
  s3.kernel_f = 2;
  s3.stride_t = 1;
  s3.stride_f = 2;
  s3.in_channels = 2 * cfg.base_channels;
  s3.out_channels = 3 * cfg.base_channels;
  Tensor h3 = conv2d(h2, s3, fe.ds3_w, fe.ds3_b);
  CHECK(h3.dim(2) == 10);
  // flatten feeds 3c * F/8 into the output projection
  CHECK(fe.out_proj.w.dim(0) == 3 * cfg.base_channels * 10);
}

TEST_CASE("cntf minimal and too-short inputs") {
  CntfConfig cfg = xs_cfg();
  RandomSource rng(25);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  RandomSource quiet(0);
  Tensor out = fe.forward(random_tensor({8, 80}, 26), false, quiet);
  CHECK(out.dim(0) == 2);
  CHECK(out.dim(1) == cfg.out_dim);
  CHECK(out.all_finite());
  CHECK_THROWS_AS(fe.forward(random_tensor({3, 80}, 27), false, quiet),
                  ShapeError);
}

TEST_CASE("causal cntf: perturbing future input frames leaves earlier outputs") {
  CntfConfig cfg = xs_cfg();
  cfg.causal = true;
  RandomSource rng(30);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  Tensor x = random_tensor({40, 80}, 31);
  RandomSource quiet(0);
  Tensor base = fe.forward(x, false, quiet);
  for (int64_t cut : {8, 16, 28}) {
    std::vector<double> mutated = x.data();
    RandomSource noise(32 + cut);
    for (int64_t ti = cut + 1; ti < 40; ++ti)
      for (int64_t fi = 0; fi < 80; ++fi)
        mutated[ti * 80 + fi] += noise.gaussian();
    Tensor out = fe.forward(Tensor::from_vector({40, 80}, mutated), false, quiet);
    // outputs strictly before floor(cut/4) depend only on inputs <= cut
    for (int64_t to = 0; to < cut / 4; ++to)
      for (int64_t c2 = 0; c2 < cfg.out_dim; ++c2)
        CHECK(out.at({to, c2}) == base.at({to, c2}));
  }
}

TEST_CASE("cntf end-to-end gradients at XS scale") {
  CntfConfig cfg = xs_cfg();
  RandomSource rng(35);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  Tensor x = random_tensor({8, 80}, 36, 0.5);
  RandomSource quiet(0);
  auto fn_x = [&](const Tensor& t) {
    Tensor o = fe.forward(t, false, quiet);
    return sum(mul(o, o));
  };
  CHECK(grad_check_err(fn_x, x) < 1e-4);
  auto fn_w = [&](const Tensor&) {
    Tensor o = fe.forward(x, false, quiet);
    return sum(mul(o, o));
  };
  CHECK(grad_check_err(fn_w, fe.stage2[0].dw_w) < 1e-4);
  CHECK(grad_check_err(fn_w, fe.ds2_w) < 1e-4);
  CHECK(grad_check_err(fn_w, fe.out_proj.w) < 1e-4);
}

TEST_CASE("conformer subsampling frontend: 1000x80 -> 250x256") {
  LegacyFrontendConfig cfg;
  cfg.variant = FrontendKind::ConformerSubsampling;
  cfg.out_dim = 256;
  cfg.channels = 256;
  RandomSource rng(40);
  LegacyFrontend fe = LegacyFrontend::make(cfg, rng);
  Tensor out = fe.forward(random_tensor({1000, 80}, 41));
  CHECK(out.dim(0) == 250);
  CHECK(out.dim(1) == 256);
  CHECK(out.all_finite());
}

TEST_CASE("cnn8 frontend: shape, fixed 256-channel trunk, residual wiring") {
  LegacyFrontendConfig cfg;
  cfg.variant = FrontendKind::Cnn8;
  cfg.channels = 256;
  cfg.out_dim = 64;
  RandomSource rng(50);
  LegacyFrontend fe = LegacyFrontend::make(cfg, rng);
  REQUIRE(fe.specs.size() == 8);
  const int64_t strides[8] = {2, 1, 1, 1, 2, 1, 1, 1};
  for (int i = 0; i < 8; ++i) {
    CHECK(fe.specs[i].out_channels == 256);
    CHECK(fe.specs[i].stride_t == strides[i]);
  }
  Tensor x = random_tensor({64, 80}, 51, 0.3);
  Tensor out = fe.forward(x);
  CHECK(out.dim(0) == 16);  // ceil(64/4)
  CHECK(out.dim(1) == 64);

  // zero blocks 3-4: their ReLU output dies and the residual passes the
  // block-2 activation straight to the block-4 output
  LegacyFrontend cut = fe;
  cut.conv_w[2] = Tensor::zeros(cut.conv_w[2].shape());
  cut.conv_b[2] = Tensor::zeros(cut.conv_b[2].shape());
  cut.conv_w[3] = Tensor::zeros(cut.conv_w[3].shape());
  cut.conv_b[3] = Tensor::zeros(cut.conv_b[3].shape());
  Tensor got = cut.forward(x);

  // recompute with blocks 3-4 removed entirely
  Tensor h = reshape(x, {1, 64, 80});
  h = relu(conv2d(h, cut.specs[0], cut.conv_w[0], cut.conv_b[0]));
  h = relu(conv2d(h, cut.specs[1], cut.conv_w[1], cut.conv_b[1]));
  for (int i = 4; i < 8; ++i)
    h = relu(conv2d(h, cut.specs[i], cut.conv_w[i], cut.conv_b[i]));
  Tensor flat = reshape(permute(h, {1, 0, 2}), {h.dim(1), h.dim(0) * h.dim(2)});
  Tensor want = cut.out_proj.forward(flat);
  REQUIRE(got.shape() == want.shape());
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got.data()[i] == want.data()[i]);
}

TEST_CASE("every frontend subsamples time by exactly 4") {
  // structural law, checked thin so the 8-layer stack stays cheap
  LegacyFrontendConfig c8;
  c8.variant = FrontendKind::Cnn8;
  c8.channels = 16;
  c8.out_dim = 8;
  RandomSource rng(55);
  LegacyFrontend cnn8 = LegacyFrontend::make(c8, rng);
  for (int64_t t : {8, 9, 12, 15, 16, 1000}) {
    Tensor out = cnn8.forward(random_tensor({t, 80}, 56 + t, 0.3));
    CHECK(out.dim(0) == (t + 3) / 4);
  }

  LegacyFrontendConfig cs;
  cs.variant = FrontendKind::ConformerSubsampling;
  cs.out_dim = 8;
  LegacyFrontend sub = LegacyFrontend::make(cs, rng);
  CntfConfig cc = xs_cfg();
  CntfFrontend cntf = CntfFrontend::make(cc, rng);
  RandomSource quiet(0);
  for (int64_t t : {8, 11, 21, 33}) {
    Tensor x = random_tensor({t, 80}, 57 + t, 0.3);
    CHECK(sub.forward(x).dim(0) == (t + 3) / 4);
    CHECK(cntf.forward(x, false, quiet).dim(0) == (t + 3) / 4);
  }
}

TEST_CASE("frontend streaming equals the full causal pass") {
  CntfConfig cfg = xs_cfg();
  cfg.causal = true;
  RandomSource rng(60);
  CntfFrontend fe = CntfFrontend::make(cfg, rng);
  Tensor x = random_tensor({48, 80}, 61);
  RandomSource quiet(0);
  NoGradGuard ng;
  Tensor full = fe.forward(x, false, quiet);
  for (int64_t chunk : {8, 16, 24, 48}) {
    CntfStreamState state;
    std::vector<double> out;
    for (int64_t at = 0; at < 48; at += chunk) {
      Tensor c = slice0(x, at, std::min<int64_t>(at + chunk, 48));
      Tensor o = fe.forward_stream(c, state);
      out.insert(out.end(), o.data().begin(), o.data().end());
    }
    REQUIRE(static_cast<int64_t>(out.size()) == full.numel());
    for (size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(full.data()[i]).epsilon(1e-13));
  }
  CntfStreamState state;
  CHECK_THROWS_AS(fe.forward_stream(random_tensor({6, 80}, 62), state),
                  ConfigError);
}

TEST_SUITE_END();
