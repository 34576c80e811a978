// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are fixed here, not tuned at run time.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "nxf/analysis.hpp"
#include "nxf/gradcheck.hpp"
#include "nxf/io.hpp"
#include "nxf/train.hpp"
#include "oracles.hpp"

using namespace nxf;

namespace {

int g_criterion = 0;
int g_failed = 0;

void report(bool pass, const char* name, const std::string& detail) {
  ++g_criterion;
  if (!pass) ++g_failed;
  std::printf("[%2d] %s  %-22s %s\n", g_criterion, pass ? "PASS" : "FAIL",
              name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

Tensor random_tensor(Shape shape, uint64_t seed, double stddev = 1.0) {
  RandomSource rng(seed);
  return Tensor::randn(std::move(shape), rng, stddev);
}

// ---------------------------------------------------------------------------
// 1. parameter counts
// ---------------------------------------------------------------------------

void criterion_params() {
  const struct {
    const char* name;
    double published_m;
  } rows[] = {{"conformer_s", 46.3},
              {"conformer_l", 116.9},
              {"nextformer_s", 46.1},
              {"nextformer_l", 115.1}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    ModelConfig cfg = ModelConfig::from_preset(row.name);
    const double total = static_cast<double>(count_params(cfg).total) / 1e6;
    const double rel = std::abs(total - row.published_m) / row.published_m;
    pass = pass && rel < 0.02;
    detail += fmt("%s=%.2fM(%+.2f%%) ", row.name, total, 100.0 * rel);
  }
  const double cs =
      static_cast<double>(count_params(ModelConfig::from_preset("conformer_s")).total);
  const double ns =
      static_cast<double>(count_params(ModelConfig::from_preset("nextformer_s")).total);
  const double parity = std::abs(ns - cs) / cs;
  pass = pass && parity < 0.02;
  detail += fmt("parity=%.3f%%", 100.0 * parity);
  report(pass, "parameter counts", detail);
}

// ---------------------------------------------------------------------------
// 2. FLOPs accounting
// ---------------------------------------------------------------------------

void criterion_flops() {
  const struct {
    const char* name;
    double published_g;
  } rows[] = {{"conformer_s", 11.0},
              {"nextformer_s", 10.9},
              {"conformer_l", 30.9},
              {"nextformer_l", 30.9}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    const double g = static_cast<double>(
                         count_flops(ModelConfig::from_preset(row.name)).total) /
                     1e9;
    const double rel = std::abs(g - row.published_g) / row.published_g;
    pass = pass && rel < 0.25;
    detail += fmt("%s=%.2fG ", row.name, g);
  }
  const double fs = static_cast<double>(
      count_flops(ModelConfig::from_preset("conformer_s")).total);
  const double fn = static_cast<double>(
      count_flops(ModelConfig::from_preset("nextformer_s")).total);
  const double f8 =
      static_cast<double>(count_flops(ModelConfig::nextformer_s_cnn8()).total);
  pass = pass && fn / fs > 0.9 && fn / fs < 1.1;
  pass = pass && f8 / fn > 3.5 && f8 / fn < 5.5;
  detail += fmt("next/conf=%.3f cnn8/next=%.2f(%.1fG)", fn / fs, f8 / fn,
                f8 / 1e9);
  report(pass, "FLOPs accounting", detail);
}

// ---------------------------------------------------------------------------
// 3. CNTF stage balance
// ---------------------------------------------------------------------------

void criterion_stage_balance() {
  CntfConfig cfg;
  cfg.base_channels = 56;
  auto stages = cntf_stage_pointwise_macs(cfg, 1000);
  double worst = 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      worst = std::max(worst, static_cast<double>(stages[i]) /
                                  static_cast<double>(stages[j]));
  report(worst < 1.3, "CNTF stage balance",
         fmt("pointwise MACs %.3fG/%.3fG/%.3fG worst-ratio=%.3f",
             stages[0] / 1e9, stages[1] / 1e9, stages[2] / 1e9, worst));
}

// ---------------------------------------------------------------------------
// 4. gradient suite
// ---------------------------------------------------------------------------

bool op_gradients(double tol, std::string& worst_desc, double& worst) {
  auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_desc = name;
    }
    return err < tol;
  };
  bool ok = true;
  uint64_t seed = 9000;
  for (int rep = 0; rep < 3; ++rep) {
    {
      Tensor b = random_tensor({5, 3}, seed++);
      ok &= track("matmul", grad_check_err([&](const Tensor& a) {
                    return sum(mul(matmul(a, b), matmul(a, b)));
                  }, random_tensor({4, 5}, seed++)));
    }
    {
      Tensor o = random_tensor({2, 3, 4}, seed++);
      ok &= track("mul", grad_check_err([&](const Tensor& a) {
                    return sum(mul(mul(a, o), a));
                  }, random_tensor({2, 3, 4}, seed++)));
      ok &= track("softmax", grad_check_err([&](const Tensor& a) {
                    return sum(mul(softmax(a, -1), o));
                  }, random_tensor({2, 3, 4}, seed++)));
      ok &= track("log_softmax", grad_check_err([&](const Tensor& a) {
                    return sum(mul(log_softmax(a, -1), o));
                  }, random_tensor({2, 3, 4}, seed++)));
    }
    {
      ConvSpec sp;
      sp.kernel_t = 3;
      sp.kernel_f = 3;
      sp.stride_t = 2;
      sp.stride_f = 1;
      sp.in_channels = 2;
      sp.out_channels = 3;
      Tensor w = random_tensor({3, 2, 3, 3}, seed++);
      Tensor b = random_tensor({3}, seed++);
      Tensor x = random_tensor({2, 6, 5}, seed++);
      ok &= track("conv2d.x", grad_check_err([&](const Tensor& t) {
                    return sum(mul(conv2d(t, sp, w, b), conv2d(t, sp, w, b)));
                  }, x));
      ok &= track("conv2d.w", grad_check_err([&](const Tensor& t) {
                    return sum(mul(conv2d(x, sp, t, b), conv2d(x, sp, t, b)));
                  }, w));
    }
    {
      Tensor w = random_tensor({7, 4}, seed++);
      Tensor b = random_tensor({4}, seed++);
      ok &= track("conv1d", grad_check_err([&](const Tensor& t) {
                    Tensor o = depthwise_conv1d(t, w, b, true);
                    return sum(mul(o, o));
                  }, random_tensor({9, 4}, seed++)));
    }
    {
      Tensor g = random_tensor({6}, seed++);
      Tensor be = random_tensor({6}, seed++);
      ok &= track("layer_norm", grad_check_err([&](const Tensor& t) {
                    Tensor o = layer_norm(t, g, be, 1e-5, -1);
                    return sum(mul(o, o));
                  }, random_tensor({5, 6}, seed++)));
    }
    {
      Tensor o = random_tensor({3, 4}, seed++);
      ok &= track("gelu", grad_check_err([&](const Tensor& t) {
                    return sum(mul(gelu(t), o));
                  }, random_tensor({3, 4}, seed++)));
      ok &= track("swish", grad_check_err([&](const Tensor& t) {
                    return sum(mul(swish(t), o));
                  }, random_tensor({3, 4}, seed++)));
      Tensor og = random_tensor({3, 2}, seed++);
      ok &= track("glu", grad_check_err([&](const Tensor& t) {
                    return sum(mul(glu(t), og));
                  }, random_tensor({3, 4}, seed++)));
    }
    {
      RandomSource mk(seed++);
      for (PosEncoding pe : {PosEncoding::None, PosEncoding::Relative}) {
        MultiHeadAttention mha = MultiHeadAttention::make(4, 2, pe, 0.0, mk);
        Tensor kv = random_tensor({3, 4}, seed++);
        RandomSource quiet(0);
        ok &= track("attention", grad_check_err([&](const Tensor& q) {
                      Tensor o = mha.forward(q, kv, kv, full_mask(3, 3), false,
                                             quiet);
                      return sum(mul(o, o));
                    }, random_tensor({3, 4}, seed++)));
      }
    }
    {
      Tensor taps = random_tensor({2, 4}, seed++);
      ok &= track("fsmn", grad_check_err([&](const Tensor& t) {
                    Tensor o = fsmn_downsample(t, taps);
                    return sum(mul(o, o));
                  }, random_tensor({6, 4}, seed++)));
    }
    {
      ok &= track("ctc", grad_check_err([&](const Tensor& t) {
                    return ctc_loss(log_softmax(t, -1), {{1, 2}}).loss;
                  }, random_tensor({5, 3}, seed++)));
    }
    {
      ok &= track("smoothed_ce", grad_check_err([&](const Tensor& t) {
                    return label_smoothed_nll(t, {1, 0, 2}, 0.1);
                  }, random_tensor({3, 4}, seed++)));
    }
  }
  return ok;
}

void criterion_gradients() {
  double worst_op = 0.0;
  std::string worst_op_name;
  const bool ops_ok = op_gradients(1e-4, worst_op_name, worst_op);

  Model model = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
  GradSuiteResult res = run_grad_suite(model, 1e-5, 1e-4);
  report(ops_ok && res.pass, "gradient suite",
         fmt("ops worst=%.2e (%s); joint loss over %lld coords worst=%.2e (%s)",
             worst_op, worst_op_name.c_str(),
             static_cast<long long>(res.coordinates), res.worst,
             res.worst_param.c_str()));
}

// ---------------------------------------------------------------------------
// 5. CTC vs exhaustive enumeration
// ---------------------------------------------------------------------------

void criterion_ctc_oracle() {
  uint64_t seed = 100;
  RandomSource pick(7);
  int cases = 0, feasible = 0;
  double worst = 0.0;
  bool pass = true;
  for (int64_t m = 1; m <= 5; ++m) {
    for (int64_t v = 2; v <= 3; ++v) {
      for (int64_t l = 0; l <= 2; ++l) {
        for (int rep = 0; rep < 8; ++rep) {
          std::vector<int64_t> y;
          for (int64_t i = 0; i < l; ++i)
            y.push_back(1 + static_cast<int64_t>(pick.uniform() * (v - 1)));
          Tensor lp = log_softmax(random_tensor({m, v}, seed++, 2.0), -1);
          LabelSequence seq{y};
          CtcResult got = ctc_loss(lp, seq);
          const double want = oracle::ctc_enum(lp, y);
          ++cases;
          if (m < ctc_min_frames(seq)) {
            pass = pass && !got.feasible && std::isinf(got.loss.item()) &&
                   std::isinf(want);
          } else {
            ++feasible;
            const double diff = std::abs(got.loss.item() - want);
            worst = std::max(worst, diff);
            pass = pass && diff < 1e-10;
          }
        }
      }
    }
  }
  report(pass && cases >= 200, "CTC oracle",
         fmt("%d cases (%d feasible), worst |diff|=%.2e", cases, feasible,
             worst));
}

// ---------------------------------------------------------------------------
// 6. two-tap downsampling vs direct summation
// ---------------------------------------------------------------------------

void criterion_fsmn_oracle() {
  bool pass = true;
  int cases = 0;
  uint64_t seed = 500;
  RandomSource pick(11);
  for (int rep = 0; rep < 110; ++rep) {
    const int64_t t = 2 + static_cast<int64_t>(pick.uniform() * 31);  // 2..32
    const int64_t d = 1 + static_cast<int64_t>(pick.uniform() * 8);   // 1..8
    Tensor h = random_tensor({t, d}, seed++);
    Tensor taps = random_tensor({2, d}, seed++);
    Tensor out = fsmn_downsample(h, taps);
    pass = pass && out.dim(0) == t / 2;
    for (int64_t m2 = 0; m2 < t / 2; ++m2)
      for (int64_t c = 0; c < d; ++c) {
        const double want = taps.at({0, c}) * h.at({2 * m2 + 1, c}) +
                            taps.at({1, c}) * h.at({2 * m2, c});
        pass = pass && out.at({m2, c}) == want;
      }
    ++cases;
  }
  // delta taps select exactly the odd frames
  Tensor h = random_tensor({8, 3}, seed++);
  std::vector<double> delta(6, 0.0);
  delta[0] = delta[1] = delta[2] = 1.0;  // w0 = 1, w1 = 0
  Tensor odd = fsmn_downsample(h, Tensor::from_vector({2, 3}, delta));
  for (int64_t m2 = 0; m2 < 4; ++m2)
    for (int64_t c = 0; c < 3; ++c)
      pass = pass && odd.at({m2, c}) == h.at({2 * m2 + 1, c});
  report(pass && cases >= 100, "two-tap downsample oracle",
         fmt("%d random cases exact, delta taps select odd frames", cases));
}

// ---------------------------------------------------------------------------
// 7. streaming equivalence
// ---------------------------------------------------------------------------

double stream_deviation(const Model& model, const Tensor& x,
                        int64_t input_chunk) {
  NoGradGuard inference;
  RandomSource quiet(0);
  Tensor full = model.encoder.forward(x, false, quiet);
  StreamState state;
  std::vector<double> streamed;
  for (int64_t at = 0; at < x.dim(0); at += input_chunk) {
    Tensor piece = slice0(x, at, std::min(at + input_chunk, x.dim(0)));
    Tensor out = model.encoder.stream_step(piece, state);
    streamed.insert(streamed.end(), out.data().begin(), out.data().end());
  }
  if (static_cast<int64_t>(streamed.size()) != full.numel()) return 1e9;
  double dev = 0.0;
  for (size_t i = 0; i < streamed.size(); ++i)
    dev = std::max(dev, std::abs(streamed[i] - full.data()[i]));
  return dev;
}

void criterion_streaming() {
  bool pass = true;
  double worst = 0.0;
  std::string worst_at = "(all exact)";
  for (const std::string name : {"nextformer_xs", "nextformer_s"}) {
    for (int64_t cs : {2, 4, 8, 16}) {  // 16 post-frontend frames = 640ms
      ModelConfig cfg = ModelConfig::from_preset(name);
      cfg.encoder.causal = true;
      cfg.encoder.chunk.mode = ChunkSpec::Mode::Fixed;
      cfg.encoder.chunk.chunk_frames = cs;
      Model model = Model::make(cfg, 17);
      for (int64_t t : {64, 200, 1000}) {
        Tensor x = random_tensor({t, 80}, 900 + t + cs, 0.5);
        const double dev = stream_deviation(model, x, 4 * cs);
        if (dev > worst) {
          worst = dev;
          worst_at = fmt("%s cs=%lld T=%lld", name.c_str(),
                         static_cast<long long>(cs), static_cast<long long>(t));
        }
        pass = pass && dev < 1e-10;
      }
    }
  }
  report(pass, "streaming equivalence",
         fmt("24 runs incl. 640ms chunks; worst dev=%.2e at %s", worst,
             worst_at.c_str()));
}

// ---------------------------------------------------------------------------
// 8. causality
// ---------------------------------------------------------------------------

void criterion_causality() {
  bool pass = true;
  std::string detail;

  // causal conv2d
  {
    ConvSpec sp;
    sp.kernel_t = 3;
    sp.kernel_f = 3;
    sp.stride_t = 2;
    sp.stride_f = 2;
    sp.in_channels = 2;
    sp.out_channels = 2;
    sp.pad = PadMode::CausalTimeSameFreq;
    Tensor w = random_tensor({2, 2, 3, 3}, 30);
    Tensor b = random_tensor({2}, 31);
    Tensor x = random_tensor({2, 16, 6}, 32);
    Tensor base = conv2d(x, sp, w, b);
    for (int64_t cut : {4, 8, 12}) {
      std::vector<double> mut = x.data();
      for (int64_t c = 0; c < 2; ++c)
        for (int64_t t = cut + 1; t < 16; ++t)
          for (int64_t f = 0; f < 6; ++f) mut[(c * 16 + t) * 6 + f] += 2.0;
      Tensor out = conv2d(Tensor::from_vector({2, 16, 6}, mut), sp, w, b);
      for (int64_t c = 0; c < 2; ++c)
        for (int64_t to = 0; 2 * to <= cut; ++to)
          for (int64_t fo = 0; fo < 3; ++fo)
            pass = pass && out.at({c, to, fo}) == base.at({c, to, fo});
    }
  }

  // causal depthwise conv1d
  {
    Tensor w = random_tensor({15, 4}, 33);
    Tensor b = random_tensor({4}, 34);
    Tensor x = random_tensor({20, 4}, 35);
    Tensor base = depthwise_conv1d(x, w, b, true);
    for (int64_t cut = 0; cut < 19; ++cut) {
      std::vector<double> mut = x.data();
      for (int64_t t = cut + 1; t < 20; ++t)
        for (int64_t c = 0; c < 4; ++c) mut[t * 4 + c] += 1.0;
      Tensor out = depthwise_conv1d(Tensor::from_vector({20, 4}, mut), w, b, true);
      for (int64_t t = 0; t <= cut; ++t)
        for (int64_t c = 0; c < 4; ++c)
          pass = pass && out.at({t, c}) == base.at({t, c});
    }
  }

  // causal frontend: outputs before floor(cut/4) fixed
  {
    CntfConfig cfg;
    cfg.base_channels = 8;
    cfg.stage_blocks[0] = cfg.stage_blocks[1] = cfg.stage_blocks[2] = 1;
    cfg.out_dim = 16;
    cfg.causal = true;
    cfg.sd_p = 0.0;
    RandomSource rng(36);
    CntfFrontend fe = CntfFrontend::make(cfg, rng);
    RandomSource quiet(0);
    Tensor x = random_tensor({48, 80}, 37, 0.5);
    Tensor base = fe.forward(x, false, quiet);
    for (int64_t cut : {8, 24, 40}) {
      std::vector<double> mut = x.data();
      for (int64_t t = cut + 1; t < 48; ++t)
        for (int64_t f = 0; f < 80; ++f) mut[t * 80 + f] += 1.0;
      Tensor out = fe.forward(Tensor::from_vector({48, 80}, mut), false, quiet);
      for (int64_t t = 0; t < cut / 4; ++t)
        for (int64_t c = 0; c < 16; ++c)
          pass = pass && out.at({t, c}) == base.at({t, c});
    }
  }

  // end-to-end causal encoder at chunk granularity
  {
    ModelConfig cfg = ModelConfig::from_preset("nextformer_xs");
    cfg.encoder.causal = true;
    cfg.encoder.chunk.mode = ChunkSpec::Mode::Fixed;
    cfg.encoder.chunk.chunk_frames = 4;  // 4 frontend frames = 16 input frames
    Model model = Model::make(cfg, 38);
    RandomSource quiet(0);
    Tensor x = random_tensor({96, 80}, 39, 0.5);
    NoGradGuard ng;
    Tensor base = model.encoder.forward(x, false, quiet);
    for (int64_t chunk_end : {32, 64}) {  // input frames at chunk boundaries
      std::vector<double> mut = x.data();
      for (int64_t t = chunk_end; t < 96; ++t)
        for (int64_t f = 0; f < 80; ++f) mut[t * 80 + f] -= 3.0;
      Tensor out = model.encoder.forward(Tensor::from_vector({96, 80}, mut),
                                         false, quiet);
      const int64_t safe_rows = chunk_end / 8;  // encoder frames at 80ms
      for (int64_t t = 0; t < safe_rows; ++t)
        for (int64_t c = 0; c < 16; ++c)
          pass = pass && out.at({t, c}) == base.at({t, c});
    }
  }
  report(pass, "causality", "bit-identical prefixes under future perturbation");
}

// ---------------------------------------------------------------------------
// 9. shape laws
// ---------------------------------------------------------------------------

void criterion_shape_laws() {
  bool pass = true;
  ModelConfig next_cfg = ModelConfig::from_preset("nextformer_xs");
  Model next = Model::make(next_cfg, 40);
  ModelConfig conf_cfg = next_cfg;
  conf_cfg.encoder.frontend = FrontendKind::ConformerSubsampling;
  conf_cfg.encoder.mid_downsample = false;
  Model conf = Model::make(conf_cfg, 41);
  RandomSource quiet(0);
  std::vector<int64_t> ts;
  for (int64_t t = 8; t <= 64; ++t) ts.push_back(t);
  ts.push_back(1000);
  for (int64_t t : ts) {
    Tensor x = random_tensor({t, 80}, 950 + t, 0.5);
    const int64_t mn = next.encode(x, false, quiet).dim(0);
    const int64_t mc = conf.encode(x, false, quiet).dim(0);
    pass = pass && mn == ((t + 3) / 4) / 2 && mc == (t + 3) / 4;
  }
  // frequency ladder 80 -> 40 -> 20 -> 10
  const CntfFrontend& fe = next.encoder.cntf;
  Tensor x3 = reshape(random_tensor({16, 80}, 42), {1, 16, 80});
  ConvSpec s1;
  s1.kernel_t = s1.kernel_f = s1.stride_t = s1.stride_f = 2;
  s1.in_channels = 1;
  s1.out_channels = 8;
  Tensor h1 = conv2d(x3, s1, fe.ds1_w, fe.ds1_b);
  ConvSpec s2 = s1;
  s2.in_channels = 8;
  s2.out_channels = 16;
  Tensor h2 = conv2d(h1, s2, fe.ds2_w, fe.ds2_b);
  ConvSpec s3;
  s3.kernel_t = 1;
  s3.kernel_f = 2;
  s3.stride_t = 1;
  s3.stride_f = 2;
  s3.in_channels = 16;
  s3.out_channels = 24;
  Tensor h3 = conv2d(h2, s3, fe.ds3_w, fe.ds3_b);
  pass = pass && h1.dim(2) == 40 && h2.dim(2) == 20 && h3.dim(2) == 10;
  report(pass, "shape laws",
         fmt("M laws over %zu lengths incl. 1000; ladder 80/40/20/10",
             ts.size()));
}

// ---------------------------------------------------------------------------
// 10. toy overfit
// ---------------------------------------------------------------------------

void criterion_toy_overfit() {
  bool pass = true;
  std::string detail;
  std::vector<ToyTrainResult::StepStats> wce_curve;
  for (LrSchedule::Kind kind :
       {LrSchedule::Kind::Wce, LrSchedule::Kind::Warmup}) {
    Model model = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
    ToyDataset data = ToyDataset::make(0);
    ToyTrainOptions opt;
    opt.max_steps = 2000;
    opt.schedule = make_toy_schedule(kind);
    ToyTrainResult res = train_toy(model, data, opt);
    bool finite = true;
    for (const auto& s : res.steps) finite = finite && std::isfinite(s.joint);
    pass = pass && finite && res.first_zero_error_step > 0 &&
           res.first_zero_error_step <= 2000;
    detail += fmt("%s zero@%lld ", kind == LrSchedule::Kind::Wce ? "wce" : "warmup",
                  static_cast<long long>(res.first_zero_error_step));
    if (kind == LrSchedule::Kind::Wce) wce_curve = res.steps;
  }
  // determinism: identical loss curve on a rerun with the same seed
  {
    Model model = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
    ToyDataset data = ToyDataset::make(0);
    ToyTrainOptions opt;
    opt.max_steps = 2000;
    opt.schedule = make_toy_schedule(LrSchedule::Kind::Wce);
    ToyTrainResult res = train_toy(model, data, opt);
    bool same = res.steps.size() == wce_curve.size();
    for (size_t i = 0; same && i < res.steps.size(); ++i)
      same = res.steps[i].joint == wce_curve[i].joint &&
             res.steps[i].ctc == wce_curve[i].ctc;
    pass = pass && same;
    detail += same ? "deterministic" : "NON-DETERMINISTIC";
  }
  report(pass, "toy overfit", detail);
}

// ---------------------------------------------------------------------------
// 11. scheduler values
// ---------------------------------------------------------------------------

void criterion_scheduler() {
  LrSchedule wce;
  wce.kind = LrSchedule::Kind::Wce;
  bool pass = true;
  auto close = [](double a, double b) { return std::abs(a - b) < 1e-15; };
  pass = pass && close(lr_at(12500, 1, wce), 2.5e-4);   // warmup midpoint
  pass = pass && close(lr_at(50000, 15, wce), 5e-4);    // plateau
  pass = pass && close(lr_at(50000, 16, wce), 3e-4);    // first decayed epoch
  pass = pass && close(lr_at(50000, 17, wce), 1.8e-4);
  pass = pass && close(lr_at(50000, 18, wce), 1.08e-4);
  report(pass, "scheduler",
         "midpoint 2.5e-4, plateau 5e-4, decay 3e-4 / 1.8e-4 / 1.08e-4");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_params();
  criterion_flops();
  criterion_stage_balance();
  criterion_gradients();
  criterion_ctc_oracle();
  criterion_fsmn_oracle();
  criterion_streaming();
  criterion_causality();
  criterion_shape_laws();
  criterion_toy_overfit();
  criterion_scheduler();
  const double dt =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("RESULT: %d/%d criteria passed (%.1fs)\n",
              g_criterion - g_failed, g_criterion, dt);
  return g_failed == 0 ? 0 : 1;
}
