// Toy-training harness: dataset determinism, short-run behaviour.

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nxf/train.hpp"

using namespace nxf;

TEST_SUITE_BEGIN("train");

TEST_CASE("toy dataset is deterministic and well-formed") {
  ToyDataset a = ToyDataset::make(0);
  ToyDataset b = ToyDataset::make(0);
  REQUIRE(a.utterances.size() == 20);
  for (size_t u = 0; u < 20; ++u) {
    const auto& ua = a.utterances[u];
    const auto& ub = b.utterances[u];
    CHECK(ua.labels.ids == ub.labels.ids);
    CHECK(ua.features.dim(0) >= 80);
    CHECK(ua.features.dim(0) <= 160);
    CHECK(ua.features.dim(1) == 80);
    CHECK(ua.labels.size() >= 2);
    CHECK(ua.labels.size() <= 5);
    for (int64_t id : ua.labels.ids) CHECK((id >= 1 && id <= 7));
    for (int64_t i = 0; i < ua.features.numel(); ++i)
      CHECK(ua.features.data()[i] == ub.features.data()[i]);
    // enough encoder frames to carry the labels
    ModelConfig cfg = ModelConfig::from_preset("nextformer_xs");
    Model m = Model::make(cfg, 0);
    CHECK(m.encoder.out_frames(ua.features.dim(0)) >=
          ctc_min_frames(ua.labels));
  }
  ToyDataset c = ToyDataset::make(1);
  bool differs = false;
  for (size_t u = 0; u < 20 && !differs; ++u)
    differs = c.utterances[u].labels.ids != a.utterances[u].labels.ids;
  CHECK(differs);
}

TEST_CASE("short toy run: finite losses, decreasing trend, deterministic") {
  ToyDataset data = ToyDataset::make(0);
  ToyTrainOptions opt;
  opt.max_steps = 30;
  opt.eval_every = 30;
  opt.stop_at_zero = false;
  opt.schedule = make_toy_schedule(LrSchedule::Kind::Wce);

  Model m1 = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
  ToyTrainResult r1 = train_toy(m1, data, opt);
  REQUIRE(r1.steps.size() == 30);
  for (const auto& s : r1.steps) {
    CHECK(std::isfinite(s.joint));
    CHECK(s.ctc >= 0.0);
    CHECK(std::abs(s.joint - (0.3 * s.ctc + 0.7 * s.att)) < 1e-9);
  }
  CHECK(r1.steps.back().joint < r1.steps.front().joint);

  Model m2 = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
  ToyTrainResult r2 = train_toy(m2, data, opt);
  for (size_t i = 0; i < r1.steps.size(); ++i) {
    CHECK(r1.steps[i].joint == r2.steps[i].joint);
    CHECK(r1.steps[i].ctc == r2.steps[i].ctc);
    CHECK(r1.steps[i].att == r2.steps[i].att);
  }
}

TEST_CASE("token error rate and log stream") {
  ToyDataset data = ToyDataset::make(0);
  Model m = Model::make(ModelConfig::from_preset("nextformer_xs"), 0);
  const double ter = token_error_rate(m, data);
  CHECK(ter > 0.0);  // untrained model cannot be perfect

  std::ostringstream log;
  ToyTrainOptions opt;
  opt.max_steps = 3;
  opt.eval_every = 3;
  opt.stop_at_zero = false;
  opt.schedule = make_toy_schedule(LrSchedule::Kind::Warmup);
  opt.log = &log;
  train_toy(m, data, opt);
  CHECK(log.str().find("step=1 ") != std::string::npos);
  CHECK(log.str().find("joint=") != std::string::npos);
  CHECK(log.str().find("token_error=") != std::string::npos);
}

TEST_SUITE_END();
