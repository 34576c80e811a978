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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nxf/analysis.hpp"
#include "nxf/gradcheck.hpp"
#include "nxf/io.hpp"
#include "nxf/train.hpp"

namespace {

using namespace nxf;

uint64_t default_seed() {
  if (const char* env = std::getenv("NXF_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw ConfigError(std::string("NXF_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

ModelConfig config_for(const std::string& preset) {
  if (preset == "nextformer_s_cnn8") return ModelConfig::nextformer_s_cnn8();
  return ModelConfig::from_preset(preset);
}

int cmd_describe(const std::string& preset, int64_t frames) {
  ModelConfig cfg = config_for(preset);
  ParamReport params = count_params(cfg);
  FlopsReport flops = count_flops(cfg, frames);
  std::printf("preset %s (vocab %lld, %d encoder layers, dim %lld)\n",
              cfg.preset.c_str(), static_cast<long long>(cfg.vocab),
              cfg.encoder.num_layers, static_cast<long long>(cfg.encoder.dim));
  std::printf("%-18s %14s\n", "parameters", "count");
  for (const auto& [name, v] : params.breakdown)
    std::printf("  %-16s %14lld\n", name.c_str(), static_cast<long long>(v));
  std::printf("%-18s %14s   (%lld input frames)\n", "encoder MACs", "count",
              static_cast<long long>(frames));
  for (const auto& [name, v] : flops.breakdown)
    std::printf("  %-16s %14lld\n", name.c_str(), static_cast<long long>(v));
  std::printf("convention: %s\n", flops.convention.c_str());
  for (const auto& [name, v] : params.breakdown)
    std::printf("params.%s=%lld\n", name.c_str(), static_cast<long long>(v));
  for (const auto& [name, v] : flops.breakdown)
    std::printf("flops.%s=%lld\n", name.c_str(), static_cast<long long>(v));
  return 0;
}

int cmd_gradcheck(const std::string& preset, double eps, bool quick) {
  ModelConfig cfg = config_for(preset);
  Model model = Model::make(cfg, default_seed());
  if (quick) {
    // spot-check a handful of parameter tensors instead of the full sweep
    RandomSource data_rng(20260318);
    Tensor features = Tensor::randn({16, 80}, data_rng, 0.5);
    LabelSequence labels{{1, 2}};
    auto joint = [&]() {
      RandomSource quiet(0);
      return model.loss(features, labels, false, quiet).joint_tensor;
    };
    std::vector<std::pair<std::string, Tensor>> params;
    model.visit([&](const std::string& n, Tensor& t) {
      params.emplace_back(n, t);
    });
    double worst = 0.0;
    std::string worst_name;
    for (size_t i = 0; i < params.size(); i += std::max<size_t>(params.size() / 8, 1)) {
      GradCheckReport rep =
          grad_check([&](const Tensor&) { return joint(); }, params[i].second, eps);
      std::printf("gradcheck %s rel_err=%.3e\n", params[i].first.c_str(),
                  rep.max_rel_err);
      if (rep.max_rel_err > worst) {
        worst = rep.max_rel_err;
        worst_name = params[i].first;
      }
    }
    std::printf("gradcheck.worst=%.6e (%s)\n", worst, worst_name.c_str());
    std::printf("gradcheck.pass=%d\n", worst <= 1e-4 ? 1 : 0);
    return worst <= 1e-4 ? 0 : 1;
  }
  GradSuiteResult res = run_grad_suite(model, eps, 1e-4, &std::cout);
  std::printf("gradcheck.coordinates=%lld\n",
              static_cast<long long>(res.coordinates));
  std::printf("gradcheck.worst=%.6e (%s)\n", res.worst,
              res.worst_param.c_str());
  std::printf("gradcheck.pass=%d\n", res.pass ? 1 : 0);
  return res.pass ? 0 : 1;
}

int cmd_forward(const std::string& preset, const std::string& features_path,
                const std::string& out_path, bool causal, bool normalize,
                const std::string& checkpoint, const std::string& dtype) {
  ModelConfig cfg = config_for(preset);
  cfg.encoder.causal = causal;
  Model model = Model::make(cfg, default_seed());
  if (!checkpoint.empty()) load_checkpoint(checkpoint, model);
  Tensor features = read_features(features_path);
  if (normalize) features = normalize_features(features);
  if (dtype == "f32") {
    model.visit([](const std::string&, Tensor& t) { t = cast(t, Dtype::F32); });
    features = cast(features, Dtype::F32);
  } else if (dtype != "f64") {
    throw ConfigError("forward: dtype must be f32 or f64");
  }
  NoGradGuard inference;
  RandomSource quiet(0);
  Tensor encoded = model.encode(features, /*train=*/false, quiet);
  write_features(out_path, cast(encoded, Dtype::F64));
  std::printf("frames.in=%lld\nframes.out=%lld\ndim=%lld\n",
              static_cast<long long>(features.dim(0)),
              static_cast<long long>(encoded.dim(0)),
              static_cast<long long>(encoded.dim(1)));
  return 0;
}

int cmd_stream_check(const std::string& preset, int64_t chunk_ms,
                     const std::string& features_path, double tolerance,
                     const std::string& dtype) {
  if (chunk_ms < 80 || chunk_ms % 40 != 0)
    throw ConfigError("stream-check: chunk must be a multiple of 40ms, >= 80ms");
  ModelConfig cfg = config_for(preset);
  cfg.encoder.causal = true;
  cfg.encoder.chunk.mode = ChunkSpec::Mode::Fixed;
  cfg.encoder.chunk.chunk_frames = chunk_ms / 40;
  Model model = Model::make(cfg, default_seed());
  const Dtype dt = dtype == "f32" ? Dtype::F32 : Dtype::F64;
  if (dtype == "f32")
    model.visit([](const std::string&, Tensor& t) { t = cast(t, Dtype::F32); });
  else if (dtype != "f64")
    throw ConfigError("stream-check: dtype must be f32 or f64");

  Tensor features = cast(read_features(features_path), dt);
  if (features.dim(0) < 8)
    throw ConfigError("stream-check: need at least 8 feature frames");
  NoGradGuard inference;
  RandomSource quiet(0);
  Tensor full = model.encoder.forward(features, false, quiet);

  StreamState state;
  const int64_t input_chunk = 4 * (chunk_ms / 40);
  std::vector<double> streamed;
  for (int64_t at = 0; at < features.dim(0); at += input_chunk) {
    Tensor piece =
        slice0(features, at, std::min(at + input_chunk, features.dim(0)));
    if (piece.dim(0) % 8 != 0) break;  // trailing remainder, not emitted
    Tensor out = model.encoder.stream_step(piece, state);
    streamed.insert(streamed.end(), out.data().begin(), out.data().end());
  }
  double max_dev = 0.0;
  for (size_t i = 0; i < streamed.size(); ++i)
    max_dev = std::max(max_dev, std::abs(streamed[i] - full.data()[i]));
  std::printf("chunk.ms=%lld\nchunk.frames=%lld\nframes.compared=%zu\n",
              static_cast<long long>(chunk_ms),
              static_cast<long long>(chunk_ms / 40),
              streamed.size() / cfg.encoder.dim);
  std::printf("max_abs_deviation=%.6e\ntolerance=%.6e\n", max_dev, tolerance);
  const bool ok = max_dev <= tolerance && !streamed.empty();
  std::printf("stream_check.pass=%d\n", ok ? 1 : 0);
  return ok ? 0 : 1;
}

int cmd_train_toy(int64_t steps, uint64_t seed, const std::string& schedule,
                  const std::string& out_checkpoint) {
  LrSchedule::Kind kind;
  if (schedule == "wce") {
    kind = LrSchedule::Kind::Wce;
  } else if (schedule == "warmup") {
    kind = LrSchedule::Kind::Warmup;
  } else {
    throw ConfigError("train-toy: schedule must be wce or warmup");
  }
  Model model = Model::make(ModelConfig::from_preset("nextformer_xs"), seed);
  ToyDataset data = ToyDataset::make(seed);
  ToyTrainOptions opt;
  opt.max_steps = steps;
  opt.seed = seed;
  opt.schedule = make_toy_schedule(kind);
  opt.log = &std::cout;
  ToyTrainResult res = train_toy(model, data, opt);
  std::printf("train.steps_run=%zu\n", res.steps.size());
  std::printf("train.first_zero_error_step=%lld\n",
              static_cast<long long>(res.first_zero_error_step));
  std::printf("train.final_token_error=%.6f\n", res.final_token_error);
  if (!out_checkpoint.empty()) {
    save_checkpoint(out_checkpoint, model);
    std::printf("checkpoint=%s\n", out_checkpoint.c_str());
  }
  return std::isfinite(res.final_token_error) ? 0 : 1;
}

int cmd_schedule_dump(const std::string& schedule, int64_t epochs,
                      int64_t steps_per_epoch) {
  LrSchedule s;
  if (schedule == "wce") {
    s.kind = LrSchedule::Kind::Wce;
  } else if (schedule == "warmup") {
    s.kind = LrSchedule::Kind::Warmup;
  } else {
    throw ConfigError("schedule-dump: schedule must be wce or warmup");
  }
  std::printf("epoch,step,lr\n");
  for (int64_t e = 1; e <= epochs; ++e) {
    const int64_t step = e * steps_per_epoch;
    std::printf("%lld,%lld,%.10g\n", static_cast<long long>(e),
                static_cast<long long>(step), lr_at(step, e, s));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nextformer / Conformer ASR reference toolkit"};
  app.require_subcommand(1);
  const std::string preset_help =
      "one of: conformer_s, conformer_l, nextformer_s, nextformer_l, "
      "nextformer_xs (describe also accepts nextformer_s_cnn8)";

  std::string preset = "nextformer_s";
  int64_t frames = 1000;
  auto* describe = app.add_subcommand(
      "describe", "analytic parameter and FLOPs accounting for a preset");
  describe->add_option("--preset", preset, preset_help)->required();
  describe->add_option("--frames", frames, "input frames for the FLOPs walk");

  std::string gc_preset = "nextformer_xs";
  double eps = 1e-5;
  bool quick = false;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the joint loss gradients");
  gradcheck->add_option("--preset", gc_preset, preset_help);
  gradcheck->add_option("--eps", eps, "central-difference step");
  gradcheck->add_flag("--quick", quick, "check a sample of parameter tensors");

  std::string fw_preset, fw_features, fw_out, fw_ckpt, fw_dtype = "f64";
  bool fw_causal = false;
  bool fw_normalize = false;
  auto* forward = app.add_subcommand(
      "forward", "run the encoder over a feature file, write the output");
  forward->add_option("--preset", fw_preset, preset_help)->required();
  forward->add_option("--features", fw_features, "input .nxf feature file")
      ->required();
  forward->add_option("--out", fw_out, "output .nxf file")->required();
  forward->add_flag("--causal", fw_causal, "build the causal variant");
  forward->add_flag("--normalize", fw_normalize,
                    "per-utterance mean/variance normalization (off by default)");
  forward->add_option("--checkpoint", fw_ckpt, "load weights from .nxck");
  forward->add_option("--dtype", fw_dtype, "f64 (default) or f32");

  std::string sc_preset, sc_features, sc_dtype = "f64";
  int64_t chunk_ms = 640;
  double tolerance = 1e-5;
  auto* stream_check = app.add_subcommand(
      "stream-check",
      "compare chunked streaming against the full causal pass");
  stream_check->add_option("--preset", sc_preset, preset_help)->required();
  stream_check->add_option("--chunk-ms", chunk_ms, "chunk length (ms, x40)");
  stream_check->add_option("--features", sc_features, "input .nxf file")
      ->required();
  stream_check->add_option("--tolerance", tolerance, "max abs deviation");
  stream_check->add_option("--dtype", sc_dtype, "f64 (default) or f32");

  int64_t steps = 2000;
  uint64_t seed = default_seed();
  std::string schedule = "wce", out_ckpt;
  auto* train = app.add_subcommand(
      "train-toy", "overfit the synthetic 20-utterance corpus");
  train->add_option("--steps", steps, "max optimizer steps");
  train->add_option("--seed", seed, "model/data seed (NXF_SEED overrides)");
  train->add_option("--schedule", schedule, "wce or warmup");
  train->add_option("--out-checkpoint", out_ckpt, "save weights when done");

  std::string dump_schedule = "wce";
  int64_t epochs = 25, steps_per_epoch = 5000;
  auto* dump = app.add_subcommand("schedule-dump",
                                  "CSV of the learning rate per epoch");
  dump->add_option("--schedule", dump_schedule, "wce or warmup");
  dump->add_option("--epochs", epochs, "number of epochs");
  dump->add_option("--steps-per-epoch", steps_per_epoch, "steps per epoch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help() << std::flush;
    return 2;
  }

  try {
    if (*describe) return cmd_describe(preset, frames);
    if (*gradcheck) return cmd_gradcheck(gc_preset, eps, quick);
    if (*forward)
      return cmd_forward(fw_preset, fw_features, fw_out, fw_causal,
                         fw_normalize, fw_ckpt, fw_dtype);
    if (*stream_check)
      return cmd_stream_check(sc_preset, chunk_ms, sc_features, tolerance,
                              sc_dtype);
    if (*train) return cmd_train_toy(steps, seed, schedule, out_ckpt);
    if (*dump) return cmd_schedule_dump(dump_schedule, epochs, steps_per_epoch);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help() << std::flush;
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
