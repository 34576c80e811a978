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

#pragma once

#include <iosfwd>
#include <vector>

#include "nxf/model.hpp"
#include "nxf/schedule.hpp"

namespace nxf {

// Plain Adam over the model's parameter set.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

class Adam {
 public:
  Adam(Model& model, AdamConfig cfg = {});
  void step(double lr);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

// Deterministic synthetic corpus: 20 utterances of 80-160 frames, each a
// noise floor plus per-class sinusoid signatures over the label's segment;
// vocab 8, label lengths 2-5.
struct ToyDataset {
  struct Utterance {
    Tensor features;
    LabelSequence labels;
  };
  std::vector<Utterance> utterances;

  static ToyDataset make(uint64_t seed);
};

struct ToyTrainOptions {
  int64_t max_steps = 2000;
  uint64_t seed = 0;
  LrSchedule schedule;       // toy-scaled; see make_toy_schedule
  int64_t batch_size = 5;
  int64_t steps_per_epoch = 100;  // defines the schedule's epoch
  int64_t eval_every = 20;
  bool stop_at_zero = true;  // stop once training-set errors hit zero
  std::ostream* log = nullptr;
};

// The published schedule constants scaled to a 2000-step run.
LrSchedule make_toy_schedule(LrSchedule::Kind kind);

struct ToyTrainResult {
  struct StepStats {
    int64_t step = 0;
    double lr = 0.0;
    double joint = 0.0, ctc = 0.0, att = 0.0;
  };
  std::vector<StepStats> steps;
  int64_t first_zero_error_step = -1;
  double final_token_error = 1.0;
  bool diverged = false;
  int64_t diverged_step = -1;
};

// Joint CTC/attention training on the toy corpus. Deterministic for a fixed
// (model seed, options seed). Throws NumericError on divergence, carrying
// the offending step in the message.
ToyTrainResult train_toy(Model& model, const ToyDataset& data,
                         const ToyTrainOptions& options);

// Greedy-decode token error rate over the whole dataset (edit distance
// divided by reference length).
double token_error_rate(const Model& model, const ToyDataset& data);

}  // namespace nxf
