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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nxf/model.hpp"

namespace nxf {

// Closed-form accounting records. Totals are exact integer arithmetic; the
// analytic parameter count must equal the instantiated element count.
struct ParamReport {
  int64_t total = 0;
  std::vector<std::pair<std::string, int64_t>> breakdown;

  int64_t get(const std::string& name) const;
};

struct FlopsReport {
  int64_t total = 0;  // multiply-accumulates
  std::vector<std::pair<std::string, int64_t>> breakdown;
  std::string convention;

  int64_t get(const std::string& name) const;
};

// Exact analytic parameter count (encoder + CTC head + decoder).
ParamReport count_params(const ModelConfig& cfg);

// Analytic encoder MACs for `input_frames` 10ms frames under the documented
// convention: 1 MAC = 1 FLOP; conv/linear/attention kernels only (biases,
// norms, activations and softmax excluded); relative-position projections
// included; layers after the mid downsample costed at the halved frame rate.
FlopsReport count_flops(const ModelConfig& cfg, int64_t input_frames = 1000);

// Pointwise-conv MACs per CNTF stage, for the stage-balance property.
std::array<int64_t, 3> cntf_stage_pointwise_macs(const CntfConfig& cfg,
                                                 int64_t input_frames);

// Central finite differences of the joint loss against the reverse-mode
// gradient, swept over every parameter tensor of the model (intended for the
// XS preset; coordinate count grows with the parameter count).
struct GradSuiteResult {
  bool pass = false;
  double tolerance = 1e-4;
  double worst = 0.0;
  std::string worst_param;
  int64_t coordinates = 0;
  std::vector<std::pair<std::string, double>> per_param;
};

GradSuiteResult run_grad_suite(Model& model, double epsilon = 1e-5,
                               double tolerance = 1e-4,
                               std::ostream* log = nullptr);

}  // namespace nxf
