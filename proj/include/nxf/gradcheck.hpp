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

#include <functional>
#include <string>

#include "nxf/tensor.hpp"

namespace nxf {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of a scalar-valued map against its reverse-mode
// gradient with respect to `input`. Returns the max over coordinates of
// |analytic - numeric| / max(1, |numeric|). `fn` must be deterministic
// (re-seed any RandomSource it uses on every call) and is evaluated with the
// tape disabled during the difference sweep. epsilon must lie in
// [1e-7, 1e-3]; non-finite outputs raise NumericError.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn,
                           Tensor input, double epsilon = 1e-5);

// Convenience wrapper returning just the max relative error.
double grad_check_err(const std::function<Tensor(const Tensor&)>& fn,
                      Tensor input, double epsilon = 1e-5);

}  // namespace nxf
