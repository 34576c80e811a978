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

#include <cstdint>

namespace nxf {

// Two learning-rate schedules sharing a linear warmup to the peak:
//   Warmup: inverse-sqrt decay after the peak (Noam style).
//   Wce:    constant at the peak, then per-epoch exponential decay.
// Epochs are 1-based; the first decayed epoch is decay_start_epoch with
// multiplier decay_ratio (exponent epoch - decay_start_epoch + 1).
struct LrSchedule {
  enum class Kind { Warmup, Wce };
  Kind kind = Kind::Wce;
  int64_t warmup_steps = 25000;
  double peak_lr = 5e-4;
  double decay_ratio = 0.6;
  int64_t decay_start_epoch = 16;

  void validate() const;
};

double lr_at(int64_t step, int64_t epoch, const LrSchedule& schedule);

}  // namespace nxf
