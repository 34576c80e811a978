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

#include "nxf/schedule.hpp"

#include <cmath>

#include "nxf/error.hpp"

namespace nxf {

void LrSchedule::validate() const {
  if (warmup_steps < 1) throw ConfigError("lr schedule: warmup_steps must be >= 1");
  if (peak_lr <= 0.0) throw ConfigError("lr schedule: peak_lr must be > 0");
  if (decay_ratio <= 0.0 || decay_ratio > 1.0)
    throw ConfigError("lr schedule: decay_ratio must be in (0, 1]");
  if (decay_start_epoch < 1)
    throw ConfigError("lr schedule: decay_start_epoch must be >= 1");
}

double lr_at(int64_t step, int64_t epoch, const LrSchedule& schedule) {
  schedule.validate();
  if (step < 1) throw ConfigError("lr_at: step counting starts at 1");
  if (epoch < 1) throw ConfigError("lr_at: epoch counting starts at 1");
  const double warm = static_cast<double>(schedule.warmup_steps);
  double lr = schedule.peak_lr;
  if (step <= schedule.warmup_steps) {
    lr *= static_cast<double>(step) / warm;
  } else if (schedule.kind == LrSchedule::Kind::Warmup) {
    lr *= std::sqrt(warm / static_cast<double>(step));
  }
  if (schedule.kind == LrSchedule::Kind::Wce &&
      epoch >= schedule.decay_start_epoch) {
    lr *= std::pow(schedule.decay_ratio,
                   static_cast<double>(epoch - schedule.decay_start_epoch + 1));
  }
  return lr;
}

}  // namespace nxf
