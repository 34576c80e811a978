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
#include <vector>

#include "nxf/tensor.hpp"

namespace nxf {

// Target transcript; ids lie in [1, vocab-1], blank is always id 0 and may
// not appear.
struct LabelSequence {
  std::vector<int64_t> ids;

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  void validate(int64_t vocab) const;
};

// Minimum number of frames that can emit y: |y| plus one separating blank
// per adjacent repeat.
int64_t ctc_min_frames(const LabelSequence& y);

struct CtcResult {
  Tensor loss;    // scalar; +inf when infeasible (never NaN)
  bool feasible;  // false iff the frame count cannot carry the labels
};

// -log P(y | log_probs) by the blank-interleaved forward recursion in log
// space. log_probs rows are log-softmax outputs over [blank, 1..V-1].
// Backward fills d(-logP)/d(log_probs) from the forward/backward lattice.
CtcResult ctc_loss(const Tensor& log_probs, const LabelSequence& y);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int64_t> ctc_greedy_decode(const Tensor& log_probs);

}  // namespace nxf
