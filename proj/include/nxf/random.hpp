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
#include <string>

namespace nxf {

// Splittable counter-based generator. Every draw is a pure function of
// (key, counter), so a given seed produces the same sequence on every
// platform; split() derives an independent stream without consuming
// draws from the parent.
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed);

  static const char* algorithm() { return "splitmix64-counter/v1"; }

  uint64_t next_u64();
  // Uniform in [0, 1), 53-bit mantissa.
  double uniform();
  // Standard normal via Box-Muller (draws two uniforms per pair).
  double gaussian();

  // Independent child stream; does not advance this source.
  RandomSource split(uint64_t stream) const;

  uint64_t seed() const { return seed_; }
  // Number of next_u64 calls so far; used by tests to prove eval-mode
  // code paths never touch the source.
  uint64_t draws() const { return draws_; }

 private:
  RandomSource(uint64_t key, uint64_t seed);

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  uint64_t seed_ = 0;
  uint64_t draws_ = 0;
  bool have_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace nxf
