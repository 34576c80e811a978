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

#include "nxf/random.hpp"

#include <cmath>

namespace nxf {

namespace {

// splitmix64 finalizer; full-period bijective mix of a 64-bit word.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t kStreamSalt = 0x6a09e667f3bcc909ULL;

}  // namespace

RandomSource::RandomSource(uint64_t seed) : key_(mix64(seed)), seed_(seed) {}

RandomSource::RandomSource(uint64_t key, uint64_t seed)
    : key_(key), seed_(seed) {}

uint64_t RandomSource::next_u64() {
  ++draws_;
  return mix64(key_ ^ mix64(counter_++ + kStreamSalt));
}

double RandomSource::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomSource::gaussian() {
  if (have_cached_gaussian_) {
    have_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // Box-Muller; u1 is nudged away from zero so log() stays finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_gaussian_ = r * std::sin(theta);
  have_cached_gaussian_ = true;
  return r * std::cos(theta);
}

RandomSource RandomSource::split(uint64_t stream) const {
  return RandomSource(mix64(key_ ^ mix64(stream + kStreamSalt)), seed_);
}

}  // namespace nxf
