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

#include <string>

#include "nxf/model.hpp"

namespace nxf {

// Feature files ("NXF1"): u32 T, u32 F, u8 dtype tag (0 = f32), then a
// row-major little-endian f32 payload of 4*T*F bytes. T = 0 is a valid
// empty tensor. Malformed files raise FormatError with a distinct message
// per defect (magic, dtype, truncation).
void write_features(const std::string& path, const Tensor& features);
Tensor read_features(const std::string& path);

// Explicit per-utterance mean/variance normalization; never applied
// implicitly by the readers.
Tensor normalize_features(const Tensor& features);

// Checkpoints ("NXCK"): u32 entry count; per entry u16 name length, name
// bytes, u8 rank, rank u32 dims, then little-endian f32 data. Entry names
// follow the model's parameter naming; loading validates every entry and
// names the first mismatch.
void save_checkpoint(const std::string& path, Model& model);
void load_checkpoint(const std::string& path, Model& model);

}  // namespace nxf
