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

// Internals for defining ops with custom backward passes outside tensor.cpp.

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "nxf/tensor.hpp"

namespace nxf::detail {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value,
                                      Dtype dtype);
Tensor wrap(std::shared_ptr<TensorNode> n);
// Records the tape edge when grad mode is on and any input tracks gradients.
void attach(Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void()> fn);
void accumulate(TensorNode* n, const double* g, int64_t count);
Dtype promote(Dtype a, Dtype b);

// Row-major GEMM kernels; every output element accumulates over the inner
// dimension in ascending order regardless of extents.
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n);
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n);
void gemm_tn(const double* a, const double* b, double* c, int64_t p, int64_t m,
             int64_t n);

}  // namespace nxf::detail
