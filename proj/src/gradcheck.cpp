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

#include "nxf/gradcheck.hpp"

#include <cmath>

namespace nxf {

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn,
                           Tensor input, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw ConfigError("grad_check: epsilon must be in [1e-7, 1e-3]");
  if (input.dtype() != Dtype::F64)
    throw ConfigError("grad_check: input must be F64");

  const bool had_grad = input.requires_grad();
  input.set_requires_grad(true);
  input.zero_grad();

  Tensor loss = fn(input);
  if (loss.numel() != 1)
    throw ShapeError("grad_check: fn must return a scalar, got " +
                     shape_str(loss.shape()));
  if (!std::isfinite(loss.item()))
    throw NumericError("grad_check: fn produced non-finite output");
  loss.backward();
  std::vector<double> analytic = input.grad();

  GradCheckReport rep;
  {
    NoGradGuard ng;
    std::vector<double>& x = input.mutable_data();
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double orig = x[i];
      x[i] = orig + epsilon;
      const double fp = fn(input).item();
      x[i] = orig - epsilon;
      const double fm = fn(input).item();
      x[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: fn produced non-finite output at coordinate " +
                           std::to_string(i));
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_index = i;
        rep.analytic = analytic[i];
        rep.numeric = numeric;
      }
    }
  }
  input.zero_grad();
  input.set_requires_grad(had_grad);
  return rep;
}

double grad_check_err(const std::function<Tensor(const Tensor&)>& fn,
                      Tensor input, double epsilon) {
  return grad_check(fn, std::move(input), epsilon).max_rel_err;
}

}  // namespace nxf
