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

#include "nxf/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nxf/detail/autograd.hpp"

namespace nxf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logadd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

void LabelSequence::validate(int64_t vocab) const {
  for (int64_t id : ids) {
    if (id < 1 || id >= vocab)
      throw ConfigError("label id " + std::to_string(id) +
                        " outside [1, " + std::to_string(vocab - 1) + "]");
  }
}

int64_t ctc_min_frames(const LabelSequence& y) {
  int64_t repeats = 0;
  for (size_t i = 1; i < y.ids.size(); ++i)
    if (y.ids[i] == y.ids[i - 1]) ++repeats;
  return y.size() + repeats;
}

CtcResult ctc_loss(const Tensor& log_probs, const LabelSequence& y) {
  if (log_probs.rank() != 2)
    throw ShapeError("ctc_loss: log_probs must be [M,V], got " +
                     shape_str(log_probs.shape()));
  const int64_t m = log_probs.dim(0), vocab = log_probs.dim(1);
  if (vocab < 2) throw ShapeError("ctc_loss: need at least blank + 1 class");
  y.validate(vocab);

  if (m < ctc_min_frames(y)) {
    // too few frames: infinite loss, flagged, with a well-defined zero grad
    Tensor loss = detail::wrap(detail::make_node(
        Shape{}, {std::numeric_limits<double>::infinity()}, Dtype::F64));
    detail::attach(loss, {log_probs}, []() {});
    return {loss, false};
  }

  // extended label sequence: blank-interleaved
  const int64_t l = y.size();
  const int64_t s_n = 2 * l + 1;
  std::vector<int64_t> z(s_n, 0);
  for (int64_t i = 0; i < l; ++i) z[2 * i + 1] = y.ids[i];

  const double* lp = log_probs.data().data();
  std::vector<double> alpha(m * s_n, kNegInf), beta(m * s_n, kNegInf);
  alpha[0] = lp[z[0]];
  if (s_n > 1) alpha[1] = lp[z[1]];
  for (int64_t t = 1; t < m; ++t) {
    for (int64_t s = 0; s < s_n; ++s) {
      double a = alpha[(t - 1) * s_n + s];
      if (s >= 1) a = logadd(a, alpha[(t - 1) * s_n + s - 1]);
      if (s >= 2 && z[s] != 0 && z[s] != z[s - 2])
        a = logadd(a, alpha[(t - 1) * s_n + s - 2]);
      alpha[t * s_n + s] = a == kNegInf ? kNegInf : a + lp[t * vocab + z[s]];
    }
  }
  double log_p = alpha[(m - 1) * s_n + s_n - 1];
  if (s_n > 1) log_p = logadd(log_p, alpha[(m - 1) * s_n + s_n - 2]);

  beta[(m - 1) * s_n + s_n - 1] = 0.0;
  if (s_n > 1) beta[(m - 1) * s_n + s_n - 2] = 0.0;
  for (int64_t t = m - 2; t >= 0; --t) {
    for (int64_t s = 0; s < s_n; ++s) {
      double b = beta[(t + 1) * s_n + s] + lp[(t + 1) * vocab + z[s]];
      if (s + 1 < s_n)
        b = logadd(b, beta[(t + 1) * s_n + s + 1] + lp[(t + 1) * vocab + z[s + 1]]);
      if (s + 2 < s_n && z[s + 2] != 0 && z[s + 2] != z[s])
        b = logadd(b, beta[(t + 1) * s_n + s + 2] + lp[(t + 1) * vocab + z[s + 2]]);
      beta[t * s_n + s] = b;
    }
  }

  // d(-logP)/d(logp[t][v]) = -sum_{s: z[s]=v} exp(alpha + beta - logP)
  auto grad = std::make_shared<std::vector<double>>(m * vocab, 0.0);
  for (int64_t t = 0; t < m; ++t) {
    for (int64_t s = 0; s < s_n; ++s) {
      const double post = alpha[t * s_n + s] + beta[t * s_n + s] - log_p;
      if (post == kNegInf) continue;
      (*grad)[t * vocab + z[s]] -= std::exp(post);
    }
  }

  Tensor loss =
      detail::wrap(detail::make_node(Shape{}, {-log_p}, Dtype::F64));
  TensorNode* on = loss.node().get();
  TensorNode* xn = log_probs.node().get();
  detail::attach(loss, {log_probs}, [on, xn, grad]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = on->grad[0];
    for (size_t i = 0; i < grad->size(); ++i) xn->grad[i] += g * (*grad)[i];
  });
  return {loss, true};
}

std::vector<int64_t> ctc_greedy_decode(const Tensor& log_probs) {
  if (log_probs.rank() != 2)
    throw ShapeError("ctc_greedy_decode: log_probs must be [M,V]");
  const int64_t m = log_probs.dim(0), vocab = log_probs.dim(1);
  const double* lp = log_probs.data().data();
  std::vector<int64_t> out;
  int64_t prev = -1;
  for (int64_t t = 0; t < m; ++t) {
    int64_t best = 0;
    for (int64_t v = 1; v < vocab; ++v)
      if (lp[t * vocab + v] > lp[t * vocab + best]) best = v;
    if (best != prev && best != 0) out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace nxf
