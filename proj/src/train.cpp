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

#include "nxf/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace nxf {

Adam::Adam(Model& model, AdamConfig cfg) : cfg_(cfg) {
  model.visit([this](const std::string&, Tensor& t) {
    params_.push_back(t);
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  });
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p];
    if (!param.requires_grad()) continue;
    const std::vector<double>& g = param.grad();
    std::vector<double>& x = param.mutable_data();
    std::vector<double>& m = m_[p];
    std::vector<double>& v = v_[p];
    for (size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

ToyDataset ToyDataset::make(uint64_t seed) {
  ToyDataset data;
  RandomSource root(seed);
  for (int u = 0; u < 20; ++u) {
    RandomSource rng = root.split(static_cast<uint64_t>(u) + 1);
    const int64_t frames = 80 + 8 * static_cast<int64_t>(rng.uniform() * 11);  // 80..160
    const int64_t label_len = 2 + static_cast<int64_t>(rng.uniform() * 4);     // 2..5
    LabelSequence labels;
    for (int64_t i = 0; i < label_len; ++i)
      labels.ids.push_back(1 + static_cast<int64_t>(rng.uniform() * 7));
    std::vector<double> x(frames * 80);
    for (double& v : x) v = 0.1 * rng.gaussian();
    // each label owns an equal time segment carrying its class signature
    for (int64_t k = 0; k < label_len; ++k) {
      const int64_t lo = k * frames / label_len;
      const int64_t hi = (k + 1) * frames / label_len;
      const double cls = static_cast<double>(labels.ids[k]);
      for (int64_t t = lo; t < hi; ++t) {
        for (int64_t f = 0; f < 80; ++f) {
          x[t * 80 + f] += 1.2 * std::sin(2.0 * 3.14159265358979323846 *
                                          (f + 1) * cls / 37.0) +
                           0.5 * std::cos(0.35 * cls * t);
        }
      }
    }
    data.utterances.push_back(
        {Tensor::from_vector({frames, 80}, std::move(x)), labels});
  }
  return data;
}

LrSchedule make_toy_schedule(LrSchedule::Kind kind) {
  LrSchedule s;
  s.kind = kind;
  s.warmup_steps = 100;
  s.peak_lr = 2e-3;
  s.decay_ratio = 0.6;
  s.decay_start_epoch = 16;
  return s;
}

namespace {

int64_t edit_distance(const std::vector<int64_t>& a,
                      const std::vector<int64_t>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> row(m + 1);
  for (size_t j = 0; j <= m; ++j) row[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    int64_t prev = row[0];
    row[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t cur = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
      prev = cur;
    }
  }
  return row[m];
}

}  // namespace

double token_error_rate(const Model& model, const ToyDataset& data) {
  int64_t errors = 0, tokens = 0;
  for (const auto& utt : data.utterances) {
    const std::vector<int64_t> hyp = model.greedy_transcribe(utt.features);
    errors += edit_distance(utt.labels.ids, hyp);
    tokens += utt.labels.size();
  }
  return static_cast<double>(errors) / static_cast<double>(tokens);
}

ToyTrainResult train_toy(Model& model, const ToyDataset& data,
                         const ToyTrainOptions& options) {
  if (data.utterances.empty()) throw ConfigError("train_toy: empty dataset");
  options.schedule.validate();
  model.set_trainable(true);
  Adam adam(model);
  RandomSource root(options.seed);
  ToyTrainResult result;
  const int64_t n_utts = static_cast<int64_t>(data.utterances.size());

  for (int64_t step = 1; step <= options.max_steps; ++step) {
    const int64_t epoch = (step - 1) / options.steps_per_epoch + 1;
    const double lr = lr_at(step, epoch, options.schedule);
    model.zero_grads();
    double joint = 0.0, ctc = 0.0, att = 0.0;
    for (int64_t b = 0; b < options.batch_size; ++b) {
      const auto& utt = data.utterances[((step - 1) * options.batch_size + b) %
                                        n_utts];
      RandomSource fwd =
          root.split(static_cast<uint64_t>(step)).split(static_cast<uint64_t>(b));
      LossBreakdown loss = model.loss(utt.features, utt.labels, true, fwd);
      if (!std::isfinite(loss.joint)) {
        result.diverged = true;
        result.diverged_step = step;
        throw NumericError("train_toy: non-finite loss at step " +
                           std::to_string(step));
      }
      scale(loss.joint_tensor, 1.0 / static_cast<double>(options.batch_size))
          .backward();
      joint += loss.joint;
      ctc += loss.ctc;
      att += loss.att;
    }
    adam.step(lr);
    const double inv_b = 1.0 / static_cast<double>(options.batch_size);
    result.steps.push_back({step, lr, joint * inv_b, ctc * inv_b, att * inv_b});
    if (options.log) {
      (*options.log) << "step=" << step << " lr=" << lr
                     << " joint=" << joint * inv_b << " ctc=" << ctc * inv_b
                     << " att=" << att * inv_b << "\n";
    }
    if (step % options.eval_every == 0 || step == options.max_steps) {
      const double ter = token_error_rate(model, data);
      result.final_token_error = ter;
      if (options.log)
        (*options.log) << "step=" << step << " token_error=" << ter << "\n";
      if (ter == 0.0 && result.first_zero_error_step < 0)
        result.first_zero_error_step = step;
      if (ter == 0.0 && options.stop_at_zero) break;
    }
  }
  return result;
}

}  // namespace nxf
