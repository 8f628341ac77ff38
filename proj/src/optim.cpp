// Copyright 2026 The copl Authors.
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

#include "copl/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace copl {

CosineWarmupSchedule::CosineWarmupSchedule(double base_lr, long total_steps, double warmup_ratio)
    : base_(base_lr), total_(total_steps) {
  if (!(base_lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw std::invalid_argument("warmup_ratio must lie in [0, 1]");
  if (total_steps < 1) throw std::invalid_argument("schedule needs at least one step");
  warmup_ = static_cast<long>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double CosineWarmupSchedule::lr(long step) const {
  if (step < warmup_) return base_ * static_cast<double>(step + 1) / static_cast<double>(warmup_ + 1);
  const long span = std::max(1L, total_ - warmup_);
  const double progress = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(span));
  return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<std::span<double>> params, AdamWOptions opts)
    : params_(std::move(params)), opts_(opts) {
  for (auto p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step(std::span<const std::span<const double>> grads, double lr) {
  if (grads.size() != params_.size()) throw std::invalid_argument("gradient count does not match parameters");
  ++t_;
  const double b1 = opts_.beta1;
  const double b2 = opts_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * opts_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i];
    const auto g = grads[i];
    if (g.size() != p.size()) throw std::invalid_argument("gradient shape does not match parameter");
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      p[k] = p[k] * decay - lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opts_.eps);
    }
  }
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace copl
