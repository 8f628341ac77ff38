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

#ifndef COPL_OPTIM_HPP_
#define COPL_OPTIM_HPP_

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace copl {

// Linear warmup over the first ceil(warmup_ratio * total_steps) steps,
// then cosine decay to zero.
class CosineWarmupSchedule {
 public:
  CosineWarmupSchedule(double base_lr, long total_steps, double warmup_ratio);
  double lr(long step) const;
  long warmup_steps() const { return warmup_; }

 private:
  double base_;
  long total_;
  long warmup_;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Flat view over a dense Eigen object's coefficients.
template <typename Derived>
std::span<double> flat(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename Derived>
std::span<const double> flat(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

// Adam with decoupled weight decay. Parameters are bound once as flat
// views; every call to step() consumes gradients of the same sizes in the
// same order.
class AdamW {
 public:
  AdamW(std::vector<std::span<double>> params, AdamWOptions opts);
  void step(std::span<const std::span<const double>> grads, double lr);
  long steps_taken() const { return t_; }

 private:
  std::vector<std::span<double>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWOptions opts_;
  long t_ = 0;
};

// Numerically stable log(1 + exp(x)).
double softplus(double x);
// Stable logistic function.
double sigmoid(double x);
// -log sigma(margin); the BTL negative log-likelihood of one pair.
inline double pair_nll(double margin) { return softplus(-margin); }

}  // namespace copl

#endif  // COPL_OPTIM_HPP_
