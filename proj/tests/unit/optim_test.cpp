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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "copl/optim.hpp"

using namespace copl;

TEST_CASE("warmup then cosine decay") {
  const CosineWarmupSchedule s(1.0, 100, 0.1);
  CHECK(s.warmup_steps() == 10);
  for (long t = 1; t < 10; ++t) CHECK(s.lr(t) > s.lr(t - 1));
  CHECK(s.lr(10) == doctest::Approx(1.0));
  for (long t = 11; t < 100; ++t) CHECK(s.lr(t) <= s.lr(t - 1));
  CHECK(s.lr(99) < 0.01);
  CHECK(s.lr(55) == doctest::Approx(0.5).epsilon(1e-12));
  const CosineWarmupSchedule flat_lr(0.3, 5, 0.0);
  CHECK(flat_lr.lr(0) == doctest::Approx(0.3));
}

TEST_CASE("AdamW first step moves every coordinate by lr against the gradient") {
  std::vector<double> x = {1.0, -2.0, 0.5};
  AdamW opt({std::span<double>(x)}, AdamWOptions{});
  const std::vector<double> g = {0.3, -4.0, 1e-3};
  const std::vector<std::span<const double>> gs = {g};
  opt.step(gs, 0.1);
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(x[2] == doctest::Approx(0.4).epsilon(1e-4));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("weight decay is decoupled from the gradient") {
  std::vector<double> x = {2.0};
  AdamWOptions o;
  o.weight_decay = 0.5;
  AdamW opt({std::span<double>(x)}, o);
  const std::vector<double> g = {0.0};
  const std::vector<std::span<const double>> gs = {g};
  opt.step(gs, 0.1);
  CHECK(x[0] == doctest::Approx(2.0 * (1 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("AdamW minimizes a quadratic") {
  std::vector<double> x = {5.0, -3.0};
  AdamW opt({std::span<double>(x)}, AdamWOptions{});
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g = {2 * (x[0] - 1), 2 * (x[1] + 2)};
    const std::vector<std::span<const double>> gs = {g};
    opt.step(gs, 0.05);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("stable softplus and sigmoid") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(softplus(-800.0) < 1e-300);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(pair_nll(50.0) < 1e-20);
  for (double m : {-3.0, -0.2, 0.0, 1.7}) CHECK(pair_nll(m) - pair_nll(-m) == doctest::Approx(-m).epsilon(1e-12));
}
