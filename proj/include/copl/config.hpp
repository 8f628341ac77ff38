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

#ifndef COPL_CONFIG_HPP_
#define COPL_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "copl/adapt.hpp"
#include "copl/gcf.hpp"
#include "copl/json_io.hpp"
#include "copl/mole.hpp"
#include "copl/prefdata.hpp"

namespace copl {

struct UserOptConfig {
  int steps = 50;
  double lr = 0.5;
};

struct MetricSelection {
  bool uniform = true;
  bool group_oracle = true;
  bool naive_average = true;
  bool user_opt = true;
  bool random_embedding = true;
};

// Everything one run needs. Stage seeds are derived from `seed` and the
// stage name; seeds stored inside the sub-configs are overwritten.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 0;
  DataConfig data;
  GcfHyperparams gcf;
  MoleConfig mole;
  RewardTrainConfig reward;
  AdaptConfig adapt;
  UserOptConfig user_opt;
  MetricSelection metrics;
  std::string output_dir;

  // Fills per-stage seeds from the master seed.
  void derive_seeds();
  // Throws std::invalid_argument when modules disagree.
  void validate() const;
};

Json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const Json& j);

// Stable 64-bit hash of the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace copl

#endif  // COPL_CONFIG_HPP_
