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

#include "copl/config.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "copl/seeds.hpp"

namespace copl {

void ExperimentConfig::derive_seeds() {
  gcf.seed = stage_seed(seed, "gcf");
  reward.seed = stage_seed(seed, "reward");
}

void ExperimentConfig::validate() const {
  if (version != 1) throw std::invalid_argument(fmt::format("unsupported config version {}", version));
  if (const auto* g = std::get_if<GroupProfiles>(&data.profiles)) {
    if (static_cast<int>(g->ratios.size()) != data.num_dims) {
      throw std::invalid_argument(
          fmt::format("{} groups but {} attribute dimensions", g->ratios.size(), data.num_dims));
    }
  }
  if (gcf.dim < 1 || gcf.num_layers < 0) throw std::invalid_argument("gcf.dim must be >= 1");
  if (gcf.epochs < 1 || gcf.batch_size < 1) throw std::invalid_argument("gcf.epochs and gcf.batch_size must be >= 1");
  if (mole.num_layers < 1 || mole.width < 1) throw std::invalid_argument("mole layers and width must be >= 1");
  if (user_opt.steps < 1 || !(user_opt.lr > 0.0)) throw std::invalid_argument("user_opt needs steps >= 1, lr > 0");
  if (data.noise < 0.0 || data.noise >= 0.5) throw std::invalid_argument("data.noise must lie in [0, 0.5)");
}

Json to_json(const ExperimentConfig& cfg) {
  return Json{{"version", cfg.version},
              {"seed", cfg.seed},
              {"data", to_json(cfg.data)},
              {"gcf", to_json(cfg.gcf)},
              {"mole", to_json(cfg.mole)},
              {"reward", to_json(cfg.reward)},
              {"adapt", to_json(cfg.adapt)},
              {"user_opt", Json{{"steps", cfg.user_opt.steps}, {"lr", cfg.user_opt.lr}}},
              {"metrics", Json{{"uniform", cfg.metrics.uniform},
                               {"group_oracle", cfg.metrics.group_oracle},
                               {"naive_average", cfg.metrics.naive_average},
                               {"user_opt", cfg.metrics.user_opt},
                               {"random_embedding", cfg.metrics.random_embedding}}},
              {"output_dir", cfg.output_dir}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (!j.contains("version")) throw std::invalid_argument("config is missing \"version\"");
  ExperimentConfig c;
  try {
    c.version = j.at("version").get<int>();
    c.seed = j.value("seed", c.seed);
    const Json empty = Json::object();
    c.data = data_config_from_json(j.value("data", empty));
    c.gcf = gcf_hyperparams_from_json(j.value("gcf", empty));
    c.mole = mole_config_from_json(j.value("mole", empty));
    c.reward = reward_train_config_from_json(j.value("reward", empty));
    c.adapt = adapt_config_from_json(j.value("adapt", empty));
    const Json uo = j.value("user_opt", empty);
    c.user_opt.steps = uo.value("steps", c.user_opt.steps);
    c.user_opt.lr = uo.value("lr", c.user_opt.lr);
    const Json m = j.value("metrics", empty);
    c.metrics.uniform = m.value("uniform", c.metrics.uniform);
    c.metrics.group_oracle = m.value("group_oracle", c.metrics.group_oracle);
    c.metrics.naive_average = m.value("naive_average", c.metrics.naive_average);
    c.metrics.user_opt = m.value("user_opt", c.metrics.user_opt);
    c.metrics.random_embedding = m.value("random_embedding", c.metrics.random_embedding);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config field: ") + e.what());
  }
  c.derive_seeds();
  c.validate();
  return c;
}

std::string config_hash(const ExperimentConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("output_dir");
  return fmt::format("{:016x}", fnv1a64(dump_json(j)));
}

}  // namespace copl
