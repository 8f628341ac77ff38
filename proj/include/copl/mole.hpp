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

#ifndef COPL_MOLE_HPP_
#define COPL_MOLE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "copl/gcf.hpp"
#include "copl/json_io.hpp"
#include "copl/prefdata.hpp"

// Personalized reward model built from a frozen feed-forward scorer whose
// layers are adapted by low-rank deltas:
//
//   W_u = W0 + A_s B_s + w_k A_k B_k,   k = argmax_i z_i,
//   w_k = softmax(z / tau)_k,           z = gate(e_u).
//
// Each adapted layer owns its gate, so routing may differ by depth. The
// user embedding enters only through the gates. A model without routed
// experts is the unconditioned (uniform) baseline: one always-on delta.

namespace copl {

struct LowRankExpert {
  Eigen::MatrixXd up;    // d_out x n
  Eigen::MatrixXd down;  // n x d_in

  Eigen::MatrixXd delta() const { return up * down; }
};

// Two-layer perceptron, ReLU hidden layer, mapping e_u to expert logits.
struct GateNetwork {
  Eigen::MatrixXd hidden_w;  // h x d
  Eigen::VectorXd hidden_b;
  Eigen::MatrixXd out_w;     // M x h
  Eigen::VectorXd out_b;

  Eigen::VectorXd logits(const Eigen::VectorXd& e_u) const;
};

struct MoleLayer {
  Eigen::MatrixXd base_weight;  // frozen, d_out x d_in
  Eigen::VectorXd base_bias;    // frozen
  LowRankExpert shared;
  std::vector<LowRankExpert> experts;
  GateNetwork gate;
  double temperature = 1.0;

  int num_experts() const { return static_cast<int>(experts.size()); }
  int rank() const { return static_cast<int>(shared.down.rows()); }
  int in_dim() const { return static_cast<int>(base_weight.cols()); }
  int out_dim() const { return static_cast<int>(base_weight.rows()); }
};

struct MoleRewardModel {
  std::vector<MoleLayer> layers;
  Eigen::VectorXd head_w;
  double head_b = 0.0;

  bool user_conditioned() const { return !layers.empty() && !layers.front().experts.empty(); }
  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int num_experts() const { return layers.empty() ? 0 : layers.front().num_experts(); }
};

struct MoleConfig {
  int num_layers = 4;
  int width = 64;
  int num_experts = 8;
  int rank = 8;
  int gate_hidden = 256;
  double temperature = 1.0;
  // Rank of the single delta used by unconditioned baselines.
  int uniform_rank = 64;
};

struct RewardTrainConfig {
  double lr = 2e-3;
  int epochs = 30;
  int batch_size = 32;
  double warmup_ratio = 0.03;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct Route {
  int expert = 0;
  double weight = 1.0;
};

// `user_embedding_dim` is the gate input size. With `conditioned` false
// the model has no experts or gates.
MoleRewardModel init_reward_model(int input_dim, int user_embedding_dim, const MoleConfig& cfg, bool conditioned,
                                  std::uint64_t seed);

// Top-1 routing: the argmax logit (lowest index on ties) keeps its full
// softmax probability; every other weight is zero.
Eigen::VectorXd gate_weights_from_logits(const Eigen::VectorXd& logits, double temperature);
Eigen::VectorXd gate_weights(const MoleLayer& layer, const Eigen::VectorXd& e_u);
Route route(const MoleLayer& layer, const Eigen::VectorXd& e_u);

// W0 + A_s B_s + sum_i w_i A_i B_i for this user.
Eigen::MatrixXd adapted_matrix(const MoleLayer& layer, const Eigen::VectorXd& e_u);

double reward(const MoleRewardModel& model, const Eigen::VectorXd& e_u, const Eigen::VectorXd& features);

// Reward with the routing supplied by the caller (one Route per layer).
double reward_with_routes(const MoleRewardModel& model, std::span<const Route> routes,
                          const Eigen::VectorXd& features);

// -log sigma(f(e_u, preferred) - f(e_u, rejected)). When `grad` is non-null
// the gradient of that loss times `scale` is added to it (same layout as
// the model; frozen fields stay zero). The argmax of each gate is held
// fixed; gradients reach the gates only through the kept softmax value.
// `forced_experts`, if non-empty, overrides the argmax per layer.
double reward_pair_loss(const MoleRewardModel& model, const Eigen::VectorXd& e_u,
                        const Eigen::VectorXd& preferred, const Eigen::VectorXd& rejected,
                        MoleRewardModel* grad = nullptr, double scale = 1.0,
                        std::span<const int> forced_experts = {});

MoleRewardModel zeros_like(const MoleRewardModel& model);

// Trainable parameters as flat views, in a fixed order. Base weights are
// excluded.
std::vector<std::span<double>> trainable_views(MoleRewardModel& model);

struct RewardTrainResult {
  std::vector<double> loss_trace;  // mean pair loss per epoch
};

// Rows of `user_embeddings` are indexed by user id; rows of `features` by
// response id. Embeddings are read, never modified.
RewardTrainResult train_reward(MoleRewardModel& model, const Eigen::MatrixXd& user_embeddings,
                               std::span<const PreferencePair> pairs, const Eigen::MatrixXd& features,
                               const RewardTrainConfig& cfg);

RewardTrainResult train_reward(MoleRewardModel& model, const EmbeddingTable& embeddings,
                               const PreferenceDataset& dataset, const RewardTrainConfig& cfg);

// Response attribute vectors stacked as rows.
Eigen::MatrixXd response_feature_matrix(const PreferenceDataset& ds);

// allocation[layer][i] is the expert chosen for row user_rows[i].
std::vector<std::vector<int>> expert_allocation(const MoleRewardModel& model, const Eigen::MatrixXd& user_embeddings,
                                                std::span<const int> user_rows);

// Fraction of users that share their expert with the majority group on
// that expert. Users without a group are skipped; nullopt if none remain.
std::optional<double> allocation_purity(std::span<const int> allocation, std::span<const std::optional<int>> groups);

std::string expert_allocation_csv(const std::vector<std::vector<int>>& allocation, std::span<const int> user_ids,
                                  std::span<const std::optional<int>> groups);

Json to_json(const MoleConfig& cfg);
MoleConfig mole_config_from_json(const Json& j);
Json to_json(const RewardTrainConfig& cfg);
RewardTrainConfig reward_train_config_from_json(const Json& j);

Json reward_model_to_json(const MoleRewardModel& model);
MoleRewardModel reward_model_from_json(const Json& j);

}  // namespace copl

#endif  // COPL_MOLE_HPP_
