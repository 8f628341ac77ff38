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

#ifndef COPL_GCF_HPP_
#define COPL_GCF_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "copl/graph.hpp"
#include "copl/json_io.hpp"
#include "copl/prefdata.hpp"

// Graph collaborative filtering over the signed user-response graph.
//
// Each layer updates both node sides at once from the previous layer's
// embeddings. For a user u,
//
//   m_u = W_self e_u
//       + sum_{r in N+(u)} a_ur (W_pos e_r + W_pos_inter (e_r * e_u))
//       + sum_{r in N-(u)} b_ur (W_neg e_r + W_neg_inter (e_r * e_u))
//   e_u' = act(m_u)
//
// with a_ur, b_ur the symmetric degree normalizers of the graph. Responses
// use the mirrored rule with their own weight set. The predicted
// preference of u for r is the inner product of the last-layer embeddings.

namespace copl {

struct Activation {
  enum class Kind { kLeakyRelu, kIdentity };
  Kind kind = Kind::kLeakyRelu;
  double slope = 0.01;

  double apply(double x) const {
    return (kind == Kind::kIdentity || x > 0.0) ? x : slope * x;
  }
  double derivative(double x) const {
    return (kind == Kind::kIdentity || x > 0.0) ? 1.0 : slope;
  }
};

// Propagation weights for one node side of one layer, all d x d.
struct SideWeights {
  Eigen::MatrixXd self;
  Eigen::MatrixXd pos;
  Eigen::MatrixXd pos_inter;
  Eigen::MatrixXd neg;
  Eigen::MatrixXd neg_inter;
};

struct GcfLayer {
  SideWeights user;
  SideWeights response;
};

struct GcfParams {
  std::vector<GcfLayer> layers;
  Eigen::MatrixXd user_init;      // num_users x d
  Eigen::MatrixXd response_init;  // num_responses x d

  int dim() const { return static_cast<int>(user_init.cols()); }
  int num_layers() const { return static_cast<int>(layers.size()); }

  // Every trainable tensor in a fixed order: the two embedding tables,
  // then per layer the user-side and response-side weights.
  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;

  static GcfParams zeros(int num_users, int num_responses, int dim, int num_layers);
  double squared_norm() const;
};

struct GcfHyperparams {
  int num_layers = 4;
  int dim = 32;
  double lambda = 1e-4;
  double lr = 5e-3;
  int epochs = 150;
  int batch_size = 1024;
  double warmup_ratio = 0.1;
  double weight_decay = 0.0;
  Activation activation;
  bool use_negative_edges = true;
  bool use_transform = true;
  std::uint64_t seed = 0;
};

struct EmbeddingTable {
  Eigen::MatrixXd users;
  Eigen::MatrixXd responses;
};

GcfParams init_gcf_params(int num_users, int num_responses, const GcfHyperparams& hyper);

// Final-layer embeddings. Throws std::runtime_error naming the layer if
// an intermediate value overflows.
EmbeddingTable propagate(const SignedBipartiteGraph& graph, const GcfParams& params,
                         const GcfHyperparams& hyper);

double score(const EmbeddingTable& emb, int user, int response);
Choice predict_pair(const EmbeddingTable& emb, int user, int response_a, int response_b);

// sum over pairs of -log sigma(s_ua - s_ub), plus lambda * ||theta||^2.
double gcf_loss(const EmbeddingTable& emb, const GcfParams& params,
                std::span<const PreferencePair> pairs, double lambda);

struct GcfLossGrad {
  double loss = 0.0;
  GcfParams grad;
};

// Objective pair_scale * sum_pairs nll + lambda * ||theta||^2 and its
// gradient with respect to every tensor in `params`. Matrices that an
// ablation switch disables get zero pair gradient.
GcfLossGrad gcf_loss_and_grad(const SignedBipartiteGraph& graph, const GcfParams& params,
                              const GcfHyperparams& hyper, std::span<const PreferencePair> pairs,
                              double pair_scale = 1.0);

struct GcfTrainResult {
  GcfParams params;
  EmbeddingTable embeddings;
  std::vector<double> loss_trace;  // mean objective per epoch
};

GcfTrainResult train_gcf(const SignedBipartiteGraph& graph, std::span<const PreferencePair> pairs,
                         const GcfHyperparams& hyper);

Json to_json(const GcfHyperparams& h);
GcfHyperparams gcf_hyperparams_from_json(const Json& j);

Json gcf_model_to_json(const GcfParams& params, const GcfHyperparams& hyper);
GcfParams gcf_params_from_json(const Json& j);

// CSV: node_type,node_id,group_id,dim_0..dim_{d-1}. `user_groups` may be
// empty; responses never carry a group.
std::string embeddings_csv(const EmbeddingTable& emb, std::span<const std::optional<int>> user_groups,
                           std::span<const int> user_ids = {});

}  // namespace copl

#endif  // COPL_GCF_HPP_
