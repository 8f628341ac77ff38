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

#ifndef COPL_ADAPT_HPP_
#define COPL_ADAPT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "copl/gcf.hpp"
#include "copl/graph.hpp"
#include "copl/json_io.hpp"

// Embeddings for users absent from training, estimated from the seen
// users they reach through positive edges. No parameters are updated.

namespace copl {

enum class Fallback { kGlobalMean, kError };

struct AdaptConfig {
  int k = 2;
  double kappa = 0.07;
  Fallback fallback = Fallback::kGlobalMean;
};

// A new user's revealed preferences: `preferred` beats `rejected`.
struct UnseenUser {
  struct Pair {
    int preferred = 0;
    int rejected = 0;
  };
  std::vector<Pair> pairs;
};

// Seen users reachable from the unseen user within k hops (k even) over
// positive edges only, in increasing id order. The unseen user's own
// positive edges go to the responses it preferred.
std::vector<int> khop_positive_users(const SignedBipartiteGraph& graph, const UnseenUser& unseen, int k);

// sum over the unseen pairs of log sigma(s_u,a - s_u,b); always <= 0.
double alignment_score(const EmbeddingTable& emb, int seen_user, const UnseenUser& unseen);

// Softmax(gamma / kappa) weights over `neighbors`, returned in the order
// of the sorted neighbour ids.
Eigen::VectorXd alignment_weights(const EmbeddingTable& emb, std::span<const int> neighbors,
                                  const UnseenUser& unseen, double kappa);

// sum_u w_u e_u over `neighbors`. The result does not depend on the order
// in which neighbours are listed.
Eigen::VectorXd weighted_neighbor_embedding(const EmbeddingTable& emb, std::span<const int> neighbors,
                                            const UnseenUser& unseen, double kappa);

Eigen::VectorXd global_mean_embedding(const EmbeddingTable& emb);

Eigen::VectorXd adapt_embedding(const SignedBipartiteGraph& graph, const EmbeddingTable& emb,
                                const UnseenUser& unseen, const AdaptConfig& cfg);

Eigen::VectorXd naive_average(const SignedBipartiteGraph& graph, const EmbeddingTable& emb,
                              const UnseenUser& unseen, int k, Fallback fallback = Fallback::kGlobalMean);

struct UserOptResult {
  Eigen::VectorXd embedding;
  std::vector<double> objective;  // log-likelihood before each step and after the last
};

// Gradient ascent on sum log sigma(<e, e_a - e_b>) from e = 0 with the
// response embeddings frozen.
UserOptResult user_opt(const EmbeddingTable& emb, const UnseenUser& unseen, int steps, double lr);

Json to_json(const AdaptConfig& cfg);
AdaptConfig adapt_config_from_json(const Json& j);

}  // namespace copl

#endif  // COPL_ADAPT_HPP_
