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

#include "copl/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "copl/optim.hpp"

namespace copl {
namespace {

void require_pairs(const UnseenUser& unseen) {
  if (unseen.pairs.empty()) throw std::invalid_argument("unseen user has no annotations");
}

std::vector<int> sorted_unique(std::span<const int> ids) {
  std::vector<int> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

Eigen::VectorXd fallback_embedding(const EmbeddingTable& emb, Fallback fallback) {
  if (fallback == Fallback::kError) {
    throw std::runtime_error("unseen user has no positive k-hop neighbours");
  }
  return global_mean_embedding(emb);
}

}  // namespace

std::vector<int> khop_positive_users(const SignedBipartiteGraph& graph, const UnseenUser& unseen, int k) {
  require_pairs(unseen);
  if (k < 2 || k % 2 != 0) throw std::invalid_argument(fmt::format("hop count must be even and >= 2, got {}", k));
  std::vector<char> seen_user(static_cast<std::size_t>(graph.num_users()), 0);
  std::vector<char> seen_response(static_cast<std::size_t>(graph.num_responses()), 0);
  std::vector<int> frontier;
  for (const auto& p : unseen.pairs) {
    if (p.preferred < 0 || p.preferred >= graph.num_responses() || p.rejected < 0 ||
        p.rejected >= graph.num_responses()) {
      throw std::invalid_argument("unseen annotation references a response outside the graph");
    }
    if (!seen_response[static_cast<std::size_t>(p.preferred)]) {
      seen_response[static_cast<std::size_t>(p.preferred)] = 1;
      frontier.push_back(p.preferred);
    }
  }
  std::vector<int> users;
  for (int depth = 2; depth <= k; depth += 2) {
    std::vector<int> new_users;
    for (int r : frontier) {
      for (int u : graph.response_neighbors(Sign::kPositive, r)) {
        if (!seen_user[static_cast<std::size_t>(u)]) {
          seen_user[static_cast<std::size_t>(u)] = 1;
          new_users.push_back(u);
        }
      }
    }
    users.insert(users.end(), new_users.begin(), new_users.end());
    if (depth == k) break;
    frontier.clear();
    for (int u : new_users) {
      for (int r : graph.user_neighbors(Sign::kPositive, u)) {
        if (!seen_response[static_cast<std::size_t>(r)]) {
          seen_response[static_cast<std::size_t>(r)] = 1;
          frontier.push_back(r);
        }
      }
    }
  }
  std::sort(users.begin(), users.end());
  return users;
}

double alignment_score(const EmbeddingTable& emb, int seen_user, const UnseenUser& unseen) {
  double gamma = 0.0;
  for (const auto& p : unseen.pairs) {
    gamma -= pair_nll(score(emb, seen_user, p.preferred) - score(emb, seen_user, p.rejected));
  }
  return gamma;
}

Eigen::VectorXd alignment_weights(const EmbeddingTable& emb, std::span<const int> neighbors,
                                  const UnseenUser& unseen, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  const auto ids = sorted_unique(neighbors);
  Eigen::VectorXd logits(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    logits(static_cast<Eigen::Index>(i)) = alignment_score(emb, ids[i], unseen) / kappa;
  }
  if (ids.empty()) return logits;
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::VectorXd weighted_neighbor_embedding(const EmbeddingTable& emb, std::span<const int> neighbors,
                                            const UnseenUser& unseen, double kappa) {
  const auto ids = sorted_unique(neighbors);
  if (ids.empty()) throw std::invalid_argument("need at least one neighbour");
  const Eigen::VectorXd w = alignment_weights(emb, ids, unseen, kappa);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(emb.users.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += w(static_cast<Eigen::Index>(i)) * emb.users.row(ids[i]).transpose();
  }
  return out;
}

Eigen::VectorXd global_mean_embedding(const EmbeddingTable& emb) {
  if (emb.users.rows() == 0) throw std::runtime_error("no seen users to average");
  return emb.users.colwise().mean().transpose();
}

Eigen::VectorXd adapt_embedding(const SignedBipartiteGraph& graph, const EmbeddingTable& emb,
                                const UnseenUser& unseen, const AdaptConfig& cfg) {
  const auto neighbors = khop_positive_users(graph, unseen, cfg.k);
  if (neighbors.empty()) return fallback_embedding(emb, cfg.fallback);
  return weighted_neighbor_embedding(emb, neighbors, unseen, cfg.kappa);
}

Eigen::VectorXd naive_average(const SignedBipartiteGraph& graph, const EmbeddingTable& emb,
                              const UnseenUser& unseen, int k, Fallback fallback) {
  const auto neighbors = khop_positive_users(graph, unseen, k);
  if (neighbors.empty()) return fallback_embedding(emb, fallback);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(emb.users.cols());
  for (int u : neighbors) out += emb.users.row(u).transpose();
  return out / static_cast<double>(neighbors.size());
}

UserOptResult user_opt(const EmbeddingTable& emb, const UnseenUser& unseen, int steps, double lr) {
  require_pairs(unseen);
  if (steps < 1) throw std::invalid_argument("user_opt needs at least one step");
  if (!(lr > 0.0)) throw std::invalid_argument("user_opt needs lr > 0");
  const auto d = emb.responses.cols();
  std::vector<Eigen::VectorXd> diffs;
  for (const auto& p : unseen.pairs) {
    if (p.preferred < 0 || p.preferred >= emb.responses.rows() || p.rejected < 0 ||
        p.rejected >= emb.responses.rows()) {
      throw std::invalid_argument("unseen annotation references a missing response");
    }
    diffs.push_back((emb.responses.row(p.preferred) - emb.responses.row(p.rejected)).transpose());
  }
  auto objective = [&](const Eigen::VectorXd& e) {
    double s = 0.0;
    for (const auto& df : diffs) s -= pair_nll(e.dot(df));
    return s;
  };
  UserOptResult r;
  r.embedding = Eigen::VectorXd::Zero(d);
  for (int t = 0; t < steps; ++t) {
    r.objective.push_back(objective(r.embedding));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    // d/de log sigma(<e, df>) = sigma(-<e, df>) df
    for (const auto& df : diffs) g += sigmoid(-r.embedding.dot(df)) * df;
    r.embedding += lr * g;
    if (!r.embedding.allFinite()) throw std::runtime_error(fmt::format("user_opt diverged at step {}", t));
  }
  r.objective.push_back(objective(r.embedding));
  return r;
}

Json to_json(const AdaptConfig& cfg) {
  return Json{{"k", cfg.k},
              {"kappa", cfg.kappa},
              {"fallback", cfg.fallback == Fallback::kGlobalMean ? "global_mean" : "error"}};
}

AdaptConfig adapt_config_from_json(const Json& j) {
  AdaptConfig c;
  c.k = j.value("k", c.k);
  c.kappa = j.value("kappa", c.kappa);
  const auto fb = j.value("fallback", std::string("global_mean"));
  if (fb == "global_mean") {
    c.fallback = Fallback::kGlobalMean;
  } else if (fb == "error") {
    c.fallback = Fallback::kError;
  } else {
    throw std::invalid_argument("fallback must be \"global_mean\" or \"error\"");
  }
  if (c.k < 2 || c.k % 2 != 0) throw std::invalid_argument("adapt.k must be even and >= 2");
  if (!(c.kappa > 0.0)) throw std::invalid_argument("adapt.kappa must be positive");
  return c;
}

}  // namespace copl
