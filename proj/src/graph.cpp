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

#include "copl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace copl {
namespace {

int idx(Sign s) { return s == Sign::kPositive ? 0 : 1; }

}  // namespace

SignedBipartiteGraph::SignedBipartiteGraph(int num_users, int num_responses,
                                           std::span<const PreferencePair> pairs)
    : num_users_(num_users), num_responses_(num_responses) {
  if (num_users < 0 || num_responses < 0) throw std::invalid_argument("node counts must be non-negative");
  for (int s = 0; s < 2; ++s) {
    user_adj_[s].assign(static_cast<std::size_t>(num_users), {});
    response_adj_[s].assign(static_cast<std::size_t>(num_responses), {});
  }
  auto check = [&](int r) {
    if (r < 0 || r >= num_responses) throw std::invalid_argument(fmt::format("edge to missing response {}", r));
  };
  for (const auto& p : pairs) {
    if (p.user < 0 || p.user >= num_users) {
      throw std::invalid_argument(fmt::format("edge from missing user {}", p.user));
    }
    check(p.preferred);
    check(p.rejected);
    user_adj_[0][static_cast<std::size_t>(p.user)].push_back(p.preferred);
    user_adj_[1][static_cast<std::size_t>(p.user)].push_back(p.rejected);
  }
  for (int s = 0; s < 2; ++s) {
    for (int u = 0; u < num_users; ++u) {
      auto& adj = user_adj_[s][static_cast<std::size_t>(u)];
      std::sort(adj.begin(), adj.end());
      adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
      for (int r : adj) response_adj_[s][static_cast<std::size_t>(r)].push_back(u);
    }
    // Users are visited in increasing order, so response lists come out sorted.

    std::vector<Eigen::Triplet<double>> triplets;
    for (int u = 0; u < num_users; ++u) {
      const auto& adj = user_adj_[s][static_cast<std::size_t>(u)];
      for (int r : adj) {
        const double du = static_cast<double>(adj.size());
        const double dr = static_cast<double>(response_adj_[s][static_cast<std::size_t>(r)].size());
        triplets.emplace_back(u, r, 1.0 / std::sqrt(du * dr));
      }
    }
    norm_adj_[s].resize(num_users, num_responses);
    norm_adj_[s].setFromTriplets(triplets.begin(), triplets.end());
    norm_adj_[s].makeCompressed();
  }
}

SignedBipartiteGraph SignedBipartiteGraph::build(const PreferenceDataset& ds) {
  const auto pairs = ds.resolve(ds.annotations);
  return SignedBipartiteGraph(ds.num_seen_users(), static_cast<int>(ds.responses.size()), pairs);
}

std::size_t SignedBipartiteGraph::num_edges(Sign s) const {
  return static_cast<std::size_t>(norm_adj_[idx(s)].nonZeros());
}

std::span<const int> SignedBipartiteGraph::user_neighbors(Sign s, int user) const {
  return user_adj_[idx(s)].at(static_cast<std::size_t>(user));
}

std::span<const int> SignedBipartiteGraph::response_neighbors(Sign s, int response) const {
  return response_adj_[idx(s)].at(static_cast<std::size_t>(response));
}

bool SignedBipartiteGraph::has_edge(Sign s, int user, int response) const {
  if (user < 0 || user >= num_users_ || response < 0 || response >= num_responses_) return false;
  const auto adj = user_neighbors(s, user);
  return std::binary_search(adj.begin(), adj.end(), response);
}

double SignedBipartiteGraph::norm_factor(Sign s, int user, int response) const {
  if (!has_edge(s, user, response)) {
    throw std::out_of_range(fmt::format("no {} edge between user {} and response {}",
                                        s == Sign::kPositive ? "positive" : "negative", user, response));
  }
  const double du = user_degree(s, user);
  const double dr = response_degree(s, response);
  return 1.0 / std::sqrt(du * dr);
}

const SparseMatrix& SignedBipartiteGraph::normalized_adjacency(Sign s) const { return norm_adj_[idx(s)]; }

}  // namespace copl
