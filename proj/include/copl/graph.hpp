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

#ifndef COPL_GRAPH_HPP_
#define COPL_GRAPH_HPP_

#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "copl/prefdata.hpp"

namespace copl {

enum class Sign { kPositive, kNegative };

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// User-response graph with typed edges. A user's preferred response gets a
// positive edge and the rejected one a negative edge. The same (u, r) may
// carry both signs when the user's pairs disagree about r; identical
// (u, r, sign) edges are stored once. Immutable after construction.
class SignedBipartiteGraph {
 public:
  SignedBipartiteGraph(int num_users, int num_responses, std::span<const PreferencePair> pairs);

  // Graph over the dataset's seen users and their training annotations.
  static SignedBipartiteGraph build(const PreferenceDataset& ds);

  int num_users() const { return num_users_; }
  int num_responses() const { return num_responses_; }
  std::size_t num_edges(Sign s) const;

  // Sorted neighbour ids.
  std::span<const int> user_neighbors(Sign s, int user) const;
  std::span<const int> response_neighbors(Sign s, int response) const;
  int user_degree(Sign s, int user) const { return static_cast<int>(user_neighbors(s, user).size()); }
  int response_degree(Sign s, int response) const {
    return static_cast<int>(response_neighbors(s, response).size());
  }

  bool has_edge(Sign s, int user, int response) const;

  // 1 / sqrt(|N_u| |N_r|) over the degrees of the given sign. Throws
  // std::out_of_range when (user, response) has no edge of that sign.
  double norm_factor(Sign s, int user, int response) const;

  // num_users x num_responses matrix holding norm_factor at every edge.
  const SparseMatrix& normalized_adjacency(Sign s) const;

 private:
  int num_users_;
  int num_responses_;
  // Indexed by static_cast<int>(Sign).
  std::vector<std::vector<int>> user_adj_[2];
  std::vector<std::vector<int>> response_adj_[2];
  SparseMatrix norm_adj_[2];
};

}  // namespace copl

#endif  // COPL_GRAPH_HPP_
