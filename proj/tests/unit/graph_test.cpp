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
#include <random>

#include "copl/graph.hpp"
#include "oracles.hpp"

using namespace copl;

TEST_CASE("single pair gives one edge of each sign") {
  const std::vector<PreferencePair> p = {{0, 0, 1}};
  const SignedBipartiteGraph g(1, 2, p);
  CHECK(g.user_degree(Sign::kPositive, 0) == 1);
  CHECK(g.user_degree(Sign::kNegative, 0) == 1);
  CHECK(g.has_edge(Sign::kPositive, 0, 0));
  CHECK(g.has_edge(Sign::kNegative, 0, 1));
  CHECK_FALSE(g.has_edge(Sign::kPositive, 0, 1));
}

TEST_CASE("conflicting signs coexist and duplicates collapse") {
  const std::vector<PreferencePair> p = {{0, 0, 1}, {0, 1, 2}, {0, 0, 1}};
  const SignedBipartiteGraph g(1, 3, p);
  CHECK(g.num_edges(Sign::kPositive) == 2);
  CHECK(g.num_edges(Sign::kNegative) == 2);
  CHECK(g.has_edge(Sign::kPositive, 0, 1));
  CHECK(g.has_edge(Sign::kNegative, 0, 1));
}

TEST_CASE("empty graph is valid") {
  const SignedBipartiteGraph g(3, 4, {});
  CHECK(g.num_edges(Sign::kPositive) == 0);
  CHECK(g.num_edges(Sign::kNegative) == 0);
  CHECK(g.normalized_adjacency(Sign::kPositive).nonZeros() == 0);
}

TEST_CASE("dangling references are rejected") {
  const std::vector<PreferencePair> p = {{2, 0, 1}};
  CHECK_THROWS(SignedBipartiteGraph(2, 2, p));
  const std::vector<PreferencePair> q = {{0, 0, 5}};
  CHECK_THROWS(SignedBipartiteGraph(2, 2, q));
}

TEST_CASE("norm factor examples") {
  // User 0 prefers response 0 over 1..4; response 5 is preferred by user 0
  // and rejected, with users 1..3 rejecting it too.
  std::vector<PreferencePair> p = {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}};
  {
    const SignedBipartiteGraph g(1, 5, p);
    CHECK(g.norm_factor(Sign::kPositive, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  // |N+_u| = 4, |N+_r| = 1.
  p = {{0, 0, 4}, {0, 1, 4}, {0, 2, 4}, {0, 3, 4}};
  {
    const SignedBipartiteGraph g(1, 5, p);
    CHECK(g.norm_factor(Sign::kPositive, 0, 2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(g.norm_factor(Sign::kPositive, 0, 4), std::out_of_range);
  }
  // |N-_u| = 9 for user 0, |N-_r| = 4 for response 1.
  p.clear();
  for (int r = 1; r <= 9; ++r) p.push_back({0, 0, r});
  for (int u = 1; u <= 3; ++u) p.push_back({u, 0, 1});
  const SignedBipartiteGraph g(4, 10, p);
  CHECK(g.norm_factor(Sign::kNegative, 0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("random graphs keep both indices and degrees consistent") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = testing::random_tiny_graph(rng, 8, 8, 20);
    const SignedBipartiteGraph g(t.num_users, t.num_responses, t.pairs);
    for (Sign s : {Sign::kPositive, Sign::kNegative}) {
      std::size_t total = 0;
      const auto& a = g.normalized_adjacency(s);
      for (int u = 0; u < t.num_users; ++u) {
        const auto ns = g.user_neighbors(s, u);
        CHECK(std::is_sorted(ns.begin(), ns.end()));
        total += ns.size();
        for (int r : ns) {
          const auto back = g.response_neighbors(s, r);
          CHECK(std::binary_search(back.begin(), back.end(), u));
          const double alpha = g.norm_factor(s, u, r);
          CHECK(std::abs(alpha * std::sqrt(double(g.user_degree(s, u)) * g.response_degree(s, r)) - 1.0) < 1e-12);
          CHECK(a.coeff(u, r) == alpha);
        }
      }
      CHECK(total == g.num_edges(s));
      CHECK(static_cast<std::size_t>(a.nonZeros()) == total);
    }
    for (const auto& p : t.pairs) {
      CHECK(g.has_edge(Sign::kPositive, p.user, p.preferred));
      CHECK(g.has_edge(Sign::kNegative, p.user, p.rejected));
    }
  }
}

TEST_CASE("dataset graph uses only seen users' training pairs") {
  PreferenceDataset ds;
  ds.survey = {{0, 0, 1, 0}, {1, 2, 3, 1}};
  ds.responses = {{0, {1, 0}}, {1, {0, 1}}, {2, {1, 0}}, {3, {0, 1}}};
  ds.users = {{0, {1, 0}, 0, true}, {1, {0, 1}, 1, false}};
  ds.annotations = {{0, 0, Choice::kA}};
  ds.context_annotations = {{1, 1, Choice::kB}};
  ds.test_annotations = {{0, 1, Choice::kA}};
  const auto g = SignedBipartiteGraph::build(ds);
  CHECK(g.num_users() == 1);
  CHECK(g.num_responses() == 4);
  CHECK(g.num_edges(Sign::kPositive) == 1);
  CHECK(g.has_edge(Sign::kPositive, 0, 0));
  CHECK(g.has_edge(Sign::kNegative, 0, 1));
}
