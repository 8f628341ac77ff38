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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "copl/json_io.hpp"
#include "copl/prefdata.hpp"
#include "copl/seeds.hpp"

using namespace copl;

namespace {

std::vector<ResponseFeatures> two_responses(std::vector<double> a, std::vector<double> b) {
  return {{0, std::move(a)}, {1, std::move(b)}};
}

UserProfile profile(std::vector<double> w) { return {0, std::move(w), std::nullopt, true}; }

std::map<int, int> counts_per_user(std::span<const Annotation> as) {
  std::map<int, int> c;
  for (const auto& a : as) ++c[a.user_id];
  return c;
}

DataConfig small_config() {
  DataConfig c;
  c.num_items = 60;
  c.num_seen_users = 20;
  c.num_unseen_users = 6;
  c.unseen_test_pairs = 10;
  return c;
}

}  // namespace

TEST_CASE("controversial single item disagrees on the two dimensions") {
  const auto s = generate_survey(1, 2, 7, true);
  REQUIRE(s.items.size() == 1);
  const auto& a = s.responses[s.items[0].response_a].attributes;
  const auto& b = s.responses[s.items[0].response_b].attributes;
  CHECK((a[0] - b[0] > 0) != (a[1] - b[1] > 0));
}

TEST_CASE("survey generation rejects bad sizes") {
  CHECK_THROWS_AS(generate_survey(0, 2, 1, false), std::invalid_argument);
  CHECK_THROWS_AS(generate_survey(3, 0, 1, false), std::invalid_argument);
  CHECK_THROWS(generate_survey(3, 1, 1, true));
}

TEST_CASE("survey generation is deterministic and well formed") {
  const auto a = generate_survey(1000, 4, 42, false);
  const auto b = generate_survey(1000, 4, 42, false);
  REQUIRE(a.responses.size() == 2000);
  for (std::size_t i = 0; i < a.responses.size(); ++i) CHECK(a.responses[i].attributes == b.responses[i].attributes);
  std::set<int> ids;
  for (const auto& it : a.items) {
    CHECK(it.response_a != it.response_b);
    ids.insert(it.item_id);
  }
  CHECK(ids.size() == a.items.size());
  const auto c = generate_survey(1000, 4, 43, false);
  CHECK(c.responses[0].attributes != a.responses[0].attributes);
}

TEST_CASE("controversial_only leaves no dominated pair") {
  const auto s = generate_survey(300, 3, 5, true);
  for (const auto& it : s.items) {
    CHECK(is_controversial(s.responses[it.response_a].attributes, s.responses[it.response_b].attributes));
  }
}

TEST_CASE("group users follow ratios") {
  auto count_group = [](const std::vector<UserProfile>& us, int g) {
    return std::count_if(us.begin(), us.end(), [g](const UserProfile& u) { return u.group_id == g; });
  };
  const auto even = generate_users(10, GroupProfiles{{1, 1}}, 2, 3);
  CHECK(count_group(even, 0) == 5);
  CHECK(count_group(even, 1) == 5);
  const auto skew = generate_users(10, GroupProfiles{{9, 1}}, 2, 3);
  CHECK(count_group(skew, 0) == 9);
  CHECK(count_group(skew, 1) == 1);
  for (const auto& u : skew) {
    CHECK(u.weights[static_cast<std::size_t>(*u.group_id)] == 1.0);
    CHECK(std::accumulate(u.weights.begin(), u.weights.end(), 0.0) == 1.0);
  }
  CHECK_THROWS_AS(generate_users(10, GroupProfiles{{1, 1, 1}}, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(generate_users(10, GroupProfiles{{1, -1}}, 2, 3), std::invalid_argument);
}

TEST_CASE("apportion keeps the exact total") {
  CHECK(apportion(10, std::vector<double>{1, 1, 1}) == std::vector<int>{4, 3, 3});
  CHECK(apportion(7, std::vector<double>{0.5, 0.25, 0.25}) == std::vector<int>{3, 2, 2});
  const auto a = apportion(101, std::vector<double>{3, 1, 7, 2});
  CHECK(std::accumulate(a.begin(), a.end(), 0) == 101);
}

TEST_CASE("dirichlet users lie on the simplex") {
  const auto us = generate_users(500, DirichletProfiles{0.1}, 4, 11);
  for (const auto& u : us) {
    double s = 0;
    for (double w : u.weights) {
      CHECK(w >= 0.0);
      s += w;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    const bool one_hot = std::count(u.weights.begin(), u.weights.end(), 1.0) == 1;
    CHECK(one_hot == u.group_id.has_value());
  }
  CHECK_THROWS_AS(generate_users(5, DirichletProfiles{0.0}, 4, 1), std::invalid_argument);
}

TEST_CASE("annotation rule") {
  const auto rs = two_responses({1, 0}, {0, 1});
  const SurveyItem item{0, 0, 1, 0};
  CHECK(annotate(profile({1, 0}), item, rs) == Choice::kA);
  CHECK(annotate(profile({0.5, 0.5}), item, rs) == Choice::kA);
  CHECK(annotate(profile({0, 1}), item, rs) == Choice::kB);
  Rng rng(1);
  CHECK_THROWS_AS(annotate(profile({1, 0}), item, rs, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(annotate(profile({1, 0}), item, rs, -0.1, rng), std::invalid_argument);
}

TEST_CASE("label noise flips at the requested rate") {
  const auto rs = two_responses({1, 0}, {0, 1});
  const SurveyItem item{0, 0, 1, 0};
  Rng rng(9);
  int flips = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) flips += annotate(profile({1, 0}), item, rs, 0.2, rng) == Choice::kB ? 1 : 0;
  CHECK(std::abs(flips / double(n) - 0.2) < 0.015);
}

TEST_CASE("ALL and AVG regimes") {
  const auto s = generate_survey(40, 2, 1, false);
  const auto users = generate_users(50, GroupProfiles{{1, 1}}, 2, 2);
  const auto all = sample_annotations(users, s.items, s.responses, {RegimeKind::kAll, 8}, 0.0, 3);
  for (const auto& [u, c] : counts_per_user(all)) CHECK(c == 8);
  CHECK(counts_per_user(all).size() == 50);

  const auto avg = sample_annotations(users, s.items, s.responses, {RegimeKind::kAvg, 8}, 0.0, 3);
  for (const auto& [u, c] : counts_per_user(avg)) {
    CHECK(c >= 1);
    CHECK(c <= 15);
  }
  std::set<std::pair<int, int>> keys;
  for (const auto& a : avg) CHECK(keys.insert({a.user_id, a.item_id}).second);

  const auto small = generate_survey(10, 2, 1, false);
  CHECK_THROWS_AS(sample_annotations(users, small.items, small.responses, {RegimeKind::kAll, 16}, 0.0, 3),
                  std::invalid_argument);
}

TEST_CASE("AVG(8) over 10000 users averages close to 8") {
  const auto s = generate_survey(20, 2, 4, false);
  const auto users = generate_users(10000, GroupProfiles{{1, 1}}, 2, 5);
  const auto avg = sample_annotations(users, s.items, s.responses, {RegimeKind::kAvg, 8}, 0.0, 6);
  const double mean = static_cast<double>(avg.size()) / 10000.0;
  CHECK(mean >= 7.5);
  CHECK(mean <= 8.5);
  int lo = 100;
  int hi = 0;
  for (const auto& [u, c] : counts_per_user(avg)) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  CHECK(lo == 1);
  CHECK(hi == 15);
}

TEST_CASE("pair tags") {
  const std::vector<ResponseFeatures> rs = {{0, {2, 2}}, {1, {1, 1}}, {2, {2, 0}}, {3, {0, 2}}};
  const std::vector<SurveyItem> items = {{0, 0, 1, 0}, {1, 2, 3, 1}};
  const auto tags = tag_pairs(items, rs, canonical_group_profiles(2));
  CHECK(tags.at(0) == PairTag::kCommon);
  CHECK(tags.at(1) == PairTag::kControversial);

  const auto s = generate_survey(200, 2, 8, true);
  for (const auto& [id, tag] : tag_pairs(s.items, s.responses, canonical_group_profiles(2))) {
    CHECK(tag == PairTag::kControversial);
  }
}

TEST_CASE("two groups disagree on every controversial item") {
  const auto s = generate_survey(200, 2, 12, true);
  const auto g = canonical_group_profiles(2);
  for (const auto& it : s.items) CHECK(annotate(g[0], it, s.responses) != annotate(g[1], it, s.responses));
}

TEST_CASE("generated dataset satisfies its invariants") {
  const auto ds = generate_dataset(small_config(), 17);
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.num_seen_users() == 20);
  CHECK(ds.users.size() == 26);
  CHECK(ds.annotations.size() == 20 * 8);
  CHECK(ds.context_annotations.size() == 6 * 8);
  CHECK(ds.test_annotations.size() == 20 * 10 + 6 * 10);
  std::set<std::pair<int, int>> train;
  for (const auto& a : ds.annotations) {
    CHECK(ds.users[static_cast<std::size_t>(a.user_id)].seen);
    train.insert({a.user_id, a.item_id});
  }
  for (const auto& a : ds.context_annotations) train.insert({a.user_id, a.item_id});
  for (const auto& a : ds.test_annotations) CHECK(train.count({a.user_id, a.item_id}) == 0);
  for (const auto& a : ds.annotations) {
    CHECK(annotate(ds.users[static_cast<std::size_t>(a.user_id)], ds.survey[static_cast<std::size_t>(a.item_id)],
                   ds.responses) == a.preferred);
  }
  int unseen_g0 = 0;
  for (const auto& u : ds.users) unseen_g0 += (!u.seen && u.group_id == 0) ? 1 : 0;
  CHECK(unseen_g0 == 3);
}

TEST_CASE("validate catches broken datasets") {
  auto ds = generate_dataset(small_config(), 2);
  auto dup = ds;
  dup.annotations.push_back(dup.annotations.front());
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  auto overlap = ds;
  overlap.test_annotations.push_back(overlap.annotations.front());
  CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);
  auto dangling = ds;
  dangling.annotations.front().item_id = 100000;
  CHECK_THROWS_AS(dangling.validate(), std::invalid_argument);
}

TEST_CASE("dataset serialization is byte-stable and round-trips") {
  const auto a = generate_dataset(small_config(), 21);
  const auto b = generate_dataset(small_config(), 21);
  const auto ja = dump_json(to_json(a));
  CHECK(ja == dump_json(to_json(b)));
  const auto back = dataset_from_json(Json::parse(ja));
  CHECK(dump_json(to_json(back)) == ja);
  const auto j = to_json(a);
  for (const char* key : {"survey", "responses", "users", "annotations", "test_annotations", "meta"}) {
    CHECK(j.contains(key));
  }
  CHECK(dump_json(to_json(generate_dataset(small_config(), 22))) != ja);
}

TEST_CASE("data config round-trips through JSON") {
  DataConfig c = small_config();
  c.profiles = DirichletProfiles{0.3};
  c.regime = {RegimeKind::kAvg, 5};
  c.noise = 0.1;
  const auto back = data_config_from_json(to_json(c));
  CHECK(dump_json(to_json(back)) == dump_json(to_json(c)));
}

TEST_CASE("stage seeds are independent of each other") {
  CHECK(stage_seed(1, "a") != stage_seed(1, "b"));
  CHECK(stage_seed(1, "a") == stage_seed(1, "a"));
  CHECK(stage_seed(1, "a") != stage_seed(2, "a"));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
}
