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

#ifndef COPL_PREFDATA_HPP_
#define COPL_PREFDATA_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "copl/json_io.hpp"
#include "copl/seeds.hpp"

// Preference-data domain model and synthetic dataset generation.
//
// A survey is a fixed pool of response pairs. Every response carries a
// vector of latent attribute scores, and every user a preference mixture
// over those attributes. A user labels a pair by comparing the weighted
// attribute scores of the two responses.

namespace copl {

enum class Choice { kA, kB };

struct SurveyItem {
  int item_id = 0;
  int response_a = 0;
  int response_b = 0;
  int question_id = 0;
};

struct ResponseFeatures {
  int response_id = 0;
  std::vector<double> attributes;
};

struct UserProfile {
  int user_id = 0;
  std::vector<double> weights;
  std::optional<int> group_id;
  bool seen = true;
};

struct Annotation {
  int user_id = 0;
  int item_id = 0;
  Choice preferred = Choice::kA;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// An annotation resolved to response ids: `user` prefers `preferred` over
// `rejected`.
struct PreferencePair {
  int user = 0;
  int preferred = 0;
  int rejected = 0;
};

struct GroupProfiles {
  std::vector<double> ratios;
};

struct DirichletProfiles {
  double alpha = 0.1;
};

using ProfileSpec = std::variant<GroupProfiles, DirichletProfiles>;

enum class RegimeKind { kAll, kAvg };

// ALL(n): exactly n annotations per user. AVG(n): uniform on [1, 2n-1].
struct AnnotationRegime {
  RegimeKind kind = RegimeKind::kAll;
  int n = 8;

  int max_count() const { return kind == RegimeKind::kAll ? n : 2 * n - 1; }
};

enum class PairTag { kCommon, kControversial };

struct DataConfig {
  int num_items = 500;
  int num_dims = 2;
  bool controversial_only = true;
  int num_seen_users = 200;
  ProfileSpec profiles = GroupProfiles{{1.0, 1.0}};
  AnnotationRegime regime;
  double noise = 0.0;
  int seen_test_pairs = 10;
  int num_unseen_users = 100;
  int unseen_context_pairs = 8;
  int unseen_test_pairs = 50;
};

// Seen users occupy ids [0, num_seen) and unseen users the ids after them.
// `annotations` are the seen users' training labels and the only ones
// that enter the graph. `context_annotations` are what unseen users reveal
// for adaptation. `test_annotations` holds held-out pairs for both.
struct PreferenceDataset {
  std::vector<SurveyItem> survey;
  std::vector<ResponseFeatures> responses;
  std::vector<UserProfile> users;
  std::vector<Annotation> annotations;
  std::vector<Annotation> context_annotations;
  std::vector<Annotation> test_annotations;
  Json meta = Json::object();

  int num_seen_users() const;
  int num_dims() const;
  bool has_groups() const;
  int num_groups() const;

  PreferencePair resolve(const Annotation& a) const;
  std::vector<PreferencePair> resolve(std::span<const Annotation> as) const;

  // Throws std::invalid_argument on dangling references, duplicate
  // (user, item) keys, or train/test overlap.
  void validate() const;
};

struct Survey {
  std::vector<SurveyItem> items;
  std::vector<ResponseFeatures> responses;
};

Survey generate_survey(int num_items, int num_dims, std::uint64_t seed,
                       bool controversial_only);

// True when neither response dominates the other on every dimension.
bool is_controversial(std::span<const double> a, std::span<const double> b);

std::vector<UserProfile> generate_users(int num_users, const ProfileSpec& spec,
                                        int num_dims, std::uint64_t seed);

// Largest-remainder apportionment of `total` by `ratios`.
std::vector<int> apportion(int total, std::span<const double> ratios);

// Label rule: higher weighted attribute score wins, ties go to A; with
// probability `noise` the label is flipped. `rng` is only drawn from when
// noise > 0.
Choice annotate(const UserProfile& profile, const SurveyItem& item,
                std::span<const ResponseFeatures> responses, double noise, Rng& rng);
Choice annotate(const UserProfile& profile, const SurveyItem& item,
                std::span<const ResponseFeatures> responses);

std::vector<Annotation> sample_annotations(std::span<const UserProfile> users,
                                           std::span<const SurveyItem> survey,
                                           std::span<const ResponseFeatures> responses,
                                           const AnnotationRegime& regime, double noise,
                                           std::uint64_t seed);

// One one-hot profile per attribute dimension, i.e. the canonical groups.
std::vector<UserProfile> canonical_group_profiles(int num_dims);

std::map<int, PairTag> tag_pairs(std::span<const SurveyItem> survey,
                                 std::span<const ResponseFeatures> responses,
                                 std::span<const UserProfile> group_profiles);

PreferenceDataset generate_dataset(const DataConfig& cfg, std::uint64_t seed);

Json to_json(const PreferenceDataset& ds);
PreferenceDataset dataset_from_json(const Json& j);

Json to_json(const DataConfig& cfg);
DataConfig data_config_from_json(const Json& j);

}  // namespace copl

#endif  // COPL_PREFDATA_HPP_
