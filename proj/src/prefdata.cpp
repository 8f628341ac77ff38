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

#include "copl/prefdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include <fmt/format.h>

namespace copl {
namespace {

constexpr int kMaxRejectionAttempts = 1000;

double weighted_score(std::span<const double> weights, std::span<const double> attrs) {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * attrs[i];
  return s;
}

// Draws `count` distinct indices from [0, n) by partial Fisher-Yates.
std::vector<int> sample_without_replacement(int n, int count, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

int draw_count(const AnnotationRegime& regime, Rng& rng) {
  if (regime.kind == RegimeKind::kAll) return regime.n;
  std::uniform_int_distribution<int> d(1, 2 * regime.n - 1);
  return d(rng);
}

std::optional<int> one_hot_index(std::span<const double> w) {
  std::optional<int> idx;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    if (w[i] != 1.0 || idx) return std::nullopt;
    idx = static_cast<int>(i);
  }
  return idx;
}

const char* choice_name(Choice c) { return c == Choice::kA ? "A" : "B"; }

Choice choice_from_name(const std::string& s) {
  if (s == "A") return Choice::kA;
  if (s == "B") return Choice::kB;
  throw std::invalid_argument("preferred must be \"A\" or \"B\", got " + s);
}

Json annotations_to_json(const std::vector<Annotation>& as) {
  Json arr = Json::array();
  for (const auto& a : as) {
    arr.push_back(Json{{"user_id", a.user_id}, {"item_id", a.item_id},
                       {"preferred", choice_name(a.preferred)}});
  }
  return arr;
}

std::vector<Annotation> annotations_from_json(const Json& arr) {
  std::vector<Annotation> out;
  out.reserve(arr.size());
  for (const auto& a : arr) {
    out.push_back({a.at("user_id").get<int>(), a.at("item_id").get<int>(),
                   choice_from_name(a.at("preferred").get<std::string>())});
  }
  return out;
}

// Per-user sampling shared by the public sampler and the dataset builder:
// `train` items are labelled into `train_out`, the next `test` into
// `test_out`, all drawn without replacement from one stream.
void annotate_user(const UserProfile& user, std::span<const SurveyItem> survey,
                   std::span<const ResponseFeatures> responses, int train, int test,
                   double noise, Rng& rng, std::vector<Annotation>& train_out,
                   std::vector<Annotation>* test_out) {
  const auto picks = sample_without_replacement(static_cast<int>(survey.size()), train + test, rng);
  for (int i = 0; i < train + test; ++i) {
    const auto& item = survey[static_cast<std::size_t>(picks[static_cast<std::size_t>(i)])];
    Annotation a{user.user_id, item.item_id, annotate(user, item, responses, noise, rng)};
    if (i < train) {
      train_out.push_back(a);
    } else {
      test_out->push_back(a);
    }
  }
}

}  // namespace

int PreferenceDataset::num_seen_users() const {
  return static_cast<int>(std::count_if(users.begin(), users.end(),
                                        [](const UserProfile& u) { return u.seen; }));
}

int PreferenceDataset::num_dims() const {
  return responses.empty() ? 0 : static_cast<int>(responses.front().attributes.size());
}

bool PreferenceDataset::has_groups() const {
  return !users.empty() && std::all_of(users.begin(), users.end(),
                                       [](const UserProfile& u) { return u.group_id.has_value(); });
}

int PreferenceDataset::num_groups() const {
  if (!has_groups()) return 0;
  int g = 0;
  for (const auto& u : users) g = std::max(g, *u.group_id + 1);
  return g;
}

PreferencePair PreferenceDataset::resolve(const Annotation& a) const {
  const auto& item = survey.at(static_cast<std::size_t>(a.item_id));
  if (a.preferred == Choice::kA) return {a.user_id, item.response_a, item.response_b};
  return {a.user_id, item.response_b, item.response_a};
}

std::vector<PreferencePair> PreferenceDataset::resolve(std::span<const Annotation> as) const {
  std::vector<PreferencePair> out;
  out.reserve(as.size());
  for (const auto& a : as) out.push_back(resolve(a));
  return out;
}

void PreferenceDataset::validate() const {
  const int num_responses = static_cast<int>(responses.size());
  const int dims = num_dims();
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (responses[i].response_id != static_cast<int>(i)) {
      throw std::invalid_argument(fmt::format("response {} stored at index {}", responses[i].response_id, i));
    }
    if (static_cast<int>(responses[i].attributes.size()) != dims || dims < 1) {
      throw std::invalid_argument(fmt::format("response {} has inconsistent attribute count", i));
    }
    for (double x : responses[i].attributes) {
      if (!std::isfinite(x)) throw std::invalid_argument(fmt::format("response {} has a non-finite attribute", i));
    }
  }
  for (std::size_t i = 0; i < survey.size(); ++i) {
    const auto& it = survey[i];
    if (it.item_id != static_cast<int>(i)) {
      throw std::invalid_argument(fmt::format("survey item {} stored at index {}", it.item_id, i));
    }
    if (it.response_a == it.response_b) {
      throw std::invalid_argument(fmt::format("survey item {} compares a response with itself", i));
    }
    for (int r : {it.response_a, it.response_b}) {
      if (r < 0 || r >= num_responses) {
        throw std::invalid_argument(fmt::format("survey item {} references missing response {}", i, r));
      }
    }
  }
  const int num_seen = num_seen_users();
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& u = users[i];
    if (u.user_id != static_cast<int>(i)) {
      throw std::invalid_argument(fmt::format("user {} stored at index {}", u.user_id, i));
    }
    if (u.seen != (u.user_id < num_seen)) {
      throw std::invalid_argument("seen users must precede unseen users");
    }
    if (static_cast<int>(u.weights.size()) != dims) {
      throw std::invalid_argument(fmt::format("user {} weight count differs from attribute count", i));
    }
    const double sum = std::accumulate(u.weights.begin(), u.weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument(fmt::format("user {} weights sum to {}", i, sum));
    }
  }
  auto check = [&](const std::vector<Annotation>& as, bool want_seen, const char* what,
                   std::set<std::pair<int, int>>& keys) {
    for (const auto& a : as) {
      if (a.user_id < 0 || a.user_id >= static_cast<int>(users.size())) {
        throw std::invalid_argument(fmt::format("{} references missing user {}", what, a.user_id));
      }
      if (a.item_id < 0 || a.item_id >= static_cast<int>(survey.size())) {
        throw std::invalid_argument(fmt::format("{} references missing item {}", what, a.item_id));
      }
      if (users[static_cast<std::size_t>(a.user_id)].seen != want_seen) {
        throw std::invalid_argument(fmt::format("{} for user {} has the wrong seen/unseen role", what, a.user_id));
      }
      if (!keys.insert({a.user_id, a.item_id}).second) {
        throw std::invalid_argument(
            fmt::format("duplicate annotation for user {} item {}", a.user_id, a.item_id));
      }
    }
  };
  std::set<std::pair<int, int>> keys;
  check(annotations, true, "annotation", keys);
  check(context_annotations, false, "context annotation", keys);
  for (const auto& a : test_annotations) {
    if (a.user_id < 0 || a.user_id >= static_cast<int>(users.size()) || a.item_id < 0 ||
        a.item_id >= static_cast<int>(survey.size())) {
      throw std::invalid_argument("test annotation has a dangling reference");
    }
    if (!keys.insert({a.user_id, a.item_id}).second) {
      throw std::invalid_argument(
          fmt::format("test pair (user {}, item {}) overlaps training data", a.user_id, a.item_id));
    }
  }
}

bool is_controversial(std::span<const double> a, std::span<const double> b) {
  bool a_wins = false;
  bool b_wins = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) a_wins = true;
    if (a[i] < b[i]) b_wins = true;
  }
  return a_wins && b_wins;
}

Survey generate_survey(int num_items, int num_dims, std::uint64_t seed, bool controversial_only) {
  if (num_items < 1) throw std::invalid_argument("survey needs at least one item");
  if (num_dims < 1) throw std::invalid_argument("responses need at least one attribute");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Survey s;
  s.items.reserve(static_cast<std::size_t>(num_items));
  s.responses.reserve(static_cast<std::size_t>(2 * num_items));
  std::vector<double> a(static_cast<std::size_t>(num_dims));
  std::vector<double> b(static_cast<std::size_t>(num_dims));
  for (int i = 0; i < num_items; ++i) {
    int attempts = 0;
    while (true) {
      for (auto& x : a) x = normal(rng);
      for (auto& x : b) x = normal(rng);
      if (!controversial_only || is_controversial(a, b)) break;
      if (++attempts >= kMaxRejectionAttempts) {
        throw std::runtime_error(fmt::format(
            "no controversial pair found after {} attempts (num_dims = {})", attempts, num_dims));
      }
    }
    const int ra = 2 * i;
    const int rb = 2 * i + 1;
    s.responses.push_back({ra, a});
    s.responses.push_back({rb, b});
    s.items.push_back({i, ra, rb, i});
  }
  return s;
}

std::vector<int> apportion(int total, std::span<const double> ratios) {
  if (ratios.empty()) throw std::invalid_argument("need at least one ratio");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("ratios must be positive");
    sum += r;
  }
  std::vector<int> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t g = 0; g < ratios.size(); ++g) {
    const double quota = total * ratios[g] / sum;
    counts[g] = static_cast<int>(std::floor(quota));
    assigned += counts[g];
    remainders.push_back({quota - counts[g], g});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (int k = 0; k < total - assigned; ++k) ++counts[remainders[static_cast<std::size_t>(k)].second];
  return counts;
}

std::vector<UserProfile> generate_users(int num_users, const ProfileSpec& spec, int num_dims,
                                        std::uint64_t seed) {
  if (num_users < 0) throw std::invalid_argument("user count must be non-negative");
  if (num_dims < 1) throw std::invalid_argument("profiles need at least one dimension");
  std::vector<UserProfile> users;
  users.reserve(static_cast<std::size_t>(num_users));
  if (const auto* groups = std::get_if<GroupProfiles>(&spec)) {
    if (static_cast<int>(groups->ratios.size()) != num_dims) {
      throw std::invalid_argument(fmt::format("{} groups requested but responses have {} attributes",
                                              groups->ratios.size(), num_dims));
    }
    const auto counts = apportion(num_users, groups->ratios);
    for (std::size_t g = 0; g < counts.size(); ++g) {
      for (int k = 0; k < counts[g]; ++k) {
        UserProfile u;
        u.user_id = static_cast<int>(users.size());
        u.weights.assign(static_cast<std::size_t>(num_dims), 0.0);
        u.weights[g] = 1.0;
        u.group_id = static_cast<int>(g);
        users.push_back(std::move(u));
      }
    }
    return users;
  }
  const double alpha = std::get<DirichletProfiles>(spec).alpha;
  if (!(alpha > 0.0)) throw std::invalid_argument("Dirichlet alpha must be positive");
  Rng rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (int i = 0; i < num_users; ++i) {
    UserProfile u;
    u.user_id = i;
    u.weights.resize(static_cast<std::size_t>(num_dims));
    double sum = 0.0;
    while (!(sum > 0.0)) {
      sum = 0.0;
      for (auto& w : u.weights) {
        w = gamma(rng);
        sum += w;
      }
    }
    for (auto& w : u.weights) w /= sum;
    u.group_id = one_hot_index(u.weights);
    users.push_back(std::move(u));
  }
  return users;
}

Choice annotate(const UserProfile& profile, const SurveyItem& item,
                std::span<const ResponseFeatures> responses, double noise, Rng& rng) {
  if (!(noise >= 0.0 && noise < 0.5)) throw std::invalid_argument("noise must lie in [0, 0.5)");
  const auto& a = responses[static_cast<std::size_t>(item.response_a)].attributes;
  const auto& b = responses[static_cast<std::size_t>(item.response_b)].attributes;
  Choice c = weighted_score(profile.weights, a) >= weighted_score(profile.weights, b) ? Choice::kA : Choice::kB;
  if (noise > 0.0) {
    std::bernoulli_distribution flip(noise);
    if (flip(rng)) c = (c == Choice::kA) ? Choice::kB : Choice::kA;
  }
  return c;
}

Choice annotate(const UserProfile& profile, const SurveyItem& item,
                std::span<const ResponseFeatures> responses) {
  Rng unused(0);
  return annotate(profile, item, responses, 0.0, unused);
}

std::vector<Annotation> sample_annotations(std::span<const UserProfile> users,
                                           std::span<const SurveyItem> survey,
                                           std::span<const ResponseFeatures> responses,
                                           const AnnotationRegime& regime, double noise,
                                           std::uint64_t seed) {
  if (regime.n < 1) throw std::invalid_argument("annotation regime needs n >= 1");
  if (static_cast<int>(survey.size()) < regime.max_count()) {
    throw std::invalid_argument(fmt::format("survey has {} items but the regime needs up to {}",
                                            survey.size(), regime.max_count()));
  }
  std::vector<Annotation> out;
  for (const auto& u : users) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(u.user_id)));
    const int count = draw_count(regime, rng);
    annotate_user(u, survey, responses, count, 0, noise, rng, out, nullptr);
  }
  return out;
}

std::vector<UserProfile> canonical_group_profiles(int num_dims) {
  std::vector<UserProfile> out;
  for (int g = 0; g < num_dims; ++g) {
    UserProfile p;
    p.user_id = g;
    p.weights.assign(static_cast<std::size_t>(num_dims), 0.0);
    p.weights[static_cast<std::size_t>(g)] = 1.0;
    p.group_id = g;
    out.push_back(std::move(p));
  }
  return out;
}

std::map<int, PairTag> tag_pairs(std::span<const SurveyItem> survey,
                                 std::span<const ResponseFeatures> responses,
                                 std::span<const UserProfile> group_profiles) {
  if (group_profiles.size() < 2) throw std::invalid_argument("tagging needs at least two group profiles");
  std::map<int, PairTag> tags;
  for (const auto& item : survey) {
    const Choice first = annotate(group_profiles.front(), item, responses);
    bool agree = true;
    for (const auto& p : group_profiles.subspan(1)) {
      if (annotate(p, item, responses) != first) {
        agree = false;
        break;
      }
    }
    tags[item.item_id] = agree ? PairTag::kCommon : PairTag::kControversial;
  }
  return tags;
}

PreferenceDataset generate_dataset(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.regime.n < 1) throw std::invalid_argument("annotation regime needs n >= 1");
  if (cfg.num_seen_users < 1) throw std::invalid_argument("need at least one seen user");
  if (cfg.num_unseen_users < 0) throw std::invalid_argument("unseen user count must be non-negative");
  const int seen_need = cfg.regime.max_count() + cfg.seen_test_pairs;
  const int unseen_need = cfg.num_unseen_users > 0 ? cfg.unseen_context_pairs + cfg.unseen_test_pairs : 0;
  if (cfg.num_items < std::max(seen_need, unseen_need)) {
    throw std::invalid_argument(fmt::format("survey of {} items cannot supply {} distinct pairs per user",
                                            cfg.num_items, std::max(seen_need, unseen_need)));
  }
  if (cfg.num_unseen_users > 0 && cfg.unseen_context_pairs < 1) {
    throw std::invalid_argument("unseen users need at least one context annotation");
  }

  PreferenceDataset ds;
  auto survey = generate_survey(cfg.num_items, cfg.num_dims, stage_seed(seed, "survey"), cfg.controversial_only);
  ds.survey = std::move(survey.items);
  ds.responses = std::move(survey.responses);

  ds.users = generate_users(cfg.num_seen_users, cfg.profiles, cfg.num_dims, stage_seed(seed, "seen_users"));
  ProfileSpec unseen_spec = cfg.profiles;
  if (auto* groups = std::get_if<GroupProfiles>(&unseen_spec)) {
    groups->ratios.assign(groups->ratios.size(), 1.0);
  }
  auto unseen = generate_users(cfg.num_unseen_users, unseen_spec, cfg.num_dims, stage_seed(seed, "unseen_users"));
  for (auto& u : unseen) {
    u.user_id += cfg.num_seen_users;
    u.seen = false;
    ds.users.push_back(std::move(u));
  }

  const auto annotation_seed = stage_seed(seed, "annotations");
  for (const auto& u : ds.users) {
    Rng rng(substream_seed(annotation_seed, static_cast<std::uint64_t>(u.user_id)));
    if (u.seen) {
      const int count = draw_count(cfg.regime, rng);
      annotate_user(u, ds.survey, ds.responses, count, cfg.seen_test_pairs, cfg.noise, rng, ds.annotations,
                    &ds.test_annotations);
    } else {
      annotate_user(u, ds.survey, ds.responses, cfg.unseen_context_pairs, cfg.unseen_test_pairs, cfg.noise,
                    rng, ds.context_annotations, &ds.test_annotations);
    }
  }
  ds.meta = Json{{"version", 1}, {"seed", seed}, {"config", to_json(cfg)}};
  ds.validate();
  return ds;
}

Json to_json(const PreferenceDataset& ds) {
  Json survey = Json::array();
  for (const auto& it : ds.survey) {
    survey.push_back(Json{{"item_id", it.item_id}, {"response_a", it.response_a},
                          {"response_b", it.response_b}, {"question_id", it.question_id}});
  }
  Json responses = Json::array();
  for (const auto& r : ds.responses) {
    responses.push_back(Json{{"response_id", r.response_id}, {"attributes", r.attributes}});
  }
  Json users = Json::array();
  for (const auto& u : ds.users) {
    Json ju{{"user_id", u.user_id}, {"weights", u.weights}};
    ju["group_id"] = u.group_id ? Json(*u.group_id) : Json(nullptr);
    ju["seen"] = u.seen;
    users.push_back(std::move(ju));
  }
  return Json{{"survey", std::move(survey)},
              {"responses", std::move(responses)},
              {"users", std::move(users)},
              {"annotations", annotations_to_json(ds.annotations)},
              {"context_annotations", annotations_to_json(ds.context_annotations)},
              {"test_annotations", annotations_to_json(ds.test_annotations)},
              {"meta", ds.meta}};
}

PreferenceDataset dataset_from_json(const Json& j) {
  PreferenceDataset ds;
  for (const auto& it : j.at("survey")) {
    ds.survey.push_back({it.at("item_id").get<int>(), it.at("response_a").get<int>(),
                         it.at("response_b").get<int>(), it.value("question_id", 0)});
  }
  for (const auto& r : j.at("responses")) {
    ds.responses.push_back({r.at("response_id").get<int>(), r.at("attributes").get<std::vector<double>>()});
  }
  for (const auto& u : j.at("users")) {
    UserProfile p;
    p.user_id = u.at("user_id").get<int>();
    p.weights = u.at("weights").get<std::vector<double>>();
    if (u.contains("group_id") && !u.at("group_id").is_null()) p.group_id = u.at("group_id").get<int>();
    p.seen = u.value("seen", true);
    ds.users.push_back(std::move(p));
  }
  ds.annotations = annotations_from_json(j.at("annotations"));
  if (j.contains("context_annotations")) ds.context_annotations = annotations_from_json(j.at("context_annotations"));
  ds.test_annotations = annotations_from_json(j.at("test_annotations"));
  ds.meta = j.value("meta", Json::object());
  ds.validate();
  return ds;
}

Json to_json(const DataConfig& cfg) {
  Json profiles;
  if (const auto* g = std::get_if<GroupProfiles>(&cfg.profiles)) {
    profiles = Json{{"kind", "groups"}, {"ratios", g->ratios}};
  } else {
    profiles = Json{{"kind", "dirichlet"}, {"alpha", std::get<DirichletProfiles>(cfg.profiles).alpha}};
  }
  return Json{{"num_items", cfg.num_items},
              {"num_dims", cfg.num_dims},
              {"controversial_only", cfg.controversial_only},
              {"num_seen_users", cfg.num_seen_users},
              {"profiles", std::move(profiles)},
              {"regime", Json{{"kind", cfg.regime.kind == RegimeKind::kAll ? "ALL" : "AVG"}, {"n", cfg.regime.n}}},
              {"noise", cfg.noise},
              {"seen_test_pairs", cfg.seen_test_pairs},
              {"num_unseen_users", cfg.num_unseen_users},
              {"unseen_context_pairs", cfg.unseen_context_pairs},
              {"unseen_test_pairs", cfg.unseen_test_pairs}};
}

DataConfig data_config_from_json(const Json& j) {
  DataConfig cfg;
  cfg.num_items = j.value("num_items", cfg.num_items);
  cfg.num_dims = j.value("num_dims", cfg.num_dims);
  cfg.controversial_only = j.value("controversial_only", cfg.controversial_only);
  cfg.num_seen_users = j.value("num_seen_users", cfg.num_seen_users);
  if (j.contains("profiles")) {
    const auto& p = j.at("profiles");
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "groups") {
      cfg.profiles = GroupProfiles{p.at("ratios").get<std::vector<double>>()};
    } else if (kind == "dirichlet") {
      cfg.profiles = DirichletProfiles{p.at("alpha").get<double>()};
    } else {
      throw std::invalid_argument("profiles.kind must be \"groups\" or \"dirichlet\"");
    }
  } else {
    cfg.profiles = GroupProfiles{std::vector<double>(static_cast<std::size_t>(cfg.num_dims), 1.0)};
  }
  if (j.contains("regime")) {
    const auto& r = j.at("regime");
    const auto kind = r.at("kind").get<std::string>();
    if (kind == "ALL") {
      cfg.regime.kind = RegimeKind::kAll;
    } else if (kind == "AVG") {
      cfg.regime.kind = RegimeKind::kAvg;
    } else {
      throw std::invalid_argument("regime.kind must be \"ALL\" or \"AVG\"");
    }
    cfg.regime.n = r.at("n").get<int>();
  }
  cfg.noise = j.value("noise", cfg.noise);
  cfg.seen_test_pairs = j.value("seen_test_pairs", cfg.seen_test_pairs);
  cfg.num_unseen_users = j.value("num_unseen_users", cfg.num_unseen_users);
  cfg.unseen_context_pairs = j.value("unseen_context_pairs", cfg.unseen_context_pairs);
  cfg.unseen_test_pairs = j.value("unseen_test_pairs", cfg.unseen_test_pairs);
  return cfg;
}

}  // namespace copl
