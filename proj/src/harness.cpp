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

#include "copl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "copl/adapt.hpp"
#include "copl/seeds.hpp"

namespace copl {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

bool is_seen(const PreferenceDataset& ds, int user) { return ds.users[static_cast<std::size_t>(user)].seen; }

std::vector<Route> routes_for(const MoleRewardModel& m, const VectorXd& e_u) {
  std::vector<Route> r;
  if (!m.user_conditioned()) return r;
  for (const auto& layer : m.layers) r.push_back(route(layer, e_u));
  return r;
}

Choice predict_reward(const MoleRewardModel& m, std::span<const Route> routes, const MatrixXd& features,
                      const SurveyItem& item) {
  const double fa = reward_with_routes(m, routes, features.row(item.response_a).transpose());
  const double fb = reward_with_routes(m, routes, features.row(item.response_b).transpose());
  return fa >= fb ? Choice::kA : Choice::kB;
}

// Scores `model` on the given test annotations; `embedding_of(user)` gives
// the user's embedding. Returns per-annotation correctness.
template <typename EmbeddingOf>
std::vector<char> score_annotations(const PreferenceDataset& ds, std::span<const Annotation> tests,
                                    const MoleRewardModel& model, const MatrixXd& features,
                                    EmbeddingOf embedding_of) {
  std::vector<char> correct;
  correct.reserve(tests.size());
  int cached_user = -1;
  std::vector<Route> routes;
  for (const auto& a : tests) {
    if (a.user_id != cached_user) {
      routes = model.user_conditioned() ? routes_for(model, embedding_of(a.user_id)) : std::vector<Route>{};
      cached_user = a.user_id;
    }
    const auto& item = ds.survey[static_cast<std::size_t>(a.item_id)];
    correct.push_back(predict_reward(model, routes, features, item) == a.preferred ? 1 : 0);
  }
  return correct;
}

Accuracy tally(std::span<const char> correct) {
  Accuracy acc;
  for (char c : correct) acc.add(c != 0);
  return acc;
}

std::vector<std::optional<int>> groups_of(const PreferenceDataset& ds, std::span<const int> ids) {
  std::vector<std::optional<int>> g;
  for (int u : ids) g.push_back(ds.users[static_cast<std::size_t>(u)].group_id);
  return g;
}

std::vector<int> seen_ids(const PreferenceDataset& ds) {
  std::vector<int> ids(static_cast<std::size_t>(ds.num_seen_users()));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return ids;
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    spdlog::debug("stage {}", name);
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Json models_json(const std::vector<MoleRewardModel>& ms) {
  Json arr = Json::array();
  for (const auto& m : ms) arr.push_back(reward_model_to_json(m));
  return arr;
}

}  // namespace

Json to_json(const MetricsReport& r) {
  Json groups = Json::object();
  for (const auto& [g, acc] : r.groupwise_accuracy) groups[std::to_string(g)] = acc;
  Json purity = Json::array();
  for (const auto& p : r.expert_allocation_purity) purity.push_back(optional_json(p));
  Json base = Json::object();
  for (const auto& [k, v] : r.baselines) base[k] = v;
  return Json{{"seen_accuracy", optional_json(r.seen_accuracy)},
              {"unseen_accuracy", optional_json(r.unseen_accuracy)},
              {"common_accuracy", optional_json(r.common_accuracy)},
              {"controversial_accuracy", optional_json(r.controversial_accuracy)},
              {"groupwise_accuracy", std::move(groups)},
              {"gnn_test_accuracy", optional_json(r.gnn_test_accuracy)},
              {"gnn_unseen_accuracy", optional_json(r.gnn_unseen_accuracy)},
              {"expert_allocation_purity", std::move(purity)},
              {"baselines", std::move(base)}};
}

Json to_json(const UnseenEmbeddings& u) {
  return Json{{"user_ids", u.user_ids},
              {"neighborhood_sizes", u.neighborhood_sizes},
              {"weighted", matrix_to_json(u.weighted)},
              {"naive", matrix_to_json(u.naive)},
              {"user_opt", matrix_to_json(u.user_opt)},
              {"random", matrix_to_json(u.random)}};
}

UnseenEmbeddings unseen_embeddings_from_json(const Json& j) {
  UnseenEmbeddings u;
  u.user_ids = j.at("user_ids").get<std::vector<int>>();
  u.neighborhood_sizes = j.at("neighborhood_sizes").get<std::vector<int>>();
  u.weighted = matrix_from_json(j.at("weighted"));
  u.naive = matrix_from_json(j.at("naive"));
  u.user_opt = matrix_from_json(j.at("user_opt"));
  u.random = matrix_from_json(j.at("random"));
  return u;
}

PreferenceDataset run_generate(const ExperimentConfig& cfg) {
  return generate_dataset(cfg.data, stage_seed(cfg.seed, "data"));
}

GcfTrainResult run_train_gcf(const ExperimentConfig& cfg, const PreferenceDataset& ds,
                             const SignedBipartiteGraph& graph) {
  const auto pairs = ds.resolve(ds.annotations);
  return train_gcf(graph, pairs, cfg.gcf);
}

MoleRewardModel uniform_baseline(const PreferenceDataset& ds, const ExperimentConfig& cfg) {
  auto model = init_reward_model(ds.num_dims(), cfg.gcf.dim, cfg.mole, false, stage_seed(cfg.seed, "uniform_init"));
  const auto pairs = ds.resolve(ds.annotations);
  RewardTrainConfig rc = cfg.reward;
  rc.seed = stage_seed(cfg.seed, "uniform_train");
  train_reward(model, MatrixXd(), pairs, response_feature_matrix(ds), rc);
  return model;
}

std::vector<MoleRewardModel> group_oracle_baseline(const PreferenceDataset& ds, const ExperimentConfig& cfg) {
  if (!ds.has_groups()) throw std::invalid_argument("group oracle needs group labels on every user");
  const auto features = response_feature_matrix(ds);
  RewardTrainConfig rc = cfg.reward;
  rc.seed = stage_seed(cfg.seed, "uniform_train");
  std::vector<MoleRewardModel> out;
  for (int g = 0; g < ds.num_groups(); ++g) {
    std::vector<PreferencePair> pairs;
    for (const auto& a : ds.annotations) {
      if (ds.users[static_cast<std::size_t>(a.user_id)].group_id == g) pairs.push_back(ds.resolve(a));
    }
    auto model = init_reward_model(ds.num_dims(), cfg.gcf.dim, cfg.mole, false, stage_seed(cfg.seed, "uniform_init"));
    if (!pairs.empty()) train_reward(model, MatrixXd(), pairs, features, rc);
    out.push_back(std::move(model));
  }
  return out;
}

RewardModels run_train_reward(const ExperimentConfig& cfg, const PreferenceDataset& ds, const EmbeddingTable& emb) {
  RewardModels m;
  m.copl = init_reward_model(ds.num_dims(), static_cast<int>(emb.users.cols()), cfg.mole, true,
                             stage_seed(cfg.seed, "reward_init"));
  m.copl_trace = train_reward(m.copl, emb, ds, cfg.reward).loss_trace;
  if (cfg.metrics.uniform) m.uniform = uniform_baseline(ds, cfg);
  if (cfg.metrics.group_oracle && ds.has_groups()) m.group_oracle = group_oracle_baseline(ds, cfg);
  return m;
}

UnseenUser unseen_user(const PreferenceDataset& ds, int user_id) {
  UnseenUser u;
  for (const auto& a : ds.context_annotations) {
    if (a.user_id != user_id) continue;
    const auto p = ds.resolve(a);
    u.pairs.push_back({p.preferred, p.rejected});
  }
  return u;
}

UnseenEmbeddings run_adapt(const ExperimentConfig& cfg, const PreferenceDataset& ds, const SignedBipartiteGraph& graph,
                           const EmbeddingTable& emb) {
  UnseenEmbeddings out;
  for (const auto& u : ds.users) {
    if (!u.seen) out.user_ids.push_back(u.user_id);
  }
  const auto n = static_cast<Eigen::Index>(out.user_ids.size());
  const auto d = emb.users.cols();
  out.weighted = MatrixXd::Zero(n, d);
  out.naive = MatrixXd::Zero(n, d);
  out.user_opt = MatrixXd::Zero(n, d);
  out.random = MatrixXd::Zero(n, d);

  const VectorXd mean = emb.users.colwise().mean().transpose();
  const VectorXd stdev =
      ((emb.users.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  Rng rng(stage_seed(cfg.seed, "random_embedding"));
  std::normal_distribution<double> normal(0.0, 1.0);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto unseen = unseen_user(ds, out.user_ids[static_cast<std::size_t>(i)]);
    out.neighborhood_sizes.push_back(static_cast<int>(khop_positive_users(graph, unseen, cfg.adapt.k).size()));
    out.weighted.row(i) = adapt_embedding(graph, emb, unseen, cfg.adapt).transpose();
    if (cfg.metrics.naive_average) {
      out.naive.row(i) = naive_average(graph, emb, unseen, cfg.adapt.k, cfg.adapt.fallback).transpose();
    }
    if (cfg.metrics.user_opt) {
      out.user_opt.row(i) = user_opt(emb, unseen, cfg.user_opt.steps, cfg.user_opt.lr).embedding.transpose();
    }
    for (Eigen::Index k = 0; k < d; ++k) out.random(i, k) = mean(k) + stdev(k) * normal(rng);
  }
  return out;
}

double eval_gnn_testacc(const EmbeddingTable& emb, std::span<const PreferencePair> test_pairs) {
  Accuracy acc;
  for (const auto& p : test_pairs) acc.add(predict_pair(emb, p.user, p.preferred, p.rejected) == Choice::kA);
  return acc.fraction().value_or(0.0);
}

PairTypeAccuracy breakdown_common_controversial(std::span<const Annotation> test_annotations,
                                                std::span<const char> correct,
                                                const std::map<int, PairTag>& tags) {
  Accuracy common;
  Accuracy controversial;
  for (std::size_t i = 0; i < test_annotations.size(); ++i) {
    const auto it = tags.find(test_annotations[i].item_id);
    if (it == tags.end()) continue;
    (it->second == PairTag::kCommon ? common : controversial).add(correct[i] != 0);
  }
  return {common.fraction(), controversial.fraction()};
}

MetricsReport evaluate(const ExperimentConfig& cfg, const PreferenceDataset& ds, const SignedBipartiteGraph& graph,
                       const EmbeddingTable& emb, const RewardModels& models, const UnseenEmbeddings* unseen) {
  (void)graph;
  MetricsReport r;
  const auto features = response_feature_matrix(ds);
  std::vector<Annotation> seen_tests;
  std::vector<Annotation> unseen_tests;
  for (const auto& a : ds.test_annotations) (is_seen(ds, a.user_id) ? seen_tests : unseen_tests).push_back(a);

  auto seen_embedding = [&](int u) { return VectorXd(emb.users.row(u).transpose()); };
  const auto copl_seen = score_annotations(ds, seen_tests, models.copl, features, seen_embedding);
  r.seen_accuracy = tally(copl_seen).fraction();

  r.gnn_test_accuracy = eval_gnn_testacc(emb, ds.resolve(seen_tests));
  if (seen_tests.empty()) r.gnn_test_accuracy.reset();

  std::optional<std::map<int, PairTag>> tags;
  if (ds.has_groups() && ds.num_dims() >= 2) {
    tags = tag_pairs(ds.survey, ds.responses, canonical_group_profiles(ds.num_dims()));
    const auto b = breakdown_common_controversial(seen_tests, copl_seen, *tags);
    r.common_accuracy = b.common;
    r.controversial_accuracy = b.controversial;
  }
  if (ds.has_groups()) {
    std::map<int, Accuracy> per_group;
    for (std::size_t i = 0; i < seen_tests.size(); ++i) {
      per_group[*ds.users[static_cast<std::size_t>(seen_tests[i].user_id)].group_id].add(copl_seen[i] != 0);
    }
    for (const auto& [g, acc] : per_group) r.groupwise_accuracy[g] = *acc.fraction();
  }

  const auto ids = seen_ids(ds);
  const auto allocation = expert_allocation(models.copl, emb.users, ids);
  const auto groups = groups_of(ds, ids);
  for (const auto& layer : allocation) r.expert_allocation_purity.push_back(allocation_purity(layer, groups));

  auto put = [&](const std::string& key, const std::optional<double>& v) {
    if (v) r.baselines[key] = *v;
  };

  if (models.uniform) {
    const auto u_seen = score_annotations(ds, seen_tests, *models.uniform, features, seen_embedding);
    put("uniform.seen", tally(u_seen).fraction());
    if (tags) {
      const auto b = breakdown_common_controversial(seen_tests, u_seen, *tags);
      put("uniform.common", b.common);
      put("uniform.controversial", b.controversial);
    }
    put("uniform.unseen",
        tally(score_annotations(ds, unseen_tests, *models.uniform, features, seen_embedding)).fraction());
  }
  if (!models.group_oracle.empty()) {
    auto oracle_accuracy = [&](std::span<const Annotation> tests) {
      Accuracy acc;
      for (const auto& a : tests) {
        const auto& m = models.group_oracle.at(static_cast<std::size_t>(*ds.users[static_cast<std::size_t>(a.user_id)].group_id));
        acc.add(predict_reward(m, {}, features, ds.survey[static_cast<std::size_t>(a.item_id)]) == a.preferred);
      }
      return acc.fraction();
    };
    put("group_oracle.seen", oracle_accuracy(seen_tests));
    put("group_oracle.unseen", oracle_accuracy(unseen_tests));
  }

  if (unseen != nullptr && !unseen->user_ids.empty() && !unseen_tests.empty()) {
    std::map<int, Eigen::Index> row_of;
    for (std::size_t i = 0; i < unseen->user_ids.size(); ++i) {
      row_of[unseen->user_ids[i]] = static_cast<Eigen::Index>(i);
    }
    auto from = [&](const MatrixXd& table) {
      return [&table, &row_of](int u) { return VectorXd(table.row(row_of.at(u)).transpose()); };
    };
    r.unseen_accuracy = tally(score_annotations(ds, unseen_tests, models.copl, features, from(unseen->weighted))).fraction();
    if (cfg.metrics.naive_average) {
      put("naive_average.unseen",
          tally(score_annotations(ds, unseen_tests, models.copl, features, from(unseen->naive))).fraction());
    }
    if (cfg.metrics.user_opt) {
      put("user_opt.unseen",
          tally(score_annotations(ds, unseen_tests, models.copl, features, from(unseen->user_opt))).fraction());
    }
    if (cfg.metrics.random_embedding) {
      put("random_embedding.unseen",
          tally(score_annotations(ds, unseen_tests, models.copl, features, from(unseen->random))).fraction());
    }
    Accuracy gnn_unseen;
    for (const auto& a : unseen_tests) {
      const auto p = ds.resolve(a);
      const VectorXd e = unseen->weighted.row(row_of.at(a.user_id)).transpose();
      gnn_unseen.add(e.dot(emb.responses.row(p.preferred)) >= e.dot(emb.responses.row(p.rejected)));
    }
    r.gnn_unseen_accuracy = gnn_unseen.fraction();
  }
  return r;
}

void write_dataset(const std::filesystem::path& dir, const PreferenceDataset& ds) {
  write_json_file(dir / artifacts::kDataset, to_json(ds));
}

void write_gcf(const std::filesystem::path& dir, const ExperimentConfig& cfg, const PreferenceDataset& ds,
               const GcfTrainResult& gcf) {
  Json model = gcf_model_to_json(gcf.params, cfg.gcf);
  model["loss_trace"] = gcf.loss_trace;
  write_json_file(dir / artifacts::kGcfModel, model);
  const auto ids = seen_ids(ds);
  write_text_file(dir / artifacts::kEmbeddingsCsv, embeddings_csv(gcf.embeddings, groups_of(ds, ids), ids));
}

void write_reward(const std::filesystem::path& dir, const RewardModels& models) {
  Json copl = reward_model_to_json(models.copl);
  copl["loss_trace"] = models.copl_trace;
  write_json_file(dir / artifacts::kRewardModel, copl);
  Json baselines = Json::object();
  baselines["uniform"] = models.uniform ? reward_model_to_json(*models.uniform) : Json(nullptr);
  baselines["group_oracle"] = models_json(models.group_oracle);
  write_json_file(dir / artifacts::kBaselines, baselines);
}

void write_allocation(const std::filesystem::path& dir, const PreferenceDataset& ds, const EmbeddingTable& emb,
                      const MoleRewardModel& model) {
  const auto ids = seen_ids(ds);
  write_text_file(dir / artifacts::kAllocationCsv,
                  expert_allocation_csv(expert_allocation(model, emb.users, ids), ids, groups_of(ds, ids)));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;
  cfg.derive_seeds();
  stage("config", [&] { cfg.validate(); });
  const bool save = !out_dir.empty();

  ExperimentResult res;
  res.dataset = stage("generate", [&] {
    auto ds = run_generate(cfg);
    if (save) write_dataset(out_dir, ds);
    return ds;
  });
  const auto graph = stage("graph", [&] { return SignedBipartiteGraph::build(res.dataset); });
  res.gcf = stage("train-gcf", [&] {
    auto g = run_train_gcf(cfg, res.dataset, graph);
    if (save) write_gcf(out_dir, cfg, res.dataset, g);
    return g;
  });
  res.models = stage("train-reward", [&] {
    auto m = run_train_reward(cfg, res.dataset, res.gcf.embeddings);
    if (save) {
      write_reward(out_dir, m);
      write_allocation(out_dir, res.dataset, res.gcf.embeddings, m.copl);
    }
    return m;
  });
  res.unseen = stage("adapt", [&] {
    auto u = run_adapt(cfg, res.dataset, graph, res.gcf.embeddings);
    if (save) write_json_file(out_dir / artifacts::kUnseen, to_json(u));
    return u;
  });
  res.report = stage("eval", [&] {
    auto r = evaluate(cfg, res.dataset, graph, res.gcf.embeddings, res.models, &res.unseen);
    if (save) write_json_file(out_dir / artifacts::kReport, to_json(r));
    return r;
  });
  res.report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::vector<MetricsReport> imbalance_sweep(const ExperimentConfig& cfg,
                                           const std::vector<std::pair<double, double>>& ratios, int jobs,
                                           const std::filesystem::path& out_dir) {
  if (cfg.data.num_dims != 2) throw std::invalid_argument("imbalance sweep needs a two-group configuration");
  jobs = std::max(1, jobs);
  auto one = [&](std::pair<double, double> ratio) {
    ExperimentConfig c = cfg;
    c.data.profiles = GroupProfiles{{ratio.first, ratio.second}};
    std::filesystem::path dir;
    if (!out_dir.empty()) dir = out_dir / fmt::format("ratio_{:g}-{:g}", ratio.first, ratio.second);
    auto report = run_experiment(c, dir).report;
    if (!out_dir.empty()) {
      write_json_file(out_dir / fmt::format("report_ratio_{:g}-{:g}.json", ratio.first, ratio.second),
                      to_json(report));
    }
    return report;
  };
  std::vector<MetricsReport> out;
  for (std::size_t start = 0; start < ratios.size(); start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<MetricsReport>> batch;
    const auto end = std::min(ratios.size(), start + static_cast<std::size_t>(jobs));
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, one, ratios[i]));
    }
    for (auto& f : batch) out.push_back(f.get());
  }
  return out;
}

}  // namespace copl
