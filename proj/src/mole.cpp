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

#include "copl/mole.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "copl/optim.hpp"
#include "copl/seeds.hpp"

namespace copl {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GateTrace {
  VectorXd hidden_pre;
  VectorXd hidden;
  VectorXd probs;
  int expert = 0;
  double weight = 1.0;
};

struct LayerTrace {
  VectorXd input;
  VectorXd pre;
  VectorXd shared_mid;
  VectorXd expert_mid;
  VectorXd expert_out;
};

VectorXd softmax(const VectorXd& z, double temperature) {
  const VectorXd s = z / temperature;
  const VectorXd e = (s.array() - s.maxCoeff()).exp();
  return e / e.sum();
}

int argmax_lowest(const VectorXd& z) {
  int best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z(i) > z(best)) best = static_cast<int>(i);
  }
  return best;
}

GateTrace run_gate(const MoleLayer& layer, const VectorXd& e_u, int forced) {
  const auto& g = layer.gate;
  if (e_u.size() != g.hidden_w.cols()) {
    throw std::invalid_argument(
        fmt::format("user embedding has {} entries, gate expects {}", e_u.size(), g.hidden_w.cols()));
  }
  GateTrace t;
  t.hidden_pre = g.hidden_w * e_u + g.hidden_b;
  t.hidden = t.hidden_pre.cwiseMax(0.0);
  const VectorXd z = g.out_w * t.hidden + g.out_b;
  t.probs = softmax(z, layer.temperature);
  t.expert = forced >= 0 ? forced : argmax_lowest(z);
  t.weight = t.probs(t.expert);
  return t;
}

std::vector<GateTrace> run_gates(const MoleRewardModel& m, const VectorXd& e_u, std::span<const int> forced) {
  std::vector<GateTrace> out;
  if (!m.user_conditioned()) return out;
  if (!forced.empty() && forced.size() != m.layers.size()) {
    throw std::invalid_argument("forced routing needs one expert per layer");
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    out.push_back(run_gate(m.layers[l], e_u, forced.empty() ? -1 : forced[l]));
  }
  return out;
}

double forward(const MoleRewardModel& m, std::span<const Route> routes, const VectorXd& x,
               std::vector<LayerTrace>* trace) {
  if (x.size() != m.input_dim()) {
    throw std::invalid_argument(fmt::format("response has {} features, model expects {}", x.size(), m.input_dim()));
  }
  VectorXd h = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    LayerTrace t;
    t.shared_mid = layer.shared.down * h;
    VectorXd pre = layer.base_weight * h + layer.base_bias;
    pre.noalias() += layer.shared.up * t.shared_mid;
    if (!routes.empty()) {
      const auto& r = routes[l];
      const auto& e = layer.experts[static_cast<std::size_t>(r.expert)];
      t.expert_mid = e.down * h;
      t.expert_out = e.up * t.expert_mid;
      pre += r.weight * t.expert_out;
    }
    VectorXd next = pre.cwiseMax(0.0);
    if (trace != nullptr) {
      t.input = std::move(h);
      t.pre = std::move(pre);
      trace->push_back(std::move(t));
    }
    h = std::move(next);
  }
  return m.head_w.dot(h) + m.head_b;
}

// Backpropagates d(loss)/d(output) = g_out through one forward trace.
// Accumulates parameter gradients into `grad` and d(loss)/d(route weight)
// per layer into `d_weight`.
void backward(const MoleRewardModel& m, std::span<const Route> routes, const std::vector<LayerTrace>& trace,
              double g_out, MoleRewardModel& grad, std::vector<double>& d_weight) {
  const VectorXd last = trace.empty() ? VectorXd() : VectorXd(trace.back().pre.cwiseMax(0.0));
  grad.head_w += g_out * last;
  grad.head_b += g_out;
  VectorXd gh = g_out * m.head_w;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    auto& gl = grad.layers[li];
    const auto& t = trace[li];
    const VectorXd gpre = gh.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
    gl.shared.up.noalias() += gpre * t.shared_mid.transpose();
    const VectorXd ts = layer.shared.up.transpose() * gpre;
    gl.shared.down.noalias() += ts * t.input.transpose();
    VectorXd next = layer.base_weight.transpose() * gpre;
    next.noalias() += layer.shared.down.transpose() * ts;
    if (!routes.empty()) {
      const auto& r = routes[li];
      const auto k = static_cast<std::size_t>(r.expert);
      const auto& e = layer.experts[k];
      auto& ge = gl.experts[k];
      d_weight[li] += gpre.dot(t.expert_out);
      ge.up.noalias() += r.weight * gpre * t.expert_mid.transpose();
      const VectorXd te = e.up.transpose() * gpre;
      ge.down.noalias() += r.weight * te * t.input.transpose();
      next.noalias() += r.weight * (e.down.transpose() * te);
    }
    gh = std::move(next);
  }
}

void gate_backward(const MoleLayer& layer, const GateTrace& t, const VectorXd& e_u, double d_weight,
                   GateNetwork& g) {
  // w = p_k; dw/dz_j = w (delta_kj - p_j) / tau.
  VectorXd dz = -t.weight * t.probs;
  dz(t.expert) += t.weight;
  dz *= d_weight / layer.temperature;
  g.out_w.noalias() += dz * t.hidden.transpose();
  g.out_b += dz;
  const VectorXd dh =
      (layer.gate.out_w.transpose() * dz).cwiseProduct((t.hidden_pre.array() > 0.0).cast<double>().matrix());
  g.hidden_w.noalias() += dh * e_u.transpose();
  g.hidden_b += dh;
}

std::vector<Route> routes_of(const std::vector<GateTrace>& gates) {
  std::vector<Route> r;
  r.reserve(gates.size());
  for (const auto& g : gates) r.push_back({g.expert, g.weight});
  return r;
}

MatrixXd uniform_matrix(int rows, int cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  return MatrixXd::NullaryExpr(rows, cols, [&]() { return u(rng); });
}

LowRankExpert new_expert(int out, int in, int rank, Rng& rng) {
  // Zero up-projection: every delta starts at zero.
  return {MatrixXd::Zero(out, rank), uniform_matrix(rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng)};
}

Json expert_to_json(const LowRankExpert& e) {
  return Json{{"up", matrix_to_json(e.up)}, {"down", matrix_to_json(e.down)}};
}

LowRankExpert expert_from_json(const Json& j) { return {matrix_from_json(j.at("up")), matrix_from_json(j.at("down"))}; }

}  // namespace

VectorXd GateNetwork::logits(const VectorXd& e_u) const {
  const VectorXd h = (hidden_w * e_u + hidden_b).cwiseMax(0.0);
  return out_w * h + out_b;
}

MoleRewardModel init_reward_model(int input_dim, int user_embedding_dim, const MoleConfig& cfg, bool conditioned,
                                  std::uint64_t seed) {
  if (input_dim < 1 || cfg.num_layers < 1 || cfg.width < 1) {
    throw std::invalid_argument("reward model needs input_dim, num_layers and width >= 1");
  }
  if (conditioned && (cfg.num_experts < 1 || cfg.gate_hidden < 1 || user_embedding_dim < 1)) {
    throw std::invalid_argument("conditioned reward model needs experts, a gate and a user embedding");
  }
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("gate temperature must be positive");
  Rng rng(seed);
  MoleRewardModel m;
  int in = input_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int out = cfg.width;
    const int rank = std::min({conditioned ? cfg.rank : cfg.uniform_rank, in, out});
    if (rank < 1) throw std::invalid_argument("low-rank adapters need rank >= 1");
    MoleLayer layer;
    layer.base_weight = uniform_matrix(out, in, std::sqrt(6.0 / in), rng);
    layer.base_bias = VectorXd::Zero(out);
    layer.shared = new_expert(out, in, rank, rng);
    layer.temperature = cfg.temperature;
    if (conditioned) {
      for (int i = 0; i < cfg.num_experts; ++i) layer.experts.push_back(new_expert(out, in, rank, rng));
      const int h = cfg.gate_hidden;
      layer.gate.hidden_w = uniform_matrix(h, user_embedding_dim, std::sqrt(6.0 / user_embedding_dim), rng);
      layer.gate.hidden_b = VectorXd::Zero(h);
      layer.gate.out_w = uniform_matrix(cfg.num_experts, h, std::sqrt(6.0 / (h + cfg.num_experts)), rng);
      layer.gate.out_b = VectorXd::Zero(cfg.num_experts);
    }
    m.layers.push_back(std::move(layer));
    in = out;
  }
  m.head_w = uniform_matrix(in, 1, 1.0 / std::sqrt(static_cast<double>(in)), rng).col(0);
  m.head_b = 0.0;
  return m;
}

VectorXd gate_weights_from_logits(const VectorXd& logits, double temperature) {
  if (logits.size() < 1) throw std::invalid_argument("gate needs at least one logit");
  if (!(temperature > 0.0)) throw std::invalid_argument("gate temperature must be positive");
  const int k = argmax_lowest(logits);
  VectorXd w = VectorXd::Zero(logits.size());
  w(k) = softmax(logits, temperature)(k);
  return w;
}

VectorXd gate_weights(const MoleLayer& layer, const VectorXd& e_u) {
  const auto t = run_gate(layer, e_u, -1);
  VectorXd w = VectorXd::Zero(layer.num_experts());
  w(t.expert) = t.weight;
  return w;
}

Route route(const MoleLayer& layer, const VectorXd& e_u) {
  const auto t = run_gate(layer, e_u, -1);
  return {t.expert, t.weight};
}

MatrixXd adapted_matrix(const MoleLayer& layer, const VectorXd& e_u) {
  MatrixXd w = layer.base_weight + layer.shared.up * layer.shared.down;
  if (layer.experts.empty()) return w;
  const VectorXd g = gate_weights(layer, e_u);
  for (int i = 0; i < layer.num_experts(); ++i) {
    if (g(i) != 0.0) w.noalias() += g(i) * (layer.experts[static_cast<std::size_t>(i)].delta());
  }
  return w;
}

double reward(const MoleRewardModel& model, const VectorXd& e_u, const VectorXd& features) {
  const auto routes = routes_of(run_gates(model, e_u, {}));
  return forward(model, routes, features, nullptr);
}

double reward_with_routes(const MoleRewardModel& model, std::span<const Route> routes, const VectorXd& features) {
  if (model.user_conditioned() && routes.size() != model.layers.size()) {
    throw std::invalid_argument("need one route per layer");
  }
  return forward(model, model.user_conditioned() ? routes : std::span<const Route>{}, features, nullptr);
}

double reward_pair_loss(const MoleRewardModel& model, const VectorXd& e_u, const VectorXd& preferred,
                        const VectorXd& rejected, MoleRewardModel* grad, double scale,
                        std::span<const int> forced_experts) {
  const auto gates = run_gates(model, e_u, forced_experts);
  const auto routes = routes_of(gates);
  std::vector<LayerTrace> ta;
  std::vector<LayerTrace> tb;
  const bool want_grad = grad != nullptr;
  const double fa = forward(model, routes, preferred, want_grad ? &ta : nullptr);
  const double fb = forward(model, routes, rejected, want_grad ? &tb : nullptr);
  const double margin = fa - fb;
  const double loss = pair_nll(margin);
  if (want_grad) {
    const double g = -scale * sigmoid(-margin);
    std::vector<double> d_weight(model.layers.size(), 0.0);
    backward(model, routes, ta, g, *grad, d_weight);
    backward(model, routes, tb, -g, *grad, d_weight);
    for (std::size_t l = 0; l < gates.size(); ++l) {
      gate_backward(model.layers[l], gates[l], e_u, d_weight[l], grad->layers[l].gate);
    }
  }
  return loss;
}

MoleRewardModel zeros_like(const MoleRewardModel& model) {
  MoleRewardModel z = model;
  auto views = trainable_views(z);
  for (auto v : views) std::fill(v.begin(), v.end(), 0.0);
  for (auto& l : z.layers) {
    l.base_weight.setZero();
    l.base_bias.setZero();
  }
  return z;
}

std::vector<std::span<double>> trainable_views(MoleRewardModel& model) {
  std::vector<std::span<double>> v;
  for (auto& l : model.layers) {
    v.push_back(flat(l.shared.up));
    v.push_back(flat(l.shared.down));
    for (auto& e : l.experts) {
      v.push_back(flat(e.up));
      v.push_back(flat(e.down));
    }
    if (!l.experts.empty()) {
      v.push_back(flat(l.gate.hidden_w));
      v.push_back(flat(l.gate.hidden_b));
      v.push_back(flat(l.gate.out_w));
      v.push_back(flat(l.gate.out_b));
    }
  }
  v.push_back(flat(model.head_w));
  v.push_back({&model.head_b, 1});
  return v;
}

RewardTrainResult train_reward(MoleRewardModel& model, const MatrixXd& user_embeddings,
                               std::span<const PreferencePair> pairs, const MatrixXd& features,
                               const RewardTrainConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("reward training needs at least one pair");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("need epochs >= 1 and batch_size >= 1");
  const bool conditioned = model.user_conditioned();
  for (const auto& p : pairs) {
    if (conditioned && (p.user < 0 || p.user >= user_embeddings.rows())) {
      throw std::invalid_argument(fmt::format("user {} has no embedding", p.user));
    }
    if (p.preferred < 0 || p.preferred >= features.rows() || p.rejected < 0 || p.rejected >= features.rows()) {
      throw std::invalid_argument("pair references a missing response");
    }
  }

  std::vector<PreferencePair> order(pairs.begin(), pairs.end());
  const auto total = static_cast<long>(order.size());
  const long batch = std::min<long>(cfg.batch_size, total);
  const long steps_per_epoch = (total + batch - 1) / batch;
  CosineWarmupSchedule schedule(cfg.lr, steps_per_epoch * cfg.epochs, cfg.warmup_ratio);
  AdamW opt(trainable_views(model), AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(stage_seed(cfg.seed, "reward_shuffle"));
  MoleRewardModel grad = zeros_like(model);
  auto grad_views = trainable_views(grad);
  std::vector<std::span<const double>> grad_cviews(grad_views.begin(), grad_views.end());
  const VectorXd no_user;

  RewardTrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (long start = 0; start < total; start += batch) {
      const long n = std::min(batch, total - start);
      for (auto v : grad_views) std::fill(v.begin(), v.end(), 0.0);
      double batch_loss = 0.0;
      for (long i = start; i < start + n; ++i) {
        const auto& p = order[static_cast<std::size_t>(i)];
        const VectorXd e_u = conditioned ? VectorXd(user_embeddings.row(p.user).transpose()) : no_user;
        batch_loss += reward_pair_loss(model, e_u, features.row(p.preferred).transpose(),
                                       features.row(p.rejected).transpose(), &grad, 1.0 / static_cast<double>(n));
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error(fmt::format("reward training diverged at epoch {} step {}", epoch, step));
      }
      epoch_loss += batch_loss;
      opt.step(grad_cviews, schedule.lr(step));
      ++step;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(total));
    spdlog::debug("reward epoch {:3d}  loss {:.6f}", epoch, result.loss_trace.back());
  }
  return result;
}

MatrixXd response_feature_matrix(const PreferenceDataset& ds) {
  MatrixXd f(static_cast<Eigen::Index>(ds.responses.size()), ds.num_dims());
  for (std::size_t r = 0; r < ds.responses.size(); ++r) {
    for (int k = 0; k < ds.num_dims(); ++k) {
      f(static_cast<Eigen::Index>(r), k) = ds.responses[r].attributes[static_cast<std::size_t>(k)];
    }
  }
  return f;
}

RewardTrainResult train_reward(MoleRewardModel& model, const EmbeddingTable& embeddings,
                               const PreferenceDataset& dataset, const RewardTrainConfig& cfg) {
  const auto pairs = dataset.resolve(dataset.annotations);
  return train_reward(model, embeddings.users, pairs, response_feature_matrix(dataset), cfg);
}

std::vector<std::vector<int>> expert_allocation(const MoleRewardModel& model, const MatrixXd& user_embeddings,
                                                std::span<const int> user_rows) {
  std::vector<std::vector<int>> out(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (int u : user_rows) {
      out[l].push_back(model.user_conditioned()
                           ? route(model.layers[l], user_embeddings.row(u).transpose()).expert
                           : 0);
    }
  }
  return out;
}

std::optional<double> allocation_purity(std::span<const int> allocation, std::span<const std::optional<int>> groups) {
  std::map<int, std::map<int, long>> counts;
  long total = 0;
  for (std::size_t i = 0; i < allocation.size() && i < groups.size(); ++i) {
    if (!groups[i]) continue;
    ++counts[allocation[i]][*groups[i]];
    ++total;
  }
  if (total == 0) return std::nullopt;
  long majority = 0;
  for (const auto& [expert, by_group] : counts) {
    long best = 0;
    for (const auto& [g, c] : by_group) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(total);
}

std::string expert_allocation_csv(const std::vector<std::vector<int>>& allocation, std::span<const int> user_ids,
                                  std::span<const std::optional<int>> groups) {
  std::string out = "layer,user_id,group_id,expert\n";
  for (std::size_t l = 0; l < allocation.size(); ++l) {
    for (std::size_t i = 0; i < allocation[l].size(); ++i) {
      const std::string g = (i < groups.size() && groups[i]) ? std::to_string(*groups[i]) : "";
      out += fmt::format("{},{},{},{}\n", l, user_ids[i], g, allocation[l][i]);
    }
  }
  return out;
}

Json to_json(const MoleConfig& cfg) {
  return Json{{"num_layers", cfg.num_layers},   {"width", cfg.width},
              {"num_experts", cfg.num_experts}, {"rank", cfg.rank},
              {"gate_hidden", cfg.gate_hidden}, {"temperature", cfg.temperature},
              {"uniform_rank", cfg.uniform_rank}};
}

MoleConfig mole_config_from_json(const Json& j) {
  MoleConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.width = j.value("width", c.width);
  c.num_experts = j.value("num_experts", c.num_experts);
  c.rank = j.value("rank", c.rank);
  c.gate_hidden = j.value("gate_hidden", c.gate_hidden);
  c.temperature = j.value("temperature", c.temperature);
  c.uniform_rank = j.value("uniform_rank", c.uniform_rank);
  if (c.num_experts < 1 || c.rank < 1 || !(c.temperature > 0.0)) {
    throw std::invalid_argument("MoLE config needs num_experts >= 1, rank >= 1, temperature > 0");
  }
  return c;
}

Json to_json(const RewardTrainConfig& cfg) {
  return Json{{"lr", cfg.lr},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"warmup_ratio", cfg.warmup_ratio},
              {"weight_decay", cfg.weight_decay},
              {"seed", cfg.seed}};
}

RewardTrainConfig reward_train_config_from_json(const Json& j) {
  RewardTrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  if (!(c.lr > 0.0) || c.epochs < 1 || c.batch_size < 1) {
    throw std::invalid_argument("reward training config needs lr > 0, epochs >= 1, batch_size >= 1");
  }
  return c;
}

Json reward_model_to_json(const MoleRewardModel& model) {
  Json layers = Json::array();
  for (const auto& l : model.layers) {
    Json jl{{"base_weight", matrix_to_json(l.base_weight)},
            {"base_bias", vector_to_json(l.base_bias)},
            {"shared", expert_to_json(l.shared)},
            {"temperature", l.temperature}};
    Json experts = Json::array();
    for (const auto& e : l.experts) experts.push_back(expert_to_json(e));
    jl["experts"] = std::move(experts);
    if (!l.experts.empty()) {
      jl["gate"] = Json{{"hidden_w", matrix_to_json(l.gate.hidden_w)},
                        {"hidden_b", vector_to_json(l.gate.hidden_b)},
                        {"out_w", matrix_to_json(l.gate.out_w)},
                        {"out_b", vector_to_json(l.gate.out_b)}};
    }
    layers.push_back(std::move(jl));
  }
  return Json{{"version", 1},
              {"layers", std::move(layers)},
              {"head_w", vector_to_json(model.head_w)},
              {"head_b", model.head_b}};
}

MoleRewardModel reward_model_from_json(const Json& j) {
  MoleRewardModel m;
  for (const auto& jl : j.at("layers")) {
    MoleLayer l;
    l.base_weight = matrix_from_json(jl.at("base_weight"));
    l.base_bias = vector_from_json(jl.at("base_bias"));
    l.shared = expert_from_json(jl.at("shared"));
    l.temperature = jl.at("temperature").get<double>();
    for (const auto& e : jl.at("experts")) l.experts.push_back(expert_from_json(e));
    if (!l.experts.empty()) {
      const auto& g = jl.at("gate");
      l.gate.hidden_w = matrix_from_json(g.at("hidden_w"));
      l.gate.hidden_b = vector_from_json(g.at("hidden_b"));
      l.gate.out_w = matrix_from_json(g.at("out_w"));
      l.gate.out_b = vector_from_json(g.at("out_b"));
    }
    m.layers.push_back(std::move(l));
  }
  m.head_w = vector_from_json(j.at("head_w"));
  m.head_b = j.at("head_b").get<double>();
  return m;
}

}  // namespace copl
