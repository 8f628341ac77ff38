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

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the sparse code paths it checks.

#ifndef COPL_TESTS_ORACLES_HPP_
#define COPL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "copl/gcf.hpp"
#include "copl/mole.hpp"
#include "copl/optim.hpp"
#include "copl/seeds.hpp"

namespace copl::testing {

struct TinyGraph {
  int num_users = 0;
  int num_responses = 0;
  std::vector<PreferencePair> pairs;
};

inline TinyGraph random_tiny_graph(Rng& rng, int max_users, int max_responses, int max_pairs) {
  TinyGraph g;
  g.num_users = std::uniform_int_distribution<int>(1, max_users)(rng);
  g.num_responses = std::uniform_int_distribution<int>(2, max_responses)(rng);
  const int n = std::uniform_int_distribution<int>(0, max_pairs)(rng);
  std::uniform_int_distribution<int> u(0, g.num_users - 1);
  std::uniform_int_distribution<int> r(0, g.num_responses - 1);
  for (int i = 0; i < n; ++i) {
    const int a = r(rng);
    int b = r(rng);
    while (b == a) b = r(rng);
    g.pairs.push_back({u(rng), a, b});
  }
  return g;
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline GcfParams random_gcf_params(Rng& rng, int users, int responses, int dim, int layers) {
  auto p = GcfParams::zeros(users, responses, dim, layers);
  for (auto* t : p.tensors()) *t = random_matrix(rng, t->rows(), t->cols(), 0.8);
  return p;
}

// Node-by-node evaluation of the propagation rule with explicit edge sets
// and degrees.
inline EmbeddingTable dense_propagate(const TinyGraph& g, const GcfParams& p, const GcfHyperparams& h) {
  std::set<std::pair<int, int>> pos;
  std::set<std::pair<int, int>> neg;
  for (const auto& e : g.pairs) {
    pos.insert({e.user, e.preferred});
    neg.insert({e.user, e.rejected});
  }
  auto degree_u = [](const std::set<std::pair<int, int>>& s, int u) {
    int c = 0;
    for (const auto& [a, b] : s) c += a == u ? 1 : 0;
    return c;
  };
  auto degree_r = [](const std::set<std::pair<int, int>>& s, int r) {
    int c = 0;
    for (const auto& [a, b] : s) c += b == r ? 1 : 0;
    return c;
  };
  const int d = p.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  auto w = [&](const Eigen::MatrixXd& m) -> const Eigen::MatrixXd& { return h.use_transform ? m : id; };
  auto act = [&](double x) {
    if (!h.use_transform || h.activation.kind == Activation::Kind::kIdentity) return x;
    return x > 0 ? x : h.activation.slope * x;
  };

  Eigen::MatrixXd eu = p.user_init;
  Eigen::MatrixXd er = p.response_init;
  for (const auto& layer : p.layers) {
    Eigen::MatrixXd nu(eu.rows(), d);
    Eigen::MatrixXd nr(er.rows(), d);
    for (int u = 0; u < g.num_users; ++u) {
      Eigen::VectorXd m = w(layer.user.self) * eu.row(u).transpose();
      for (int r = 0; r < g.num_responses; ++r) {
        const Eigen::VectorXd a = er.row(r).transpose();
        const Eigen::VectorXd ab = a.cwiseProduct(eu.row(u).transpose());
        if (pos.count({u, r})) {
          const double alpha = 1.0 / std::sqrt(double(degree_u(pos, u)) * degree_r(pos, r));
          m += alpha * (w(layer.user.pos) * a + w(layer.user.pos_inter) * ab);
        }
        if (h.use_negative_edges && neg.count({u, r})) {
          const double beta = 1.0 / std::sqrt(double(degree_u(neg, u)) * degree_r(neg, r));
          m += beta * (w(layer.user.neg) * a + w(layer.user.neg_inter) * ab);
        }
      }
      for (int k = 0; k < d; ++k) nu(u, k) = act(m(k));
    }
    for (int r = 0; r < g.num_responses; ++r) {
      Eigen::VectorXd m = w(layer.response.self) * er.row(r).transpose();
      for (int u = 0; u < g.num_users; ++u) {
        const Eigen::VectorXd a = eu.row(u).transpose();
        const Eigen::VectorXd ab = a.cwiseProduct(er.row(r).transpose());
        if (pos.count({u, r})) {
          const double alpha = 1.0 / std::sqrt(double(degree_u(pos, u)) * degree_r(pos, r));
          m += alpha * (w(layer.response.pos) * a + w(layer.response.pos_inter) * ab);
        }
        if (h.use_negative_edges && neg.count({u, r})) {
          const double beta = 1.0 / std::sqrt(double(degree_u(neg, u)) * degree_r(neg, r));
          m += beta * (w(layer.response.neg) * a + w(layer.response.neg_inter) * ab);
        }
      }
      for (int k = 0; k < d; ++k) nr(r, k) = act(m(k));
    }
    eu = nu;
    er = nr;
  }
  return {eu, er};
}

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Central differences of f over every coordinate of `views`.
inline std::vector<double> central_differences(const std::vector<std::span<double>>& views,
                                               const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> out;
  for (auto v : views) {
    for (double& x : v) {
      const double keep = x;
      x = keep + h;
      const double up = f();
      x = keep - h;
      const double down = f();
      x = keep;
      out.push_back((up - down) / (2 * h));
    }
  }
  return out;
}

inline std::vector<double> concat(const std::vector<std::span<double>>& views) {
  std::vector<double> out;
  for (auto v : views) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<std::span<double>> gcf_views(GcfParams& p) {
  std::vector<std::span<double>> v;
  for (auto* t : p.tensors()) v.push_back(flat(*t));
  return v;
}

// Relative error between the analytic GCF gradient and central
// differences of propagate + gcf_loss on one random instance.
inline double gcf_gradient_error(Rng& rng, const GcfHyperparams& hyper_in) {
  TinyGraph g;
  do {
    g = random_tiny_graph(rng, 4, 5, 8);
  } while (g.pairs.empty());
  GcfHyperparams hyper = hyper_in;
  const int dim = std::uniform_int_distribution<int>(2, 3)(rng);
  hyper.dim = dim;
  hyper.num_layers = std::uniform_int_distribution<int>(1, 2)(rng);
  GcfParams params = random_gcf_params(rng, g.num_users, g.num_responses, dim, hyper.num_layers);
  const SignedBipartiteGraph graph(g.num_users, g.num_responses, g.pairs);
  const auto analytic = gcf_loss_and_grad(graph, params, hyper, g.pairs);
  GcfParams grad = analytic.grad;
  auto f = [&] { return gcf_loss(propagate(graph, params, hyper), params, g.pairs, hyper.lambda); };
  const auto numeric = central_differences(gcf_views(params), f);
  return relative_error(concat(gcf_views(grad)), numeric);
}

inline void randomize(MoleRewardModel& m, Rng& rng) {
  for (auto v : trainable_views(m)) {
    std::uniform_real_distribution<double> d(-0.7, 0.7);
    for (double& x : v) x = d(rng);
  }
}

// Same check for the reward model's pair loss at fixed routing.
inline double mole_gradient_error(Rng& rng, bool conditioned) {
  MoleConfig cfg;
  cfg.num_layers = std::uniform_int_distribution<int>(1, 3)(rng);
  cfg.width = std::uniform_int_distribution<int>(3, 6)(rng);
  cfg.num_experts = std::uniform_int_distribution<int>(1, 4)(rng);
  cfg.rank = std::uniform_int_distribution<int>(1, 3)(rng);
  cfg.gate_hidden = std::uniform_int_distribution<int>(2, 5)(rng);
  cfg.temperature = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  cfg.uniform_rank = 2;
  const int in = std::uniform_int_distribution<int>(2, 4)(rng);
  const int du = std::uniform_int_distribution<int>(2, 4)(rng);
  auto model = init_reward_model(in, du, cfg, conditioned, rng());
  randomize(model, rng);
  const Eigen::VectorXd e = random_matrix(rng, du, 1);
  const Eigen::VectorXd a = random_matrix(rng, in, 1);
  const Eigen::VectorXd b = random_matrix(rng, in, 1);
  std::vector<int> forced;
  if (conditioned) {
    for (const auto& layer : model.layers) forced.push_back(route(layer, e).expert);
  }
  auto grad = zeros_like(model);
  reward_pair_loss(model, e, a, b, &grad, 1.0, forced);
  auto f = [&] { return reward_pair_loss(model, e, a, b, nullptr, 1.0, forced); };
  const auto numeric = central_differences(trainable_views(model), f);
  return relative_error(concat(trainable_views(grad)), numeric);
}

}  // namespace copl::testing

#endif  // COPL_TESTS_ORACLES_HPP_
