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

#include "copl/gcf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "copl/optim.hpp"

namespace copl {
namespace {

using Eigen::MatrixXd;

struct LayerCache {
  MatrixXd eu, er;        // inputs
  MatrixXd pu, nu;        // aggregated response messages at users
  MatrixXd pr, nr;        // aggregated user messages at responses
  MatrixXd mu, mr;        // pre-activations
};

struct Forward {
  std::vector<LayerCache> layers;
  EmbeddingTable out;
};

// Weight used for the product: the stored matrix, or I when the
// feature-transform ablation is active.
const MatrixXd& eff(const MatrixXd& w, const GcfHyperparams& h, const MatrixXd& identity) {
  return h.use_transform ? w : identity;
}

MatrixXd side_message(const MatrixXd& self_emb, const MatrixXd& pos, const MatrixXd& neg,
                      const SideWeights& w, const GcfHyperparams& h, const MatrixXd& id) {
  MatrixXd m = self_emb * eff(w.self, h, id).transpose();
  m.noalias() += pos * eff(w.pos, h, id).transpose();
  m.noalias() += self_emb.cwiseProduct(pos) * eff(w.pos_inter, h, id).transpose();
  if (h.use_negative_edges) {
    m.noalias() += neg * eff(w.neg, h, id).transpose();
    m.noalias() += self_emb.cwiseProduct(neg) * eff(w.neg_inter, h, id).transpose();
  }
  return m;
}

MatrixXd activate(const MatrixXd& m, const Activation& act) {
  return m.unaryExpr([&](double x) { return act.apply(x); });
}

Activation effective_activation(const GcfHyperparams& h) {
  if (!h.use_transform) return Activation{Activation::Kind::kIdentity, 0.0};
  return h.activation;
}

void check_shapes(const SignedBipartiteGraph& g, const GcfParams& p) {
  const int d = p.dim();
  if (p.user_init.rows() != g.num_users() || p.response_init.rows() != g.num_responses() ||
      p.response_init.cols() != d) {
    throw std::invalid_argument(fmt::format(
        "embedding tables ({}x{}, {}x{}) do not match graph ({} users, {} responses)", p.user_init.rows(),
        p.user_init.cols(), p.response_init.rows(), p.response_init.cols(), g.num_users(), g.num_responses()));
  }
  for (const auto& l : p.layers) {
    for (const auto* w : {&l.user.self, &l.user.pos, &l.user.pos_inter, &l.user.neg, &l.user.neg_inter,
                          &l.response.self, &l.response.pos, &l.response.pos_inter, &l.response.neg,
                          &l.response.neg_inter}) {
      if (w->rows() != d || w->cols() != d) throw std::invalid_argument("propagation matrix is not d x d");
    }
  }
}

Forward forward(const SignedBipartiteGraph& g, const GcfParams& p, const GcfHyperparams& h, bool keep_cache) {
  check_shapes(g, p);
  const auto& apos = g.normalized_adjacency(Sign::kPositive);
  const auto& aneg = g.normalized_adjacency(Sign::kNegative);
  const MatrixXd id = MatrixXd::Identity(p.dim(), p.dim());
  const Activation act = effective_activation(h);

  Forward f;
  MatrixXd eu = p.user_init;
  MatrixXd er = p.response_init;
  for (int l = 0; l < p.num_layers(); ++l) {
    const auto& layer = p.layers[static_cast<std::size_t>(l)];
    LayerCache c;
    c.pu = apos * er;
    c.pr = apos.transpose() * eu;
    if (h.use_negative_edges) {
      c.nu = aneg * er;
      c.nr = aneg.transpose() * eu;
    } else {
      c.nu = MatrixXd::Zero(eu.rows(), eu.cols());
      c.nr = MatrixXd::Zero(er.rows(), er.cols());
    }
    c.mu = side_message(eu, c.pu, c.nu, layer.user, h, id);
    c.mr = side_message(er, c.pr, c.nr, layer.response, h, id);
    MatrixXd next_u = activate(c.mu, act);
    MatrixXd next_r = activate(c.mr, act);
    if (!next_u.allFinite() || !next_r.allFinite()) {
      throw std::runtime_error(fmt::format("non-finite embeddings after propagation layer {}", l));
    }
    if (keep_cache) {
      c.eu = std::move(eu);
      c.er = std::move(er);
      f.layers.push_back(std::move(c));
    }
    eu = std::move(next_u);
    er = std::move(next_r);
  }
  f.out.users = std::move(eu);
  f.out.responses = std::move(er);
  return f;
}

// Backward through one node side. Accumulates weight gradients into `gw`,
// the gradient w.r.t. the side's own input into `d_self`, and returns the
// gradients w.r.t. the aggregated positive and negative messages.
void side_backward(const MatrixXd& dm, const MatrixXd& self_emb, const MatrixXd& pos, const MatrixXd& neg,
                   const SideWeights& w, const GcfHyperparams& h, const MatrixXd& id, SideWeights& gw,
                   MatrixXd& d_self, MatrixXd& d_pos, MatrixXd& d_neg) {
  const MatrixXd& ws = eff(w.self, h, id);
  const MatrixXd& w1 = eff(w.pos, h, id);
  const MatrixXd& w2 = eff(w.pos_inter, h, id);
  if (h.use_transform) {
    gw.self.noalias() += dm.transpose() * self_emb;
    gw.pos.noalias() += dm.transpose() * pos;
    gw.pos_inter.noalias() += dm.transpose() * self_emb.cwiseProduct(pos);
  }
  const MatrixXd t2 = dm * w2;
  d_self.noalias() += dm * ws;
  d_self += t2.cwiseProduct(pos);
  d_pos = dm * w1 + t2.cwiseProduct(self_emb);
  if (h.use_negative_edges) {
    const MatrixXd& w3 = eff(w.neg, h, id);
    const MatrixXd& w4 = eff(w.neg_inter, h, id);
    if (h.use_transform) {
      gw.neg.noalias() += dm.transpose() * neg;
      gw.neg_inter.noalias() += dm.transpose() * self_emb.cwiseProduct(neg);
    }
    const MatrixXd t4 = dm * w4;
    d_self += t4.cwiseProduct(neg);
    d_neg = dm * w3 + t4.cwiseProduct(self_emb);
  } else {
    d_neg.setZero(neg.rows(), neg.cols());
  }
}

double pair_terms(const EmbeddingTable& emb, std::span<const PreferencePair> pairs, double scale,
                  MatrixXd* gu, MatrixXd* gr) {
  double loss = 0.0;
  for (const auto& p : pairs) {
    const auto eu = emb.users.row(p.user);
    const double margin = eu.dot(emb.responses.row(p.preferred) - emb.responses.row(p.rejected));
    loss += pair_nll(margin);
    if (gu != nullptr) {
      // d/dm of -log sigma(m) is -sigma(-m).
      const double g = -scale * sigmoid(-margin);
      gu->row(p.user) += g * (emb.responses.row(p.preferred) - emb.responses.row(p.rejected));
      gr->row(p.preferred) += g * eu;
      gr->row(p.rejected) -= g * eu;
    }
  }
  return scale * loss;
}

void check_pairs(const EmbeddingTable& emb, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs) {
    if (p.user < 0 || p.user >= emb.users.rows() || p.preferred < 0 || p.preferred >= emb.responses.rows() ||
        p.rejected < 0 || p.rejected >= emb.responses.rows()) {
      throw std::out_of_range(fmt::format("pair ({}, {}, {}) references a missing node", p.user, p.preferred,
                                          p.rejected));
    }
  }
}

SideWeights zero_side(int d) {
  const MatrixXd z = MatrixXd::Zero(d, d);
  return {z, z, z, z, z};
}

SideWeights random_side(int d, Rng& rng) {
  // Glorot-uniform for a d x d matrix.
  const double limit = std::sqrt(6.0 / (2.0 * d));
  std::uniform_real_distribution<double> u(-limit, limit);
  auto draw = [&]() { return MatrixXd(MatrixXd::NullaryExpr(d, d, [&]() { return u(rng); })); };
  SideWeights s;
  s.self = draw();
  s.pos = draw();
  s.pos_inter = draw();
  s.neg = draw();
  s.neg_inter = draw();
  return s;
}

Json side_to_json(const SideWeights& s) {
  return Json{{"self", matrix_to_json(s.self)},
              {"pos", matrix_to_json(s.pos)},
              {"pos_inter", matrix_to_json(s.pos_inter)},
              {"neg", matrix_to_json(s.neg)},
              {"neg_inter", matrix_to_json(s.neg_inter)}};
}

SideWeights side_from_json(const Json& j) {
  return {matrix_from_json(j.at("self")), matrix_from_json(j.at("pos")), matrix_from_json(j.at("pos_inter")),
          matrix_from_json(j.at("neg")), matrix_from_json(j.at("neg_inter"))};
}

}  // namespace

std::vector<Eigen::MatrixXd*> GcfParams::tensors() {
  std::vector<MatrixXd*> out{&user_init, &response_init};
  for (auto& l : layers) {
    for (auto* s : {&l.user, &l.response}) {
      out.insert(out.end(), {&s->self, &s->pos, &s->pos_inter, &s->neg, &s->neg_inter});
    }
  }
  return out;
}

std::vector<const Eigen::MatrixXd*> GcfParams::tensors() const {
  auto mut = const_cast<GcfParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

GcfParams GcfParams::zeros(int num_users, int num_responses, int dim, int num_layers) {
  GcfParams p;
  p.user_init = MatrixXd::Zero(num_users, dim);
  p.response_init = MatrixXd::Zero(num_responses, dim);
  p.layers.assign(static_cast<std::size_t>(num_layers), GcfLayer{zero_side(dim), zero_side(dim)});
  return p;
}

double GcfParams::squared_norm() const {
  double s = 0.0;
  for (const auto* t : tensors()) s += t->squaredNorm();
  return s;
}

GcfParams init_gcf_params(int num_users, int num_responses, const GcfHyperparams& hyper) {
  if (hyper.dim < 1 || hyper.num_layers < 0) throw std::invalid_argument("need dim >= 1 and num_layers >= 0");
  Rng rng(stage_seed(hyper.seed, "gcf_init"));
  GcfParams p;
  const double limit = std::sqrt(3.0 / hyper.dim);
  std::uniform_real_distribution<double> u(-limit, limit);
  p.user_init = MatrixXd::NullaryExpr(num_users, hyper.dim, [&]() { return u(rng); });
  p.response_init = MatrixXd::NullaryExpr(num_responses, hyper.dim, [&]() { return u(rng); });
  for (int l = 0; l < hyper.num_layers; ++l) {
    GcfLayer layer;
    layer.user = random_side(hyper.dim, rng);
    layer.response = random_side(hyper.dim, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

EmbeddingTable propagate(const SignedBipartiteGraph& graph, const GcfParams& params, const GcfHyperparams& hyper) {
  return forward(graph, params, hyper, false).out;
}

double score(const EmbeddingTable& emb, int user, int response) {
  if (user < 0 || user >= emb.users.rows() || response < 0 || response >= emb.responses.rows()) {
    throw std::out_of_range(fmt::format("score({}, {}) out of range", user, response));
  }
  return emb.users.row(user).dot(emb.responses.row(response));
}

Choice predict_pair(const EmbeddingTable& emb, int user, int response_a, int response_b) {
  return score(emb, user, response_a) >= score(emb, user, response_b) ? Choice::kA : Choice::kB;
}

double gcf_loss(const EmbeddingTable& emb, const GcfParams& params, std::span<const PreferencePair> pairs,
                double lambda) {
  check_pairs(emb, pairs);
  return pair_terms(emb, pairs, 1.0, nullptr, nullptr) + lambda * params.squared_norm();
}

GcfLossGrad gcf_loss_and_grad(const SignedBipartiteGraph& graph, const GcfParams& params,
                              const GcfHyperparams& hyper, std::span<const PreferencePair> pairs,
                              double pair_scale) {
  const int d = params.dim();
  Forward f = forward(graph, params, hyper, true);
  check_pairs(f.out, pairs);

  GcfLossGrad r;
  r.grad = GcfParams::zeros(graph.num_users(), graph.num_responses(), d, params.num_layers());
  MatrixXd gu = MatrixXd::Zero(graph.num_users(), d);
  MatrixXd gr = MatrixXd::Zero(graph.num_responses(), d);
  r.loss = pair_terms(f.out, pairs, pair_scale, &gu, &gr);

  const auto& apos = graph.normalized_adjacency(Sign::kPositive);
  const auto& aneg = graph.normalized_adjacency(Sign::kNegative);
  const MatrixXd id = MatrixXd::Identity(d, d);
  const Activation act = effective_activation(hyper);
  for (int l = params.num_layers() - 1; l >= 0; --l) {
    const auto& c = f.layers[static_cast<std::size_t>(l)];
    const auto& w = params.layers[static_cast<std::size_t>(l)];
    auto& gw = r.grad.layers[static_cast<std::size_t>(l)];
    const MatrixXd dmu = gu.cwiseProduct(c.mu.unaryExpr([&](double x) { return act.derivative(x); }));
    const MatrixXd dmr = gr.cwiseProduct(c.mr.unaryExpr([&](double x) { return act.derivative(x); }));

    MatrixXd next_gu = MatrixXd::Zero(gu.rows(), d);
    MatrixXd next_gr = MatrixXd::Zero(gr.rows(), d);
    MatrixXd d_pos, d_neg;
    side_backward(dmu, c.eu, c.pu, c.nu, w.user, hyper, id, gw.user, next_gu, d_pos, d_neg);
    next_gr.noalias() += apos.transpose() * d_pos;
    if (hyper.use_negative_edges) next_gr.noalias() += aneg.transpose() * d_neg;

    side_backward(dmr, c.er, c.pr, c.nr, w.response, hyper, id, gw.response, next_gr, d_pos, d_neg);
    next_gu.noalias() += apos * d_pos;
    if (hyper.use_negative_edges) next_gu.noalias() += aneg * d_neg;

    gu = std::move(next_gu);
    gr = std::move(next_gr);
  }
  r.grad.user_init = std::move(gu);
  r.grad.response_init = std::move(gr);

  if (hyper.lambda != 0.0) {
    r.loss += hyper.lambda * params.squared_norm();
    auto gs = r.grad.tensors();
    auto ps = params.tensors();
    for (std::size_t i = 0; i < gs.size(); ++i) *gs[i] += 2.0 * hyper.lambda * *ps[i];
  }
  return r;
}

GcfTrainResult train_gcf(const SignedBipartiteGraph& graph, std::span<const PreferencePair> pairs,
                         const GcfHyperparams& hyper) {
  if (pairs.empty()) throw std::invalid_argument("GCF training needs at least one pair");
  if (hyper.epochs < 1 || hyper.batch_size < 1) throw std::invalid_argument("need epochs >= 1 and batch_size >= 1");
  if (hyper.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");

  GcfTrainResult result;
  result.params = init_gcf_params(graph.num_users(), graph.num_responses(), hyper);
  std::vector<PreferencePair> order(pairs.begin(), pairs.end());
  const auto total = static_cast<long>(order.size());
  const long batch = std::min<long>(hyper.batch_size, total);
  const long steps_per_epoch = (total + batch - 1) / batch;
  CosineWarmupSchedule schedule(hyper.lr, steps_per_epoch * hyper.epochs, hyper.warmup_ratio);
  std::vector<std::span<double>> views;
  for (auto* t : result.params.tensors()) views.push_back(flat(*t));
  AdamW opt(std::move(views), AdamWOptions{0.9, 0.999, 1e-8, hyper.weight_decay});
  Rng rng(stage_seed(hyper.seed, "gcf_shuffle"));

  long step = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (long start = 0; start < total; start += batch) {
      const long n = std::min(batch, total - start);
      std::span<const PreferencePair> mb(order.data() + start, static_cast<std::size_t>(n));
      auto lg = gcf_loss_and_grad(graph, result.params, hyper, mb,
                                  static_cast<double>(total) / static_cast<double>(n));
      if (!std::isfinite(lg.loss)) {
        throw std::runtime_error(fmt::format("GCF training diverged at epoch {} step {}", epoch, step));
      }
      epoch_loss += lg.loss;
      std::vector<std::span<const double>> grads;
      for (const auto* t : std::as_const(lg.grad).tensors()) grads.push_back(flat(*t));
      opt.step(grads, schedule.lr(step));
      ++step;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    if (epoch % 25 == 0 || epoch + 1 == hyper.epochs) {
      spdlog::debug("gcf epoch {:4d}  loss {:.6f}", epoch, result.loss_trace.back());
    }
  }
  result.embeddings = propagate(graph, result.params, hyper);
  return result;
}

Json to_json(const GcfHyperparams& h) {
  return Json{{"num_layers", h.num_layers},
              {"dim", h.dim},
              {"lambda", h.lambda},
              {"lr", h.lr},
              {"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"warmup_ratio", h.warmup_ratio},
              {"weight_decay", h.weight_decay},
              {"activation", h.activation.kind == Activation::Kind::kIdentity ? "identity" : "leaky_relu"},
              {"leaky_slope", h.activation.slope},
              {"use_negative_edges", h.use_negative_edges},
              {"use_transform", h.use_transform},
              {"seed", h.seed}};
}

GcfHyperparams gcf_hyperparams_from_json(const Json& j) {
  GcfHyperparams h;
  h.num_layers = j.value("num_layers", h.num_layers);
  h.dim = j.value("dim", h.dim);
  h.lambda = j.value("lambda", h.lambda);
  h.lr = j.value("lr", h.lr);
  h.epochs = j.value("epochs", h.epochs);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.warmup_ratio = j.value("warmup_ratio", h.warmup_ratio);
  h.weight_decay = j.value("weight_decay", h.weight_decay);
  const auto act = j.value("activation", std::string("leaky_relu"));
  if (act == "identity") {
    h.activation.kind = Activation::Kind::kIdentity;
  } else if (act == "leaky_relu") {
    h.activation.kind = Activation::Kind::kLeakyRelu;
  } else {
    throw std::invalid_argument("activation must be \"leaky_relu\" or \"identity\"");
  }
  h.activation.slope = j.value("leaky_slope", h.activation.slope);
  h.use_negative_edges = j.value("use_negative_edges", h.use_negative_edges);
  h.use_transform = j.value("use_transform", h.use_transform);
  h.seed = j.value("seed", h.seed);
  if (h.lambda < 0.0 || !(h.lr > 0.0) || h.warmup_ratio < 0.0 || h.warmup_ratio > 1.0) {
    throw std::invalid_argument("GCF hyperparameters out of range");
  }
  return h;
}

Json gcf_model_to_json(const GcfParams& params, const GcfHyperparams& hyper) {
  Json layers = Json::array();
  for (const auto& l : params.layers) {
    layers.push_back(Json{{"user", side_to_json(l.user)}, {"response", side_to_json(l.response)}});
  }
  return Json{{"version", 1},
              {"hyperparams", to_json(hyper)},
              {"user_init", matrix_to_json(params.user_init)},
              {"response_init", matrix_to_json(params.response_init)},
              {"layers", std::move(layers)}};
}

GcfParams gcf_params_from_json(const Json& j) {
  GcfParams p;
  p.user_init = matrix_from_json(j.at("user_init"));
  p.response_init = matrix_from_json(j.at("response_init"));
  for (const auto& l : j.at("layers")) {
    p.layers.push_back(GcfLayer{side_from_json(l.at("user")), side_from_json(l.at("response"))});
  }
  return p;
}

std::string embeddings_csv(const EmbeddingTable& emb, std::span<const std::optional<int>> user_groups,
                           std::span<const int> user_ids) {
  const auto d = emb.users.cols();
  std::string out = "node_type,node_id,group_id";
  for (Eigen::Index k = 0; k < d; ++k) out += fmt::format(",dim_{}", k);
  out += "\n";
  auto row = [&](const char* type, int id, std::string group, const auto& e) {
    out += fmt::format("{},{},{}", type, id, group);
    for (Eigen::Index k = 0; k < e.size(); ++k) out += fmt::format(",{:.17g}", e(k));
    out += "\n";
  };
  for (Eigen::Index u = 0; u < emb.users.rows(); ++u) {
    const auto i = static_cast<std::size_t>(u);
    const int id = user_ids.empty() ? static_cast<int>(u) : user_ids[i];
    std::string group;
    if (i < user_groups.size() && user_groups[i]) group = std::to_string(*user_groups[i]);
    row("user", id, group, emb.users.row(u));
  }
  for (Eigen::Index r = 0; r < emb.responses.rows(); ++r) {
    row("response", static_cast<int>(r), "", emb.responses.row(r));
  }
  return out;
}

}  // namespace copl
