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

// copl: command-line front end. Every subcommand reads --config, works
// inside --out and records a run_manifest.json there.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "copl/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string ratios = "1:9,5:5,9:1";
};

class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const fs::path& p) : std::runtime_error("missing artifact: " + p.string()) {}
};

copl::Json load(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw MissingArtifact(p);
  return copl::read_json_file(p);
}

std::vector<std::pair<double, double>> parse_ratios(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string part = text.substr(pos, comma - pos);
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--ratios", "expected A:B, got '" + part + "'");
    try {
      std::size_t used_a = 0;
      std::size_t used_b = 0;
      const std::string a = part.substr(0, colon);
      const std::string b = part.substr(colon + 1);
      const double ra = std::stod(a, &used_a);
      const double rb = std::stod(b, &used_b);
      if (used_a != a.size() || used_b != b.size() || !(ra > 0) || !(rb > 0)) throw std::invalid_argument(part);
      out.emplace_back(ra, rb);
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--ratios", "expected positive A:B, got '" + part + "'");
    }
    pos = comma + 1;
  }
  return out;
}

copl::Json versions() {
  return copl::Json{
      {"copl", kVersion},
      {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
      {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
      {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)},
      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                    NLOHMANN_JSON_VERSION_PATCH)}};
}

struct Loaded {
  copl::PreferenceDataset ds;
  copl::SignedBipartiteGraph graph;
};

Loaded load_dataset(const fs::path& out) {
  auto ds = copl::dataset_from_json(load(out, copl::artifacts::kDataset));
  auto graph = copl::SignedBipartiteGraph::build(ds);
  return {std::move(ds), std::move(graph)};
}

copl::EmbeddingTable load_embeddings(const fs::path& out, const copl::ExperimentConfig& cfg, const Loaded& l) {
  const auto params = copl::gcf_params_from_json(load(out, copl::artifacts::kGcfModel));
  return copl::propagate(l.graph, params, cfg.gcf);
}

copl::RewardModels load_reward(const fs::path& out) {
  copl::RewardModels m;
  const auto copl_json = load(out, copl::artifacts::kRewardModel);
  m.copl = copl::reward_model_from_json(copl_json);
  if (copl_json.contains("loss_trace")) m.copl_trace = copl_json.at("loss_trace").get<std::vector<double>>();
  const auto base = load(out, copl::artifacts::kBaselines);
  if (!base.at("uniform").is_null()) m.uniform = copl::reward_model_from_json(base.at("uniform"));
  for (const auto& g : base.at("group_oracle")) m.group_oracle.push_back(copl::reward_model_from_json(g));
  return m;
}

// Returns the artifact names written.
std::vector<std::string> run_subcommand(const std::string& sub, const copl::ExperimentConfig& cfg,
                                        const Options& opt) {
  namespace a = copl::artifacts;
  const fs::path out = opt.out_dir;
  if (sub == "generate") {
    copl::write_dataset(out, copl::run_generate(cfg));
    return {a::kDataset};
  }
  if (sub == "train-gcf") {
    const auto l = load_dataset(out);
    copl::write_gcf(out, cfg, l.ds, copl::run_train_gcf(cfg, l.ds, l.graph));
    return {a::kGcfModel, a::kEmbeddingsCsv};
  }
  if (sub == "train-reward") {
    const auto l = load_dataset(out);
    const auto emb = load_embeddings(out, cfg, l);
    const auto models = copl::run_train_reward(cfg, l.ds, emb);
    copl::write_reward(out, models);
    copl::write_allocation(out, l.ds, emb, models.copl);
    return {a::kRewardModel, a::kBaselines, a::kAllocationCsv};
  }
  if (sub == "adapt") {
    const auto l = load_dataset(out);
    const auto emb = load_embeddings(out, cfg, l);
    copl::write_json_file(out / a::kUnseen, copl::to_json(copl::run_adapt(cfg, l.ds, l.graph, emb)));
    return {a::kUnseen};
  }
  if (sub == "eval") {
    const auto l = load_dataset(out);
    const auto emb = load_embeddings(out, cfg, l);
    const auto models = load_reward(out);
    const auto unseen = copl::unseen_embeddings_from_json(load(out, a::kUnseen));
    copl::write_json_file(out / a::kReport, copl::to_json(copl::evaluate(cfg, l.ds, l.graph, emb, models, &unseen)));
    return {a::kReport};
  }
  if (sub == "export") {
    const auto l = load_dataset(out);
    const auto params = copl::gcf_params_from_json(load(out, a::kGcfModel));
    const auto emb = copl::propagate(l.graph, params, cfg.gcf);
    copl::GcfTrainResult g{params, emb, {}};
    const auto gcf_json = load(out, a::kGcfModel);
    if (gcf_json.contains("loss_trace")) g.loss_trace = gcf_json.at("loss_trace").get<std::vector<double>>();
    copl::write_gcf(out, cfg, l.ds, g);
    copl::write_allocation(out, l.ds, emb, copl::reward_model_from_json(load(out, a::kRewardModel)));
    return {a::kGcfModel, a::kEmbeddingsCsv, a::kAllocationCsv};
  }
  // sweep
  const auto ratios = parse_ratios(opt.ratios);
  copl::imbalance_sweep(cfg, ratios, opt.jobs, out);
  std::vector<std::string> names;
  for (const auto& [x, y] : ratios) names.push_back(fmt::format("report_ratio_{:g}-{:g}.json", x, y));
  return names;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("copl");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("COPL_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Collaborative preference learning: synthetic data, graph embeddings, routed reward models"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  Options opt;
  const std::vector<std::pair<std::string, std::string>> subcommands = {
      {"generate", "Generate the synthetic preference dataset"},
      {"train-gcf", "Train graph embeddings on the dataset"},
      {"train-reward", "Train the routed reward model and its baselines"},
      {"adapt", "Embed unseen users from their few annotations"},
      {"eval", "Compute the metrics report from saved artifacts"},
      {"sweep", "Rerun the pipeline over several group-size ratios"},
      {"export", "Rewrite CSV exports from saved models"}};
  for (const auto& [name, help] : subcommands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "Output directory")->required();
    sub->add_option("--seed", opt.seed, "Override the master seed");
    if (name == "sweep") {
      sub->add_option("--jobs", opt.jobs, "Concurrent ratio runs")->check(CLI::PositiveNumber);
      sub->add_option("--ratios", opt.ratios, "Comma-separated group ratios A:B");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  copl::ExperimentConfig cfg;
  try {
    cfg = copl::experiment_config_from_json(copl::read_json_file(opt.config_path));
    if (opt.seed) cfg.seed = *opt.seed;
    cfg.derive_seeds();
    cfg.validate();
    if (sub == "sweep") parse_ratios(opt.ratios);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: invalid config " << opt.config_path << ": " << e.what() << "\n";
    return 1;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(opt.out_dir);
    const auto written = run_subcommand(sub, cfg, opt);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    copl::write_json_file(fs::path(opt.out_dir) / copl::artifacts::kManifest,
                          copl::Json{{"subcommand", sub},
                                     {"config_hash", copl::config_hash(cfg)},
                                     {"seed", cfg.seed},
                                     {"versions", versions()},
                                     {"wall_time_seconds", wall},
                                     {"artifacts", written}});
  } catch (const std::exception& e) {
    std::cerr << "error: " << sub << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
