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

#ifndef COPL_HARNESS_HPP_
#define COPL_HARNESS_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "copl/config.hpp"
#include "copl/gcf.hpp"
#include "copl/graph.hpp"
#include "copl/mole.hpp"
#include "copl/prefdata.hpp"

// End-to-end experiment pipeline:
//   generate -> graph -> train GCF -> train reward -> adapt unseen -> evaluate
// plus the unconditioned and per-group baselines.

namespace copl {

// Artifact file names inside an output directory.
namespace artifacts {
inline constexpr const char* kDataset = "dataset.json";
inline constexpr const char* kGcfModel = "gcf_model.json";
inline constexpr const char* kRewardModel = "reward_model.json";
inline constexpr const char* kBaselines = "baseline_models.json";
inline constexpr const char* kUnseen = "unseen_embeddings.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kEmbeddingsCsv = "embeddings.csv";
inline constexpr const char* kAllocationCsv = "expert_allocation.csv";
inline constexpr const char* kManifest = "run_manifest.json";
}  // namespace artifacts

// Raised by run_experiment; names the stage that failed.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Exact counts; the fraction is formed only when read.
struct Accuracy {
  long correct = 0;
  long total = 0;

  void add(bool ok) {
    correct += ok ? 1 : 0;
    ++total;
  }
  std::optional<double> fraction() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
  }
};

struct MetricsReport {
  std::optional<double> seen_accuracy;
  std::optional<double> unseen_accuracy;
  std::optional<double> common_accuracy;
  std::optional<double> controversial_accuracy;
  std::map<int, double> groupwise_accuracy;
  std::optional<double> gnn_test_accuracy;
  std::optional<double> gnn_unseen_accuracy;
  std::vector<std::optional<double>> expert_allocation_purity;
  // Named baseline and ablation accuracies, e.g. "uniform.seen".
  std::map<std::string, double> baselines;
  // Wall time; kept out of the serialized report so identical runs give
  // identical bytes. The CLI records it in the run manifest.
  double runtime_seconds = 0.0;
};

Json to_json(const MetricsReport& r);

struct RewardModels {
  MoleRewardModel copl;
  std::optional<MoleRewardModel> uniform;
  std::vector<MoleRewardModel> group_oracle;  // indexed by group id
  std::vector<double> copl_trace;
};

// Per-method embeddings of the unseen users; row i belongs to user_ids[i].
struct UnseenEmbeddings {
  std::vector<int> user_ids;
  Eigen::MatrixXd weighted;
  Eigen::MatrixXd naive;
  Eigen::MatrixXd user_opt;
  Eigen::MatrixXd random;
  std::vector<int> neighborhood_sizes;
};

Json to_json(const UnseenEmbeddings& u);
UnseenEmbeddings unseen_embeddings_from_json(const Json& j);

PreferenceDataset run_generate(const ExperimentConfig& cfg);

GcfTrainResult run_train_gcf(const ExperimentConfig& cfg, const PreferenceDataset& ds,
                             const SignedBipartiteGraph& graph);

// Unconditioned model trained on every seen annotation.
MoleRewardModel uniform_baseline(const PreferenceDataset& ds, const ExperimentConfig& cfg);

// One unconditioned model per group, each trained on its group's
// annotations. Throws std::invalid_argument without group labels.
std::vector<MoleRewardModel> group_oracle_baseline(const PreferenceDataset& ds, const ExperimentConfig& cfg);

RewardModels run_train_reward(const ExperimentConfig& cfg, const PreferenceDataset& ds, const EmbeddingTable& emb);

UnseenUser unseen_user(const PreferenceDataset& ds, int user_id);

UnseenEmbeddings run_adapt(const ExperimentConfig& cfg, const PreferenceDataset& ds, const SignedBipartiteGraph& graph,
                           const EmbeddingTable& emb);

// Fraction of test pairs where predict_pair agrees with the label.
double eval_gnn_testacc(const EmbeddingTable& emb, std::span<const PreferencePair> test_pairs);

struct PairTypeAccuracy {
  std::optional<double> common;
  std::optional<double> controversial;
};

// `correct[i]` says whether the model got test_annotations[i] right.
PairTypeAccuracy breakdown_common_controversial(std::span<const Annotation> test_annotations,
                                                std::span<const char> correct,
                                                const std::map<int, PairTag>& tags);

MetricsReport evaluate(const ExperimentConfig& cfg, const PreferenceDataset& ds, const SignedBipartiteGraph& graph,
                       const EmbeddingTable& emb, const RewardModels& models, const UnseenEmbeddings* unseen);

struct ExperimentResult {
  MetricsReport report;
  PreferenceDataset dataset;
  GcfTrainResult gcf;
  RewardModels models;
  UnseenEmbeddings unseen;
};

// Runs every stage. With a non-empty `out_dir` each stage's artifact is
// written as soon as it exists, so a failure leaves earlier ones behind.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});

// Reruns the pipeline once per two-group ratio with the same master seed.
std::vector<MetricsReport> imbalance_sweep(const ExperimentConfig& cfg,
                                           const std::vector<std::pair<double, double>>& ratios, int jobs = 1,
                                           const std::filesystem::path& out_dir = {});

// Artifact writers shared by the CLI and run_experiment.
void write_dataset(const std::filesystem::path& dir, const PreferenceDataset& ds);
void write_gcf(const std::filesystem::path& dir, const ExperimentConfig& cfg, const PreferenceDataset& ds,
               const GcfTrainResult& gcf);
void write_reward(const std::filesystem::path& dir, const RewardModels& models);
void write_allocation(const std::filesystem::path& dir, const PreferenceDataset& ds, const EmbeddingTable& emb,
                      const MoleRewardModel& model);

}  // namespace copl

#endif  // COPL_HARNESS_HPP_
