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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "copl/json_io.hpp"
#include "copl/seeds.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

const fs::path kWork = fs::temp_directory_path() / "copl_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + COPL_CLI_PATH + "\" " + args + " > /dev/null 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string smoke_config() { return std::string("\"") + COPL_SOURCE_DIR + "/configs/smoke.json\""; }

std::string out(const std::string& name) { return "\"" + (kWork / name).string() + "\""; }

struct Fresh {
  Fresh() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "generate writes the dataset and a manifest") {
  const auto r = run("generate --config " + smoke_config() + " --out " + out("gen"));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(kWork / "gen/dataset.json"));
  const auto m = copl::read_json_file(kWork / "gen/run_manifest.json");
  CHECK(m.at("subcommand") == "generate");
  CHECK(m.at("seed") == 5);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
  CHECK(m.contains("wall_time_seconds"));
  CHECK(m.at("versions").contains("copl"));
}

TEST_CASE_FIXTURE(Fresh, "seed override is applied and recorded") {
  REQUIRE(run("generate --config " + smoke_config() + " --out " + out("a")).code == 0);
  REQUIRE(run("generate --config " + smoke_config() + " --out " + out("b") + " --seed 77").code == 0);
  CHECK(copl::read_json_file(kWork / "b/run_manifest.json").at("seed") == 77);
  CHECK(slurp(kWork / "a/dataset.json") != slurp(kWork / "b/dataset.json"));
  CHECK(copl::read_json_file(kWork / "b/dataset.json").at("meta").at("seed") == copl::stage_seed(77, "data"));
}

TEST_CASE_FIXTURE(Fresh, "eval before training names the missing artifact") {
  REQUIRE(run("generate --config " + smoke_config() + " --out " + out("e")).code == 0);
  const auto r = run("eval --config " + smoke_config() + " --out " + out("e"));
  CHECK(r.code == 2);
  CHECK(r.err.find("gcf_model.json") != std::string::npos);
}

TEST_CASE_FIXTURE(Fresh, "usage errors exit with 1") {
  auto r = run("generate --config " + smoke_config() + " --out " + out("u") + " --bogus");
  CHECK(r.code == 1);
  CHECK(r.err.find("--bogus") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run("").code == 1);
  CHECK(run("frobnicate --config " + smoke_config()).code == 1);
  CHECK(run("generate --out " + out("u")).code == 1);
  CHECK(run("generate --config /nonexistent.json --out " + out("u")).code == 1);
  CHECK(run("sweep --config " + smoke_config() + " --out " + out("u") + " --ratios 1:9,oops").code == 1);
  CHECK_FALSE(fs::exists(kWork / "u"));
}

TEST_CASE_FIXTURE(Fresh, "a malformed config fails before any work") {
  {
    std::ofstream f(kWork / "bad.json");
    f << "{ \"version\": 1, ";
  }
  const auto r = run("generate --config \"" + (kWork / "bad.json").string() + "\" --out " + out("m"));
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(kWork / "m"));
}

TEST_CASE_FIXTURE(Fresh, "the staged pipeline is idempotent") {
  const char* stages[] = {"generate", "train-gcf", "train-reward", "adapt", "eval", "export"};
  for (const char* s : stages) REQUIRE(run(std::string(s) + " --config " + smoke_config() + " --out " + out("p")).code == 0);
  const char* files[] = {"dataset.json",  "gcf_model.json",           "reward_model.json", "baseline_models.json",
                         "unseen_embeddings.json", "report.json", "embeddings.csv", "expert_allocation.csv"};
  std::vector<std::string> first;
  for (const char* f : files) first.push_back(slurp(kWork / "p" / f));
  for (const char* s : stages) REQUIRE(run(std::string(s) + " --config " + smoke_config() + " --out " + out("p")).code == 0);
  for (std::size_t i = 0; i < std::size(files); ++i) CHECK_MESSAGE(slurp(kWork / "p" / files[i]) == first[i], files[i]);
  const auto report = copl::read_json_file(kWork / "p/report.json");
  CHECK(report.at("seen_accuracy").is_number());
}

TEST_CASE_FIXTURE(Fresh, "sweep writes one report per ratio") {
  const auto r = run("sweep --config " + smoke_config() + " --out " + out("s") + " --ratios 1:9,5:5,9:1 --jobs 2");
  REQUIRE(r.code == 0);
  for (const char* f : {"report_ratio_1-9.json", "report_ratio_5-5.json", "report_ratio_9-1.json"}) {
    CHECK_MESSAGE(fs::exists(kWork / "s" / f), f);
  }
  CHECK(copl::read_json_file(kWork / "s/run_manifest.json").at("artifacts").size() == 3);
}
