// Copyright 2026 The eqlab Authors
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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "eqlab/error.hpp"
#include "eqlab/experiment.hpp"

using namespace eqlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "eqlab_test_experiment" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json tiny_config(const fs::path& out) {
  RunConfig c;
  c.seed = 3;
  c.out_dir = out;
  c.dataset.profile = {10, 40, 10.0};
  c.dataset.clusters.feature_dim = 8;
  c.dataset.test_per_class = 10;
  c.proposals = ProposalConfig{};
  c.loss = LossSpec::eql(0.0);
  c.lambda_tail_ratio = 0.1;
  c.schedule.total_iters = 60;
  c.schedule.decay_points = {30, 45};
  c.schedule.batch_size = 32;
  c.telemetry.log_every = 20;
  return c.to_json();
}

}  // namespace

TEST_CASE("run config json round trip and strictness") {
  const auto doc = tiny_config("runs/x");
  const auto c = RunConfig::from_json(doc);
  CHECK(c.to_json() == doc);
  CHECK(c.proposals.has_value());
  CHECK_FALSE(doc["proposals"].contains("batch_size"));

  auto bad = doc;
  bad["surprise"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  bad = doc;
  bad["schema_version"] = 2;
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  bad = doc;
  bad.erase("schema_version");
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  bad = doc;
  bad["dataset"]["noise"] = 1.0;
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  bad = doc;
  bad["telemetry"]["grouping"] = "tiers";
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
  bad = doc;
  bad["seed"] = "one";
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
}

TEST_CASE("dotted overrides") {
  nlohmann::json doc{{"loss", {{"kind", "eql"}}}};
  apply_override(doc, "loss.lambda=0.002");
  CHECK(doc["loss"]["lambda"] == 0.002);
  apply_override(doc, "loss.kind=seql");
  CHECK(doc["loss"]["kind"] == "seql");
  apply_override(doc, "proposals=null");
  CHECK(doc["proposals"].is_null());
  apply_override(doc, "schedule.decay_points=[10,20]");
  CHECK(doc["schedule"]["decay_points"] == nlohmann::json::array({10, 20}));
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "a..b=1"), ConfigError);
}

TEST_CASE("seed override changes only the seed") {
  auto doc = tiny_config("runs/x");
  auto overridden = doc;
  overridden["seed"] = 99;
  const auto a = RunConfig::from_json(doc).to_json();
  auto b = RunConfig::from_json(overridden).to_json();
  CHECK(b["seed"] == 99);
  b["seed"] = a["seed"];
  CHECK(a == b);
}

TEST_CASE("lambda from a tail-ratio target") {
  const auto c = RunConfig::from_json(tiny_config("runs/x"));
  const auto data = materialize_dataset(c);
  const auto table = data.train.frequency_table();
  const auto loss = resolve_loss(c, table);
  CHECK(loss.lambda > 0.0);
  CHECK(loss.threshold.lambda() == loss.lambda);
  CHECK(std::abs(tail_ratio(loss.lambda, table) - 0.1) < 0.05);
}

TEST_CASE("train writes every artifact and replays byte-identically") {
  const auto dir = scratch("train");
  const auto c = RunConfig::from_json(tiny_config(dir / "a"));
  const auto out = cmd_train(c, true);
  for (const char* f : {"config.json", "metrics.csv", "summary.json", "ledgers.csv", "ledgers.json",
                        "checkpoint.bin", "checkpoint.json"})
    CHECK(fs::exists(dir / "a" / f));
  CHECK(out.summary["final"]["top1"].get<double>() >= 0.0);
  CHECK(out.gradients.iterations == 60);

  // Re-execute from the persisted config.
  auto persisted = read_json_file(dir / "a" / "config.json");
  persisted["out_dir"] = (dir / "b").string();
  cmd_train(RunConfig::from_json(persisted), true);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "ledgers.csv") == slurp(dir / "b" / "ledgers.csv"));

  // Evaluating the float32 checkpoint agrees with the run's final report.
  const auto eval = cmd_eval(dir / "a");
  CHECK(std::abs(eval.top1() - out.final_eval.top1()) <= 0.02);

  const auto [grads, probs] = cmd_export_ledgers(c, dir / "a" / "checkpoint", 5, dir / "a" / "replay");
  CHECK(grads.iterations == 5);
  CHECK(fs::exists(dir / "a" / "replay" / "ledgers.csv"));
}

TEST_CASE("seql runs can dump their beta draws") {
  const auto dir = scratch("beta");
  auto doc = tiny_config(dir);
  doc["proposals"] = nullptr;
  doc["loss"] = {{"kind", "seql"}, {"gamma_ignore", 0.5}};
  doc["telemetry"]["dump_beta"] = true;
  doc["schedule"]["total_iters"] = 5;
  doc["schedule"]["decay_points"] = nlohmann::json::array();
  cmd_train(RunConfig::from_json(doc), true);
  std::ifstream in(dir / "beta_log.csv");
  std::string header;
  std::string first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "iter,sample,beta");
  CHECK(first.rfind("0,0,", 0) == 0);
  CHECK(first.size() == 4 + 10);
}

TEST_CASE("gen-data is idempotent and loadable") {
  const auto dir = scratch("gen");
  auto c = RunConfig::from_json(tiny_config(dir / "run"));
  cmd_gen_data(c, dir / "d1");
  cmd_gen_data(c, dir / "d2");
  CHECK(slurp(dir / "d1" / "train.bin") == slurp(dir / "d2" / "train.bin"));
  CHECK(slurp(dir / "d1" / "train.json") == slurp(dir / "d2" / "train.json"));
  const auto side = read_json_file(dir / "d1" / "train.json");
  CHECK(side["counts"][0] == 40);

  // A run pointing at the files matches the generated-on-the-fly run.
  auto from_files = c;
  from_files.dataset.path = dir / "d1";
  const auto a = cmd_train(c, false);
  const auto b = cmd_train(from_files, false);
  CHECK(a.model == b.model);
}

TEST_CASE("sweeps") {
  const auto dir = scratch("sweep");
  const auto base = tiny_config(dir);

  SUBCASE("single point matches a plain train run") {
    const auto rows = cmd_sweep(base, {{"seed", {3}}});
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].ok);
    const auto direct = cmd_train(RunConfig::from_json(base), false);
    CHECK(rows[0].summary["final"] == direct.summary["final"]);
    CHECK(fs::exists(dir / "sweep.csv"));
  }
  SUBCASE("cross product, last axis fastest, failures recorded") {
    const nlohmann::json grid{{"loss.kind", {"eql", "softmax_ce"}}, {"seed", {1, 2}}};
    const auto rows = cmd_sweep(base, grid, 2);
    REQUIRE(rows.size() == 4);
    CHECK(rows[1].params[0].second == "eql");
    CHECK(rows[1].params[1].second == 2);
    CHECK(rows[0].ok);
    CHECK(rows[1].ok);
    // softmax CE refuses the proposal stream.
    CHECK_FALSE(rows[2].ok);
    CHECK_FALSE(rows[3].ok);
    const auto csv = slurp(dir / "sweep.csv");
    CHECK(csv.rfind("run,status,loss.kind,seed,top1,top5,rare,common,frequent,resolved_lambda,tail_ratio,error", 0) ==
          0);
    CHECK(csv.find("failed") != std::string::npos);
  }
  SUBCASE("empty grid is an error") {
    CHECK_THROWS_AS(cmd_sweep(base, nlohmann::json::object()), ConfigError);
    CHECK_THROWS_AS(cmd_sweep(base, {{"seed", nlohmann::json::array()}}), ConfigError);
  }
}

TEST_CASE("io errors carry the path") {
  try {
    read_json_file("/nonexistent/dir/config.json");
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/config.json") != std::string::npos);
  }
}

TEST_CASE("shipped configs and grids parse") {
  const fs::path dir = EQLAB_CONFIG_DIR;
  std::vector<nlohmann::json> bases;
  std::vector<nlohmann::json> grids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".json") continue;
    auto doc = read_json_file(entry.path());
    if (name.rfind("grid_", 0) == 0) {
      grids.push_back(doc);
    } else {
      CAPTURE(name);
      const auto c = RunConfig::from_json(doc);
      CHECK(c.to_json() == doc);
      bases.push_back(doc);
    }
  }
  REQUIRE(bases.size() >= 8);
  REQUIRE(grids.size() >= 4);
  const auto base = read_json_file(dir / "lt_eql.json");
  const auto seql = read_json_file(dir / "lt_seql.json");
  for (const auto& grid : grids) {
    for (const auto& [key, values] : grid.items()) {
      for (const auto& v : values) {
        auto doc = key.rfind("loss.gamma", 0) == 0 ? seql : base;
        apply_override(doc, key + "=" + v.dump());
        CAPTURE(key);
        CHECK_NOTHROW(RunConfig::from_json(doc));
      }
    }
  }
}
