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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eqlab/datagen.hpp"
#include "eqlab/freqstats.hpp"
#include "eqlab/losses.hpp"
#include "eqlab/model.hpp"
#include "eqlab/sampling.hpp"
#include "eqlab/telemetry.hpp"
#include "eqlab/trainer.hpp"

namespace eqlab {

inline constexpr int kSchemaVersion = 1;

struct DatasetConfig {
  std::optional<std::filesystem::path> path;  // directory holding train.* / test.*
  LongTailProfile profile;
  ClusterOptions clusters;
  std::size_t test_per_class = 50;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct TelemetryConfig {
  std::size_t log_every = 100;
  bool gradients = true;
  bool probabilities = true;
  bool dump_beta = false;
  std::string grouping = "lvis";  // or "shot"
};

/// A fully serializable experiment. `to_json` emits every field, so a
/// persisted config replays without consulting defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/default";
  DatasetConfig dataset;
  std::optional<ProposalConfig> proposals;
  SamplerSpec sampler;
  LossSpec loss;
  // When set, loss.lambda is replaced by the value whose tail ratio on the
  // training counts is closest to this target.
  std::optional<double> lambda_tail_ratio;
  ModelSpec model;
  TrainSchedule schedule;
  TelemetryConfig telemetry;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
};

/// Sets `dotted.key` in a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct DatasetPair {
  SyntheticClassDataset train;
  SyntheticClassDataset test;
};

/// Loads the dataset from `path` when set, otherwise generates it.
DatasetPair materialize_dataset(const RunConfig& config);

/// Writes <out>/train.{bin,json} and <out>/test.{bin,json}.
DatasetPair cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir);

Grouping make_grouping(const std::string& scheme, const FrequencyTable& table);

/// Loss spec with lambda_tail_ratio resolved against `table`.
LossSpec resolve_loss(const RunConfig& config, const FrequencyTable& table);

struct RunOutcome {
  RunConfig config;
  LossSpec loss;  // resolved
  EvalReport final_eval;
  double tail_ratio = 0.0;
  GradientLedger gradients;
  ProbabilityLedger probabilities;
  Model model;
  nlohmann::json summary;
};

/// Trains one run and writes config.json, metrics.csv, summary.json,
/// ledgers.csv, ledgers.json and checkpoint.{bin,json} under out_dir.
/// Pass write_files = false to keep everything in memory.
RunOutcome cmd_train(const RunConfig& config, bool write_files = true);

struct SweepRow {
  std::size_t index = 0;
  std::vector<std::pair<std::string, nlohmann::json>> params;
  bool ok = false;
  std::string error;
  nlohmann::json summary;
};

/// Cross product of `grid` ({"dotted.key": [values...]}) over `base`; one
/// run per point under <out_dir>/run_NNN, aggregated into <out_dir>/sweep.csv.
/// A failing point is recorded in its row and the sweep continues.
std::vector<SweepRow> cmd_sweep(const nlohmann::json& base, const nlohmann::json& grid, std::size_t parallel = 1);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Evaluates the checkpoint in `run_dir` on the run's test split.
EvalReport cmd_eval(const std::filesystem::path& run_dir);

/// Replays the run's batch stream through its frozen checkpoint under
/// `config.loss` and writes ledgers.{csv,json} into `out_dir`.
std::pair<GradientLedger, ProbabilityLedger> cmd_export_ledgers(const RunConfig& config,
                                                                const std::filesystem::path& checkpoint_stem,
                                                                std::size_t iterations,
                                                                const std::filesystem::path& out_dir);

}  // namespace eqlab
