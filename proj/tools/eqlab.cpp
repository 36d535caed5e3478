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

// eqlab: experiment runner for long-tailed classification losses.
//
//   eqlab gen-data --config cfg.json --out data/cifar_lt
//   eqlab train --config cfg.json [--seed N] [--out DIR] [--set key=value]...
//   eqlab sweep --config cfg.json --grid grid.json [--parallel N]
//   eqlab eval --run DIR
//   eqlab export-ledgers --run DIR [--iters N] [--set loss.kind=eql] --out DIR

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eqlab/error.hpp"
#include "eqlab/experiment.hpp"

namespace {

using eqlab::ExitCode;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "run config JSON");
  if (config_required) opt->required();
  cmd->add_option("--seed", f.seed, "override the run seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.sets, "dotted-path override, key=value (repeatable)");
}

nlohmann::json load_config(const CommonFlags& f, nlohmann::json doc) {
  if (!f.config.empty()) doc = eqlab::read_json_file(f.config);
  for (const auto& s : f.sets) eqlab::apply_override(doc, s);
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.out.empty()) doc["out_dir"] = f.out;
  return doc;
}

int run(int argc, char** argv) {
  CLI::App app{"eqlab: long-tailed loss laboratory"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic long-tailed dataset");
  add_common(gen, gen_flags, true);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train one configuration");
  add_common(train, train_flags, true);

  CommonFlags sweep_flags;
  std::string grid_path;
  std::size_t parallel = 1;
  auto* sweep = app.add_subcommand("sweep", "run the cross product of a parameter grid");
  add_common(sweep, sweep_flags, true);
  sweep->add_option("--grid", grid_path, "grid JSON: {\"dotted.key\": [values...]}")->required();
  sweep->add_option("--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

  std::string eval_run;
  auto* eval = app.add_subcommand("eval", "evaluate a finished run's checkpoint");
  eval->add_option("--run", eval_run, "run directory")->required();

  CommonFlags export_flags;
  std::string export_run;
  std::size_t export_iters = 200;
  auto* exp = app.add_subcommand("export-ledgers", "replay a frozen checkpoint and export gradient ledgers");
  add_common(exp, export_flags, false);
  exp->add_option("--run", export_run, "run directory holding config.json and checkpoint")->required();
  exp->add_option("--iters", export_iters, "replayed iterations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (gen->parsed()) {
    const auto doc = load_config(gen_flags, {});
    const auto config = eqlab::RunConfig::from_json(doc);
    const auto out = gen_flags.out.empty() ? config.out_dir : std::filesystem::path(gen_flags.out);
    const auto pair = eqlab::cmd_gen_data(config, out);
    const auto counts = pair.train.class_counts();
    std::cout << "wrote " << pair.train.size() << " train / " << pair.test.size() << " test samples to "
              << out.string() << " (max count " << *std::max_element(counts.begin(), counts.end())
              << ", min count " << *std::min_element(counts.begin(), counts.end()) << ")\n";
  } else if (train->parsed()) {
    const auto config = eqlab::RunConfig::from_json(load_config(train_flags, {}));
    const auto outcome = eqlab::cmd_train(config, true);
    std::cout << outcome.summary.at("final").dump() << '\n';
  } else if (sweep->parsed()) {
    const auto base = load_config(sweep_flags, {});
    const auto rows = eqlab::cmd_sweep(base, eqlab::read_json_file(grid_path), parallel);
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.ok ? 0 : 1;
    std::cout << rows.size() << " runs, " << failed << " failed; table in "
              << (eqlab::RunConfig::from_json(base).out_dir / "sweep.csv").string() << '\n';
  } else if (eval->parsed()) {
    std::cout << eqlab::cmd_eval(eval_run).to_json().dump(2) << '\n';
  } else if (exp->parsed()) {
    const std::filesystem::path run_dir = export_run;
    auto doc = eqlab::read_json_file(run_dir / "config.json");
    for (const auto& s : export_flags.sets) eqlab::apply_override(doc, s);
    if (export_flags.seed) doc["seed"] = *export_flags.seed;
    const auto config = eqlab::RunConfig::from_json(doc);
    const auto out = export_flags.out.empty() ? run_dir / "replay" : std::filesystem::path(export_flags.out);
    const auto [grads, probs] = eqlab::cmd_export_ledgers(config, run_dir / "checkpoint", export_iters, out);
    std::cout << "replayed " << grads.iterations << " iterations; ledgers in " << out.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const eqlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kConfig);
  } catch (const eqlab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kDivergence);
  } catch (const eqlab::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kConfig);
  }
}
