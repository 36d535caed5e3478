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

#include "eqlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "eqlab/error.hpp"

namespace eqlab {
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig <-> JSON

nlohmann::json RunConfig::to_json() const {
  nlohmann::json ds{{"path", dataset.path ? nlohmann::json(dataset.path->string()) : nlohmann::json(nullptr)},
                    {"profile", dataset.profile.to_json()},
                    {"feature_dim", dataset.clusters.feature_dim},
                    {"noise_sigma", dataset.clusters.noise_sigma},
                    {"mean_radius", dataset.clusters.mean_radius},
                    {"test_per_class", dataset.test_per_class},
                    {"seed", dataset.seed ? nlohmann::json(*dataset.seed) : nlohmann::json(nullptr)}};
  nlohmann::json props = nullptr;
  if (proposals) {
    props = proposals->to_json();
    props.erase("batch_size");  // the schedule's batch size governs training
  }
  return {{"schema_version", kSchemaVersion},
          {"seed", seed},
          {"out_dir", out_dir.string()},
          {"dataset", ds},
          {"proposals", props},
          {"sampler", sampler.to_json()},
          {"loss", loss.to_json()},
          {"lambda_tail_ratio", lambda_tail_ratio ? nlohmann::json(*lambda_tail_ratio) : nlohmann::json(nullptr)},
          {"model", model.to_json()},
          {"schedule", schedule.to_json()},
          {"telemetry",
           {{"log_every", telemetry.log_every},
            {"gradients", telemetry.gradients},
            {"probabilities", telemetry.probabilities},
            {"dump_beta", telemetry.dump_beta},
            {"grouping", telemetry.grouping}}}};
}

namespace {

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [key, _] : doc.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(where + ": unknown field '" + key + "'");
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  try {
    require(doc.is_object(), "run config must be a JSON object");
    require(doc.contains("schema_version"), "run config: missing schema_version");
    require(doc.at("schema_version").get<int>() == kSchemaVersion,
            "run config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    reject_unknown(doc,
                   {"schema_version", "seed", "out_dir", "dataset", "proposals", "sampler", "loss",
                    "lambda_tail_ratio", "model", "schedule", "telemetry"},
                   "run config");
    RunConfig c;
    c.seed = doc.value("seed", c.seed);
    c.out_dir = doc.value("out_dir", c.out_dir.string());
    if (doc.contains("dataset")) {
      const auto& d = doc.at("dataset");
      reject_unknown(d, {"path", "profile", "feature_dim", "noise_sigma", "mean_radius", "test_per_class", "seed"},
                     "dataset");
      if (d.contains("path") && !d.at("path").is_null()) c.dataset.path = d.at("path").get<std::string>();
      if (d.contains("profile")) c.dataset.profile = LongTailProfile::from_json(d.at("profile"));
      c.dataset.clusters.feature_dim = d.value("feature_dim", c.dataset.clusters.feature_dim);
      c.dataset.clusters.noise_sigma = d.value("noise_sigma", c.dataset.clusters.noise_sigma);
      c.dataset.clusters.mean_radius = d.value("mean_radius", c.dataset.clusters.mean_radius);
      c.dataset.test_per_class = d.value("test_per_class", c.dataset.test_per_class);
      if (d.contains("seed") && !d.at("seed").is_null()) c.dataset.seed = d.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("proposals") && !doc.at("proposals").is_null())
      c.proposals = ProposalConfig::from_json(doc.at("proposals"));
    if (doc.contains("sampler")) c.sampler = SamplerSpec::from_json(doc.at("sampler"));
    if (doc.contains("loss")) c.loss = LossSpec::from_json(doc.at("loss"));
    if (doc.contains("lambda_tail_ratio") && !doc.at("lambda_tail_ratio").is_null()) {
      c.lambda_tail_ratio = doc.at("lambda_tail_ratio").get<double>();
      require(*c.lambda_tail_ratio >= 0.0 && *c.lambda_tail_ratio <= 1.0, "lambda_tail_ratio must lie in [0, 1]");
    }
    if (doc.contains("model")) c.model = ModelSpec::from_json(doc.at("model"));
    if (doc.contains("schedule")) c.schedule = TrainSchedule::from_json(doc.at("schedule"));
    if (doc.contains("telemetry")) {
      const auto& t = doc.at("telemetry");
      reject_unknown(t, {"log_every", "gradients", "probabilities", "dump_beta", "grouping"}, "telemetry");
      c.telemetry.log_every = t.value("log_every", c.telemetry.log_every);
      c.telemetry.gradients = t.value("gradients", c.telemetry.gradients);
      c.telemetry.probabilities = t.value("probabilities", c.telemetry.probabilities);
      c.telemetry.dump_beta = t.value("dump_beta", c.telemetry.dump_beta);
      c.telemetry.grouping = t.value("grouping", c.telemetry.grouping);
      require(c.telemetry.grouping == "lvis" || c.telemetry.grouping == "shot",
              "telemetry.grouping must be 'lvis' or 'shot'");
      require(c.telemetry.log_every > 0, "telemetry.log_every must be positive");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value) {
  require(!dotted_key.empty(), "override: empty key");
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const auto part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!part.empty(), "override: malformed key '" + dotted_key + "'");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_override(doc, key, value);
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return doc;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::uint64_t data_seed(const RunConfig& c) { return c.dataset.seed.value_or(c.seed); }

}  // namespace

DatasetPair materialize_dataset(const RunConfig& config) {
  if (config.dataset.path) {
    DatasetPair p{load_dataset(*config.dataset.path / "train"), load_dataset(*config.dataset.path / "test")};
    require(p.train.dim == p.test.dim && p.train.num_classes == p.test.num_classes,
            "dataset: train and test splits disagree on shape");
    return p;
  }
  auto train = synth_classification_dataset(config.dataset.profile, config.dataset.clusters, data_seed(config));
  auto test = synth_balanced_split(train, config.dataset.test_per_class, data_seed(config));
  return {std::move(train), std::move(test)};
}

DatasetPair cmd_gen_data(const RunConfig& config, const fs::path& out_dir) {
  auto gen = config;
  gen.dataset.path.reset();
  auto pair = materialize_dataset(gen);
  ensure_dir(out_dir);
  save_dataset(pair.train, out_dir / "train");
  save_dataset(pair.test, out_dir / "test");
  return pair;
}

Grouping make_grouping(const std::string& scheme, const FrequencyTable& table) {
  if (scheme == "shot") return shot_grouping(table);
  require(scheme == "lvis", "unknown grouping scheme '" + scheme + "'");
  return lvis_grouping(assign_groups(table));
}

LossSpec resolve_loss(const RunConfig& config, const FrequencyTable& table) {
  LossSpec loss = config.loss;
  if (config.lambda_tail_ratio && (loss.kind == LossKind::kEql || loss.kind == LossKind::kSeql)) {
    loss.lambda = lambda_for_tail_ratio(table, *config.lambda_tail_ratio);
    if (loss.threshold.kind() == ThresholdFn::Kind::kHard) loss.threshold = ThresholdFn::hard(loss.lambda);
  }
  loss.validate();
  return loss;
}

namespace {

nlohmann::json run_summary(const RunConfig& config, const LossSpec& loss, const FrequencyTable& table,
                           const EvalReport& eval, double tr) {
  return {{"config", config.to_json()},
          {"resolved_lambda", loss.lambda},
          {"tail_ratio", tr},
          {"train_samples", table.total_images()},
          {"num_classes", table.num_categories()},
          {"final", eval.to_json()}};
}

}  // namespace

RunOutcome cmd_train(const RunConfig& config, bool write_files) {
  const auto data = materialize_dataset(config);
  const auto table = data.train.frequency_table();
  const auto grouping = make_grouping(config.telemetry.grouping, table);
  const auto loss = resolve_loss(config, table);

  Rng init_rng = make_rng(config.seed, Stream::kInit);
  Model model = Model::init(config.model, data.train.dim, data.train.num_classes, init_rng);

  GradientLedger grads(table.num_categories());
  ProbabilityLedger probs(table.num_categories());
  std::ostringstream beta_log;
  if (config.telemetry.dump_beta) beta_log << "iter,sample,beta\n";

  TrainOptions opts;
  opts.sampler = config.sampler;
  opts.loss = loss;
  opts.schedule = config.schedule;
  opts.proposals = config.proposals;
  opts.seed = config.seed;
  opts.log_every = config.telemetry.log_every;
  opts.eval_set = &data.test;
  opts.eval_grouping = grouping;
  if (config.telemetry.gradients)
    opts.hooks.push_back([&](const IterationView& v) {
      record_gradients(grads, v.logit_grads, v.last_layer_inputs, v.batch.labels);
    });
  if (config.telemetry.probabilities)
    opts.hooks.push_back([&](const IterationView& v) { record_probabilities(probs, v.probs, v.batch.labels); });
  if (config.telemetry.dump_beta)
    opts.hooks.push_back([&](const IterationView& v) {
      for (std::size_t i = 0; i < v.betas.size(); ++i) {
        beta_log << v.iter << ',' << i << ',';
        for (auto b : v.betas[i]) beta_log << static_cast<int>(b);
        beta_log << '\n';
      }
    });

  auto result = train(std::move(model), data.train, table, opts);
  const EvalReport final_eval = result.history.rows.back().eval.value();
  const double tr = tail_ratio(loss.lambda, table);

  RunOutcome out{config, loss, final_eval, tr, std::move(grads), std::move(probs), std::move(result.model), {}};
  out.summary = run_summary(config, loss, table, final_eval, tr);

  if (write_files) {
    const auto& dir = config.out_dir;
    ensure_dir(dir);
    write_text_file(dir / "config.json", config.to_json().dump(2) + "\n");
    std::ostringstream metrics;
    result.history.write_csv(metrics);
    write_text_file(dir / "metrics.csv", metrics.str());
    write_text_file(dir / "summary.json", out.summary.dump(2) + "\n");
    std::ostringstream ledgers;
    write_ledger_csv(ledgers, table, grouping, out.gradients, out.probabilities);
    write_text_file(dir / "ledgers.csv", ledgers.str());
    write_text_file(dir / "ledgers.json", ledgers_to_json(table, out.gradients, out.probabilities).dump(1) + "\n");
    if (config.telemetry.dump_beta) write_text_file(dir / "beta_log.csv", beta_log.str());
    out.model.save(dir / "checkpoint");
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> cmd_sweep(const nlohmann::json& base, const nlohmann::json& grid, std::size_t parallel) {
  require(grid.is_object() && !grid.empty(), "sweep: parameter grid must be a non-empty object");
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  for (const auto& [key, values] : grid.items()) {
    require(values.is_array() && !values.empty(), "sweep: grid entry '" + key + "' must be a non-empty array");
    axes.emplace_back(key, values.get<std::vector<nlohmann::json>>());
  }
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.second.size();

  const auto base_config = RunConfig::from_json(base);
  const fs::path root = base_config.out_dir;
  ensure_dir(root);

  std::vector<SweepRow> rows(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    auto& row = rows[idx];
    row.index = idx;
    // Last axis varies fastest.
    std::vector<std::size_t> pick(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      pick[a] = rem % axes[a].second.size();
      rem /= axes[a].second.size();
    }
    for (std::size_t a = 0; a < axes.size(); ++a) row.params.emplace_back(axes[a].first, axes[a].second[pick[a]]);
  }

  auto run_one = [&](SweepRow& row) {
    try {
      nlohmann::json doc = base;
      for (const auto& [key, value] : row.params) apply_override(doc, key, value);
      char name[32];
      std::snprintf(name, sizeof name, "run_%03zu", row.index);
      apply_override(doc, "out_dir", (root / name).string());
      const auto outcome = cmd_train(RunConfig::from_json(doc), true);
      row.summary = outcome.summary;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(parallel, total));
  if (workers == 1) {
    for (auto& row : rows) run_one(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < total; i = next++) run_one(rows[i]);
      });
    for (auto& t : pool) t.join();
  }

  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_text_file(root / "sweep.csv", csv.str());
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  std::vector<std::string> group_names;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    for (const auto& name : r.summary.at("final").at("group_order")) group_names.push_back(name.get<std::string>());
    break;
  }
  auto csv_escape = [](std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  auto num = [](const nlohmann::json& v) {
    if (v.is_null()) return std::string("null");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return std::string(buf);
  };
  out << "run,status";
  if (!rows.empty())
    for (const auto& [key, _] : rows.front().params) out << ',' << csv_escape(key);
  out << ",top1,top5";
  for (const auto& g : group_names) out << ',' << g;
  out << ",resolved_lambda,tail_ratio,error\n";
  for (const auto& r : rows) {
    out << r.index << ',' << (r.ok ? "ok" : "failed");
    for (const auto& [_, value] : r.params) out << ',' << csv_escape(value.is_string() ? value.get<std::string>() : value.dump());
    if (r.ok) {
      const auto& fin = r.summary.at("final");
      out << ',' << num(fin.at("top1")) << ',' << num(fin.at("top5"));
      for (const auto& g : group_names) out << ',' << num(fin.at("groups").at(g).at("accuracy"));
      out << ',' << num(r.summary.at("resolved_lambda")) << ',' << num(r.summary.at("tail_ratio")) << ',';
    } else {
      out << ",null,null";
      for (std::size_t g = 0; g < group_names.size(); ++g) out << ",null";
      out << ",null,null," << csv_escape(r.error);
    }
    out << '\n';
  }
}

EvalReport cmd_eval(const fs::path& run_dir) {
  const auto config = RunConfig::from_json(read_json_file(run_dir / "config.json"));
  const auto data = materialize_dataset(config);
  const auto model = Model::load(run_dir / "checkpoint");
  const auto table = data.train.frequency_table();
  return evaluate(model, data.test, make_grouping(config.telemetry.grouping, table));
}

std::pair<GradientLedger, ProbabilityLedger> cmd_export_ledgers(const RunConfig& config,
                                                                const fs::path& checkpoint_stem,
                                                                std::size_t iterations, const fs::path& out_dir) {
  require(iterations > 0, "export-ledgers: iterations must be positive");
  const auto data = materialize_dataset(config);
  const auto table = data.train.frequency_table();
  const auto model = Model::load(checkpoint_stem);
  ReplayOptions opts{config.sampler,          resolve_loss(config, table), config.proposals,
                     config.schedule.batch_size, iterations,                 config.seed};
  GradientLedger grads(table.num_categories());
  ProbabilityLedger probs(table.num_categories());
  const std::vector<IterationHook> hooks{
      [&](const IterationView& v) { record_gradients(grads, v.logit_grads, v.last_layer_inputs, v.batch.labels); },
      [&](const IterationView& v) { record_probabilities(probs, v.probs, v.batch.labels); }};
  replay(model, data.train, table, opts, hooks);

  ensure_dir(out_dir);
  std::ostringstream csv;
  write_ledger_csv(csv, table, make_grouping(config.telemetry.grouping, table), grads, probs);
  write_text_file(out_dir / "ledgers.csv", csv.str());
  write_text_file(out_dir / "ledgers.json", ledgers_to_json(table, grads, probs).dump(1) + "\n");
  return {std::move(grads), std::move(probs)};
}

}  // namespace eqlab
