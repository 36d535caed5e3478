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
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "eqlab/datagen.hpp"
#include "eqlab/freqstats.hpp"
#include "eqlab/losses.hpp"
#include "eqlab/model.hpp"
#include "eqlab/sampling.hpp"
#include "eqlab/telemetry.hpp"

namespace eqlab {

/// Linear warmup from warmup_start_lr to base_lr, then base_lr scaled by
/// decay_factor^k after the k-th decay point.
struct TrainSchedule {
  std::size_t total_iters = 2000;
  double base_lr = 0.1;
  std::vector<std::size_t> decay_points{1000, 1500};
  double decay_factor = 0.1;
  std::size_t warmup_iters = 0;
  double warmup_start_lr = 0.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;

  /// 12.8K iterations at 0.2, warmup 0.1 -> 0.2 over 400, decays at 6.4K / 9.6K.
  static TrainSchedule cifar_lt();
  /// 2K iterations at 0.1, batch 128, decays at 1K / 1.5K.
  static TrainSchedule desk();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSchedule from_json(const nlohmann::json& doc);
};

double lr_at(const TrainSchedule& schedule, std::size_t iter);

/// The batch sequence of a run: classification batches drawn by the sampler,
/// or proposal batches (sampler-drawn foreground plus background) when
/// `proposals` is set. A pure function of (data, config, seed).
class BatchSource {
 public:
  BatchSource(const SyntheticClassDataset& data, const SamplerSpec& sampler,
              const std::optional<ProposalConfig>& proposals, std::size_t batch_size, std::uint64_t seed);

  Batch next();

 private:
  std::variant<Sampler, ProposalStream> impl_;
  const SyntheticClassDataset* data_;
  std::size_t batch_size_;
};

/// Everything a telemetry hook sees for one iteration. Gradient and
/// probability blocks are per sample (batch x categories), unscaled by the
/// batch mean; `last_layer_inputs` is batch x model.last_dim().
struct IterationView {
  std::size_t iter = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  const Batch& batch;
  std::span<const double> last_layer_inputs;
  std::span<const double> logit_grads;
  std::span<const double> probs;
  std::span<const std::vector<std::uint8_t>> betas;  // seql draws, one per sample
  const Model& model;                                 // after this iteration's update
};

using IterationHook = std::function<void(const IterationView&)>;

struct MetricsRow {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean batch loss over the logging window
  std::optional<EvalReport> eval;
};

struct MetricsHistory {
  std::vector<std::string> group_names;
  std::vector<MetricsRow> rows;

  /// iter,lr,loss,top1,top5,<group>... with one row per logged iteration.
  void write_csv(std::ostream& out) const;
};

struct TrainOptions {
  SamplerSpec sampler;
  LossSpec loss;
  TrainSchedule schedule;
  std::optional<ProposalConfig> proposals;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  const SyntheticClassDataset* eval_set = nullptr;
  Grouping eval_grouping;
  std::vector<IterationHook> hooks;
};

struct TrainResult {
  Model model;
  MetricsHistory history;
};

/// SGD with heavy-ball momentum (v <- m v + g; w <- w - lr v), weight decay
/// on weights but not biases, batch-mean reduction. Throws NumericError if
/// the loss or any parameter becomes non-finite.
TrainResult train(Model model, const SyntheticClassDataset& data, const FrequencyTable& table,
                  const TrainOptions& options);

struct ReplayOptions {
  SamplerSpec sampler;
  LossSpec loss;
  std::optional<ProposalConfig> proposals;
  std::size_t batch_size = 128;
  std::size_t iterations = 100;
  std::uint64_t seed = 0;
};

/// Runs the batch stream of `seed` through a frozen model and reports each
/// iteration to the hooks without touching the weights.
void replay(const Model& model, const SyntheticClassDataset& data, const FrequencyTable& table,
            const ReplayOptions& options, std::span<const IterationHook> hooks);

}  // namespace eqlab
