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
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqlab/datagen.hpp"
#include "eqlab/freqstats.hpp"
#include "eqlab/losses.hpp"
#include "eqlab/model.hpp"

namespace eqlab {

/// Per-category accumulated L2 norms of last-layer weight-gradient
/// contributions, split by whether the sample is positive (y_j = 1) or
/// negative (y_j = 0, background included) for that category.
///
/// One contribution is ||(dL/dz_j) x||_2 = |dL/dz_j| ||x||_2 for a single
/// sample, unscaled by the batch size.
struct GradientLedger {
  std::vector<double> pos_norm_sum;
  std::vector<double> neg_norm_sum;
  std::vector<std::int64_t> pos_count;
  std::vector<std::int64_t> neg_count;
  std::int64_t iterations = 0;

  explicit GradientLedger(std::size_t num_classes = 0);

  std::size_t num_classes() const { return pos_norm_sum.size(); }

  // Mean per contribution; nullopt when nothing was recorded.
  std::optional<double> pos_mean(std::size_t j) const;
  std::optional<double> neg_mean(std::size_t j) const;
  // Mean accumulated norm per recorded iteration.
  std::optional<double> pos_per_iteration(std::size_t j) const;
  std::optional<double> neg_per_iteration(std::size_t j) const;

  GradientLedger& merge(const GradientLedger& other);
  bool operator==(const GradientLedger&) const = default;
};

/// `logit_grads` and `features` are row-major per sample (B x C, B x D).
void record_gradients(GradientLedger& ledger, std::span<const double> logit_grads, std::span<const double> features,
                      std::span<const SampleLabel> labels);

/// Sum of the ground-truth probability over each category's positive samples.
struct ProbabilityLedger {
  std::vector<double> prob_sum;
  std::vector<std::int64_t> count;

  explicit ProbabilityLedger(std::size_t num_classes = 0);

  std::optional<double> average(std::size_t j) const;
  ProbabilityLedger& merge(const ProbabilityLedger& other);
  bool operator==(const ProbabilityLedger&) const = default;
};

void record_probabilities(ProbabilityLedger& ledger, std::span<const double> probabilities,
                          std::span<const SampleLabel> labels);

struct GroupAccuracy {
  std::string name;
  std::int64_t samples = 0;
  std::int64_t correct = 0;  // top-1
  std::optional<double> accuracy;
};

struct EvalReport {
  std::int64_t samples = 0;
  std::vector<std::size_t> ks;
  std::vector<std::int64_t> correct_at_k;
  std::vector<double> accuracy_at_k;
  std::vector<GroupAccuracy> groups;

  double top1() const { return at_k(1); }
  double top5() const { return at_k(5); }
  double at_k(std::size_t k) const;
  std::optional<double> group(const std::string& name) const;

  nlohmann::json to_json() const;
};

/// Top-k over logits with ties broken toward the lower class index.
EvalReport evaluate(const Model& model, const SyntheticClassDataset& test_set, const Grouping& grouping,
                    std::vector<std::size_t> ks = {1, 5});

/// Rank of the true class (0 = predicted) under the tie-break rule.
std::size_t true_class_rank(std::span<const double> logits, std::size_t true_class);

/// Mean over the group's categories of per-iteration accumulated norms.
struct GroupNorms {
  double pos = 0.0;
  double neg = 0.0;
  std::size_t categories = 0;
};
GroupNorms group_gradient_norms(const GradientLedger& ledger, std::span<const std::size_t> categories);

/// One row per category, sorted by descending count.
void write_ledger_csv(std::ostream& out, const FrequencyTable& table, const Grouping& grouping,
                      const GradientLedger& grads, const ProbabilityLedger& probs);
nlohmann::json ledgers_to_json(const FrequencyTable& table, const GradientLedger& grads,
                               const ProbabilityLedger& probs);

}  // namespace eqlab
