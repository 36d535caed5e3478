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

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eqlab/freqstats.hpp"
#include "eqlab/rng.hpp"

namespace eqlab {

inline constexpr int kBackground = -1;

/// Ground truth for one sample. `category` is kBackground or a foreground
/// index in [0, C). The known sets are the image-level positive / negative
/// category sets; they are kept sorted and must be disjoint.
struct SampleLabel {
  int category = kBackground;
  std::vector<int> known_positive;
  std::vector<int> known_negative;

  static SampleLabel background() { return {}; }
  static SampleLabel foreground(int c) { return SampleLabel{c, {}, {}}; }

  bool is_background() const { return category == kBackground; }
  bool is_known(int j) const;
  // Throws ConfigError unless the sets are sorted, in range and disjoint.
  void validate(std::size_t num_classes) const;
};

enum class LossKind { kSoftmaxCe, kSigmoidCe, kEql, kSeql, kFocal, kClassBalanced };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

/// Whether the loss normalizes over categories (softmax) or scores each
/// category independently (sigmoid). Sigmoid-family losses accept background.
bool is_softmax_family(LossKind kind);

/// Per-call vs per-category Bernoulli draw for the stochastic softmax variant.
enum class BetaMode { kPerCategory, kShared };

struct LossSpec {
  LossKind kind = LossKind::kSigmoidCe;
  // eql / seql
  double lambda = 0.0;
  ThresholdFn threshold = ThresholdFn::hard(0.0);
  bool use_excluding_fn = true;  // eql: background keeps every negative gradient
  bool use_known_sets = true;    // eql: image-level sets restore weight 1
  // seql
  double gamma_ignore = 0.0;
  BetaMode beta_mode = BetaMode::kPerCategory;
  // focal
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  // class_balanced
  double cb_beta = 0.999;

  static LossSpec softmax_ce() { return {.kind = LossKind::kSoftmaxCe}; }
  static LossSpec sigmoid_ce() { return {.kind = LossKind::kSigmoidCe}; }
  static LossSpec eql(double lambda);
  static LossSpec eql(ThresholdFn fn);
  static LossSpec seql(double lambda, double gamma_ignore);
  static LossSpec focal(double gamma = 2.0, double alpha = 0.25);
  static LossSpec class_balanced(double beta = 0.999);

  void validate() const;

  nlohmann::json to_json() const;
  static LossSpec from_json(const nlohmann::json& doc);
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dz_j
  std::vector<double> prob;  // the loss's own per-category probability (p or p~)
};

struct SeqlResult {
  LossResult result;
  std::vector<std::uint8_t> beta;  // realized Bernoulli draws, one per category
};

LossResult softmax_ce(std::span<const double> logits, const SampleLabel& label);
LossResult sigmoid_ce(std::span<const double> logits, const SampleLabel& label);

/// w_j = 1 - E(r) T(f_j) (1 - y_j), forced to 1 for categories in the
/// image-level known sets.
std::vector<double> eql_weights(const SampleLabel& label, const FrequencyTable& table, const LossSpec& spec);

LossResult eql_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                    const LossSpec& spec);

/// Draws beta ~ Bernoulli(gamma_ignore) and evaluates the stochastic softmax
/// loss. The realized draw is returned for audit and replay.
SeqlResult seql_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                     const LossSpec& spec, Rng& rng);

/// Same loss with a frozen beta realization (one entry per category).
LossResult seql_loss_fixed_beta(std::span<const double> logits, const SampleLabel& label,
                                const FrequencyTable& table, const LossSpec& spec,
                                std::span<const std::uint8_t> beta);

LossResult focal_loss(std::span<const double> logits, const SampleLabel& label, const LossSpec& spec);

/// Effective-number weights (1 - beta) / (1 - beta^N_c), normalized to sum to C.
std::vector<double> class_balanced_weights(const FrequencyTable& table, double beta);

LossResult class_balanced_loss(std::span<const double> logits, const SampleLabel& label,
                               const FrequencyTable& table, const LossSpec& spec);

/// Dispatches on spec.kind. `beta_out`, when non-null, receives the seql draw.
LossResult compute_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                        const LossSpec& spec, Rng& rng, std::vector<std::uint8_t>* beta_out = nullptr);

}  // namespace eqlab
