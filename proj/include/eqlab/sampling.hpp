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
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eqlab/rng.hpp"

namespace eqlab {

enum class SamplerKind { kUniform, kClassAware, kRepeatFactor };

std::string_view to_string(SamplerKind kind);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::kUniform;
  double rf_threshold = 1e-3;  // repeat_factor only

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerSpec from_json(const nlohmann::json& doc);
};

/// r(c) = max(1, sqrt(t / f_c)).
double repeat_factor(double threshold, double freq);

/// Draws sample indices from a single-label dataset.
///  - uniform: i.i.d. over samples
///  - class_aware: uniform over non-empty categories, then uniform within
///  - repeat_factor: each sample weighted by its category's repeat factor
/// Owns its random stream; not shareable across threads.
class Sampler {
 public:
  Sampler(SamplerSpec spec, std::span<const int> labels, std::size_t num_classes, Rng rng);

  std::vector<std::size_t> next_batch(std::size_t batch_size);
  std::size_t next();

  /// Exact probability of drawing each sample on a single draw.
  std::vector<double> sample_probabilities() const;

  const SamplerSpec& spec() const { return spec_; }

 private:
  SamplerSpec spec_;
  std::size_t num_samples_ = 0;
  std::vector<std::vector<std::size_t>> by_category_;
  std::vector<std::size_t> nonempty_;
  std::vector<double> category_weight_;  // unnormalized draw weight per category
  std::discrete_distribution<std::size_t> category_draw_;
  Rng rng_;
};

}  // namespace eqlab
