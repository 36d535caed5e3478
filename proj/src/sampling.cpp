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

#include "eqlab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eqlab/error.hpp"

namespace eqlab {

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kUniform: return "uniform";
    case SamplerKind::kClassAware: return "class_aware";
    case SamplerKind::kRepeatFactor: return "repeat_factor";
  }
  return "?";
}

void SamplerSpec::validate() const {
  require(rf_threshold > 0.0 && rf_threshold <= 1.0, "sampler: rf_threshold must lie in (0, 1]");
}

nlohmann::json SamplerSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (kind == SamplerKind::kRepeatFactor) j["rf_threshold"] = rf_threshold;
  return j;
}

SamplerSpec SamplerSpec::from_json(const nlohmann::json& doc) {
  try {
    SamplerSpec s;
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "uniform") {
      s.kind = SamplerKind::kUniform;
    } else if (kind == "class_aware") {
      s.kind = SamplerKind::kClassAware;
    } else if (kind == "repeat_factor") {
      s.kind = SamplerKind::kRepeatFactor;
    } else {
      throw ConfigError("unknown sampler kind '" + kind + "'");
    }
    s.rf_threshold = doc.value("rf_threshold", 1e-3);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sampler json: ") + e.what());
  }
}

double repeat_factor(double threshold, double freq) {
  if (freq <= 0.0) return 1.0;
  return std::max(1.0, std::sqrt(threshold / freq));
}

Sampler::Sampler(SamplerSpec spec, std::span<const int> labels, std::size_t num_classes, Rng rng)
    : spec_(spec), num_samples_(labels.size()), by_category_(num_classes), rng_(std::move(rng)) {
  spec_.validate();
  require(!labels.empty(), "sampler: dataset is empty");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    require(c >= 0 && static_cast<std::size_t>(c) < num_classes, "sampler: label out of range");
    by_category_[c].push_back(i);
  }
  category_weight_.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto n = by_category_[c].size();
    if (n == 0) continue;
    nonempty_.push_back(c);
    const double freq = static_cast<double>(n) / static_cast<double>(num_samples_);
    switch (spec_.kind) {
      case SamplerKind::kUniform: category_weight_[c] = static_cast<double>(n); break;
      case SamplerKind::kClassAware: category_weight_[c] = 1.0; break;
      case SamplerKind::kRepeatFactor:
        category_weight_[c] = static_cast<double>(n) * repeat_factor(spec_.rf_threshold, freq);
        break;
    }
  }
  category_draw_ = std::discrete_distribution<std::size_t>(category_weight_.begin(), category_weight_.end());
}

std::size_t Sampler::next() {
  if (spec_.kind == SamplerKind::kUniform) {
    std::uniform_int_distribution<std::size_t> pick(0, num_samples_ - 1);
    return pick(rng_);
  }
  const auto& members = by_category_[category_draw_(rng_)];
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  return members[pick(rng_)];
}

std::vector<std::size_t> Sampler::next_batch(std::size_t batch_size) {
  require(batch_size > 0, "sampler: batch_size must be positive");
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = next();
  return out;
}

std::vector<double> Sampler::sample_probabilities() const {
  std::vector<double> p(num_samples_, 0.0);
  if (spec_.kind == SamplerKind::kUniform) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(num_samples_));
    return p;
  }
  double total = 0.0;
  for (double w : category_weight_) total += w;
  for (std::size_t c = 0; c < by_category_.size(); ++c) {
    const auto& members = by_category_[c];
    for (auto i : members) p[i] = category_weight_[c] / total / static_cast<double>(members.size());
  }
  return p;
}

}  // namespace eqlab
