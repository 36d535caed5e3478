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

#include "eqlab/freqstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eqlab/error.hpp"

namespace eqlab {

FrequencyTable FrequencyTable::build(std::span<const std::int64_t> counts, std::int64_t total_images) {
  require(total_images > 0, "frequency table: total_images must be positive");
  std::vector<std::int64_t> c(counts.begin(), counts.end());
  std::vector<double> f(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) {
    require(c[j] >= 0, "frequency table: negative count for category " + std::to_string(j));
    require(c[j] <= total_images,
            "frequency table: count for category " + std::to_string(j) + " exceeds total_images");
    f[j] = static_cast<double>(c[j]) / static_cast<double>(total_images);
  }
  return FrequencyTable(std::move(c), std::move(f), total_images);
}

std::vector<std::size_t> FrequencyTable::order_by_count_desc() const {
  std::vector<std::size_t> order(counts_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [this](std::size_t a, std::size_t b) { return counts_[a] > counts_[b]; });
  return order;
}

nlohmann::json FrequencyTable::to_json() const {
  return {{"total_images", total_images_}, {"counts", counts_}};
}

FrequencyTable FrequencyTable::from_json(const nlohmann::json& doc) {
  try {
    auto counts = doc.at("counts").get<std::vector<std::int64_t>>();
    return build(counts, doc.at("total_images").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("frequency table json: ") + e.what());
  }
}

std::string_view to_string(Group g) {
  switch (g) {
    case Group::kRare: return "rare";
    case Group::kCommon: return "common";
    case Group::kFrequent: return "frequent";
  }
  return "?";
}

std::vector<std::size_t> GroupAssignment::members(Group g) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < group.size(); ++j)
    if (group[j] == g) out.push_back(j);
  return out;
}

GroupAssignment assign_groups(const FrequencyTable& table, GroupThresholds thresholds) {
  require(thresholds.rare_max >= 1 && thresholds.common_max > thresholds.rare_max,
          "group thresholds must satisfy 1 <= rare_max < common_max");
  GroupAssignment out;
  out.thresholds = thresholds;
  out.group.reserve(table.num_categories());
  for (std::size_t j = 0; j < table.num_categories(); ++j) {
    const auto n = table.count(j);
    if (n < 1) throw ConfigError("category " + std::to_string(j) + " has no images; group undefined");
    if (n <= thresholds.rare_max) {
      out.group.push_back(Group::kRare);
    } else if (n <= thresholds.common_max) {
      out.group.push_back(Group::kCommon);
    } else {
      out.group.push_back(Group::kFrequent);
    }
  }
  return out;
}

Grouping lvis_grouping(const GroupAssignment& groups) {
  Grouping g;
  g.names = {"rare", "common", "frequent"};
  g.group_of.reserve(groups.group.size());
  for (auto grp : groups.group) g.group_of.push_back(static_cast<std::size_t>(grp));
  return g;
}

Grouping shot_grouping(const FrequencyTable& table, std::int64_t many_min_exclusive,
                       std::int64_t few_max_exclusive) {
  require(few_max_exclusive <= many_min_exclusive + 1, "shot grouping: few bound above many bound");
  Grouping g;
  g.names = {"many", "medium", "few"};
  for (auto n : table.counts()) {
    if (n > many_min_exclusive) {
      g.group_of.push_back(0);
    } else if (n < few_max_exclusive) {
      g.group_of.push_back(2);
    } else {
      g.group_of.push_back(1);
    }
  }
  return g;
}

int threshold_indicator(double f, double lambda) { return f < lambda ? 1 : 0; }

ThresholdFn ThresholdFn::hard(double lambda) {
  require(lambda >= 0.0 && std::isfinite(lambda), "threshold lambda must be finite and >= 0");
  return ThresholdFn(Kind::kHard, lambda, 0.0, 0.0);
}

ThresholdFn ThresholdFn::exponential(double a, double n) {
  require(a > 0.0 && n > 0.0, "exponential decay requires a > 0 and n > 0");
  return ThresholdFn(Kind::kExponential, a, n, 0.0);
}

ThresholdFn ThresholdFn::gompertz(double a, double b, double c) {
  require(a > 0.0 && b > 0.0 && c > 0.0, "gompertz decay requires a, b, c > 0");
  return ThresholdFn(Kind::kGompertz, a, b, c);
}

double ThresholdFn::operator()(double f) const {
  switch (kind_) {
    case Kind::kHard:
      return static_cast<double>(threshold_indicator(f, p0_));
    case Kind::kExponential:
      return std::clamp(1.0 - std::pow(p0_ * f, p1_), 0.0, 1.0);
    case Kind::kGompertz:
      return std::clamp(1.0 - p0_ * std::exp(-p1_ * std::exp(-p2_ * f)), 0.0, 1.0);
  }
  return 0.0;
}

nlohmann::json ThresholdFn::to_json() const {
  switch (kind_) {
    case Kind::kHard: return {{"kind", "hard"}};
    case Kind::kExponential: return {{"kind", "exponential"}, {"a", p0_}, {"n", p1_}};
    case Kind::kGompertz: return {{"kind", "gompertz"}, {"a", p0_}, {"b", p1_}, {"c", p2_}};
  }
  return {};
}

// The hard variant's lambda lives in the owning LossSpec; callers that need a
// standalone hard threshold pass {"kind":"hard","lambda":x}.
ThresholdFn ThresholdFn::from_json(const nlohmann::json& doc) {
  try {
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "hard") return hard(doc.value("lambda", 0.0));
    if (kind == "exponential") return exponential(doc.at("a").get<double>(), doc.at("n").get<double>());
    if (kind == "gompertz")
      return gompertz(doc.at("a").get<double>(), doc.at("b").get<double>(), doc.at("c").get<double>());
    throw ConfigError("unknown threshold function kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("threshold function json: ") + e.what());
  }
}

double eval_threshold_fn(const ThresholdFn& fn, double f) { return fn(f); }

double tail_ratio(double lambda, const FrequencyTable& table) {
  require(table.num_categories() > 0, "tail ratio of an empty table");
  std::int64_t tail = 0;
  std::int64_t all = 0;
  for (std::size_t j = 0; j < table.num_categories(); ++j) {
    all += table.count(j);
    if (threshold_indicator(table.freq(j), lambda)) tail += table.count(j);
  }
  require(all > 0, "tail ratio of a table with no images");
  return static_cast<double>(tail) / static_cast<double>(all);
}

double lambda_for_tail_ratio(const FrequencyTable& table, double target) {
  require(table.num_categories() > 0, "lambda search on an empty table");
  std::vector<double> candidates{0.0};
  for (double f : table.freqs()) candidates.push_back(std::nextafter(f, 2.0));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best = 0.0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double lam : candidates) {
    const double gap = std::abs(tail_ratio(lam, table) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = lam;
    }
  }
  return best;
}

}  // namespace eqlab
