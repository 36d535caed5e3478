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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace eqlab {

/// Per-category image counts and the derived frequencies f_j = N_j / total.
/// Immutable once built. A count may not exceed the image total, but the
/// counts may sum to more than the total (multi-label images).
class FrequencyTable {
 public:
  static FrequencyTable build(std::span<const std::int64_t> counts, std::int64_t total_images);

  std::size_t num_categories() const { return counts_.size(); }
  std::int64_t total_images() const { return total_images_; }
  std::span<const std::int64_t> counts() const { return counts_; }
  std::span<const double> freqs() const { return freqs_; }
  std::int64_t count(std::size_t j) const { return counts_.at(j); }
  double freq(std::size_t j) const { return freqs_.at(j); }

  // Category indices ordered by descending count, ties by ascending index.
  std::vector<std::size_t> order_by_count_desc() const;

  nlohmann::json to_json() const;
  static FrequencyTable from_json(const nlohmann::json& doc);

  bool operator==(const FrequencyTable&) const = default;

 private:
  FrequencyTable(std::vector<std::int64_t> counts, std::vector<double> freqs, std::int64_t total)
      : counts_(std::move(counts)), freqs_(std::move(freqs)), total_images_(total) {}

  std::vector<std::int64_t> counts_;
  std::vector<double> freqs_;
  std::int64_t total_images_ = 0;
};

// ---------------------------------------------------------------------------
// Groups

enum class Group : std::uint8_t { kRare, kCommon, kFrequent };

std::string_view to_string(Group g);

struct GroupThresholds {
  std::int64_t rare_max = 10;
  std::int64_t common_max = 100;
};

struct GroupAssignment {
  std::vector<Group> group;
  GroupThresholds thresholds;

  std::vector<std::size_t> members(Group g) const;
};

/// Rare: 1..rare_max images, common: ..common_max, frequent: above.
/// Categories with zero images have no group and are rejected.
GroupAssignment assign_groups(const FrequencyTable& table, GroupThresholds thresholds = {});

/// A named partition of categories, used for per-group accuracy reports.
/// Either the rare/common/frequent split or the many/medium/few shot split.
struct Grouping {
  std::vector<std::string> names;
  std::vector<std::size_t> group_of;  // category -> index into names

  std::size_t num_groups() const { return names.size(); }
};

Grouping lvis_grouping(const GroupAssignment& groups);

/// many: > many_min_exclusive images, few: < few_max_exclusive, medium otherwise.
Grouping shot_grouping(const FrequencyTable& table, std::int64_t many_min_exclusive = 100,
                       std::int64_t few_max_exclusive = 20);

// ---------------------------------------------------------------------------
// Threshold / decay functions

/// 1 iff f < lambda (strict).
int threshold_indicator(double f, double lambda);

class ThresholdFn {
 public:
  enum class Kind { kHard, kExponential, kGompertz };

  static ThresholdFn hard(double lambda);
  // y = 1 - (a f)^n
  static ThresholdFn exponential(double a, double n);
  // y = 1 - a exp(-b exp(-c f))
  static ThresholdFn gompertz(double a, double b, double c);

  Kind kind() const { return kind_; }
  double lambda() const { return p0_; }

  /// Evaluated weight clamped to [0, 1]; the hard variant returns exactly 0 or 1.
  double operator()(double f) const;

  nlohmann::json to_json() const;
  static ThresholdFn from_json(const nlohmann::json& doc);

  bool operator==(const ThresholdFn&) const = default;

 private:
  ThresholdFn(Kind kind, double p0, double p1, double p2) : kind_(kind), p0_(p0), p1_(p1), p2_(p2) {}

  Kind kind_ = Kind::kHard;
  double p0_ = 0.0;
  double p1_ = 0.0;
  double p2_ = 0.0;
};

double eval_threshold_fn(const ThresholdFn& fn, double f);

/// TR(lambda) = sum_j T(f_j) N_j / sum_j N_j.
double tail_ratio(double lambda, const FrequencyTable& table);

/// Smallest lambda sitting just above a category frequency whose tail ratio
/// is closest to `target`. Used to pick lambda by tail-ratio criterion.
double lambda_for_tail_ratio(const FrequencyTable& table, double target);

}  // namespace eqlab
