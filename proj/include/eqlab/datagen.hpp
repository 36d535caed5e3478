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
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "eqlab/freqstats.hpp"
#include "eqlab/losses.hpp"
#include "eqlab/rng.hpp"
#include "eqlab/sampling.hpp"

namespace eqlab {

/// Exponential long-tail profile n_i = n_max * IF^{-i/(C-1)}.
struct LongTailProfile {
  std::int64_t num_classes = 100;
  std::int64_t n_max = 500;
  double imbalance_factor = 200.0;

  void validate() const;
  nlohmann::json to_json() const;
  static LongTailProfile from_json(const nlohmann::json& doc);
};

/// Per-class counts, truncated toward zero as in the reference CIFAR-LT
/// construction. Values within 1e-9 (relative) below an integer snap up to it
/// so that representation error never drops a count by one.
std::vector<std::int64_t> make_longtail_counts(const LongTailProfile& profile);

/// Gaussian class clusters standing in for images. Features are stored as
/// 32-bit floats so that a dataset written to disk reloads bit-exactly.
struct SyntheticClassDataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<float> features;  // row-major, size() * dim
  std::vector<int> labels;
  std::vector<double> class_means;  // num_classes * dim
  double noise_sigma = 1.0;
  std::optional<LongTailProfile> profile;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::vector<std::int64_t> class_counts() const;
  FrequencyTable frequency_table() const;
};

struct ClusterOptions {
  std::size_t feature_dim = 32;
  double noise_sigma = 1.0;
  double mean_radius = 4.0;  // norm of every class mean
};

/// Class means on random unit directions (orthonormal when C <= d) scaled to
/// `mean_radius`; per-class counts follow the profile exactly.
SyntheticClassDataset synth_classification_dataset(const LongTailProfile& profile, const ClusterOptions& options,
                                                   std::uint64_t seed);

/// Draws a balanced set (`per_class` samples each) around `train`'s means.
SyntheticClassDataset synth_balanced_split(const SyntheticClassDataset& train, std::size_t per_class,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Batches and the detection-style proposal stream

struct Batch {
  std::size_t dim = 0;
  std::vector<double> features;  // row-major, size() * dim; empty when dim == 0
  std::vector<SampleLabel> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

Batch make_batch(const SyntheticClassDataset& data, std::span<const std::size_t> indices);

struct ProposalConfig {
  std::int64_t fg_parts = 1;
  std::int64_t bg_parts = 3;
  std::size_t batch_size = 512;
  bool image_level_sets = false;    // attach known positive / negative sets
  std::size_t negative_set_size = 0;

  std::size_t foreground_per_batch() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ProposalConfig from_json(const nlohmann::json& doc);
};

/// Endless stream of proposal batches: a fixed number of foreground proposals
/// (category drawn proportional to counts, or by `sampler` when a feature
/// source is attached) followed by background proposals.
///
/// Without a feature source batches carry labels only. With one, foreground
/// features are copied from the source dataset and background features are
/// drawn from N(0, sigma^2 I).
class ProposalStream {
 public:
  ProposalStream(const FrequencyTable& table, ProposalConfig config, std::uint64_t seed);
  ProposalStream(const SyntheticClassDataset& source, ProposalConfig config, SamplerSpec sampler,
                 std::uint64_t seed);

  Batch next();

  const ProposalConfig& config() const { return config_; }

 private:
  void attach_sets(Batch& batch, std::size_t num_fg);

  ProposalConfig config_;
  std::size_t num_classes_ = 0;
  const SyntheticClassDataset* source_ = nullptr;
  std::optional<Sampler> sampler_;
  std::discrete_distribution<std::size_t> category_draw_;
  Rng rng_;
  Rng background_rng_;
};

// ---------------------------------------------------------------------------
// Files: <stem>.bin holds little-endian float32 features (row-major);
// <stem>.json holds labels, counts, dims, seed and generator settings.

void save_dataset(const SyntheticClassDataset& data, const std::filesystem::path& stem);
SyntheticClassDataset load_dataset(const std::filesystem::path& stem);

void write_f32_le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& path);

}  // namespace eqlab
