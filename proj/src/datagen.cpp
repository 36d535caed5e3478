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

#include "eqlab/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "eqlab/error.hpp"

namespace eqlab {

void LongTailProfile::validate() const {
  require(num_classes >= 2, "profile: num_classes must be >= 2");
  require(n_max >= 1, "profile: n_max must be >= 1");
  require(imbalance_factor > 1.0 && std::isfinite(imbalance_factor), "profile: imbalance_factor must be > 1");
}

nlohmann::json LongTailProfile::to_json() const {
  return {{"num_classes", num_classes}, {"n_max", n_max}, {"imbalance_factor", imbalance_factor}};
}

LongTailProfile LongTailProfile::from_json(const nlohmann::json& doc) {
  try {
    LongTailProfile p;
    p.num_classes = doc.value("num_classes", p.num_classes);
    p.n_max = doc.value("n_max", p.n_max);
    p.imbalance_factor = doc.value("imbalance_factor", p.imbalance_factor);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("profile json: ") + e.what());
  }
}

std::vector<std::int64_t> make_longtail_counts(const LongTailProfile& profile) {
  profile.validate();
  const auto c = profile.num_classes;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(c));
  for (std::int64_t i = 0; i < c; ++i) {
    const double exact = static_cast<double>(profile.n_max) *
                         std::pow(1.0 / profile.imbalance_factor, static_cast<double>(i) / (static_cast<double>(c) - 1.0));
    double n = std::floor(exact);
    if ((n + 1.0) - exact <= 1e-9 * exact) n += 1.0;
    counts[i] = static_cast<std::int64_t>(n);
    if (counts[i] < 1)
      throw ConfigError("profile: class " + std::to_string(i) + " rounds to zero samples (n_max / IF too small)");
  }
  return counts;
}

// ---------------------------------------------------------------------------

std::vector<std::int64_t> SyntheticClassDataset::class_counts() const {
  std::vector<std::int64_t> counts(num_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

FrequencyTable SyntheticClassDataset::frequency_table() const {
  return FrequencyTable::build(class_counts(), static_cast<std::int64_t>(size()));
}

namespace {

std::vector<double> make_class_means(std::size_t num_classes, std::size_t dim, double radius, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(num_classes * dim);
  for (auto& v : means) v = normal(rng);
  const bool orthonormal = num_classes <= dim;
  for (std::size_t c = 0; c < num_classes; ++c) {
    double* row = means.data() + c * dim;
    if (orthonormal) {
      // Gram-Schmidt against the earlier rows.
      for (std::size_t k = 0; k < c; ++k) {
        const double* prev = means.data() + k * dim;
        const double dot = std::inner_product(row, row + dim, prev, 0.0);
        for (std::size_t t = 0; t < dim; ++t) row[t] -= dot * prev[t];
      }
    }
    const double norm = std::sqrt(std::inner_product(row, row + dim, row, 0.0));
    for (std::size_t t = 0; t < dim; ++t) row[t] /= norm;
  }
  for (auto& v : means) v *= radius;
  return means;
}

void append_samples(SyntheticClassDataset& data, int label, std::int64_t count, Rng& rng) {
  std::normal_distribution<double> noise(0.0, data.noise_sigma);
  const double* mean = data.class_means.data() + static_cast<std::size_t>(label) * data.dim;
  for (std::int64_t s = 0; s < count; ++s) {
    for (std::size_t t = 0; t < data.dim; ++t)
      data.features.push_back(static_cast<float>(mean[t] + noise(rng)));
    data.labels.push_back(label);
  }
}

}  // namespace

SyntheticClassDataset synth_classification_dataset(const LongTailProfile& profile, const ClusterOptions& options,
                                                   std::uint64_t seed) {
  require(options.feature_dim >= 2, "dataset: feature_dim must be >= 2");
  require(options.noise_sigma > 0.0, "dataset: noise_sigma must be > 0");
  require(options.mean_radius > 0.0, "dataset: mean_radius must be > 0");
  const auto counts = make_longtail_counts(profile);

  SyntheticClassDataset data;
  data.dim = options.feature_dim;
  data.num_classes = counts.size();
  data.noise_sigma = options.noise_sigma;
  data.profile = profile;
  data.seed = seed;
  Rng rng = make_rng(seed, Stream::kData);
  data.class_means = make_class_means(data.num_classes, data.dim, options.mean_radius, rng);
  const auto total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  data.features.reserve(static_cast<std::size_t>(total) * data.dim);
  data.labels.reserve(static_cast<std::size_t>(total));
  for (std::size_t c = 0; c < counts.size(); ++c) append_samples(data, static_cast<int>(c), counts[c], rng);
  return data;
}

SyntheticClassDataset synth_balanced_split(const SyntheticClassDataset& train, std::size_t per_class,
                                           std::uint64_t seed) {
  require(per_class >= 1, "balanced split: per_class must be >= 1");
  SyntheticClassDataset out;
  out.dim = train.dim;
  out.num_classes = train.num_classes;
  out.class_means = train.class_means;
  out.noise_sigma = train.noise_sigma;
  out.seed = seed;
  Rng rng = make_rng(seed, Stream::kTestData);
  for (std::size_t c = 0; c < out.num_classes; ++c)
    append_samples(out, static_cast<int>(c), static_cast<std::int64_t>(per_class), rng);
  return out;
}

// ---------------------------------------------------------------------------

Batch make_batch(const SyntheticClassDataset& data, std::span<const std::size_t> indices) {
  Batch b;
  b.dim = data.dim;
  b.features.reserve(indices.size() * data.dim);
  b.labels.reserve(indices.size());
  for (auto i : indices) {
    require(i < data.size(), "batch: sample index out of range");
    for (float v : data.row(i)) b.features.push_back(static_cast<double>(v));
    b.labels.push_back(SampleLabel::foreground(data.labels[i]));
  }
  return b;
}

std::size_t ProposalConfig::foreground_per_batch() const {
  const auto parts = static_cast<std::size_t>(fg_parts + bg_parts);
  return (batch_size * static_cast<std::size_t>(fg_parts) + parts / 2) / parts;
}

void ProposalConfig::validate() const {
  require(fg_parts >= 0 && bg_parts >= 0 && fg_parts + bg_parts > 0, "proposals: ratio parts must be >= 0");
  require(batch_size > 0, "proposals: batch_size must be positive");
}

nlohmann::json ProposalConfig::to_json() const {
  return {{"fg_bg_ratio", {fg_parts, bg_parts}},
          {"batch_size", batch_size},
          {"image_level_sets", image_level_sets},
          {"negative_set_size", negative_set_size}};
}

ProposalConfig ProposalConfig::from_json(const nlohmann::json& doc) {
  try {
    ProposalConfig p;
    if (doc.contains("fg_bg_ratio")) {
      const auto r = doc.at("fg_bg_ratio").get<std::vector<std::int64_t>>();
      require(r.size() == 2, "proposals: fg_bg_ratio must have two entries");
      p.fg_parts = r[0];
      p.bg_parts = r[1];
    }
    p.batch_size = doc.value("batch_size", p.batch_size);
    p.image_level_sets = doc.value("image_level_sets", p.image_level_sets);
    p.negative_set_size = doc.value("negative_set_size", p.negative_set_size);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("proposal config json: ") + e.what());
  }
}

ProposalStream::ProposalStream(const FrequencyTable& table, ProposalConfig config, std::uint64_t seed)
    : config_(config),
      num_classes_(table.num_categories()),
      rng_(make_rng(seed, Stream::kSampler)),
      background_rng_(make_rng(seed, Stream::kBackground)) {
  config_.validate();
  require(num_classes_ > 0, "proposals: empty frequency table");
  const auto counts = table.counts();
  require(std::any_of(counts.begin(), counts.end(), [](auto n) { return n > 0; }),
          "proposals: frequency table has no images");
  category_draw_ = std::discrete_distribution<std::size_t>(counts.begin(), counts.end());
}

ProposalStream::ProposalStream(const SyntheticClassDataset& source, ProposalConfig config, SamplerSpec sampler,
                               std::uint64_t seed)
    : config_(config),
      num_classes_(source.num_classes),
      source_(&source),
      rng_(make_rng(seed, Stream::kSampler)),
      background_rng_(make_rng(seed, Stream::kBackground)) {
  config_.validate();
  require(source.size() > 0, "proposals: empty source dataset");
  sampler_.emplace(sampler, source.labels, source.num_classes, make_rng(seed, Stream::kSampler));
}

Batch ProposalStream::next() {
  const auto num_fg = config_.foreground_per_batch();
  const auto num_bg = config_.batch_size - num_fg;
  Batch b;
  if (source_ != nullptr) {
    b.dim = source_->dim;
    if (num_fg > 0) b = make_batch(*source_, sampler_->next_batch(num_fg));
    std::normal_distribution<double> noise(0.0, source_->noise_sigma);
    for (std::size_t i = 0; i < num_bg; ++i) {
      for (std::size_t t = 0; t < b.dim; ++t) b.features.push_back(noise(background_rng_));
      b.labels.push_back(SampleLabel::background());
    }
  } else {
    b.labels.reserve(config_.batch_size);
    for (std::size_t i = 0; i < num_fg; ++i)
      b.labels.push_back(SampleLabel::foreground(static_cast<int>(category_draw_(rng_))));
    for (std::size_t i = 0; i < num_bg; ++i) b.labels.push_back(SampleLabel::background());
  }
  if (config_.image_level_sets) attach_sets(b, num_fg);
  return b;
}

// The whole batch plays the role of one image: its positive set is every
// category present, its negative set a random sample of absent categories.
void ProposalStream::attach_sets(Batch& batch, std::size_t num_fg) {
  std::vector<int> present;
  for (std::size_t i = 0; i < num_fg; ++i) present.push_back(batch.labels[i].category);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  std::vector<int> absent;
  for (int c = 0; c < static_cast<int>(num_classes_); ++c)
    if (!std::binary_search(present.begin(), present.end(), c)) absent.push_back(c);
  std::vector<int> negative;
  const auto k = std::min(config_.negative_set_size, absent.size());
  std::sample(absent.begin(), absent.end(), std::back_inserter(negative), static_cast<std::ptrdiff_t>(k),
              background_rng_);
  for (auto& label : batch.labels) {
    label.known_positive = present;
    label.known_negative = negative;
  }
}

// ---------------------------------------------------------------------------

void write_f32_le(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  std::vector<unsigned char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<float> read_f32_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % 4 != 0) throw IoError("'" + path.string() + "' is not a float32 array");
  std::vector<float> values(buf.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_dataset(const SyntheticClassDataset& data, const std::filesystem::path& stem) {
  write_f32_le(with_suffix(stem, ".bin"), data.features);
  nlohmann::json side{{"format", "eqlab-dataset"},
                      {"dtype", "float32"},
                      {"byte_order", "little"},
                      {"num_samples", data.size()},
                      {"dim", data.dim},
                      {"num_classes", data.num_classes},
                      {"seed", data.seed},
                      {"noise_sigma", data.noise_sigma},
                      {"counts", data.class_counts()},
                      {"class_means", data.class_means},
                      {"labels", data.labels}};
  if (data.profile) side["profile"] = data.profile->to_json();
  const auto path = with_suffix(stem, ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << side.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SyntheticClassDataset load_dataset(const std::filesystem::path& stem) {
  const auto path = with_suffix(stem, ".json");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  nlohmann::json side;
  try {
    in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
  SyntheticClassDataset data;
  try {
    data.dim = side.at("dim").get<std::size_t>();
    data.num_classes = side.at("num_classes").get<std::size_t>();
    data.seed = side.at("seed").get<std::uint64_t>();
    data.noise_sigma = side.at("noise_sigma").get<double>();
    data.class_means = side.at("class_means").get<std::vector<double>>();
    data.labels = side.at("labels").get<std::vector<int>>();
    if (side.contains("profile")) data.profile = LongTailProfile::from_json(side.at("profile"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
  data.features = read_f32_le(with_suffix(stem, ".bin"));
  require(data.features.size() == data.labels.size() * data.dim,
          "'" + stem.string() + "': feature file size does not match the sidecar");
  require(data.class_means.size() == data.num_classes * data.dim, "'" + path.string() + "': bad class_means size");
  for (int y : data.labels)
    require(y >= 0 && static_cast<std::size_t>(y) < data.num_classes, "'" + path.string() + "': label out of range");
  return data;
}

}  // namespace eqlab
