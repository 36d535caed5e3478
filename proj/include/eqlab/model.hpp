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
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "eqlab/rng.hpp"

namespace eqlab {

struct ModelSpec {
  enum class Kind { kLinear, kMlp };
  Kind kind = Kind::kLinear;
  std::size_t hidden_dim = 64;  // mlp only
  double init_std = 0.01;

  bool operator==(const ModelSpec&) const = default;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& doc);
};

/// Linear classifier or a one-hidden-layer ReLU MLP. The last layer always
/// exposes one weight row per class; gradient telemetry reads those rows.
class Model {
 public:
  static Model init(const ModelSpec& spec, std::size_t input_dim, std::size_t num_classes, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  // Width of the last layer's input: input_dim for linear, hidden_dim for mlp.
  std::size_t last_dim() const;

  /// Last-layer input (`hidden`, resized to last_dim()) and logits for one sample.
  void forward(std::span<const double> x, std::vector<double>& hidden, std::vector<double>& logits) const;
  std::vector<double> logits(std::span<const double> x) const;

  std::span<const double> class_row(std::size_t j) const { return {out_w.data() + j * last_dim(), last_dim()}; }

  // Parameters, row-major. hidden_* are empty for the linear model.
  std::vector<double> hidden_w;  // hidden_dim x input_dim
  std::vector<double> hidden_b;
  std::vector<double> out_w;  // num_classes x last_dim
  std::vector<double> out_b;

  bool operator==(const Model&) const = default;

  /// <stem>.bin (float32, little-endian: hidden_w, hidden_b, out_w, out_b)
  /// plus <stem>.json sidecar with shapes.
  void save(const std::filesystem::path& stem) const;
  static Model load(const std::filesystem::path& stem);

 private:
  ModelSpec spec_;
  std::size_t input_dim_ = 0;
  std::size_t num_classes_ = 0;
};

}  // namespace eqlab
