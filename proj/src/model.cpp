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

#include "eqlab/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "eqlab/datagen.hpp"
#include "eqlab/error.hpp"

namespace eqlab {

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j{{"kind", kind == Kind::kLinear ? "linear" : "mlp"}, {"init_std", init_std}};
  if (kind == Kind::kMlp) j["hidden_dim"] = hidden_dim;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& doc) {
  try {
    ModelSpec s;
    const auto kind = doc.value("kind", std::string("linear"));
    if (kind == "linear") {
      s.kind = Kind::kLinear;
    } else if (kind == "mlp") {
      s.kind = Kind::kMlp;
    } else {
      throw ConfigError("unknown model kind '" + kind + "'");
    }
    s.hidden_dim = doc.value("hidden_dim", s.hidden_dim);
    s.init_std = doc.value("init_std", s.init_std);
    require(s.hidden_dim >= 1, "model: hidden_dim must be >= 1");
    require(s.init_std >= 0.0, "model: init_std must be >= 0");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model json: ") + e.what());
  }
}

Model Model::init(const ModelSpec& spec, std::size_t input_dim, std::size_t num_classes, Rng& rng) {
  require(input_dim >= 1 && num_classes >= 1, "model: dimensions must be positive");
  Model m;
  m.spec_ = spec;
  m.input_dim_ = input_dim;
  m.num_classes_ = num_classes;
  std::normal_distribution<double> normal(0.0, spec.init_std);
  if (spec.kind == ModelSpec::Kind::kMlp) {
    // He-style scale keeps ReLU activations alive regardless of init_std.
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
    m.hidden_w.resize(spec.hidden_dim * input_dim);
    for (auto& w : m.hidden_w) w = he(rng);
    m.hidden_b.assign(spec.hidden_dim, 0.0);
  }
  m.out_w.resize(num_classes * m.last_dim());
  for (auto& w : m.out_w) w = spec.init_std > 0.0 ? normal(rng) : 0.0;
  m.out_b.assign(num_classes, 0.0);
  return m;
}

std::size_t Model::last_dim() const {
  return spec_.kind == ModelSpec::Kind::kMlp ? spec_.hidden_dim : input_dim_;
}

void Model::forward(std::span<const double> x, std::vector<double>& hidden, std::vector<double>& logits) const {
  if (x.size() != input_dim_)
    throw ConfigError("model: input has " + std::to_string(x.size()) + " features, expected " +
                      std::to_string(input_dim_));
  const auto d = last_dim();
  hidden.resize(d);
  if (spec_.kind == ModelSpec::Kind::kMlp) {
    for (std::size_t h = 0; h < d; ++h) {
      const double* row = hidden_w.data() + h * input_dim_;
      double a = hidden_b[h];
      for (std::size_t t = 0; t < input_dim_; ++t) a += row[t] * x[t];
      hidden[h] = a > 0.0 ? a : 0.0;
    }
  } else {
    std::copy(x.begin(), x.end(), hidden.begin());
  }
  logits.resize(num_classes_);
  for (std::size_t j = 0; j < num_classes_; ++j) {
    const double* row = out_w.data() + j * d;
    double z = out_b[j];
    for (std::size_t t = 0; t < d; ++t) z += row[t] * hidden[t];
    logits[j] = z;
  }
}

std::vector<double> Model::logits(std::span<const double> x) const {
  std::vector<double> hidden;
  std::vector<double> z;
  forward(x, hidden, z);
  return z;
}

void Model::save(const std::filesystem::path& stem) const {
  std::vector<float> flat;
  flat.reserve(hidden_w.size() + hidden_b.size() + out_w.size() + out_b.size());
  for (const auto* part : {&hidden_w, &hidden_b, &out_w, &out_b})
    for (double v : *part) flat.push_back(static_cast<float>(v));
  write_f32_le(stem.string() + ".bin", flat);
  nlohmann::json side{{"format", "eqlab-checkpoint"},
                      {"dtype", "float32"},
                      {"byte_order", "little"},
                      {"model", spec_.to_json()},
                      {"input_dim", input_dim_},
                      {"num_classes", num_classes_},
                      {"layout", {"hidden_w", "hidden_b", "out_w", "out_b"}}};
  const auto path = stem.string() + ".json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << side.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

Model Model::load(const std::filesystem::path& stem) {
  const auto path = stem.string() + ".json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json side;
  try {
    in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  Model m;
  try {
    m.spec_ = ModelSpec::from_json(side.at("model"));
    m.input_dim_ = side.at("input_dim").get<std::size_t>();
    m.num_classes_ = side.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  const auto flat = read_f32_le(stem.string() + ".bin");
  const bool mlp = m.spec_.kind == ModelSpec::Kind::kMlp;
  const std::size_t hw = mlp ? m.spec_.hidden_dim * m.input_dim_ : 0;
  const std::size_t hb = mlp ? m.spec_.hidden_dim : 0;
  const std::size_t ow = m.num_classes_ * m.last_dim();
  require(flat.size() == hw + hb + ow + m.num_classes_, "'" + stem.string() + "': checkpoint size mismatch");
  auto it = flat.begin();
  auto take = [&](std::vector<double>& dst, std::size_t n) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(n));
    it += static_cast<std::ptrdiff_t>(n);
  };
  take(m.hidden_w, hw);
  take(m.hidden_b, hb);
  take(m.out_w, ow);
  take(m.out_b, m.num_classes_);
  return m;
}

}  // namespace eqlab
