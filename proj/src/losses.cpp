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

#include "eqlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eqlab/error.hpp"

namespace eqlab {
namespace {

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("loss: empty logit vector");
  for (double z : logits)
    if (!std::isfinite(z)) throw NumericError("loss: non-finite logit");
}

void check_label(const SampleLabel& label, std::size_t num_classes) {
  if (label.category != kBackground &&
      (label.category < 0 || static_cast<std::size_t>(label.category) >= num_classes))
    throw ConfigError("loss: label category " + std::to_string(label.category) + " outside [0, " +
                      std::to_string(num_classes) + ")");
}

void check_table(const FrequencyTable& table, std::size_t num_classes) {
  if (table.num_categories() != num_classes)
    throw ConfigError("loss: frequency table has " + std::to_string(table.num_categories()) +
                      " categories but logits have " + std::to_string(num_classes));
}

double target(const SampleLabel& label, std::size_t j) {
  return label.category == static_cast<int>(j) ? 1.0 : 0.0;
}

// Independent per-category sigmoid cross-entropy with optional per-category
// weights; null weights mean all ones. Sigmoid CE, EQL and the class-balanced
// loss all route through here so the unit-weight cases agree bit for bit.
LossResult weighted_sigmoid(std::span<const double> z, const SampleLabel& label, const double* weights,
                            double scale) {
  LossResult r;
  r.grad.resize(z.size());
  r.prob.resize(z.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double y = target(label, j);
    const double p = sigmoid(z[j]);
    // -log p for positives, -log(1 - p) for negatives.
    const double term = y > 0.0 ? softplus(-z[j]) : softplus(z[j]);
    const double g = p - y;
    if (weights != nullptr) {
      loss += weights[j] * term;
      r.grad[j] = weights[j] * g;
    } else {
      loss += term;
      r.grad[j] = g;
    }
    r.prob[j] = p;
  }
  if (scale != 1.0) {
    loss *= scale;
    for (double& g : r.grad) g *= scale;
  }
  r.loss = loss;
  return r;
}

// Softmax with a weighted normalizer: p~_j = e^{z_j} / sum_k w_k e^{z_k}.
// Plain softmax CE is the all-ones case. The max shift only ranges over
// categories with non-zero weight so the normalizer cannot underflow to zero.
LossResult weighted_softmax(std::span<const double> z, const SampleLabel& label, std::span<const double> w) {
  const auto c = static_cast<std::size_t>(label.category);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.size(); ++k)
    if (w[k] > 0.0) m = std::max(m, z[k]);
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += w[k] * std::exp(z[k] - m);

  LossResult r;
  r.grad.resize(z.size());
  r.prob.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double p = std::exp(z[j] - m) / s;
    r.prob[j] = p;
    r.grad[j] = w[j] * p - target(label, j);
  }
  r.loss = std::log(s) - (z[c] - m);
  // log(s) can round just below z_c - m when the loss is ~0.
  if (r.loss < 0.0) r.loss = 0.0;
  return r;
}

void require_foreground(const SampleLabel& label, const char* who) {
  if (label.is_background())
    throw ConfigError(std::string(who) + ": requires a foreground label (add an explicit background class)");
}

}  // namespace

// ---------------------------------------------------------------------------

bool SampleLabel::is_known(int j) const {
  return std::binary_search(known_positive.begin(), known_positive.end(), j) ||
         std::binary_search(known_negative.begin(), known_negative.end(), j);
}

void SampleLabel::validate(std::size_t num_classes) const {
  check_label(*this, num_classes);
  auto check_set = [&](const std::vector<int>& s, const char* name) {
    require(std::is_sorted(s.begin(), s.end()) && std::adjacent_find(s.begin(), s.end()) == s.end(),
            std::string("label: ") + name + " set must be sorted and unique");
    for (int j : s)
      require(j >= 0 && static_cast<std::size_t>(j) < num_classes,
              std::string("label: ") + name + " set entry out of range");
  };
  check_set(known_positive, "known_positive");
  check_set(known_negative, "known_negative");
  std::vector<int> both;
  std::set_intersection(known_positive.begin(), known_positive.end(), known_negative.begin(),
                        known_negative.end(), std::back_inserter(both));
  require(both.empty(), "label: known positive and negative sets overlap");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmaxCe: return "softmax_ce";
    case LossKind::kSigmoidCe: return "sigmoid_ce";
    case LossKind::kEql: return "eql";
    case LossKind::kSeql: return "seql";
    case LossKind::kFocal: return "focal";
    case LossKind::kClassBalanced: return "class_balanced";
  }
  return "?";
}

LossKind loss_kind_from_string(std::string_view name) {
  for (auto k : {LossKind::kSoftmaxCe, LossKind::kSigmoidCe, LossKind::kEql, LossKind::kSeql, LossKind::kFocal,
                 LossKind::kClassBalanced})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

bool is_softmax_family(LossKind kind) { return kind == LossKind::kSoftmaxCe || kind == LossKind::kSeql; }

LossSpec LossSpec::eql(double lambda) {
  LossSpec s{.kind = LossKind::kEql, .lambda = lambda, .threshold = ThresholdFn::hard(lambda)};
  return s;
}

LossSpec LossSpec::eql(ThresholdFn fn) {
  LossSpec s{.kind = LossKind::kEql, .lambda = fn.kind() == ThresholdFn::Kind::kHard ? fn.lambda() : 0.0,
             .threshold = fn};
  return s;
}

LossSpec LossSpec::seql(double lambda, double gamma_ignore) {
  LossSpec s{.kind = LossKind::kSeql, .lambda = lambda, .threshold = ThresholdFn::hard(lambda)};
  s.gamma_ignore = gamma_ignore;
  return s;
}

LossSpec LossSpec::focal(double gamma, double alpha) {
  LossSpec s{.kind = LossKind::kFocal};
  s.focal_gamma = gamma;
  s.focal_alpha = alpha;
  return s;
}

LossSpec LossSpec::class_balanced(double beta) {
  LossSpec s{.kind = LossKind::kClassBalanced};
  s.cb_beta = beta;
  return s;
}

void LossSpec::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), "loss: lambda must be finite and >= 0");
  require(gamma_ignore >= 0.0 && gamma_ignore <= 1.0, "loss: gamma_ignore must lie in [0, 1]");
  require(focal_gamma >= 0.0, "loss: focal_gamma must be >= 0");
  require(focal_alpha > 0.0 && focal_alpha <= 1.0, "loss: focal_alpha must lie in (0, 1]");
  require(cb_beta >= 0.0 && cb_beta < 1.0, "loss: cb_beta must lie in [0, 1)");
}

nlohmann::json LossSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  switch (kind) {
    case LossKind::kEql:
      j["lambda"] = lambda;
      j["threshold_fn"] = threshold.to_json();
      j["use_excluding_fn"] = use_excluding_fn;
      j["use_known_sets"] = use_known_sets;
      break;
    case LossKind::kSeql:
      j["lambda"] = lambda;
      j["threshold_fn"] = threshold.to_json();
      j["gamma_ignore"] = gamma_ignore;
      j["beta_mode"] = beta_mode == BetaMode::kShared ? "shared" : "per_category";
      break;
    case LossKind::kFocal:
      j["focal_gamma"] = focal_gamma;
      j["focal_alpha"] = focal_alpha;
      break;
    case LossKind::kClassBalanced:
      j["cb_beta"] = cb_beta;
      break;
    default:
      break;
  }
  return j;
}

LossSpec LossSpec::from_json(const nlohmann::json& doc) {
  try {
    LossSpec s;
    s.kind = loss_kind_from_string(doc.at("kind").get<std::string>());
    auto allow = [&](std::initializer_list<const char*> keys) {
      for (const auto& [key, _] : doc.items()) {
        if (key == "kind") continue;
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
          throw ConfigError("loss '" + std::string(to_string(s.kind)) + "' does not take parameter '" + key + "'");
      }
    };
    switch (s.kind) {
      case LossKind::kEql:
      case LossKind::kSeql: {
        if (s.kind == LossKind::kEql)
          allow({"lambda", "threshold_fn", "use_excluding_fn", "use_known_sets"});
        else
          allow({"lambda", "threshold_fn", "gamma_ignore", "beta_mode"});
        s.lambda = doc.value("lambda", 0.0);
        nlohmann::json fn = doc.value("threshold_fn", nlohmann::json{{"kind", "hard"}});
        if (fn.at("kind") == "hard") fn["lambda"] = s.lambda;
        s.threshold = ThresholdFn::from_json(fn);
        s.use_excluding_fn = doc.value("use_excluding_fn", true);
        s.use_known_sets = doc.value("use_known_sets", true);
        s.gamma_ignore = doc.value("gamma_ignore", 0.0);
        const auto mode = doc.value("beta_mode", std::string("per_category"));
        if (mode == "shared") {
          s.beta_mode = BetaMode::kShared;
        } else if (mode != "per_category") {
          throw ConfigError("unknown beta_mode '" + mode + "'");
        }
        break;
      }
      case LossKind::kFocal:
        allow({"focal_gamma", "focal_alpha"});
        s.focal_gamma = doc.value("focal_gamma", 2.0);
        s.focal_alpha = doc.value("focal_alpha", 0.25);
        break;
      case LossKind::kClassBalanced:
        allow({"cb_beta"});
        s.cb_beta = doc.value("cb_beta", 0.999);
        break;
      default:
        allow({});
        break;
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loss spec json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

LossResult softmax_ce(std::span<const double> logits, const SampleLabel& label) {
  check_logits(logits);
  check_label(label, logits.size());
  require_foreground(label, "softmax_ce");
  const std::vector<double> ones(logits.size(), 1.0);
  return weighted_softmax(logits, label, ones);
}

LossResult sigmoid_ce(std::span<const double> logits, const SampleLabel& label) {
  check_logits(logits);
  check_label(label, logits.size());
  return weighted_sigmoid(logits, label, nullptr, 1.0);
}

std::vector<double> eql_weights(const SampleLabel& label, const FrequencyTable& table, const LossSpec& spec) {
  const auto n = table.num_categories();
  check_label(label, n);
  const double excluding = (!spec.use_excluding_fn || !label.is_background()) ? 1.0 : 0.0;
  std::vector<double> w(n, 1.0);
  if (excluding == 0.0) return w;
  for (std::size_t j = 0; j < n; ++j) {
    const double y = target(label, j);
    if (spec.use_known_sets && label.is_known(static_cast<int>(j))) continue;
    w[j] = 1.0 - excluding * spec.threshold(table.freq(j)) * (1.0 - y);
  }
  return w;
}

LossResult eql_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                    const LossSpec& spec) {
  check_logits(logits);
  check_label(label, logits.size());
  check_table(table, logits.size());
  const auto w = eql_weights(label, table, spec);
  return weighted_sigmoid(logits, label, w.data(), 1.0);
}

LossResult seql_loss_fixed_beta(std::span<const double> logits, const SampleLabel& label,
                                const FrequencyTable& table, const LossSpec& spec,
                                std::span<const std::uint8_t> beta) {
  check_logits(logits);
  check_label(label, logits.size());
  check_table(table, logits.size());
  require_foreground(label, "seql");
  require(beta.size() == logits.size(), "seql: beta realization length must equal the category count");
  std::vector<double> w(logits.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double b = beta[k] != 0 ? 1.0 : 0.0;
    w[k] = 1.0 - b * spec.threshold(table.freq(k)) * (1.0 - target(label, k));
  }
  return weighted_softmax(logits, label, w);
}

SeqlResult seql_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                     const LossSpec& spec, Rng& rng) {
  std::bernoulli_distribution draw(spec.gamma_ignore);
  std::vector<std::uint8_t> beta(logits.size());
  if (spec.beta_mode == BetaMode::kShared) {
    std::fill(beta.begin(), beta.end(), static_cast<std::uint8_t>(draw(rng)));
  } else {
    for (auto& b : beta) b = static_cast<std::uint8_t>(draw(rng));
  }
  SeqlResult out;
  out.result = seql_loss_fixed_beta(logits, label, table, spec, beta);
  out.beta = std::move(beta);
  return out;
}

LossResult focal_loss(std::span<const double> logits, const SampleLabel& label, const LossSpec& spec) {
  check_logits(logits);
  check_label(label, logits.size());
  const double gamma = spec.focal_gamma;
  LossResult r;
  r.grad.resize(logits.size());
  r.prob.resize(logits.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const bool positive = target(label, j) > 0.0;
    const double z = logits[j];
    // p_t is the probability assigned to the true binary outcome.
    const double signed_z = positive ? z : -z;
    const double p_t = sigmoid(signed_z);
    const double q = sigmoid(-signed_z);  // 1 - p_t without cancellation
    const double log_p_t = -softplus(-signed_z);
    const double alpha_t = positive ? spec.focal_alpha : 1.0 - spec.focal_alpha;
    const double mod = std::pow(q, gamma);
    loss += -alpha_t * mod * log_p_t;
    const double sign = positive ? 1.0 : -1.0;
    r.grad[j] = alpha_t * sign * mod * (gamma * p_t * log_p_t - q);
    r.prob[j] = sigmoid(z);
  }
  r.loss = loss;
  return r;
}

std::vector<double> class_balanced_weights(const FrequencyTable& table, double beta) {
  require(beta >= 0.0 && beta < 1.0, "class-balanced: beta must lie in [0, 1)");
  const auto n = table.num_categories();
  require(n > 0, "class-balanced: empty table");
  std::vector<double> w(n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto count = table.count(j);
    require(count >= 1, "class-balanced: category " + std::to_string(j) + " has no images");
    // 1 - beta^N via expm1 keeps precision for beta close to 1.
    const double effective = -std::expm1(static_cast<double>(count) * std::log(beta)) / (1.0 - beta);
    w[j] = beta == 0.0 ? 1.0 : 1.0 / effective;
    sum += w[j];
  }
  const double norm = static_cast<double>(n) / sum;
  for (double& x : w) x *= norm;
  return w;
}

LossResult class_balanced_loss(std::span<const double> logits, const SampleLabel& label,
                               const FrequencyTable& table, const LossSpec& spec) {
  check_logits(logits);
  check_label(label, logits.size());
  check_table(table, logits.size());
  double scale = 1.0;
  if (!label.is_background()) {
    if (spec.cb_beta != 0.0) scale = class_balanced_weights(table, spec.cb_beta)[label.category];
  }
  return weighted_sigmoid(logits, label, nullptr, scale);
}

LossResult compute_loss(std::span<const double> logits, const SampleLabel& label, const FrequencyTable& table,
                        const LossSpec& spec, Rng& rng, std::vector<std::uint8_t>* beta_out) {
  switch (spec.kind) {
    case LossKind::kSoftmaxCe: return softmax_ce(logits, label);
    case LossKind::kSigmoidCe: return sigmoid_ce(logits, label);
    case LossKind::kEql: return eql_loss(logits, label, table, spec);
    case LossKind::kSeql: {
      auto r = seql_loss(logits, label, table, spec, rng);
      if (beta_out != nullptr) *beta_out = std::move(r.beta);
      return std::move(r.result);
    }
    case LossKind::kFocal: return focal_loss(logits, label, spec);
    case LossKind::kClassBalanced: return class_balanced_loss(logits, label, table, spec);
  }
  throw ConfigError("unhandled loss kind");
}

}  // namespace eqlab
