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

#include "eqlab/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "eqlab/error.hpp"

namespace eqlab {
namespace {

std::optional<double> ratio(double sum, std::int64_t n) {
  if (n <= 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("null"); }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

GradientLedger::GradientLedger(std::size_t num_classes)
    : pos_norm_sum(num_classes, 0.0),
      neg_norm_sum(num_classes, 0.0),
      pos_count(num_classes, 0),
      neg_count(num_classes, 0) {}

std::optional<double> GradientLedger::pos_mean(std::size_t j) const { return ratio(pos_norm_sum[j], pos_count[j]); }
std::optional<double> GradientLedger::neg_mean(std::size_t j) const { return ratio(neg_norm_sum[j], neg_count[j]); }
std::optional<double> GradientLedger::pos_per_iteration(std::size_t j) const {
  return ratio(pos_norm_sum[j], iterations);
}
std::optional<double> GradientLedger::neg_per_iteration(std::size_t j) const {
  return ratio(neg_norm_sum[j], iterations);
}

GradientLedger& GradientLedger::merge(const GradientLedger& other) {
  require(other.num_classes() == num_classes(), "ledger merge: category count mismatch");
  for (std::size_t j = 0; j < num_classes(); ++j) {
    pos_norm_sum[j] += other.pos_norm_sum[j];
    neg_norm_sum[j] += other.neg_norm_sum[j];
    pos_count[j] += other.pos_count[j];
    neg_count[j] += other.neg_count[j];
  }
  iterations += other.iterations;
  return *this;
}

void record_gradients(GradientLedger& ledger, std::span<const double> logit_grads, std::span<const double> features,
                      std::span<const SampleLabel> labels) {
  const auto c = ledger.num_classes();
  const auto b = labels.size();
  require(c > 0, "record_gradients: ledger has no categories");
  require(logit_grads.size() == b * c, "record_gradients: gradient block is not batch x categories");
  require(b == 0 || features.size() % b == 0, "record_gradients: feature block is not batch x dim");
  const auto d = b == 0 ? 0 : features.size() / b;
  for (std::size_t i = 0; i < b; ++i) {
    const auto x = features.subspan(i * d, d);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double xnorm = std::sqrt(sq);
    const int y = labels[i].category;
    for (std::size_t j = 0; j < c; ++j) {
      const double contribution = std::abs(logit_grads[i * c + j]) * xnorm;
      if (y == static_cast<int>(j)) {
        ledger.pos_norm_sum[j] += contribution;
        ++ledger.pos_count[j];
      } else {
        ledger.neg_norm_sum[j] += contribution;
        ++ledger.neg_count[j];
      }
    }
  }
  ++ledger.iterations;
}

ProbabilityLedger::ProbabilityLedger(std::size_t num_classes) : prob_sum(num_classes, 0.0), count(num_classes, 0) {}

std::optional<double> ProbabilityLedger::average(std::size_t j) const { return ratio(prob_sum[j], count[j]); }

ProbabilityLedger& ProbabilityLedger::merge(const ProbabilityLedger& other) {
  require(other.prob_sum.size() == prob_sum.size(), "ledger merge: category count mismatch");
  for (std::size_t j = 0; j < prob_sum.size(); ++j) {
    prob_sum[j] += other.prob_sum[j];
    count[j] += other.count[j];
  }
  return *this;
}

void record_probabilities(ProbabilityLedger& ledger, std::span<const double> probabilities,
                          std::span<const SampleLabel> labels) {
  const auto c = ledger.prob_sum.size();
  require(probabilities.size() == labels.size() * c, "record_probabilities: block is not batch x categories");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i].category;
    if (y == kBackground) continue;
    require(static_cast<std::size_t>(y) < c, "record_probabilities: label out of range");
    ledger.prob_sum[y] += probabilities[i * c + static_cast<std::size_t>(y)];
    ++ledger.count[y];
  }
}

// ---------------------------------------------------------------------------

double EvalReport::at_k(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return accuracy_at_k[i];
  throw ConfigError("eval report has no top-" + std::to_string(k) + " entry");
}

std::optional<double> EvalReport::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return g.accuracy;
  throw ConfigError("eval report has no group '" + name + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"samples", samples}};
  for (std::size_t i = 0; i < ks.size(); ++i) j["top" + std::to_string(ks[i])] = accuracy_at_k[i];
  nlohmann::json groups_json = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_json[g.name] = {{"samples", g.samples}, {"correct", g.correct}, {"accuracy", opt_json(g.accuracy)}};
    order.push_back(g.name);
  }
  j["groups"] = groups_json;
  // Object keys come back sorted; this keeps the grouping's own order.
  j["group_order"] = order;
  return j;
}

std::size_t true_class_rank(std::span<const double> logits, std::size_t true_class) {
  const double zc = logits[true_class];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (logits[j] > zc || (logits[j] == zc && j < true_class)) ++rank;
  return rank;
}

EvalReport evaluate(const Model& model, const SyntheticClassDataset& test_set, const Grouping& grouping,
                    std::vector<std::size_t> ks) {
  require(!ks.empty(), "evaluate: empty k list");
  require(grouping.group_of.size() == model.num_classes(), "evaluate: grouping does not cover every category");
  require(test_set.dim == model.input_dim(), "evaluate: test set dimension does not match the model");
  EvalReport r;
  r.ks = std::move(ks);
  r.correct_at_k.assign(r.ks.size(), 0);
  r.groups.resize(grouping.num_groups());
  for (std::size_t g = 0; g < grouping.num_groups(); ++g) r.groups[g].name = grouping.names[g];

  std::vector<double> x(test_set.dim);
  std::vector<double> hidden;
  std::vector<double> logits;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto y = test_set.labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < model.num_classes(), "evaluate: test label out of range");
    const auto row = test_set.row(i);
    std::copy(row.begin(), row.end(), x.begin());
    model.forward(x, hidden, logits);
    const auto rank = true_class_rank(logits, static_cast<std::size_t>(y));
    for (std::size_t k = 0; k < r.ks.size(); ++k)
      if (rank < r.ks[k]) ++r.correct_at_k[k];
    auto& g = r.groups[grouping.group_of[static_cast<std::size_t>(y)]];
    ++g.samples;
    if (rank == 0) ++g.correct;
  }
  r.samples = static_cast<std::int64_t>(test_set.size());
  for (auto c : r.correct_at_k)
    r.accuracy_at_k.push_back(r.samples > 0 ? static_cast<double>(c) / static_cast<double>(r.samples) : 0.0);
  for (auto& g : r.groups) g.accuracy = ratio(static_cast<double>(g.correct), g.samples);
  return r;
}

GroupNorms group_gradient_norms(const GradientLedger& ledger, std::span<const std::size_t> categories) {
  GroupNorms out;
  for (auto j : categories) {
    out.pos += ledger.pos_per_iteration(j).value_or(0.0);
    out.neg += ledger.neg_per_iteration(j).value_or(0.0);
  }
  out.categories = categories.size();
  if (!categories.empty()) {
    out.pos /= static_cast<double>(categories.size());
    out.neg /= static_cast<double>(categories.size());
  }
  return out;
}

void write_ledger_csv(std::ostream& out, const FrequencyTable& table, const Grouping& grouping,
                      const GradientLedger& grads, const ProbabilityLedger& probs) {
  require(grads.num_classes() == table.num_categories() && probs.prob_sum.size() == table.num_categories(),
          "ledger csv: category count mismatch");
  out << "rank,category,count,group,pos_norm_sum,neg_norm_sum,pos_count,neg_count,"
         "pos_norm_per_iter,neg_norm_per_iter,pos_norm_mean,neg_norm_mean,avg_pos_prob\n";
  std::size_t rank = 0;
  for (auto j : table.order_by_count_desc()) {
    out << rank++ << ',' << j << ',' << table.count(j) << ','
        << (j < grouping.group_of.size() ? grouping.names[grouping.group_of[j]] : std::string()) << ','
        << fmt(grads.pos_norm_sum[j]) << ',' << fmt(grads.neg_norm_sum[j]) << ',' << grads.pos_count[j] << ','
        << grads.neg_count[j] << ',' << fmt(grads.pos_per_iteration(j)) << ',' << fmt(grads.neg_per_iteration(j))
        << ',' << fmt(grads.pos_mean(j)) << ',' << fmt(grads.neg_mean(j)) << ',' << fmt(probs.average(j)) << '\n';
  }
}

nlohmann::json ledgers_to_json(const FrequencyTable& table, const GradientLedger& grads,
                               const ProbabilityLedger& probs) {
  nlohmann::json rows = nlohmann::json::array();
  for (auto j : table.order_by_count_desc()) {
    rows.push_back({{"category", j},
                    {"count", table.count(j)},
                    {"pos_norm_sum", grads.pos_norm_sum[j]},
                    {"neg_norm_sum", grads.neg_norm_sum[j]},
                    {"pos_count", grads.pos_count[j]},
                    {"neg_count", grads.neg_count[j]},
                    {"pos_norm_per_iter", opt_json(grads.pos_per_iteration(j))},
                    {"neg_norm_per_iter", opt_json(grads.neg_per_iteration(j))},
                    {"avg_pos_prob", opt_json(probs.average(j))}});
  }
  return {{"iterations", grads.iterations}, {"categories", rows}};
}

}  // namespace eqlab
