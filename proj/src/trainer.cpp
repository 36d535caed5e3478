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

#include "eqlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "eqlab/error.hpp"

namespace eqlab {

TrainSchedule TrainSchedule::cifar_lt() {
  TrainSchedule s;
  s.total_iters = 12800;
  s.base_lr = 0.2;
  s.decay_points = {6400, 9600};
  s.warmup_iters = 400;
  s.warmup_start_lr = 0.1;
  s.batch_size = 256;
  return s;
}

TrainSchedule TrainSchedule::desk() { return TrainSchedule{}; }

void TrainSchedule::validate() const {
  require(total_iters > 0, "schedule: total_iters must be positive");
  require(base_lr > 0.0, "schedule: base_lr must be positive");
  require(batch_size > 0, "schedule: batch_size must be positive");
  require(std::is_sorted(decay_points.begin(), decay_points.end()), "schedule: decay points must be ascending");
  if (!decay_points.empty()) {
    require(warmup_iters < decay_points.front(), "schedule: warmup must end before the first decay point");
    require(decay_points.back() < total_iters, "schedule: decay points must precede total_iters");
  } else {
    require(warmup_iters < total_iters, "schedule: warmup must end before total_iters");
  }
  require(decay_factor > 0.0, "schedule: decay_factor must be positive");
  require(warmup_start_lr >= 0.0, "schedule: warmup_start_lr must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "schedule: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "schedule: weight_decay must be >= 0");
}

nlohmann::json TrainSchedule::to_json() const {
  return {{"total_iters", total_iters},   {"base_lr", base_lr},
          {"decay_points", decay_points}, {"decay_factor", decay_factor},
          {"warmup_iters", warmup_iters}, {"warmup_start_lr", warmup_start_lr},
          {"momentum", momentum},         {"weight_decay", weight_decay},
          {"batch_size", batch_size}};
}

TrainSchedule TrainSchedule::from_json(const nlohmann::json& doc) {
  try {
    TrainSchedule s;
    s.total_iters = doc.value("total_iters", s.total_iters);
    s.base_lr = doc.value("base_lr", s.base_lr);
    s.decay_points = doc.value("decay_points", s.decay_points);
    s.decay_factor = doc.value("decay_factor", s.decay_factor);
    s.warmup_iters = doc.value("warmup_iters", s.warmup_iters);
    s.warmup_start_lr = doc.value("warmup_start_lr", s.warmup_start_lr);
    s.momentum = doc.value("momentum", s.momentum);
    s.weight_decay = doc.value("weight_decay", s.weight_decay);
    s.batch_size = doc.value("batch_size", s.batch_size);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule json: ") + e.what());
  }
}

double lr_at(const TrainSchedule& schedule, std::size_t iter) {
  require(iter < schedule.total_iters, "lr_at: iteration " + std::to_string(iter) + " out of range");
  if (iter < schedule.warmup_iters) {
    const double t = static_cast<double>(iter) / static_cast<double>(schedule.warmup_iters);
    return schedule.warmup_start_lr + (schedule.base_lr - schedule.warmup_start_lr) * t;
  }
  double lr = schedule.base_lr;
  for (auto point : schedule.decay_points)
    if (iter >= point) lr *= schedule.decay_factor;
  return lr;
}

// ---------------------------------------------------------------------------

namespace {

std::variant<Sampler, ProposalStream> make_source(const SyntheticClassDataset& data, const SamplerSpec& sampler,
                                                  const std::optional<ProposalConfig>& proposals,
                                                  std::size_t batch_size, std::uint64_t seed) {
  require(batch_size > 0, "batch source: batch_size must be positive");
  if (proposals) {
    auto cfg = *proposals;
    cfg.batch_size = batch_size;
    return ProposalStream(data, cfg, sampler, seed);
  }
  return Sampler(sampler, data.labels, data.num_classes, make_rng(seed, Stream::kSampler));
}

}  // namespace

BatchSource::BatchSource(const SyntheticClassDataset& data, const SamplerSpec& sampler,
                         const std::optional<ProposalConfig>& proposals, std::size_t batch_size, std::uint64_t seed)
    : impl_(make_source(data, sampler, proposals, batch_size, seed)), data_(&data), batch_size_(batch_size) {}

Batch BatchSource::next() {
  if (auto* s = std::get_if<Sampler>(&impl_)) return make_batch(*data_, s->next_batch(batch_size_));
  return std::get<ProposalStream>(impl_).next();
}

// ---------------------------------------------------------------------------

void MetricsHistory::write_csv(std::ostream& out) const {
  out << "iter,lr,loss,top1,top5";
  for (const auto& g : group_names) out << ',' << g;
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.iter << ',' << num(r.lr) << ',' << num(r.loss);
    if (r.eval) {
      out << ',' << num(r.eval->top1()) << ',' << num(r.eval->top5());
      for (const auto& g : r.eval->groups) out << ',' << (g.accuracy ? num(*g.accuracy) : std::string("null"));
    } else {
      out << ",null,null";
      for (std::size_t g = 0; g < group_names.size(); ++g) out << ",null";
    }
    out << '\n';
  }
}

namespace {

// Per-iteration forward/loss/backward buffers shared by train and replay.
struct StepState {
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::size_t last_dim = 0;
  std::vector<double> inputs;  // batch x last_dim
  std::vector<double> grads;   // batch x classes
  std::vector<double> probs;   // batch x classes
  std::vector<std::vector<std::uint8_t>> betas;
  double mean_loss = 0.0;
};

void forward_and_loss(const Model& model, const Batch& batch, const FrequencyTable& table, const LossSpec& spec,
                      Rng& loss_rng, StepState& st) {
  st.batch = batch.size();
  st.classes = model.num_classes();
  st.last_dim = model.last_dim();
  st.inputs.resize(st.batch * st.last_dim);
  st.grads.resize(st.batch * st.classes);
  st.probs.resize(st.batch * st.classes);
  const bool stochastic = spec.kind == LossKind::kSeql;
  st.betas.assign(stochastic ? st.batch : 0, {});
  std::vector<double> hidden;
  std::vector<double> logits;
  double total = 0.0;
  for (std::size_t i = 0; i < st.batch; ++i) {
    model.forward(batch.row(i), hidden, logits);
    std::copy(hidden.begin(), hidden.end(), st.inputs.begin() + static_cast<std::ptrdiff_t>(i * st.last_dim));
    const auto r = compute_loss(logits, batch.labels[i], table, spec, loss_rng, stochastic ? &st.betas[i] : nullptr);
    std::copy(r.grad.begin(), r.grad.end(), st.grads.begin() + static_cast<std::ptrdiff_t>(i * st.classes));
    std::copy(r.prob.begin(), r.prob.end(), st.probs.begin() + static_cast<std::ptrdiff_t>(i * st.classes));
    total += r.loss;
  }
  st.mean_loss = total / static_cast<double>(st.batch);
}

struct Gradients {
  std::vector<double> hidden_w, hidden_b, out_w, out_b;
};

Gradients backward(const Model& model, const Batch& batch, const StepState& st) {
  Gradients g;
  g.out_w.assign(model.out_w.size(), 0.0);
  g.out_b.assign(model.out_b.size(), 0.0);
  g.hidden_w.assign(model.hidden_w.size(), 0.0);
  g.hidden_b.assign(model.hidden_b.size(), 0.0);
  const bool mlp = model.spec().kind == ModelSpec::Kind::kMlp;
  const auto d = st.last_dim;
  const auto in = model.input_dim();
  std::vector<double> dh(d);
  for (std::size_t i = 0; i < st.batch; ++i) {
    const double* h = st.inputs.data() + i * d;
    const double* gz = st.grads.data() + i * st.classes;
    if (mlp) std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t j = 0; j < st.classes; ++j) {
      const double gj = gz[j];
      if (gj == 0.0) continue;
      double* row = g.out_w.data() + j * d;
      for (std::size_t t = 0; t < d; ++t) row[t] += gj * h[t];
      g.out_b[j] += gj;
      if (mlp) {
        const double* w = model.out_w.data() + j * d;
        for (std::size_t t = 0; t < d; ++t) dh[t] += gj * w[t];
      }
    }
    if (mlp) {
      const auto x = batch.row(i);
      for (std::size_t u = 0; u < d; ++u) {
        if (h[u] <= 0.0 || dh[u] == 0.0) continue;
        double* row = g.hidden_w.data() + u * in;
        for (std::size_t t = 0; t < in; ++t) row[t] += dh[u] * x[t];
        g.hidden_b[u] += dh[u];
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(st.batch);
  for (auto* v : {&g.hidden_w, &g.hidden_b, &g.out_w, &g.out_b})
    for (double& x : *v) x *= scale;
  return g;
}

void sgd_update(std::vector<double>& param, std::vector<double>& velocity, const std::vector<double>& grad,
                double lr, double momentum, double weight_decay) {
  for (std::size_t k = 0; k < param.size(); ++k) {
    const double g = grad[k] + weight_decay * param[k];
    velocity[k] = momentum * velocity[k] + g;
    param[k] -= lr * velocity[k];
  }
}

bool all_finite(const Model& m) {
  for (const auto* v : {&m.hidden_w, &m.hidden_b, &m.out_w, &m.out_b})
    for (double x : *v)
      if (!std::isfinite(x)) return false;
  return true;
}

void check_dims(const Model& model, const SyntheticClassDataset& data, const FrequencyTable& table) {
  require(model.input_dim() == data.dim, "train: model input dimension does not match the dataset");
  require(model.num_classes() == data.num_classes, "train: model class count does not match the dataset");
  require(table.num_categories() == model.num_classes(), "train: frequency table category count mismatch");
}

}  // namespace

TrainResult train(Model model, const SyntheticClassDataset& data, const FrequencyTable& table,
                  const TrainOptions& options) {
  options.schedule.validate();
  options.loss.validate();
  check_dims(model, data, table);
  require(options.log_every > 0, "train: log_every must be positive");
  if (is_softmax_family(options.loss.kind))
    require(!options.proposals, "train: softmax-family losses need foreground-only batches");

  const auto& sched = options.schedule;
  BatchSource source(data, options.sampler, options.proposals, sched.batch_size, options.seed);
  Rng loss_rng = make_rng(options.seed, Stream::kLoss);

  Model velocity = model;
  for (auto* v : {&velocity.hidden_w, &velocity.hidden_b, &velocity.out_w, &velocity.out_b})
    std::fill(v->begin(), v->end(), 0.0);

  TrainResult result{model, {}};
  result.history.group_names = options.eval_grouping.names;
  StepState st;
  double window_loss = 0.0;
  std::size_t window = 0;
  for (std::size_t iter = 0; iter < sched.total_iters; ++iter) {
    const double lr = lr_at(sched, iter);
    const Batch batch = source.next();
    forward_and_loss(result.model, batch, table, options.loss, loss_rng, st);
    if (!std::isfinite(st.mean_loss))
      throw NumericError("training diverged: non-finite loss at iteration " + std::to_string(iter));
    const Gradients g = backward(result.model, batch, st);

    Model& m = result.model;
    sgd_update(m.hidden_w, velocity.hidden_w, g.hidden_w, lr, sched.momentum, sched.weight_decay);
    sgd_update(m.hidden_b, velocity.hidden_b, g.hidden_b, lr, sched.momentum, 0.0);
    sgd_update(m.out_w, velocity.out_w, g.out_w, lr, sched.momentum, sched.weight_decay);
    sgd_update(m.out_b, velocity.out_b, g.out_b, lr, sched.momentum, 0.0);
    if (!all_finite(m))
      throw NumericError("training diverged: non-finite weights at iteration " + std::to_string(iter));

    const IterationView view{iter, lr, st.mean_loss, batch, st.inputs, st.grads, st.probs, st.betas, m};
    for (const auto& hook : options.hooks) hook(view);

    window_loss += st.mean_loss;
    ++window;
    const bool last = iter + 1 == sched.total_iters;
    if ((iter + 1) % options.log_every == 0 || last) {
      MetricsRow row{iter + 1, lr, window_loss / static_cast<double>(window), std::nullopt};
      if (options.eval_set != nullptr) row.eval = evaluate(m, *options.eval_set, options.eval_grouping);
      result.history.rows.push_back(std::move(row));
      window_loss = 0.0;
      window = 0;
    }
  }
  return result;
}

void replay(const Model& model, const SyntheticClassDataset& data, const FrequencyTable& table,
            const ReplayOptions& options, std::span<const IterationHook> hooks) {
  options.loss.validate();
  check_dims(model, data, table);
  BatchSource source(data, options.sampler, options.proposals, options.batch_size, options.seed);
  Rng loss_rng = make_rng(options.seed, Stream::kLoss);
  StepState st;
  for (std::size_t iter = 0; iter < options.iterations; ++iter) {
    const Batch batch = source.next();
    forward_and_loss(model, batch, table, options.loss, loss_rng, st);
    const IterationView view{iter, 0.0, st.mean_loss, batch, st.inputs, st.grads, st.probs, st.betas, model};
    for (const auto& hook : hooks) hook(view);
  }
}

}  // namespace eqlab
