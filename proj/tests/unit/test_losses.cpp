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

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "eqlab/error.hpp"
#include "eqlab/losses.hpp"
#include "finite_difference.hpp"

using namespace eqlab;

namespace {

// Naive long-double references, written directly from the textbook formulas.
long double ref_sigmoid_ce(const std::vector<double>& z, int c, const std::vector<double>& w) {
  long double loss = 0.0L;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(z[j])));
    const long double term = static_cast<int>(j) == c ? -std::log(p) : -std::log(1.0L - p);
    loss += w[j] * term;
  }
  return loss;
}

long double ref_weighted_softmax(const std::vector<double>& z, int c, const std::vector<double>& w) {
  long double denom = 0.0L;
  for (std::size_t k = 0; k < z.size(); ++k) denom += w[k] * std::exp(static_cast<long double>(z[k]));
  return -std::log(std::exp(static_cast<long double>(z[c])) / denom);
}

FrequencyTable half_tail_table(std::size_t n) {
  // Even categories are frequent (f = 0.5), odd ones are tail (f = 1e-4).
  std::vector<std::int64_t> counts(n);
  for (std::size_t j = 0; j < n; ++j) counts[j] = j % 2 == 0 ? 5000 : 1;
  return FrequencyTable::build(counts, 10000);
}

}  // namespace

TEST_CASE("softmax CE: uniform logits give ln C") {
  const std::vector<double> z(4, 0.7);
  for (int c = 0; c < 4; ++c) CHECK(softmax_ce(z, SampleLabel::foreground(c)).loss == doctest::Approx(std::log(4.0)));
}

TEST_CASE("softmax CE: saturated logit gives ~0 loss without overflow") {
  std::vector<double> z(5, 0.0);
  z[2] = 800.0;
  const auto r = softmax_ce(z, SampleLabel::foreground(2));
  CHECK(r.loss >= 0.0);
  CHECK(r.loss < 1e-300);
  for (double g : r.grad) CHECK(std::isfinite(g));
  // And the opposite saturation is large but finite.
  const auto wrong = softmax_ce(z, SampleLabel::foreground(0));
  CHECK(wrong.loss == doctest::Approx(800.0));
}

TEST_CASE("softmax CE matches the long-double reference") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto z = testing::random_logits(rng, 7);
    const int c = static_cast<int>(rng() % 7);
    const auto r = softmax_ce(z, SampleLabel::foreground(c));
    REQUIRE(r.loss == doctest::Approx(static_cast<double>(ref_weighted_softmax(z, c, std::vector<double>(7, 1.0))))
                          .epsilon(1e-12));
  }
}

TEST_CASE("softmax CE rejects background and bad logits") {
  const std::vector<double> z(3, 0.0);
  CHECK_THROWS_AS(softmax_ce(z, SampleLabel::background()), ConfigError);
  CHECK_THROWS_AS(softmax_ce(z, SampleLabel::foreground(3)), ConfigError);
  const std::vector<double> bad{0.0, std::numeric_limits<double>::quiet_NaN(), 1.0};
  CHECK_THROWS_AS(softmax_ce(bad, SampleLabel::foreground(0)), NumericError);
  const std::vector<double> inf{0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(sigmoid_ce(inf, SampleLabel::foreground(0)), NumericError);
}

TEST_CASE("sigmoid CE: zero logits") {
  const std::vector<double> z(6, 0.0);
  const auto bg = sigmoid_ce(z, SampleLabel::background());
  CHECK(bg.loss == doctest::Approx(6.0 * std::log(2.0)));
  for (double g : bg.grad) CHECK(g == 0.5);
  const auto fg = sigmoid_ce(z, SampleLabel::foreground(3));
  CHECK(fg.grad[3] == -0.5);
  CHECK(fg.grad[0] == 0.5);
}

TEST_CASE("sigmoid CE is stable at large logits") {
  const std::vector<double> z{-1000.0, 1000.0};
  const auto r = sigmoid_ce(z, SampleLabel::foreground(1));
  CHECK(r.loss == 0.0);
  const auto bad = sigmoid_ce(z, SampleLabel::foreground(0));
  CHECK(bad.loss == doctest::Approx(2000.0));
}

TEST_CASE("sigmoid CE matches the long-double reference") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto z = testing::random_logits(rng, 8);
    const int c = static_cast<int>(rng() % 9) - 1;
    const SampleLabel label = c < 0 ? SampleLabel::background() : SampleLabel::foreground(c);
    const auto r = sigmoid_ce(z, label);
    REQUIRE(r.loss == doctest::Approx(static_cast<double>(ref_sigmoid_ce(z, c, std::vector<double>(8, 1.0))))
                          .epsilon(1e-12));
  }
}

TEST_CASE("EQL weights") {
  const auto table = half_tail_table(6);
  const auto spec = LossSpec::eql(1e-3);

  SUBCASE("background keeps every weight") {
    for (double w : eql_weights(SampleLabel::background(), table, spec)) CHECK(w == 1.0);
  }
  SUBCASE("foreground ignores tail negatives only") {
    const auto w = eql_weights(SampleLabel::foreground(1), table, spec);
    CHECK(w == std::vector<double>{1, 1, 1, 0, 1, 0});
  }
  SUBCASE("known negative restores weight 1") {
    SampleLabel label = SampleLabel::foreground(0);
    label.known_negative = {3};
    const auto w = eql_weights(label, table, spec);
    CHECK(w == std::vector<double>{1, 0, 1, 1, 1, 0});
  }
  SUBCASE("override can be switched off") {
    SampleLabel label = SampleLabel::foreground(0);
    label.known_positive = {5};
    auto off = spec;
    off.use_known_sets = false;
    CHECK(eql_weights(label, table, off)[5] == 0.0);
    CHECK(eql_weights(label, table, spec)[5] == 1.0);
  }
  SUBCASE("without the excluding function background is suppressed too") {
    auto no_e = spec;
    no_e.use_excluding_fn = false;
    const auto w = eql_weights(SampleLabel::background(), table, no_e);
    CHECK(w == std::vector<double>{1, 0, 1, 0, 1, 0});
  }
  SUBCASE("soft threshold gives fractional weights") {
    const auto soft = LossSpec::eql(ThresholdFn::exponential(400.0, 2.0));
    std::vector<std::int64_t> counts{25, 1};
    const auto t = FrequencyTable::build(counts, 20000);  // f = 1/800, 1/20000
    const auto w = eql_weights(SampleLabel::foreground(1), t, soft);
    CHECK(w[0] == doctest::Approx(0.25));
    CHECK(w[1] == 1.0);
  }
}

TEST_CASE("EQL degenerates to sigmoid CE bit for bit at lambda = 0") {
  std::mt19937_64 rng(3);
  const auto table = half_tail_table(8);
  for (int i = 0; i < 500; ++i) {
    const auto z = testing::random_logits(rng, 8, 6.0);
    const int c = static_cast<int>(rng() % 9) - 1;
    const SampleLabel label = c < 0 ? SampleLabel::background() : SampleLabel::foreground(c);
    const auto a = eql_loss(z, label, table, LossSpec::eql(0.0));
    const auto b = sigmoid_ce(z, label);
    REQUIRE(a.loss == b.loss);
    REQUIRE(a.grad == b.grad);
  }
}

TEST_CASE("EQL on background equals sigmoid CE at any lambda") {
  std::mt19937_64 rng(4);
  const auto table = half_tail_table(8);
  for (int i = 0; i < 100; ++i) {
    const auto z = testing::random_logits(rng, 8);
    const auto a = eql_loss(z, SampleLabel::background(), table, LossSpec::eql(0.3));
    const auto b = sigmoid_ce(z, SampleLabel::background());
    REQUIRE(a.loss == b.loss);
    REQUIRE(a.grad == b.grad);
  }
}

TEST_CASE("EQL zeroes the gradient of ignored tail categories exactly") {
  std::mt19937_64 rng(5);
  const auto table = half_tail_table(10);
  for (int i = 0; i < 300; ++i) {
    const auto z = testing::random_logits(rng, 10, 10.0);
    const int c = static_cast<int>(rng() % 10);
    const auto r = eql_loss(z, SampleLabel::foreground(c), table, LossSpec::eql(1e-3));
    for (std::size_t j = 1; j < 10; j += 2)
      if (static_cast<int>(j) != c) REQUIRE(r.grad[j] == 0.0);
    // The naive reference loses digits at large logits, so compare on a scaled copy.
    std::vector<double> small(z);
    for (double& v : small) v *= 0.3;
    const auto w = eql_weights(SampleLabel::foreground(c), table, LossSpec::eql(1e-3));
    REQUIRE(eql_loss(small, SampleLabel::foreground(c), table, LossSpec::eql(1e-3)).loss ==
            doctest::Approx(static_cast<double>(ref_sigmoid_ce(small, c, w))).epsilon(1e-12));
  }
}

TEST_CASE("known-set override never decreases |grad_j|") {
  std::mt19937_64 rng(6);
  const auto table = half_tail_table(8);
  const auto spec = LossSpec::eql(1e-3);
  for (int i = 0; i < 300; ++i) {
    const auto z = testing::random_logits(rng, 8);
    const int c = static_cast<int>(rng() % 9) - 1;
    const int j = static_cast<int>(rng() % 8);
    SampleLabel base = c < 0 ? SampleLabel::background() : SampleLabel::foreground(c);
    SampleLabel with = base;
    if (rng() % 2 == 0) {
      with.known_negative = {j};
    } else {
      with.known_positive = {j};
    }
    const auto a = eql_loss(z, base, table, spec);
    const auto b = eql_loss(z, with, table, spec);
    REQUIRE(std::abs(b.grad[j]) >= std::abs(a.grad[j]));
  }
}

TEST_CASE("label validation") {
  SampleLabel ok = SampleLabel::foreground(1);
  ok.known_positive = {0, 2};
  ok.known_negative = {3};
  CHECK_NOTHROW(ok.validate(4));
  SampleLabel overlap = ok;
  overlap.known_negative = {2};
  CHECK_THROWS_AS(overlap.validate(4), ConfigError);
  SampleLabel unsorted = ok;
  unsorted.known_positive = {2, 0};
  CHECK_THROWS_AS(unsorted.validate(4), ConfigError);
  SampleLabel out = ok;
  out.known_negative = {4};
  CHECK_THROWS_AS(out.validate(4), ConfigError);
}

TEST_CASE("SEQL degenerates to softmax CE bit for bit at gamma = 0") {
  std::mt19937_64 rng(7);
  Rng loss_rng = make_rng(1, Stream::kLoss);
  const auto table = half_tail_table(10);
  for (int i = 0; i < 500; ++i) {
    const auto z = testing::random_logits(rng, 10, 6.0);
    const int c = static_cast<int>(rng() % 10);
    const auto a = seql_loss(z, SampleLabel::foreground(c), table, LossSpec::seql(1e-3, 0.0), loss_rng);
    const auto b = softmax_ce(z, SampleLabel::foreground(c));
    REQUIRE(a.result.loss == b.loss);
    REQUIRE(a.result.grad == b.grad);
    for (auto beta : a.beta) REQUIRE(beta == 0);
  }
}

TEST_CASE("SEQL with every other class ignored has zero loss and gradient") {
  std::vector<std::int64_t> counts{5000, 1, 1, 1};
  const auto table = FrequencyTable::build(counts, 10000);
  const std::vector<std::uint8_t> beta(4, 1);
  const std::vector<double> z{-2.0, 3.0, 0.5, 7.0};
  const auto r = seql_loss_fixed_beta(z, SampleLabel::foreground(0), table, LossSpec::seql(1e-3, 1.0), beta);
  CHECK(r.loss == 0.0);
  CHECK(r.prob[0] == 1.0);
  for (double g : r.grad) CHECK(g == 0.0);
}

TEST_CASE("SEQL probabilities renormalize over kept classes") {
  std::mt19937_64 rng(8);
  const auto table = half_tail_table(9);
  const auto spec = LossSpec::seql(1e-3, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto z = testing::random_logits(rng, 9);
    const int c = static_cast<int>(rng() % 9);
    Rng loss_rng = make_rng(static_cast<std::uint64_t>(i), Stream::kLoss);
    const auto r = seql_loss(z, SampleLabel::foreground(c), table, spec, loss_rng);
    for (auto b : r.beta) REQUIRE(b == 1);
    double kept = 0.0;
    std::vector<double> w(9);
    for (std::size_t j = 0; j < 9; ++j) {
      const bool ignored = j % 2 == 1 && static_cast<int>(j) != c;
      w[j] = ignored ? 0.0 : 1.0;
      if (!ignored) kept += r.result.prob[j];
    }
    REQUIRE(kept == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(r.result.loss == doctest::Approx(static_cast<double>(ref_weighted_softmax(z, c, w))).epsilon(1e-12));
  }
}

TEST_CASE("SEQL beta draws follow gamma and the shared switch") {
  const auto table = half_tail_table(50);
  const std::vector<double> z(50, 0.0);
  auto spec = LossSpec::seql(1e-3, 0.9);
  Rng rng = make_rng(9, Stream::kLoss);
  std::size_t ones = 0;
  std::size_t mixed_calls = 0;
  const int calls = 400;
  for (int i = 0; i < calls; ++i) {
    const auto r = seql_loss(z, SampleLabel::foreground(0), table, spec, rng);
    std::size_t here = 0;
    for (auto b : r.beta) here += b;
    ones += here;
    if (here != 0 && here != 50) ++mixed_calls;
  }
  CHECK(static_cast<double>(ones) / (50.0 * calls) == doctest::Approx(0.9).epsilon(0.02));
  CHECK(mixed_calls > 0);

  spec.beta_mode = BetaMode::kShared;
  for (int i = 0; i < 100; ++i) {
    const auto r = seql_loss(z, SampleLabel::foreground(0), table, spec, rng);
    for (auto b : r.beta) REQUIRE(b == r.beta[0]);
  }
}

TEST_CASE("SEQL is reproducible from the seed") {
  const auto table = half_tail_table(12);
  const std::vector<double> z(12, 0.3);
  Rng a = make_rng(5, Stream::kLoss);
  Rng b = make_rng(5, Stream::kLoss);
  for (int i = 0; i < 20; ++i) {
    const auto ra = seql_loss(z, SampleLabel::foreground(2), table, LossSpec::seql(1e-3, 0.5), a);
    const auto rb = seql_loss(z, SampleLabel::foreground(2), table, LossSpec::seql(1e-3, 0.5), b);
    REQUIRE(ra.beta == rb.beta);
    REQUIRE(ra.result.loss == rb.result.loss);
  }
}

TEST_CASE("SEQL rejects background labels and wrong beta length") {
  const auto table = half_tail_table(4);
  const std::vector<double> z(4, 0.0);
  Rng rng = make_rng(1, Stream::kLoss);
  CHECK_THROWS_AS(seql_loss(z, SampleLabel::background(), table, LossSpec::seql(1e-3, 0.5), rng), ConfigError);
  const std::vector<std::uint8_t> beta(3, 1);
  CHECK_THROWS_AS(seql_loss_fixed_beta(z, SampleLabel::foreground(0), table, LossSpec::seql(1e-3, 0.5), beta),
                  ConfigError);
}

TEST_CASE("focal loss with gamma 0 and alpha 0.5 is half of sigmoid CE") {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    const auto z = testing::random_logits(rng, 6);
    const int c = static_cast<int>(rng() % 7) - 1;
    const SampleLabel label = c < 0 ? SampleLabel::background() : SampleLabel::foreground(c);
    const auto f = focal_loss(z, label, LossSpec::focal(0.0, 0.5));
    const auto s = sigmoid_ce(z, label);
    REQUIRE(f.loss == doctest::Approx(0.5 * s.loss).epsilon(1e-12));
    for (std::size_t j = 0; j < 6; ++j) REQUIRE(f.grad[j] == doctest::Approx(0.5 * s.grad[j]).epsilon(1e-12));
  }
}

TEST_CASE("focal loss suppresses easy examples") {
  const std::vector<double> easy{40.0, -40.0};
  const auto r = focal_loss(easy, SampleLabel::foreground(0), LossSpec::focal());
  CHECK(r.loss < 1e-30);
  const std::vector<double> hard{-3.0, 3.0};
  CHECK(focal_loss(hard, SampleLabel::foreground(0), LossSpec::focal()).loss > 1.0);
}

TEST_CASE("focal loss matches the long-double reference") {
  std::mt19937_64 rng(11);
  const auto spec = LossSpec::focal(2.0, 0.25);
  for (int i = 0; i < 200; ++i) {
    const auto z = testing::random_logits(rng, 6);
    const int c = static_cast<int>(rng() % 6);
    long double ref = 0.0L;
    for (int j = 0; j < 6; ++j) {
      const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(z[j])));
      const long double pt = j == c ? p : 1.0L - p;
      const long double at = j == c ? 0.25L : 0.75L;
      ref += -at * (1.0L - pt) * (1.0L - pt) * std::log(pt);
    }
    REQUIRE(focal_loss(z, SampleLabel::foreground(c), spec).loss ==
            doctest::Approx(static_cast<double>(ref)).epsilon(1e-10));
  }
}

TEST_CASE("class-balanced weights") {
  SUBCASE("beta 0 equals sigmoid CE") {
    std::vector<std::int64_t> counts{1, 1000};
    const auto t = FrequencyTable::build(counts, 2000);
    std::mt19937_64 rng(12);
    for (int i = 0; i < 50; ++i) {
      const auto z = testing::random_logits(rng, 2);
      const auto a = class_balanced_loss(z, SampleLabel::foreground(i % 2), t, LossSpec::class_balanced(0.0));
      const auto b = sigmoid_ce(z, SampleLabel::foreground(i % 2));
      REQUIRE(a.loss == b.loss);
      REQUIRE(a.grad == b.grad);
    }
  }
  SUBCASE("rare class outweighs frequent class") {
    std::vector<std::int64_t> counts{1, 1000};
    const auto w = class_balanced_weights(FrequencyTable::build(counts, 2000), 0.999);
    CHECK(w[0] > w[1]);
    // Closed form, written out independently of the expm1 path.
    const double raw_rare = (1.0 - 0.999) / (1.0 - std::pow(0.999, 1.0));
    const double raw_freq = (1.0 - 0.999) / (1.0 - std::pow(0.999, 1000.0));
    CHECK(w[0] / w[1] == doctest::Approx(raw_rare / raw_freq).epsilon(1e-10));
    CHECK(w[0] + w[1] == doctest::Approx(2.0));
  }
  SUBCASE("errors") {
    std::vector<std::int64_t> counts{0, 10};
    CHECK_THROWS_AS(class_balanced_weights(FrequencyTable::build(counts, 20), 0.9), ConfigError);
    std::vector<std::int64_t> ok{1, 10};
    CHECK_THROWS_AS(class_balanced_weights(FrequencyTable::build(ok, 20), 1.0), ConfigError);
  }
}

TEST_CASE("all losses are non-negative") {
  std::mt19937_64 rng(13);
  const auto table = half_tail_table(8);
  const std::vector<LossSpec> specs{LossSpec::softmax_ce(), LossSpec::sigmoid_ce(),  LossSpec::eql(1e-3),
                                    LossSpec::seql(1e-3, 0.7), LossSpec::focal(),     LossSpec::class_balanced()};
  Rng loss_rng = make_rng(3, Stream::kLoss);
  for (int i = 0; i < 500; ++i) {
    const auto z = testing::random_logits(rng, 8, 20.0);
    const int c = static_cast<int>(rng() % 8);
    for (const auto& s : specs) REQUIRE(compute_loss(z, SampleLabel::foreground(c), table, s, loss_rng).loss >= 0.0);
  }
}

TEST_CASE("loss spec json") {
  SUBCASE("round trip") {
    for (const auto& s : {LossSpec::softmax_ce(), LossSpec::eql(1.76e-3), LossSpec::seql(1e-3, 0.9),
                          LossSpec::focal(1.5, 0.5), LossSpec::class_balanced(0.99),
                          LossSpec::eql(ThresholdFn::gompertz(1.0, 80.0, 3000.0))}) {
      const auto back = LossSpec::from_json(s.to_json());
      CHECK(back.kind == s.kind);
      CHECK(back.to_json() == s.to_json());
    }
  }
  SUBCASE("parameters must belong to the kind") {
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "softmax_ce"}, {"lambda", 0.1}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "focal"}, {"gamma_ignore", 0.5}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "nope"}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "seql"}, {"gamma_ignore", 1.5}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "seql"}, {"beta_mode", "sometimes"}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "class_balanced"}, {"cb_beta", 1.0}}), ConfigError);
    CHECK_THROWS_AS(LossSpec::from_json({{"kind", "focal"}, {"focal_alpha", 0.0}}), ConfigError);
  }
  SUBCASE("hard threshold reads lambda") {
    const auto s = LossSpec::from_json({{"kind", "eql"}, {"lambda", 0.25}});
    CHECK(s.threshold(0.2) == 1.0);
    CHECK(s.threshold(0.25) == 0.0);
  }
}
