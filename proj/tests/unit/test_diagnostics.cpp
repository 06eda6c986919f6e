#include <doctest.h>

#include <cmath>
#include <numeric>

#include "expect_error.hpp"
#include "lemma_population.hpp"
#include "svyexp/design.hpp"
#include "svyexp/diagnostics.hpp"
#include "svyexp/estimators.hpp"

using namespace svyexp;

namespace {

struct Owned {
  std::vector<double> y;
  std::vector<std::uint8_t> t;
  std::vector<double> w;
  ExperimentView view() const { return {y, t, w}; }
};

BootstrapConfig small_boot(std::uint64_t seed) {
  BootstrapConfig cfg;
  cfg.replicates = 200;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("delta is zero under equal weights") {
  Rng rng(51);
  Owned o;
  for (int i = 0; i < 40; ++i) {
    o.y.push_back(rng.normal());
    o.t.push_back(static_cast<std::uint8_t>(i % 2));
    o.w.push_back(2.0);
  }
  const DeltaReport r = delta_statistic(o.view(), small_boot(1));
  CHECK(r.sate_est == doctest::Approx(r.hh_est));
  CHECK(r.delta == 0.0);
}

TEST_CASE("delta is zero for constant outcomes") {
  const Owned o{{4, 4, 4, 4, 4, 4}, {1, 0, 1, 0, 1, 0}, {1, 2, 3, 4, 5, 6}};
  const DeltaReport r = delta_statistic(o.view(), small_boot(2));
  CHECK(r.se_diff == 0.0);
  CHECK(r.delta == 0.0);
}

TEST_CASE("delta sign follows the difference SATE minus double hajek") {
  // Heavily weighted treated units have low outcomes, so the weighted
  // treated mean is smaller and the unweighted estimate is larger.
  Rng rng(52);
  Owned o;
  for (int i = 0; i < 200; ++i) {
    const double w = 0.5 + 4 * rng.uniform();
    o.w.push_back(w);
    o.t.push_back(static_cast<std::uint8_t>(i % 2));
    o.y.push_back((i % 2) * (20 - 4 * w) + rng.normal());
  }
  const DeltaReport r = delta_statistic(o.view(), small_boot(3));
  CHECK(r.sate_est > r.hh_est);
  CHECK(r.delta > 0);
  CHECK(r.delta == doctest::Approx((r.sate_est - r.hh_est) / r.se_diff));
}

TEST_CASE("qq points") {
  const auto q = qq_points(std::vector<double>{1, -1, 0});
  REQUIRE(q.size() == 3);
  CHECK(q[0].theoretical == doctest::Approx(-0.9674).epsilon(1e-4));
  CHECK(q[1].theoretical == doctest::Approx(0.0));
  CHECK(q[2].theoretical == doctest::Approx(0.9674).epsilon(1e-4));
  CHECK(q[0].observed == -1);
  CHECK(q[2].observed == 1);

  const auto flat = qq_points(std::vector<double>{2.5, 2.5, 2.5, 2.5});
  for (const auto& p : flat) CHECK(p.observed == 2.5);
  CHECK(code_of([] { qq_points(std::vector<double>{1.0}); }) == ErrorCode::kTooFew);
}

TEST_CASE("standard normal draws stay inside the KS band") {
  Rng rng(53);
  std::vector<double> x(200);
  for (double& v : x) v = rng.normal();
  CHECK(ks_statistic_normal(x) < ks_critical_99(200));
  std::vector<double> shifted(x);
  for (double& v : shifted) v += 1.0;
  CHECK(ks_statistic_normal(shifted) > ks_critical_99(200));
}

TEST_CASE("sample-effect bias oracle") {
  const Population constant =
      Population::create({1, 2, 3, 4}, {6, 7, 8, 9}, {0.1, 0.2, 0.3, 0.4});
  CHECK(std::abs(sate_bias_oracle(constant)) < 1e-15);
  const Population equal = Population::create({1, 2, 3, 4}, {6, 2, 9, 4}, {0.3, 0.3, 0.3, 0.3});
  CHECK(std::abs(sate_bias_oracle(equal)) < 1e-15);

  const Population het = Population::create({1, 2, 3, 4}, {6, 2, 9, 4}, {0.1, 0.2, 0.3, 0.4});
  const Population shifted =
      Population::create({1, 2, 3, 4}, {106, 102, 109, 104}, {0.1, 0.2, 0.3, 0.4});
  CHECK(std::abs(sate_bias_oracle(het) - sate_bias_oracle(shifted)) < 1e-12);
  // (pi / pi_bar - 1) = (-0.6, -0.2, 0.2, 0.6) against effects (5, 0, 6, 0).
  CHECK(sate_bias_oracle(het) == doctest::Approx((-0.6 * 5 + 0.2 * 6) / 4));
  CHECK(code_of([&] { sate_bias_from_inclusion(het, std::vector<double>{1, 2}); }) ==
        ErrorCode::kOracleDataMissing);
}

TEST_CASE("hajek bias oracle") {
  const Population equal = Population::create({1, 5, 3, 9}, {1, 5, 3, 9}, {0.2, 0.2, 0.2, 0.2});
  CHECK(std::abs(hajek_bias_oracle(equal, Arm::kControl, 10)) < 1e-15);
  const Population flat = Population::create({3, 3, 3, 3}, {3, 3, 3, 3}, {0.1, 0.2, 0.3, 0.4});
  CHECK(std::abs(hajek_bias_oracle(flat, Arm::kTreated, 10)) < 1e-15);
  const Population het = Population::create({1, 5, 3, 9}, {0, 0, 0, 0}, {0.1, 0.2, 0.3, 0.4});
  const double at10 = hajek_bias_oracle(het, Arm::kControl, 10);
  CHECK(at10 != 0.0);
  CHECK(hajek_bias_oracle(het, Arm::kControl, 20) == at10 / 2);
  CHECK(code_of([] { hajek_bias_oracle(std::vector<double>{}, std::vector<double>{}, 1); }) ==
        ErrorCode::kOracleDataMissing);
}

TEST_CASE("hajek mean bias under poisson sampling matches the oracle") {
  const Population pop = lemma_population(1000, 100.0);
  const double mu = pop.mean_y0();
  const double predicted = hajek_bias_oracle(pop, Arm::kControl, pop.expected_n());
  CHECK(predicted != 0.0);

  Rng rng(55);
  const int draws = 20000;
  double sum = 0, sum2 = 0;
  int used = 0;
  for (int r = 0; r < draws; ++r) {
    const SampleDraw d = poisson_sample(pop, rng);
    if (d.n() == 0) continue;
    std::vector<double> ys, ws;
    for (std::size_t i : d.indices) {
      ys.push_back(pop.y0()[i]);
      ws.push_back(pop.weights()[i]);
    }
    const double e = hajek_mean(ys, ws) - mu;
    sum += e;
    sum2 += e * e;
    ++used;
  }
  const double bias = sum / used;
  const double mcse = std::sqrt((sum2 / used - bias * bias) / used);
  CHECK(std::abs(bias - predicted) < 3 * mcse);
}
