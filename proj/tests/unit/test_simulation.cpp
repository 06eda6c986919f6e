#include <doctest.h>

#include <cmath>
#include <numeric>

#include "expect_error.hpp"
#include "svyexp/diagnostics.hpp"
#include "svyexp/simulation.hpp"

using namespace svyexp;

namespace {

double correlation(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool same_summary(const SimulationSummary& a, const SimulationSummary& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    const auto& x = a.rows[k];
    const auto& y = b.rows[k];
    if (x.mean != y.mean || x.se != y.se || x.rmse != y.rmse || x.mean_boot_se != y.mean_boot_se ||
        x.coverage != y.coverage) {
      return false;
    }
  }
  return a.inclusion_frequency == b.inclusion_frequency &&
         a.bootstrap_redraws == b.bootstrap_redraws;
}

StudyConfig quick_study(std::size_t n, std::size_t reps, std::size_t boot) {
  StudyConfig s;
  s.sample_n = n;
  s.reps = reps;
  s.bootstrap_replicates = boot;
  return s;
}

}  // namespace

TEST_CASE("population generator: shadow weight equals the weight at gamma one") {
  DgpConfig cfg;
  cfg.population_size = 500;
  cfg.gamma = 1.0;
  Rng rng(41);
  const GeneratedPopulation g = generate_population(cfg, 50, rng);
  for (std::size_t i = 0; i < 500; ++i) CHECK(g.shadow_weight[i] == g.weight[i]);
  for (double w : g.weight) {
    CHECK(w > cfg.a);
    CHECK(w < cfg.b);
  }
  const auto pi = g.population.pi();
  CHECK(std::accumulate(pi.begin(), pi.end(), 0.0) == doctest::Approx(50.0));
  // pi is proportional to 1/w, so the derived weights are proportional to w.
  const double ratio = g.population.weights()[0] / g.weight[0];
  for (std::size_t i = 1; i < 500; ++i) {
    CHECK(g.population.weights()[i] / g.weight[i] == doctest::Approx(ratio));
  }
}

TEST_CASE("population generator: weights and outcomes independent at gamma zero") {
  DgpConfig cfg;
  cfg.gamma = 0.0;
  Rng rng(42);
  const GeneratedPopulation g = generate_population(cfg, 500, rng);
  const double r = correlation(g.weight, g.population.y0());
  CHECK(std::abs(r) < 3.0 / std::sqrt(static_cast<double>(cfg.population_size)));
  CHECK(std::abs(correlation(g.weight, g.shadow_weight)) < 0.03);
}

TEST_CASE("population generator: heterogeneous effect mean") {
  CHECK(heterogeneous_effect_mean(1.2, 1.2 + 23.88) == doctest::Approx(32.58).epsilon(1e-3));
  DgpConfig cfg;
  Rng rng(43);
  const GeneratedPopulation g = generate_population(cfg, 500, rng);
  const auto d = g.population.effects();
  const double n = static_cast<double>(d.size());
  const double m = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0;
  for (double x : d) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / (n - 1));
  CHECK(std::abs(g.population.tau() - 32.58) < 3 * sd / std::sqrt(n));

  cfg.effect = EffectModel::kConstant;
  Rng rng2(43);
  const GeneratedPopulation c = generate_population(cfg, 500, rng2);
  for (double x : c.population.effects()) CHECK(x == doctest::Approx(30.0));
}

TEST_CASE("population generator validation") {
  Rng rng(44);
  DgpConfig bad;
  bad.b = bad.a;
  CHECK(code_of([&] { generate_population(bad, 10, rng); }) == ErrorCode::kInvalidInterval);
  DgpConfig g;
  g.gamma = 1.5;
  CHECK(code_of([&] { generate_population(g, 10, rng); }) == ErrorCode::kInvalidArgument);
  DgpConfig small;
  small.population_size = 50;
  CHECK(code_of([&] { generate_population(small, 10, rng); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("study summaries obey their definitions and are thread invariant") {
  DgpConfig cfg;
  cfg.population_size = 2000;
  Rng rng(45);
  const Population pop = generate_population(cfg, 100, rng).population;
  StudyConfig s = quick_study(100, 60, 50);
  s.estimators = {EstimatorId::kSateDm, EstimatorId::kDoubleHajek, EstimatorId::kPsDouble,
                  EstimatorId::kSingleHajek, EstimatorId::kTauSd};
  const SimulationSummary a = run_study(pop, s);
  s.threads = 3;
  const SimulationSummary b = run_study(pop, s);
  CHECK(same_summary(a, b));
  CHECK(a.rows.size() == 7);
  CHECK(a.rows[0].name == "oracle_sate");
  CHECK(a.rows[2].name == "sate_dm");
  for (const auto& r : a.rows) {
    CHECK(std::abs(r.rmse * r.rmse - (r.bias * r.bias + r.se * r.se)) < 1e-9);
    if (!r.oracle) {
      REQUIRE(r.coverage.has_value());
      CHECK(*r.coverage >= 0.0);
      CHECK(*r.coverage <= 1.0);
      CHECK(*r.mean_boot_se > 0);
    }
  }
  const double freq_total =
      std::accumulate(a.inclusion_frequency.begin(), a.inclusion_frequency.end(), 0.0);
  CHECK(freq_total == doctest::Approx(100.0));
}

TEST_CASE("constant effects make the oracle estimands exact") {
  DgpConfig cfg;
  cfg.population_size = 1000;
  cfg.effect = EffectModel::kConstant;
  Rng rng(46);
  const Population pop = generate_population(cfg, 100, rng).population;
  const SimulationSummary s = run_study(pop, quick_study(100, 100, 0));
  CHECK(s.row("oracle_sate").se < 1e-12);
  CHECK(s.row("oracle_nu").se < 1e-12);
  CHECK(s.row("oracle_sate").mean == doctest::Approx(30.0));
  CHECK(s.row("oracle_nu").mean == doctest::Approx(30.0));
  CHECK(std::abs(s.row("ps_double").bias) < 4 * s.row("ps_double").se / 10.0);
}

TEST_CASE("mean sample effect matches the bias formula with realized inclusion") {
  DgpConfig cfg;
  cfg.population_size = 1000;
  Rng rng(47);
  const Population pop = generate_population(cfg, 100, rng).population;
  for (SamplingScheme scheme : {SamplingScheme::kSequential, SamplingScheme::kSystematic}) {
    StudyConfig s = quick_study(100, 3000, 0);
    s.sampling = scheme;
    s.estimators = {EstimatorId::kSateDm};
    const SimulationSummary sum = run_study(pop, s);
    const double observed = sum.row("oracle_sate").bias;
    const double predicted = sate_bias_from_inclusion(pop, sum.inclusion_frequency);
    const double mcse = sum.row("oracle_sate").se / std::sqrt(3000.0);
    CHECK(std::abs(observed - predicted) < 3 * mcse);
  }
}

TEST_CASE("study configuration errors") {
  const Population pop = Population::create(std::vector<double>(10, 0), std::vector<double>(10, 1),
                                            std::vector<double>(10, 0.5));
  CHECK(code_of([&] { run_study(pop, quick_study(10, 10, 0)); }) == ErrorCode::kInvalidArgument);
  StudyConfig s = quick_study(4, 10, 0);
  s.estimators.clear();
  CHECK(code_of([&] { run_study(pop, s); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("bernoulli assignment redraws are counted") {
  const Population pop = Population::create(std::vector<double>(200, 0), std::vector<double>(200, 1),
                                            std::vector<double>(200, 0.02));
  StudyConfig s = quick_study(4, 400, 0);
  s.assignment = {AssignmentMechanism::kBernoulli, 0.5, std::nullopt};
  s.estimators = {EstimatorId::kSateDm};
  const SimulationSummary sum = run_study(pop, s);
  CHECK(sum.assignment_redraws > 20);
  CHECK(sum.row("sate_dm").mean == doctest::Approx(1.0));
}

TEST_CASE("gamma sweep layout") {
  DgpConfig cfg;
  cfg.population_size = 400;
  StudyConfig s = quick_study(40, 30, 0);
  const SweepResult r = gamma_sweep(cfg, s, {0.0, 1.0}, 2);
  CHECK(r.rows.size() == 2 * 2 * 5);
  CHECK(r.averages.size() == 2 * 5);
  const SweepRow& avg = r.average(1.0, "double_hajek");
  double manual = 0;
  for (const auto& row : r.rows) {
    if (row.gamma == 1.0 && row.estimator == "double_hajek") manual += row.bias / 2;
  }
  CHECK(avg.bias == doctest::Approx(manual));
  CHECK(avg.population == -1);
  const SweepResult again = gamma_sweep(cfg, s, {0.0, 1.0}, 2);
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].mean == again.rows[i].mean);
  CHECK(code_of([&] { gamma_sweep(cfg, s, {1.2}, 1); }) == ErrorCode::kInvalidArgument);
}
