#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svyexp/core_model.hpp"
#include "svyexp/design.hpp"
#include "svyexp/rng.hpp"
#include "svyexp/uncertainty.hpp"

namespace svyexp {

enum class EffectModel { kHeterogeneous, kConstant };

// Population generator. Weights are uniform on (a, b) through the normal
// c.d.f. of a latent draw; outcomes depend on a shadow weight built from a
// second latent draw with correlation gamma, so gamma tunes how strongly
// outcomes track the weights while every marginal stays fixed.
//
// The heterogeneous effect 10 sqrt(b - shadow) has population mean
// (20/3) sqrt(b - a); the default interval width 23.88 puts it at 32.58.
// a = 1.2 places the nominal difference-in-means bias near 7.77.
struct DgpConfig {
  std::size_t population_size = 10000;
  double gamma = 1.0;
  double a = 1.2;
  double b = 1.2 + 23.88;
  double noise_sd = 5.0;
  EffectModel effect = EffectModel::kHeterogeneous;
  double constant_effect = 30.0;
};

struct GeneratedPopulation {
  Population population;
  std::vector<double> weight;         // w_i on (a, b)
  std::vector<double> shadow_weight;  // drives the outcomes
};

// Selection probabilities are pi_i proportional to 1/w_i with sum(pi) =
// sample_n. Throws kInvalidInterval when b <= a, kInvalidArgument for gamma
// outside [0, 1] or N < 100.
GeneratedPopulation generate_population(const DgpConfig& cfg, std::size_t sample_n,
                                        Rng& rng);

// Closed-form population mean of 10 sqrt(b - shadow) for a uniform shadow
// weight.
double heterogeneous_effect_mean(double a, double b);

struct StudyConfig {
  std::size_t sample_n = 500;
  SamplingScheme sampling = SamplingScheme::kSystematic;
  AssignmentPlan assignment{AssignmentMechanism::kComplete, 0.5, std::nullopt};
  std::size_t reps = 10000;
  int strata = 7;
  std::vector<EstimatorId> estimators{EstimatorId::kSateDm, EstimatorId::kDoubleHajek,
                                      EstimatorId::kPsDouble};
  std::size_t bootstrap_replicates = 400;  // 0 disables the bootstrap
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::kNormal;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct EstimatorSummary {
  std::string name;
  bool oracle = false;
  double mean = 0.0;
  double bias = 0.0;
  double se = 0.0;  // divisor reps, so rmse^2 = bias^2 + se^2
  double rmse = 0.0;
  std::optional<double> mean_boot_se;
  std::optional<double> coverage;
};

struct SimulationSummary {
  double tau = 0.0;
  double mean_oracle_sate = 0.0;
  double mean_oracle_nu = 0.0;
  std::size_t reps = 0;
  std::size_t assignment_redraws = 0;
  std::size_t bootstrap_redraws = 0;
  // First two rows are the oracle estimators, then study.estimators in order.
  std::vector<EstimatorSummary> rows;
  // Fraction of replicates in which each unit was drawn.
  std::vector<double> inclusion_frequency;

  const EstimatorSummary& row(const std::string& name) const;
};

// Repeated sample -> assign -> estimate (+ bootstrap) on a fixed population.
// Replicate r uses substream r of study.seed, so the summary is identical
// for any thread count.
SimulationSummary run_study(const Population& pop, const StudyConfig& study);

struct SweepRow {
  double gamma = 0.0;
  int population = -1;  // -1 marks the per-gamma average
  std::string estimator;
  double tau = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double se = 0.0;
  double rmse = 0.0;
  // Monte Carlo standard error of `bias` (of the average, for average rows).
  double bias_mcse = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;      // per (gamma, population, estimator)
  std::vector<SweepRow> averages;  // per (gamma, estimator)

  const SweepRow& average(double gamma, const std::string& estimator) const;
};

SweepResult gamma_sweep(const DgpConfig& base, const StudyConfig& study,
                        const std::vector<double>& gammas,
                        std::size_t populations_per_gamma);

}  // namespace svyexp
