#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svyexp/core_model.hpp"
#include "svyexp/design.hpp"
#include "svyexp/estimators.hpp"

namespace svyexp {

// Finite-sample moments of both potential outcomes (divisor n - 1), and the
// inverse arm proportions beta_1 = 1/p, beta_0 = 1/(1 - p).
struct SampleMoments {
  double var1 = 0.0;
  double var0 = 0.0;
  double var_delta = 0.0;
  double gamma = 0.0;  // covariance of y(1) and y(0)
  double beta1 = 0.0;
  double beta0 = 0.0;
  std::size_t n = 0;
};

// Throws kOracleDataMissing when the vectors are empty or differ in length.
SampleMoments sample_moments(std::span<const double> y1, std::span<const double> y0,
                             double p);

// Randomization variance of the difference in means given the sample:
// (1/n) [beta_1 var1 + beta_0 var0 - var_delta].
double neyman_sate_variance(const SampleMoments& m);
// Same quantity through the covariance form
// (1/n) [(beta_1 - 1) var1 + (beta_0 - 1) var0 + 2 gamma].
double neyman_sate_variance_covariance_form(const SampleMoments& m);

// Complete randomization uses p = n1/n exactly; Bernoulli uses plan.p, so
// callers that condition on the realized n1 pass p = n1/n.
double neyman_sate_variance(std::span<const double> y1, std::span<const double> y0,
                            const AssignmentPlan& plan);

// Conservative Neyman estimate s1^2/n1 + s0^2/n0. Throws kArmTooSmall when
// an arm has fewer than two units.
double neyman_sate_var_estimate(const ExperimentView& data);

// Plug-in variance of the double-Hajek:
// sum_arm (1/Z_arm^2) sum w^2 (y - mu_arm)^2.
double hh_plugin_variance(const ExperimentView& data);

// Population approximate variance of the double-Hajek under Poisson
// selection and Bernoulli(p) assignment, small-pi bound:
// (1/(p E[n])) mean(w (y1 - mu1)^2) + (1/((1-p) E[n])) mean(w (y0 - mu0)^2).
double hh_approx_variance(const Population& pop, double p);

// Same, keeping the (1 - p pi_j) factors (oracle only):
// (1/N^2) sum (1 - p pi)/(p pi) (y1 - mu1)^2 + control analogue.
double hh_poisson_bernoulli_variance(const Population& pop, double p);

enum class CiMethod { kNormal, kPercentile };

std::string_view to_string(CiMethod method);
CiMethod parse_ci_method(std::string_view name);

struct BootstrapConfig {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::kNormal;
  unsigned threads = 1;
};

// Two-sided standard-normal critical value for `level`.
double normal_critical_value(double level);

struct BootstrapResult {
  double point = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t redraws = 0;
  std::vector<double> replicates;
};

// Writes `out.size()` statistics computed on one (re)sample.
using ReplicateStatistic = std::function<void(
    const ExperimentView&, std::span<const std::string>, std::span<double>)>;

struct ReplicateMatrix {
  std::size_t rows = 0;  // replicates
  std::size_t cols = 0;  // statistics
  std::vector<double> values;  // row-major
  std::size_t redraws = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
};

// Case-wise bootstrap: each replicate resamples n whole (y, t, w[, level])
// rows with replacement and evaluates `statistic` on them. Replicate b draws
// from its own substream of cfg.seed. Resamples with an empty arm, or on which
// the statistic throws kDegenerateArm / kEmptyStratumArm, are redrawn; more
// redraws than replicates (over half of all attempts) throws
// kTooManyDegenerateReplicates.
ReplicateMatrix bootstrap_replicates(const ExperimentView& data,
                                     std::span<const std::string> covariate_levels,
                                     std::size_t statistic_count,
                                     const ReplicateStatistic& statistic,
                                     const BootstrapConfig& cfg);

// Standard deviation (divisor B - 1) of the replicates and the configured CI
// around `point`. Percentile intervals are widened to contain the point.
BootstrapResult summarize_bootstrap(double point, std::vector<double> replicates,
                                    std::size_t redraws, const BootstrapConfig& cfg);

// Bootstrap of every spec on shared replicates; strata recipes are re-applied
// to each resample.
std::vector<BootstrapResult> bootstrap_estimators(
    const ExperimentView& data, std::span<const std::string> covariate_levels,
    std::span<const EstimatorSpec> specs, const BootstrapConfig& cfg);

BootstrapResult bootstrap_se(const ExperimentView& data,
                             std::span<const std::string> covariate_levels,
                             const EstimatorSpec& spec, const BootstrapConfig& cfg);

struct MseDecomposition {
  double within_mse = 0.0;   // E_S[ MSE(est | S) ] around nu_S
  double nu_mse = 0.0;       // E_S[ (nu_S - tau)^2 ]
  double cross_term = 0.0;   // 2 E_S[ b_S (nu_S - tau) ]
  double total_from_terms = 0.0;
  double total_direct = 0.0;     // independent Monte Carlo MSE
  double total_direct_se = 0.0;
  std::size_t samples = 0;
  std::size_t randomizations_per_sample = 0;
};

// Monte Carlo split of the overall MSE of `spec` (as an estimator of the
// population tau) into randomization error around nu_S, sampling error of
// nu_S and the cross-bias term, plus an independent direct estimate of the
// total from `samples` fresh (sample, assignment) pairs.
MseDecomposition mse_decomposition(const Population& pop, const SamplingPlan& sampling,
                                   const AssignmentPlan& assignment,
                                   const EstimatorSpec& spec, std::size_t samples,
                                   std::size_t randomizations_per_sample,
                                   std::uint64_t seed);

}  // namespace svyexp
