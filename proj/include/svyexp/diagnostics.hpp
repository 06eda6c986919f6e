#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svyexp/core_model.hpp"
#include "svyexp/uncertainty.hpp"

namespace svyexp {

// Standardized gap between the sample difference in means and the
// double-Hajek. Positive delta means the unweighted estimate is larger.
struct DeltaReport {
  std::string group;
  std::string experiment;
  double sate_est = 0.0;
  double hh_est = 0.0;
  double se_diff = 0.0;
  double delta = 0.0;
  std::size_t redraws = 0;
};

// Both estimators are evaluated on the same case-wise bootstrap replicates,
// so se_diff reflects their dependence. delta is 0 when both the difference
// and se_diff are 0; a nonzero difference with se_diff = 0 throws
// kZeroVariance.
DeltaReport delta_statistic(const ExperimentView& data, const BootstrapConfig& cfg);
DeltaReport delta_statistic(const ExperimentData& data, const BootstrapConfig& cfg);

struct QqPoint {
  double theoretical = 0.0;
  double observed = 0.0;
};

// Ordered values against standard-normal quantiles at (i - 0.5)/m. Throws
// kTooFew for fewer than two values.
std::vector<QqPoint> qq_points(std::span<const double> values);

// sup |F_m(x) - Phi(x)| of the empirical c.d.f. of `values`.
double ks_statistic_normal(std::span<const double> values);

// Asymptotic 99% critical value of the one-sample KS statistic, 1.6276/sqrt(m).
double ks_critical_99(std::size_t m);

// (1/N) sum (pi_i / pi_bar - 1) Delta_i with the nominal pi of `pop`: the
// bias of the sample average treatment effect for the population one.
double sate_bias_oracle(const Population& pop);

// Same functional with empirical inclusion frequencies in place of pi.
// Throws kOracleDataMissing on a length mismatch or all-zero frequencies.
double sate_bias_from_inclusion(const Population& pop, std::span<const double> inclusion);

enum class Arm { kControl, kTreated };

// Leading-order bias of the Hajek mean of one potential-outcome column:
// -(1/E[n]) (1/N) sum (y_i - mu) w_i.
double hajek_bias_oracle(const Population& pop, Arm arm, double expected_n);
double hajek_bias_oracle(std::span<const double> y, std::span<const double> w,
                         double expected_n);

}  // namespace svyexp
