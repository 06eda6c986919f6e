#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svyexp {

// Full potential-outcome table of a finite population together with each
// unit's selection probability. Weights are derived as w_i = mean(pi) / pi_i,
// so a weight of 1 means the unit stands for itself.
class Population {
 public:
  // Throws Error(kInvalidPopulation) when lengths differ, N < 2, or some
  // pi_i is outside (0, 1]. Nominal probabilities above 1 are accepted only
  // when `allow_pi_above_one` is set (scaled size measures in simulation).
  static Population create(std::vector<double> y0, std::vector<double> y1,
                           std::vector<double> pi,
                           bool allow_pi_above_one = false);

  std::size_t size() const { return y0_.size(); }
  std::span<const double> y0() const { return y0_; }
  std::span<const double> y1() const { return y1_; }
  std::span<const double> pi() const { return pi_; }
  std::span<const double> weights() const { return w_; }
  std::span<const double> effects() const { return delta_; }

  double pi_bar() const { return pi_bar_; }
  double expected_n() const { return pi_bar_ * static_cast<double>(size()); }
  double mean_y0() const { return mean_y0_; }
  double mean_y1() const { return mean_y1_; }
  // Population average treatment effect.
  double tau() const { return mean_y1_ - mean_y0_; }

 private:
  Population() = default;

  std::vector<double> y0_;
  std::vector<double> y1_;
  std::vector<double> pi_;
  std::vector<double> w_;
  std::vector<double> delta_;
  double pi_bar_ = 0.0;
  double mean_y0_ = 0.0;
  double mean_y1_ = 0.0;
};

// Indices of the selected units (S_i = 1) of a Population.
struct SampleDraw {
  std::vector<std::size_t> indices;

  std::size_t n() const { return indices.size(); }
};

// Throws Error(kInvalidArgument) unless indices are distinct and < N.
void validate_draw(const SampleDraw& draw, std::size_t population_size);

// Non-owning triple columns (outcome, treatment flag, weight). Every
// estimator is written against this view so simulation and bootstrap loops
// can reuse buffers without revalidating.
struct ExperimentView {
  std::span<const double> y;
  std::span<const std::uint8_t> t;
  std::span<const double> w;

  std::size_t n() const { return y.size(); }
};

struct ArmCounts {
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  double mass = 0.0;
  double mass_treated = 0.0;
  double mass_control = 0.0;
};

// Counts and weight masses of a view; throws kLengthMismatch on ragged
// columns.
ArmCounts arm_counts(const ExperimentView& view);

// Owning observed data for a drawn sample: y_obs = t ? y1 : y0, with the
// population weights w = pi_bar / pi of the drawn units (not renormalized).
struct ObservedSample {
  std::vector<double> y;
  std::vector<std::uint8_t> t;
  std::vector<double> w;

  ExperimentView view() const { return {y, t, w}; }
};

ObservedSample observe(const Population& pop, const SampleDraw& draw,
                       std::vector<std::uint8_t> treatment);

// Raw analyst columns as parsed from input, before validation.
struct ExperimentColumns {
  std::vector<double> y;
  std::vector<int> t;
  std::vector<double> w;
  std::map<std::string, std::vector<std::string>> covariates;
};

// Validated experiment: weights normalized to mean 1, both arms nonempty.
class ExperimentData {
 public:
  std::size_t n() const { return y_.size(); }
  std::size_t n1() const { return counts_.n1; }
  std::size_t n0() const { return counts_.n0; }
  double mass() const { return counts_.mass; }
  double mass_treated() const { return counts_.mass_treated; }
  double mass_control() const { return counts_.mass_control; }
  const ArmCounts& counts() const { return counts_; }

  std::span<const double> y() const { return y_; }
  std::span<const std::uint8_t> t() const { return t_; }
  std::span<const double> w() const { return w_; }
  ExperimentView view() const { return {y_, t_, w_}; }

  const std::map<std::string, std::vector<std::string>>& covariates() const {
    return covariates_;
  }
  // Throws kInvalidArgument when the column is absent.
  const std::vector<std::string>& covariate(const std::string& name) const;

 private:
  friend ExperimentData validate_experiment(ExperimentColumns columns);

  std::vector<double> y_;
  std::vector<std::uint8_t> t_;
  std::vector<double> w_;
  std::map<std::string, std::vector<std::string>> covariates_;
  ArmCounts counts_;
};

// Errors: kEmptyInput, kLengthMismatch, kMissingValue (NaN outcome or
// weight, empty covariate cell), kNonPositiveWeight, kNonBinaryTreatment,
// kDegenerateArm.
ExperimentData validate_experiment(ExperimentColumns columns);

// Rescales positive weights to mean exactly 1. Throws kNonPositiveWeight or
// kEmptyInput.
std::vector<double> normalize_weights(std::span<const double> w);

enum class EstimatorId {
  kSateDm,
  kHajekMean,
  kHtMean,
  kDoubleHajek,
  kSingleHajek,
  kTauSd,
  kPsDouble,
  kPsSingle,
};

enum class SeMethod { kPlugin, kBootstrap, kNone };

std::string_view to_string(EstimatorId id);
std::string_view to_string(SeMethod method);
// Throws kInvalidArgument for unknown names.
EstimatorId parse_estimator_id(std::string_view name);

struct EstimateReport {
  EstimatorId estimator = EstimatorId::kSateDm;
  double point = 0.0;
  std::optional<double> se;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  SeMethod se_method = SeMethod::kNone;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::vector<std::string> notes;
};

}  // namespace svyexp
