#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svyexp/core_model.hpp"

namespace svyexp {

// Weighted average sum(w y) / sum(w). Throws kEmptyInput / kLengthMismatch.
double hajek_mean(std::span<const double> y, std::span<const double> w);

// sum(w y) / expected_n. Unbiased under the design but not translation
// invariant, and it scales linearly with the weights.
double horvitz_thompson_mean(std::span<const double> y, std::span<const double> w,
                             double expected_n);

// Neyman difference in means; weights are ignored.
double sate_diff_means(const ExperimentView& data);
double sate_diff_means(const ExperimentData& data);

// Difference of the per-arm weighted means. Identical to the treatment
// coefficient of a weighted least-squares fit of y on (1, t).
double double_hajek(const ExperimentView& data);
double double_hajek(const ExperimentData& data);

// Arm sums normalized by the expected arm masses Z p and Z (1 - p). When p is
// not given, p = n1 / n. Stays defined when one arm is empty.
double single_hajek(const ExperimentView& data, std::optional<double> p = std::nullopt);
double single_hajek(const ExperimentData& data, std::optional<double> p = std::nullopt);

// Arm sums of w y divided by the arm counts. Unbiased for fixed n but pays
// for it in variance; depends on the weight scale.
double tau_sd(const ExperimentView& data);
double tau_sd(const ExperimentData& data);

// Mean unit-level effect over the drawn units.
double oracle_sate(const Population& pop, const SampleDraw& draw);

// Weighted mean unit-level effect over the drawn units, weights w = pi_bar/pi.
double oracle_nu(const Population& pop, const SampleDraw& draw);

enum class StrataSource { kWeightQuantiles, kCovariate, kCovariateByWeights };

std::string_view to_string(StrataSource source);

// Unit-to-stratum labels plus per-stratum counts and weight masses. Arm-level
// fields are filled once a partition is bound to a treatment vector (see
// bind_strata); strata are ordered by increasing mean weight for the weight
// based sources.
struct StrataPartition {
  std::vector<int> labels;
  int k = 0;
  StrataSource source = StrataSource::kWeightQuantiles;

  std::vector<double> mass;
  std::vector<double> share;  // mass_k / total mass
  std::vector<std::size_t> count;
  std::vector<double> mean_weight;

  std::vector<double> mass_treated;
  std::vector<double> mass_control;
  std::vector<std::size_t> count_treated;
  std::vector<std::size_t> count_control;

  // One entry per merge performed by the empty-arm repair.
  std::vector<std::string> merges;

  bool bound() const { return !mass_treated.empty(); }
};

// Sorts units by weight (ties keep input order) and cuts the sorted list into
// K contiguous groups whose weight masses are as close to Z/K as possible
// without splitting a unit. Throws kTooManyStrata when K > n, kInvalidArgument
// when K < 1.
StrataPartition strata_from_weights(std::span<const double> w, int k);

// Labels from a categorical column; levels are numbered in sorted order.
StrataPartition strata_from_covariate(std::span<const std::string> levels,
                                      std::span<const double> w);

// Product of a covariate partition with K weight-quantile strata. Empty cells
// are dropped.
StrataPartition strata_from_covariate_and_weights(std::span<const std::string> levels,
                                                  std::span<const double> w, int k);

// Computes arm masses and merges every stratum lacking an arm into its
// neighbour (in stratum order) with the closer mean weight, repeating until
// each stratum has both arms. Throws kEmptyStratumArm if even a single
// remaining stratum lacks an arm.
StrataPartition bind_strata(const ExperimentView& data, StrataPartition partition);

enum class PsVariant { kDouble, kSingle };

// sum_k share_k * tau_k with tau_k the per-stratum double-Hajek (kDouble) or
// the per-stratum single-Hajek (kSingle). For kSingle the stratum mass
// cancels against its share; when p is absent each stratum uses its own
// treated fraction n_k1 / n_k. The partition is bound and repaired as
// needed; `repaired`, when given, receives the partition actually used.
double post_stratified(const ExperimentView& data, const StrataPartition& partition,
                       PsVariant variant, std::optional<double> p = std::nullopt,
                       StrataPartition* repaired = nullptr);

// How post-stratified estimators derive their strata. Recipes are re-applied
// to each bootstrap replicate, so weight cut-points follow the resample.
struct StrataRecipe {
  int weight_strata = 0;          // 0: no weight quantiles
  std::string covariate;          // empty: no covariate
  bool empty() const { return weight_strata == 0 && covariate.empty(); }
};

StrataPartition build_strata(const ExperimentView& data,
                             std::span<const std::string> covariate_levels,
                             const StrataRecipe& recipe);

// One estimator plus whatever it needs (strata recipe, p) to run on a view.
struct EstimatorSpec {
  EstimatorId id = EstimatorId::kDoubleHajek;
  StrataRecipe strata;
  std::optional<double> p;
  // Horvitz-Thompson only.
  std::optional<double> expected_n;
};

// Evaluates `spec` on `data`. For hajek_mean / ht_mean the treatment column
// is ignored and the outcome is averaged over all units. `covariate_levels`
// must be supplied when the recipe names a covariate.
double evaluate(const EstimatorSpec& spec, const ExperimentView& data,
                std::span<const std::string> covariate_levels = {});

}  // namespace svyexp
