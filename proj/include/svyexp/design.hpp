#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "svyexp/core_model.hpp"
#include "svyexp/rng.hpp"

namespace svyexp {

enum class AssignmentMechanism { kBernoulli, kComplete };

struct AssignmentPlan {
  AssignmentMechanism mechanism = AssignmentMechanism::kComplete;
  double p = 0.5;
  // Complete randomization only; defaults to round(n * p).
  std::optional<std::size_t> n1;
};

enum class SamplingScheme {
  kPoisson,     // independent inclusion with probability pi_i
  kSequential,  // n successive draws proportional to pi_i among the remaining
  kSystematic,  // randomized systematic PPS, exact inclusion n * x_i / sum(x)
};

struct SamplingPlan {
  SamplingScheme scheme = SamplingScheme::kSystematic;
  std::size_t n = 0;  // ignored for Poisson
};

std::string_view to_string(SamplingScheme scheme);
std::string_view to_string(AssignmentMechanism mechanism);
SamplingScheme parse_sampling_scheme(std::string_view name);
AssignmentMechanism parse_assignment_mechanism(std::string_view name);

// Each unit enters independently with probability pi_i; the draw may be
// empty.
SampleDraw poisson_sample(const Population& pop, Rng& rng);

// Exactly n distinct units by successive draws, each step choosing among the
// remaining units with probability proportional to pi_i (equivalently 1/w_i).
// Implemented with exponential race keys, which has the same law as the
// draw-by-draw procedure. Throws kSampleTooLarge unless 1 <= n <= N.
SampleDraw weighted_sample_without_replacement(const Population& pop,
                                               std::size_t n, Rng& rng);

// Same law as above, literally drawing one unit at a time (O(nN)). Kept as a
// reference path for tests.
SampleDraw sequential_sample_reference(std::span<const double> size_measure,
                                       std::size_t n, Rng& rng);

// First-order inclusion probabilities of a fixed-size PPS design with size
// measure x: pi_i = n x_i / sum(x), with units that would exceed 1 taken with
// certainty and the remainder rescaled.
std::vector<double> pps_inclusion_probabilities(std::span<const double> size_measure,
                                                std::size_t n);

// Randomized systematic PPS: random unit order, one random start, n equally
// spaced points on the cumulated inclusion probabilities. Unit i is included
// with probability exactly pps_inclusion_probabilities(pi, n)[i].
SampleDraw systematic_pps_sample(const Population& pop, std::size_t n, Rng& rng);

SampleDraw draw_sample(const Population& pop, const SamplingPlan& plan, Rng& rng);

// Treatment vector for n units. Never looks at weights or outcomes.
// Bernoulli draws with an empty arm throw kDegenerateArm.
std::vector<std::uint8_t> assign_treatment(std::size_t n, const AssignmentPlan& plan,
                                           Rng& rng);

// Resolved treated count for complete randomization; validates the plan.
std::size_t complete_treated_count(std::size_t n, const AssignmentPlan& plan);

}  // namespace svyexp
