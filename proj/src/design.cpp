#include "svyexp/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "svyexp/error.hpp"

namespace svyexp {

std::string_view to_string(SamplingScheme scheme) {
  switch (scheme) {
    case SamplingScheme::kPoisson: return "poisson";
    case SamplingScheme::kSequential: return "sequential";
    case SamplingScheme::kSystematic: return "systematic";
  }
  return "unknown";
}

std::string_view to_string(AssignmentMechanism mechanism) {
  return mechanism == AssignmentMechanism::kBernoulli ? "bernoulli" : "complete";
}

SamplingScheme parse_sampling_scheme(std::string_view name) {
  if (name == "poisson") return SamplingScheme::kPoisson;
  if (name == "sequential") return SamplingScheme::kSequential;
  if (name == "systematic") return SamplingScheme::kSystematic;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown sampling scheme '" + std::string(name) + "'");
}

AssignmentMechanism parse_assignment_mechanism(std::string_view name) {
  if (name == "bernoulli") return AssignmentMechanism::kBernoulli;
  if (name == "complete") return AssignmentMechanism::kComplete;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown assignment mechanism '" + std::string(name) + "'");
}

SampleDraw poisson_sample(const Population& pop, Rng& rng) {
  SampleDraw draw;
  const auto pi = pop.pi();
  draw.indices.reserve(static_cast<std::size_t>(pop.expected_n() * 1.2) + 8);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (rng.uniform() < pi[i]) draw.indices.push_back(i);
  }
  return draw;
}

SampleDraw weighted_sample_without_replacement(const Population& pop,
                                               std::size_t n, Rng& rng) {
  const std::size_t big_n = pop.size();
  if (n < 1 || n > big_n) {
    throw Error(ErrorCode::kSampleTooLarge,
                "need 1 <= n <= N, got n=" + std::to_string(n));
  }
  const auto pi = pop.pi();
  std::vector<std::pair<double, std::size_t>> keys(big_n);
  for (std::size_t i = 0; i < big_n; ++i) {
    keys[i] = {rng.exponential() / pi[i], i};
  }
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n - 1),
                   keys.end());
  SampleDraw draw;
  draw.indices.resize(n);
  for (std::size_t k = 0; k < n; ++k) draw.indices[k] = keys[k].second;
  std::sort(draw.indices.begin(), draw.indices.end());
  return draw;
}

SampleDraw sequential_sample_reference(std::span<const double> size_measure,
                                       std::size_t n, Rng& rng) {
  if (n < 1 || n > size_measure.size()) {
    throw Error(ErrorCode::kSampleTooLarge, "need 1 <= n <= N");
  }
  std::vector<double> remaining(size_measure.begin(), size_measure.end());
  SampleDraw draw;
  for (std::size_t step = 0; step < n; ++step) {
    const double total = std::accumulate(remaining.begin(), remaining.end(), 0.0);
    double u = rng.uniform() * total;
    std::size_t pick = remaining.size();
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (remaining[i] <= 0.0) continue;
      pick = i;
      if (u < remaining[i]) break;
      u -= remaining[i];
    }
    draw.indices.push_back(pick);
    remaining[pick] = 0.0;
  }
  std::sort(draw.indices.begin(), draw.indices.end());
  return draw;
}

std::vector<double> pps_inclusion_probabilities(std::span<const double> size_measure,
                                                std::size_t n) {
  const std::size_t big_n = size_measure.size();
  if (n < 1 || n > big_n) {
    throw Error(ErrorCode::kSampleTooLarge, "need 1 <= n <= N");
  }
  std::vector<double> pi(big_n, 0.0);
  std::vector<bool> certain(big_n, false);
  std::size_t n_certain = 0;
  for (;;) {
    double free_total = 0.0;
    for (std::size_t i = 0; i < big_n; ++i) {
      if (!certain[i]) free_total += size_measure[i];
    }
    const double free_n = static_cast<double>(n - n_certain);
    bool changed = false;
    for (std::size_t i = 0; i < big_n; ++i) {
      if (certain[i]) continue;
      pi[i] = free_n * size_measure[i] / free_total;
      if (pi[i] >= 1.0) {
        certain[i] = true;
        pi[i] = 1.0;
        ++n_certain;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return pi;
}

SampleDraw systematic_pps_sample(const Population& pop, std::size_t n, Rng& rng) {
  const std::size_t big_n = pop.size();
  const std::vector<double> pi = pps_inclusion_probabilities(pop.pi(), n);

  std::vector<std::size_t> order(big_n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = big_n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }

  SampleDraw draw;
  draw.indices.reserve(n);
  const double start = rng.uniform();
  double cumulative = 0.0;
  std::size_t next_point = 0;
  for (std::size_t k = 0; k < big_n && next_point < n; ++k) {
    const std::size_t unit = order[k];
    cumulative += pi[unit];
    if (start + static_cast<double>(next_point) < cumulative) {
      draw.indices.push_back(unit);
      ++next_point;
    }
  }
  // Rounding in the cumulated sum can leave the final point unplaced.
  for (std::size_t k = big_n; next_point < n && k-- > 0;) {
    const std::size_t unit = order[k];
    if (std::find(draw.indices.begin(), draw.indices.end(), unit) == draw.indices.end()) {
      draw.indices.push_back(unit);
      ++next_point;
    }
  }
  std::sort(draw.indices.begin(), draw.indices.end());
  return draw;
}

SampleDraw draw_sample(const Population& pop, const SamplingPlan& plan, Rng& rng) {
  switch (plan.scheme) {
    case SamplingScheme::kPoisson: return poisson_sample(pop, rng);
    case SamplingScheme::kSequential:
      return weighted_sample_without_replacement(pop, plan.n, rng);
    case SamplingScheme::kSystematic: return systematic_pps_sample(pop, plan.n, rng);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown sampling scheme");
}

std::size_t complete_treated_count(std::size_t n, const AssignmentPlan& plan) {
  if (!(plan.p > 0.0 && plan.p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "treatment probability must be in (0, 1)");
  }
  const std::size_t n1 =
      plan.n1.value_or(static_cast<std::size_t>(std::llround(static_cast<double>(n) * plan.p)));
  if (n1 < 1 || n1 + 1 > n) {
    throw Error(ErrorCode::kDegenerateArm,
                "complete randomization needs 1 <= n1 <= n-1, got n1=" +
                    std::to_string(n1) + " n=" + std::to_string(n));
  }
  return n1;
}

std::vector<std::uint8_t> assign_treatment(std::size_t n, const AssignmentPlan& plan,
                                           Rng& rng) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "assignment needs n >= 2");
  std::vector<std::uint8_t> t(n, 0);
  if (plan.mechanism == AssignmentMechanism::kBernoulli) {
    if (!(plan.p > 0.0 && plan.p < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "treatment probability must be in (0, 1)");
    }
    std::size_t n1 = 0;
    for (auto& ti : t) {
      ti = rng.bernoulli(plan.p) ? 1 : 0;
      n1 += ti;
    }
    if (n1 == 0 || n1 == n) {
      throw Error(ErrorCode::kDegenerateArm, "Bernoulli assignment left an arm empty");
    }
    return t;
  }
  const std::size_t n1 = complete_treated_count(n, plan);
  // Partial Fisher-Yates: the first n1 slots of a random permutation.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < n1; ++k) {
    std::swap(idx[k], idx[k + rng.below(n - k)]);
    t[idx[k]] = 1;
  }
  return t;
}

}  // namespace svyexp
