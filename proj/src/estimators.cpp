#include "svyexp/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "svyexp/error.hpp"

namespace svyexp {

namespace {

struct ArmSums {
  double sum_wy1 = 0.0;
  double sum_wy0 = 0.0;
  double sum_y1 = 0.0;
  double sum_y0 = 0.0;
  ArmCounts counts;
};

ArmSums arm_sums(const ExperimentView& data) {
  ArmSums s;
  s.counts = arm_counts(data);
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.t[i] != 0) {
      s.sum_wy1 += data.w[i] * data.y[i];
      s.sum_y1 += data.y[i];
    } else {
      s.sum_wy0 += data.w[i] * data.y[i];
      s.sum_y0 += data.y[i];
    }
  }
  return s;
}

void require_both_arms(const ArmCounts& c) {
  if (c.n1 == 0 || c.n0 == 0) {
    throw Error(ErrorCode::kDegenerateArm,
                c.n1 == 0 ? "no treated units" : "no control units");
  }
}

void require_nonempty(const SampleDraw& draw) {
  if (draw.indices.empty()) throw Error(ErrorCode::kEmptyInput, "empty sample draw");
}

// Relabels strata to 0..K-1 in order of first appearance of their old
// label value (old labels are assumed ordered) and drops empty ones.
void compact_labels(StrataPartition& part, int old_k) {
  std::vector<int> used(static_cast<std::size_t>(old_k), 0);
  for (int label : part.labels) used[static_cast<std::size_t>(label)] = 1;
  std::vector<int> remap(static_cast<std::size_t>(old_k), -1);
  int next = 0;
  for (int k = 0; k < old_k; ++k) {
    if (used[static_cast<std::size_t>(k)]) remap[static_cast<std::size_t>(k)] = next++;
  }
  for (int& label : part.labels) label = remap[static_cast<std::size_t>(label)];
  part.k = next;
}

void fill_masses(StrataPartition& part, std::span<const double> w) {
  const auto k = static_cast<std::size_t>(part.k);
  part.mass.assign(k, 0.0);
  part.count.assign(k, 0);
  part.share.assign(k, 0.0);
  part.mean_weight.assign(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto s = static_cast<std::size_t>(part.labels[i]);
    part.mass[s] += w[i];
    ++part.count[s];
    total += w[i];
  }
  for (std::size_t s = 0; s < k; ++s) {
    part.share[s] = part.mass[s] / total;
    part.mean_weight[s] =
        part.count[s] > 0 ? part.mass[s] / static_cast<double>(part.count[s]) : 0.0;
  }
}

void fill_arm_masses(StrataPartition& part, const ExperimentView& data) {
  const auto k = static_cast<std::size_t>(part.k);
  part.mass_treated.assign(k, 0.0);
  part.mass_control.assign(k, 0.0);
  part.count_treated.assign(k, 0);
  part.count_control.assign(k, 0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto s = static_cast<std::size_t>(part.labels[i]);
    if (data.t[i] != 0) {
      part.mass_treated[s] += data.w[i];
      ++part.count_treated[s];
    } else {
      part.mass_control[s] += data.w[i];
      ++part.count_control[s];
    }
  }
}

}  // namespace

double hajek_mean(std::span<const double> y, std::span<const double> w) {
  if (y.empty()) throw Error(ErrorCode::kEmptyInput, "no observations");
  if (y.size() != w.size()) {
    throw Error(ErrorCode::kLengthMismatch, "outcome and weight lengths differ");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += w[i] * y[i];
    den += w[i];
  }
  return num / den;
}

double horvitz_thompson_mean(std::span<const double> y, std::span<const double> w,
                             double expected_n) {
  if (y.empty()) throw Error(ErrorCode::kEmptyInput, "no observations");
  if (y.size() != w.size()) {
    throw Error(ErrorCode::kLengthMismatch, "outcome and weight lengths differ");
  }
  if (!(expected_n > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "expected sample size must be positive");
  }
  double num = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) num += w[i] * y[i];
  return num / expected_n;
}

double sate_diff_means(const ExperimentView& data) {
  const ArmSums s = arm_sums(data);
  require_both_arms(s.counts);
  return s.sum_y1 / static_cast<double>(s.counts.n1) -
         s.sum_y0 / static_cast<double>(s.counts.n0);
}

double double_hajek(const ExperimentView& data) {
  const ArmSums s = arm_sums(data);
  require_both_arms(s.counts);
  return s.sum_wy1 / s.counts.mass_treated - s.sum_wy0 / s.counts.mass_control;
}

double single_hajek(const ExperimentView& data, std::optional<double> p) {
  const ArmSums s = arm_sums(data);
  if (s.counts.n == 0) throw Error(ErrorCode::kEmptyInput, "no observations");
  double prob;
  if (p) {
    if (!(*p > 0.0 && *p < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
    }
    prob = *p;
  } else {
    require_both_arms(s.counts);
    prob = static_cast<double>(s.counts.n1) / static_cast<double>(s.counts.n);
  }
  const double z = s.counts.mass;
  return s.sum_wy1 / (z * prob) - s.sum_wy0 / (z * (1.0 - prob));
}

double tau_sd(const ExperimentView& data) {
  const ArmSums s = arm_sums(data);
  require_both_arms(s.counts);
  return s.sum_wy1 / static_cast<double>(s.counts.n1) -
         s.sum_wy0 / static_cast<double>(s.counts.n0);
}

double sate_diff_means(const ExperimentData& data) { return sate_diff_means(data.view()); }
double double_hajek(const ExperimentData& data) { return double_hajek(data.view()); }
double single_hajek(const ExperimentData& data, std::optional<double> p) {
  return single_hajek(data.view(), p);
}
double tau_sd(const ExperimentData& data) { return tau_sd(data.view()); }

double oracle_sate(const Population& pop, const SampleDraw& draw) {
  require_nonempty(draw);
  const auto delta = pop.effects();
  double sum = 0.0;
  for (std::size_t i : draw.indices) sum += delta[i];
  return sum / static_cast<double>(draw.n());
}

double oracle_nu(const Population& pop, const SampleDraw& draw) {
  require_nonempty(draw);
  const auto delta = pop.effects();
  const auto w = pop.weights();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i : draw.indices) {
    num += w[i] * delta[i];
    den += w[i];
  }
  return num / den;
}

std::string_view to_string(StrataSource source) {
  switch (source) {
    case StrataSource::kWeightQuantiles: return "weight_quantiles";
    case StrataSource::kCovariate: return "covariate";
    case StrataSource::kCovariateByWeights: return "covariate_x_weights";
  }
  return "unknown";
}

StrataPartition strata_from_weights(std::span<const double> w, int k) {
  const std::size_t n = w.size();
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one stratum");
  if (static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::kTooManyStrata, "K=" + std::to_string(k) +
                                               " exceeds the number of units " +
                                               std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&w](std::size_t a, std::size_t b) { return w[a] < w[b]; });

  // prefix[e] is the mass of the first e sorted units.
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + w[order[j]];
  const double total = prefix[n];

  StrataPartition part;
  part.k = k;
  part.source = StrataSource::kWeightQuantiles;
  part.labels.assign(n, 0);

  std::size_t begin = 0;
  for (int s = 0; s < k; ++s) {
    std::size_t end = n;
    if (s + 1 < k) {
      const double target = total * static_cast<double>(s + 1) / static_cast<double>(k);
      const std::size_t lo = begin + 1;
      const std::size_t hi = n - static_cast<std::size_t>(k - s - 1);
      end = lo;
      double best = std::abs(prefix[lo] - target);
      for (std::size_t e = lo + 1; e <= hi; ++e) {
        const double gap = std::abs(prefix[e] - target);
        if (gap < best) {
          best = gap;
          end = e;
        }
        if (prefix[e] > target) break;
      }
    }
    for (std::size_t j = begin; j < end; ++j) part.labels[order[j]] = s;
    begin = end;
  }
  fill_masses(part, w);
  return part;
}

StrataPartition strata_from_covariate(std::span<const std::string> levels,
                                      std::span<const double> w) {
  if (levels.size() != w.size()) {
    throw Error(ErrorCode::kLengthMismatch, "covariate and weight lengths differ");
  }
  if (levels.empty()) throw Error(ErrorCode::kEmptyInput, "no observations");
  std::map<std::string, int> index;
  for (const auto& level : levels) index.emplace(level, 0);
  int next = 0;
  for (auto& [level, id] : index) id = next++;

  StrataPartition part;
  part.k = next;
  part.source = StrataSource::kCovariate;
  part.labels.resize(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) part.labels[i] = index.at(levels[i]);
  fill_masses(part, w);
  return part;
}

StrataPartition strata_from_covariate_and_weights(std::span<const std::string> levels,
                                                  std::span<const double> w, int k) {
  const StrataPartition by_cov = strata_from_covariate(levels, w);
  const StrataPartition by_weight = strata_from_weights(w, k);
  StrataPartition part;
  part.source = StrataSource::kCovariateByWeights;
  part.labels.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    part.labels[i] = by_cov.labels[i] * k + by_weight.labels[i];
  }
  compact_labels(part, by_cov.k * k);
  fill_masses(part, w);
  return part;
}

StrataPartition bind_strata(const ExperimentView& data, StrataPartition part) {
  if (part.labels.size() != data.n()) {
    throw Error(ErrorCode::kLengthMismatch, "strata labels do not cover the data");
  }
  fill_masses(part, data.w);
  fill_arm_masses(part, data);

  for (;;) {
    int bad = -1;
    for (int s = 0; s < part.k; ++s) {
      const auto u = static_cast<std::size_t>(s);
      if (part.count_treated[u] == 0 || part.count_control[u] == 0) {
        bad = s;
        break;
      }
    }
    if (bad < 0) break;
    if (part.k == 1) {
      throw Error(ErrorCode::kEmptyStratumArm,
                  "no merge left: the only stratum lacks an arm");
    }
    const auto ub = static_cast<std::size_t>(bad);
    int target;
    if (bad == 0) {
      target = 1;
    } else if (bad == part.k - 1) {
      target = bad - 1;
    } else {
      const double down = std::abs(part.mean_weight[ub] - part.mean_weight[ub - 1]);
      const double up = std::abs(part.mean_weight[ub + 1] - part.mean_weight[ub]);
      target = up < down ? bad + 1 : bad - 1;
    }
    part.merges.push_back(
        "stratum " + std::to_string(bad) + " (n=" + std::to_string(part.count[ub]) +
        ", treated=" + std::to_string(part.count_treated[ub]) +
        ", control=" + std::to_string(part.count_control[ub]) + ") merged into stratum " +
        std::to_string(target));
    for (int& label : part.labels) {
      if (label == bad) label = target;
    }
    compact_labels(part, part.k);
    fill_masses(part, data.w);
    fill_arm_masses(part, data);
  }
  return part;
}

double post_stratified(const ExperimentView& data, const StrataPartition& partition,
                       PsVariant variant, std::optional<double> p,
                       StrataPartition* repaired) {
  if (p && !(*p > 0.0 && *p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
  }
  StrataPartition part = bind_strata(data, partition);
  const auto k = static_cast<std::size_t>(part.k);
  std::vector<double> sum1(k, 0.0);
  std::vector<double> sum0(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto s = static_cast<std::size_t>(part.labels[i]);
    (data.t[i] != 0 ? sum1 : sum0)[s] += data.w[i] * data.y[i];
    total += data.w[i];
  }

  double estimate = 0.0;
  for (std::size_t s = 0; s < k; ++s) {
    if (variant == PsVariant::kDouble) {
      estimate += part.share[s] *
                  (sum1[s] / part.mass_treated[s] - sum0[s] / part.mass_control[s]);
    } else if (p) {
      // share_k / Z_k = 1 / Z.
      estimate += (sum1[s] / *p - sum0[s] / (1.0 - *p)) / total;
    } else {
      const double nk = static_cast<double>(part.count[s]);
      estimate += nk / total *
                  (sum1[s] / static_cast<double>(part.count_treated[s]) -
                   sum0[s] / static_cast<double>(part.count_control[s]));
    }
  }
  if (repaired != nullptr) *repaired = std::move(part);
  return estimate;
}

StrataPartition build_strata(const ExperimentView& data,
                             std::span<const std::string> covariate_levels,
                             const StrataRecipe& recipe) {
  if (recipe.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "post-stratification needs weight strata and/or a covariate");
  }
  if (!recipe.covariate.empty() && covariate_levels.size() != data.n()) {
    throw Error(ErrorCode::kInvalidArgument,
                "covariate '" + recipe.covariate + "' not available for strata");
  }
  if (recipe.covariate.empty()) return strata_from_weights(data.w, recipe.weight_strata);
  if (recipe.weight_strata == 0) return strata_from_covariate(covariate_levels, data.w);
  return strata_from_covariate_and_weights(covariate_levels, data.w, recipe.weight_strata);
}

double evaluate(const EstimatorSpec& spec, const ExperimentView& data,
                std::span<const std::string> covariate_levels) {
  switch (spec.id) {
    case EstimatorId::kSateDm: return sate_diff_means(data);
    case EstimatorId::kHajekMean: return hajek_mean(data.y, data.w);
    case EstimatorId::kHtMean:
      if (!spec.expected_n) {
        throw Error(ErrorCode::kInvalidArgument, "ht_mean needs an expected sample size");
      }
      return horvitz_thompson_mean(data.y, data.w, *spec.expected_n);
    case EstimatorId::kDoubleHajek: return double_hajek(data);
    case EstimatorId::kSingleHajek: return single_hajek(data, spec.p);
    case EstimatorId::kTauSd: return tau_sd(data);
    case EstimatorId::kPsDouble:
    case EstimatorId::kPsSingle: {
      const StrataPartition part = build_strata(data, covariate_levels, spec.strata);
      return post_stratified(data, part,
                             spec.id == EstimatorId::kPsDouble ? PsVariant::kDouble
                                                               : PsVariant::kSingle,
                             spec.p);
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown estimator");
}

}  // namespace svyexp
