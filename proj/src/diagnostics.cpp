#include "svyexp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "svyexp/error.hpp"
#include "svyexp/estimators.hpp"

namespace svyexp {

DeltaReport delta_statistic(const ExperimentView& data, const BootstrapConfig& cfg) {
  DeltaReport out;
  out.sate_est = sate_diff_means(data);
  out.hh_est = double_hajek(data);
  const double diff = out.sate_est - out.hh_est;

  const ReplicateMatrix m = bootstrap_replicates(
      data, {}, 1,
      [](const ExperimentView& v, std::span<const std::string>, std::span<double> o) {
        o[0] = sate_diff_means(v) - double_hajek(v);
      },
      cfg);
  out.redraws = m.redraws;
  const BootstrapResult res = summarize_bootstrap(diff, m.column(0), m.redraws, cfg);
  out.se_diff = res.se;

  const double scale = std::max({1.0, std::abs(out.sate_est), std::abs(out.hh_est)});
  if (out.se_diff > 1e-12 * scale) {
    out.delta = diff / out.se_diff;
  } else if (std::abs(diff) <= 1e-12 * scale) {
    out.se_diff = 0.0;
    out.delta = 0.0;
  } else {
    throw Error(ErrorCode::kZeroVariance,
                "bootstrap SE of the difference is zero but the estimates differ");
  }
  return out;
}

DeltaReport delta_statistic(const ExperimentData& data, const BootstrapConfig& cfg) {
  return delta_statistic(data.view(), cfg);
}

std::vector<QqPoint> qq_points(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::kTooFew, "qq needs at least two values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal_distribution<double> nd;
  const double m = static_cast<double>(sorted.size());
  std::vector<QqPoint> out(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double prob = (static_cast<double>(i) + 0.5) / m;
    out[i].theoretical = boost::math::quantile(nd, prob);
    out[i].observed = sorted[i];
  }
  return out;
}

double ks_statistic_normal(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kTooFew, "KS needs at least one value");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal_distribution<double> nd;
  const double m = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = boost::math::cdf(nd, sorted[i]);
    d = std::max(d, static_cast<double>(i + 1) / m - f);
    d = std::max(d, f - static_cast<double>(i) / m);
  }
  return d;
}

double ks_critical_99(std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kTooFew, "KS needs at least one value");
  return 1.6276 / std::sqrt(static_cast<double>(m));
}

namespace {

double weighted_effect_gap(std::span<const double> effects, std::span<const double> q) {
  const double n = static_cast<double>(q.size());
  const double q_bar = std::accumulate(q.begin(), q.end(), 0.0) / n;
  if (!(q_bar > 0.0)) {
    throw Error(ErrorCode::kOracleDataMissing, "inclusion probabilities are all zero");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += (q[i] / q_bar - 1.0) * effects[i];
  return acc / n;
}

}  // namespace

double sate_bias_oracle(const Population& pop) {
  return weighted_effect_gap(pop.effects(), pop.pi());
}

double sate_bias_from_inclusion(const Population& pop, std::span<const double> inclusion) {
  if (inclusion.size() != pop.size()) {
    throw Error(ErrorCode::kOracleDataMissing,
                "inclusion frequencies do not match the population");
  }
  return weighted_effect_gap(pop.effects(), inclusion);
}

double hajek_bias_oracle(std::span<const double> y, std::span<const double> w,
                         double expected_n) {
  if (y.empty() || y.size() != w.size()) {
    throw Error(ErrorCode::kOracleDataMissing, "outcome and weight columns do not match");
  }
  if (!(expected_n > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "expected sample size must be positive");
  }
  const double n = static_cast<double>(y.size());
  const double mu = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double cov = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) cov += (y[i] - mu) * w[i];
  cov /= n;
  return -cov / expected_n;
}

double hajek_bias_oracle(const Population& pop, Arm arm, double expected_n) {
  return hajek_bias_oracle(arm == Arm::kTreated ? pop.y1() : pop.y0(), pop.weights(),
                           expected_n);
}

}  // namespace svyexp
