#include "svyexp/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "svyexp/error.hpp"
#include "svyexp/rng.hpp"

namespace svyexp {

namespace {

double sample_variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

// Type-7 quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

bool is_degenerate_error(const Error& e) {
  return e.code() == ErrorCode::kDegenerateArm || e.code() == ErrorCode::kEmptyStratumArm;
}

}  // namespace

SampleMoments sample_moments(std::span<const double> y1, std::span<const double> y0,
                             double p) {
  if (y1.empty() || y1.size() != y0.size()) {
    throw Error(ErrorCode::kOracleDataMissing,
                "both potential outcomes are required for every unit");
  }
  if (y1.size() < 2) throw Error(ErrorCode::kTooFew, "moments need n >= 2");
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
  }
  const std::size_t n = y1.size();
  const double nd = static_cast<double>(n);
  const double m1 = std::accumulate(y1.begin(), y1.end(), 0.0) / nd;
  const double m0 = std::accumulate(y0.begin(), y0.end(), 0.0) / nd;
  double s11 = 0.0;
  double s00 = 0.0;
  double s10 = 0.0;
  double sdd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d1 = y1[i] - m1;
    const double d0 = y0[i] - m0;
    s11 += d1 * d1;
    s00 += d0 * d0;
    s10 += d1 * d0;
    sdd += (d1 - d0) * (d1 - d0);
  }
  SampleMoments m;
  m.n = n;
  m.var1 = s11 / (nd - 1.0);
  m.var0 = s00 / (nd - 1.0);
  m.gamma = s10 / (nd - 1.0);
  m.var_delta = sdd / (nd - 1.0);
  m.beta1 = 1.0 / p;
  m.beta0 = 1.0 / (1.0 - p);
  return m;
}

double neyman_sate_variance(const SampleMoments& m) {
  return (m.beta1 * m.var1 + m.beta0 * m.var0 - m.var_delta) / static_cast<double>(m.n);
}

double neyman_sate_variance_covariance_form(const SampleMoments& m) {
  return ((m.beta1 - 1.0) * m.var1 + (m.beta0 - 1.0) * m.var0 + 2.0 * m.gamma) /
         static_cast<double>(m.n);
}

double neyman_sate_variance(std::span<const double> y1, std::span<const double> y0,
                            const AssignmentPlan& plan) {
  double p = plan.p;
  if (plan.mechanism == AssignmentMechanism::kComplete) {
    p = static_cast<double>(complete_treated_count(y1.size(), plan)) /
        static_cast<double>(y1.size());
  }
  return neyman_sate_variance(sample_moments(y1, y0, p));
}

double neyman_sate_var_estimate(const ExperimentView& data) {
  const ArmCounts c = arm_counts(data);
  if (c.n1 < 2 || c.n0 < 2) {
    throw Error(ErrorCode::kArmTooSmall, "each arm needs at least two units");
  }
  std::vector<double> treated;
  std::vector<double> control;
  treated.reserve(c.n1);
  control.reserve(c.n0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    (data.t[i] != 0 ? treated : control).push_back(data.y[i]);
  }
  return sample_variance(treated) / static_cast<double>(c.n1) +
         sample_variance(control) / static_cast<double>(c.n0);
}

double hh_plugin_variance(const ExperimentView& data) {
  const ArmCounts c = arm_counts(data);
  if (c.n1 == 0 || c.n0 == 0) {
    throw Error(ErrorCode::kDegenerateArm, "both arms are needed");
  }
  double sum1 = 0.0;
  double sum0 = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    (data.t[i] != 0 ? sum1 : sum0) += data.w[i] * data.y[i];
  }
  const double mu1 = sum1 / c.mass_treated;
  const double mu0 = sum0 / c.mass_control;
  double ss1 = 0.0;
  double ss0 = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.t[i] != 0) {
      const double r = data.w[i] * (data.y[i] - mu1);
      ss1 += r * r;
    } else {
      const double r = data.w[i] * (data.y[i] - mu0);
      ss0 += r * r;
    }
  }
  return ss1 / (c.mass_treated * c.mass_treated) + ss0 / (c.mass_control * c.mass_control);
}

double hh_approx_variance(const Population& pop, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
  const auto w = pop.weights();
  const auto y1 = pop.y1();
  const auto y0 = pop.y0();
  double a1 = 0.0;
  double a0 = 0.0;
  for (std::size_t j = 0; j < pop.size(); ++j) {
    a1 += w[j] * (y1[j] - pop.mean_y1()) * (y1[j] - pop.mean_y1());
    a0 += w[j] * (y0[j] - pop.mean_y0()) * (y0[j] - pop.mean_y0());
  }
  const double big_n = static_cast<double>(pop.size());
  const double en = pop.expected_n();
  return a1 / big_n / (p * en) + a0 / big_n / ((1.0 - p) * en);
}

double hh_poisson_bernoulli_variance(const Population& pop, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::kInvalidArgument, "p must lie in (0, 1)");
  const auto pi = pop.pi();
  const auto y1 = pop.y1();
  const auto y0 = pop.y0();
  double a1 = 0.0;
  double a0 = 0.0;
  for (std::size_t j = 0; j < pop.size(); ++j) {
    const double t1 = p * pi[j];
    const double t0 = (1.0 - p) * pi[j];
    a1 += (1.0 - t1) / t1 * (y1[j] - pop.mean_y1()) * (y1[j] - pop.mean_y1());
    a0 += (1.0 - t0) / t0 * (y0[j] - pop.mean_y0()) * (y0[j] - pop.mean_y0());
  }
  const double big_n = static_cast<double>(pop.size());
  return (a1 + a0) / (big_n * big_n);
}

std::string_view to_string(CiMethod method) {
  return method == CiMethod::kNormal ? "normal" : "percentile";
}

CiMethod parse_ci_method(std::string_view name) {
  if (name == "normal") return CiMethod::kNormal;
  if (name == "percentile") return CiMethod::kPercentile;
  throw Error(ErrorCode::kInvalidArgument, "unknown CI method '" + std::string(name) + "'");
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "confidence level must lie in (0, 1)");
  }
  const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + level / 2.0);
}

std::vector<double> ReplicateMatrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

ReplicateMatrix bootstrap_replicates(const ExperimentView& data,
                                     std::span<const std::string> covariate_levels,
                                     std::size_t statistic_count,
                                     const ReplicateStatistic& statistic,
                                     const BootstrapConfig& cfg) {
  const std::size_t n = data.n();
  if (n < 2) throw Error(ErrorCode::kTooFew, "bootstrap needs n >= 2");
  if (cfg.replicates < 2) {
    throw Error(ErrorCode::kInvalidArgument, "bootstrap needs at least two replicates");
  }
  arm_counts(data);
  const bool with_levels = !covariate_levels.empty();
  if (with_levels && covariate_levels.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "covariate column length differs from data");
  }

  ReplicateMatrix out;
  out.rows = cfg.replicates;
  out.cols = statistic_count;
  out.values.assign(out.rows * out.cols, 0.0);
  std::vector<std::size_t> redraws(cfg.replicates, 0);

  const unsigned threads =
      std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.replicates)));
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&](unsigned id) {
    std::vector<double> y(n);
    std::vector<std::uint8_t> t(n);
    std::vector<double> w(n);
    std::vector<std::string> levels(with_levels ? n : 0);
    const ExperimentView view{y, t, w};
    try {
      for (std::size_t b = id; b < cfg.replicates; b += threads) {
        Rng rng = Rng::substream(cfg.seed, b);
        std::span<double> row(out.values.data() + b * out.cols, out.cols);
        for (;;) {
          std::size_t n1 = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = rng.below(n);
            y[i] = data.y[j];
            t[i] = data.t[j];
            w[i] = data.w[j];
            n1 += t[i] != 0;
            if (with_levels) levels[i] = covariate_levels[j];
          }
          bool degenerate = n1 == 0 || n1 == n;
          if (!degenerate) {
            try {
              statistic(view, levels, row);
            } catch (const Error& e) {
              if (!is_degenerate_error(e)) throw;
              degenerate = true;
            }
          }
          if (!degenerate) break;
          if (++redraws[b] > cfg.replicates) {
            throw Error(ErrorCode::kTooManyDegenerateReplicates,
                        "more than half of the bootstrap resamples were degenerate");
          }
        }
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned id = 0; id < threads; ++id) pool.emplace_back(worker, id);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  out.redraws = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  if (out.redraws > cfg.replicates) {
    throw Error(ErrorCode::kTooManyDegenerateReplicates,
                "more than half of the bootstrap resamples were degenerate (" +
                    std::to_string(out.redraws) + " redraws)");
  }
  return out;
}

BootstrapResult summarize_bootstrap(double point, std::vector<double> replicates,
                                    std::size_t redraws, const BootstrapConfig& cfg) {
  BootstrapResult r;
  r.point = point;
  r.redraws = redraws;
  r.se = std::sqrt(sample_variance(replicates));
  if (cfg.ci_method == CiMethod::kNormal) {
    const double z = normal_critical_value(cfg.ci_level);
    r.ci_low = point - z * r.se;
    r.ci_high = point + z * r.se;
  } else {
    std::vector<double> sorted = replicates;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 1.0 - cfg.ci_level;
    r.ci_low = std::min(point, sorted_quantile(sorted, alpha / 2.0));
    r.ci_high = std::max(point, sorted_quantile(sorted, 1.0 - alpha / 2.0));
  }
  r.replicates = std::move(replicates);
  return r;
}

std::vector<BootstrapResult> bootstrap_estimators(
    const ExperimentView& data, std::span<const std::string> covariate_levels,
    std::span<const EstimatorSpec> specs, const BootstrapConfig& cfg) {
  std::vector<double> points(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    points[k] = evaluate(specs[k], data, covariate_levels);
  }
  const ReplicateStatistic statistic = [&specs](const ExperimentView& view,
                                                std::span<const std::string> levels,
                                                std::span<double> out) {
    for (std::size_t k = 0; k < specs.size(); ++k) out[k] = evaluate(specs[k], view, levels);
  };
  const ReplicateMatrix m =
      bootstrap_replicates(data, covariate_levels, specs.size(), statistic, cfg);
  std::vector<BootstrapResult> results;
  results.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    results.push_back(summarize_bootstrap(points[k], m.column(k), m.redraws, cfg));
  }
  return results;
}

BootstrapResult bootstrap_se(const ExperimentView& data,
                             std::span<const std::string> covariate_levels,
                             const EstimatorSpec& spec, const BootstrapConfig& cfg) {
  return bootstrap_estimators(data, covariate_levels, std::span(&spec, 1), cfg).front();
}

namespace {

std::vector<std::uint8_t> assign_with_redraw(std::size_t n, const AssignmentPlan& plan,
                                             Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    try {
      return assign_treatment(n, plan, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateArm || attempt > 1000) throw;
    }
  }
}

SampleDraw draw_nonempty(const Population& pop, const SamplingPlan& plan, Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    SampleDraw d = draw_sample(pop, plan, rng);
    if (d.n() >= 2) return d;
    if (attempt > 1000) throw Error(ErrorCode::kTooFew, "samples keep coming out empty");
  }
}

}  // namespace

MseDecomposition mse_decomposition(const Population& pop, const SamplingPlan& sampling,
                                   const AssignmentPlan& assignment,
                                   const EstimatorSpec& spec, std::size_t samples,
                                   std::size_t randomizations_per_sample,
                                   std::uint64_t seed) {
  if (samples < 2 || randomizations_per_sample < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need >= 2 samples and >= 1 randomization");
  }
  const double tau = pop.tau();
  MseDecomposition out;
  out.samples = samples;
  out.randomizations_per_sample = randomizations_per_sample;

  double within = 0.0;
  double nu_err = 0.0;
  double cross = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = Rng::substream(seed, 2 * s);
    const SampleDraw draw = draw_nonempty(pop, sampling, rng);
    const double nu = oracle_nu(pop, draw);
    double sq = 0.0;
    double dev = 0.0;
    for (std::size_t r = 0; r < randomizations_per_sample; ++r) {
      const ObservedSample obs =
          observe(pop, draw, assign_with_redraw(draw.n(), assignment, rng));
      const double est = evaluate(spec, obs.view());
      sq += (est - nu) * (est - nu);
      dev += est - nu;
    }
    const double reps = static_cast<double>(randomizations_per_sample);
    within += sq / reps;
    nu_err += (nu - tau) * (nu - tau);
    cross += 2.0 * (dev / reps) * (nu - tau);
  }
  const double ns = static_cast<double>(samples);
  out.within_mse = within / ns;
  out.nu_mse = nu_err / ns;
  out.cross_term = cross / ns;
  out.total_from_terms = out.within_mse + out.nu_mse + out.cross_term;

  std::vector<double> sq_errors(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Rng rng = Rng::substream(seed, 2 * s + 1);
    const SampleDraw draw = draw_nonempty(pop, sampling, rng);
    const ObservedSample obs =
        observe(pop, draw, assign_with_redraw(draw.n(), assignment, rng));
    const double est = evaluate(spec, obs.view());
    sq_errors[s] = (est - tau) * (est - tau);
  }
  out.total_direct = std::accumulate(sq_errors.begin(), sq_errors.end(), 0.0) / ns;
  out.total_direct_se = std::sqrt(sample_variance(sq_errors) / ns);
  return out;
}

}  // namespace svyexp
