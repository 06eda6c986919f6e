#include "svyexp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "svyexp/error.hpp"
#include "svyexp/estimators.hpp"

namespace svyexp {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

constexpr std::size_t kOracleRows = 2;

// Everything one replicate contributes to the summary.
struct ReplicateRecord {
  std::vector<double> point;     // oracle rows first
  std::vector<double> boot_se;   // study estimators only
  std::vector<std::uint8_t> covered;
  std::size_t assignment_redraws = 0;
  std::size_t bootstrap_redraws = 0;
};

std::vector<std::uint8_t> assign_counting_redraws(std::size_t n, const AssignmentPlan& plan,
                                                  Rng& rng, std::size_t& redraws) {
  for (;;) {
    try {
      return assign_treatment(n, plan, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateArm || redraws > 100000) throw;
      ++redraws;
    }
  }
}

SampleDraw draw_counting_redraws(const Population& pop, const SamplingPlan& plan, Rng& rng,
                                 std::size_t& redraws) {
  for (;;) {
    SampleDraw d = draw_sample(pop, plan, rng);
    if (d.n() >= 2) return d;
    if (redraws > 100000) throw Error(ErrorCode::kTooFew, "samples keep coming out empty");
    ++redraws;
  }
}

std::vector<EstimatorSpec> specs_for(const StudyConfig& study) {
  std::vector<EstimatorSpec> specs;
  for (EstimatorId id : study.estimators) {
    EstimatorSpec s;
    s.id = id;
    if (id == EstimatorId::kPsDouble || id == EstimatorId::kPsSingle) {
      s.strata.weight_strata = study.strata;
    }
    specs.push_back(s);
  }
  return specs;
}

void validate_study(const Population& pop, const StudyConfig& study) {
  if (study.sample_n < 2 || study.sample_n >= pop.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sample_n must be in [2, N)");
  }
  if (study.reps < 2) throw Error(ErrorCode::kInvalidArgument, "reps must be >= 2");
  if (study.strata < 1) throw Error(ErrorCode::kInvalidArgument, "strata must be >= 1");
  if (study.estimators.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no estimators requested");
  }
  if (!(study.ci_level > 0.0 && study.ci_level < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ci_level must be in (0, 1)");
  }
  complete_treated_count(study.sample_n, study.assignment);
}

}  // namespace

double heterogeneous_effect_mean(double a, double b) {
  return (20.0 / 3.0) * std::sqrt(b - a);
}

GeneratedPopulation generate_population(const DgpConfig& cfg, std::size_t sample_n,
                                        Rng& rng) {
  if (!(cfg.b > cfg.a)) {
    throw Error(ErrorCode::kInvalidInterval, "weight interval needs b > a");
  }
  if (!(cfg.a > 0.0)) {
    throw Error(ErrorCode::kInvalidInterval, "weight interval needs a > 0");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must lie in [0, 1]");
  }
  if (cfg.population_size < 100) {
    throw Error(ErrorCode::kInvalidArgument, "population size must be >= 100");
  }
  if (sample_n < 1 || sample_n >= cfg.population_size) {
    throw Error(ErrorCode::kInvalidArgument, "sample_n must be in [1, N)");
  }

  const std::size_t n = cfg.population_size;
  const double width = cfg.b - cfg.a;
  const double rho = std::sqrt(1.0 - cfg.gamma * cfg.gamma);

  std::vector<double> weight(n);
  std::vector<double> shadow(n);
  std::vector<double> y0(n);
  std::vector<double> y1(n);
  std::vector<double> inv_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = rng.normal();
    const double eta = rng.normal();
    const double noise = rng.normal();
    const double eps_shadow = cfg.gamma == 1.0 ? eps : cfg.gamma * eps + rho * eta;
    const double w = cfg.a + width * std_normal_cdf(eps);
    const double ws = cfg.a + width * std_normal_cdf(eps_shadow);
    weight[i] = w;
    shadow[i] = ws;
    y0[i] = 120.0 - 20.0 * std::sqrt(ws) + cfg.noise_sd * noise;
    y1[i] = cfg.effect == EffectModel::kHeterogeneous
                ? y0[i] + 10.0 * std::sqrt(std::max(0.0, cfg.b - ws))
                : y0[i] + cfg.constant_effect;
    inv_w[i] = 1.0 / w;
  }
  const double total = std::accumulate(inv_w.begin(), inv_w.end(), 0.0);
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) {
    pi[i] = static_cast<double>(sample_n) * inv_w[i] / total;
  }
  return GeneratedPopulation{
      Population::create(std::move(y0), std::move(y1), std::move(pi), true),
      std::move(weight), std::move(shadow)};
}

const EstimatorSummary& SimulationSummary::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "no summary row '" + name + "'");
}

SimulationSummary run_study(const Population& pop, const StudyConfig& study) {
  validate_study(pop, study);
  const std::vector<EstimatorSpec> specs = specs_for(study);
  const std::size_t n_est = specs.size();
  const std::size_t n_rows = kOracleRows + n_est;
  const SamplingPlan sampling{study.sampling, study.sample_n};
  const double tau = pop.tau();
  const bool boot = study.bootstrap_replicates > 0;

  std::vector<ReplicateRecord> records(study.reps);
  const unsigned threads = std::max(
      1u, std::min<unsigned>(study.threads, static_cast<unsigned>(study.reps)));
  std::vector<std::vector<std::uint32_t>> hits(threads,
                                               std::vector<std::uint32_t>(pop.size(), 0));

  auto worker = [&](unsigned id) {
    for (std::size_t r = id; r < study.reps; r += threads) {
      Rng rng = Rng::substream(study.seed, r);
      ReplicateRecord& rec = records[r];
      const SampleDraw draw = draw_counting_redraws(pop, sampling, rng, rec.assignment_redraws);
      for (std::size_t i : draw.indices) ++hits[id][i];
      const ObservedSample obs = observe(
          pop, draw,
          assign_counting_redraws(draw.n(), study.assignment, rng, rec.assignment_redraws));
      const ExperimentView view = obs.view();

      rec.point.resize(n_rows);
      rec.point[0] = oracle_sate(pop, draw);
      rec.point[1] = oracle_nu(pop, draw);
      for (std::size_t e = 0; e < n_est; ++e) {
        rec.point[kOracleRows + e] = evaluate(specs[e], view);
      }
      if (boot) {
        BootstrapConfig bc;
        bc.replicates = study.bootstrap_replicates;
        bc.seed = mix64(study.seed ^ mix64(r + 0x5bd1e995ULL));
        bc.ci_level = study.ci_level;
        bc.ci_method = study.ci_method;
        bc.threads = 1;
        const ReplicateMatrix m = bootstrap_replicates(
            view, {}, n_est,
            [&specs](const ExperimentView& v, std::span<const std::string> levels,
                     std::span<double> out) {
              for (std::size_t e = 0; e < specs.size(); ++e) {
                out[e] = evaluate(specs[e], v, levels);
              }
            },
            bc);
        rec.bootstrap_redraws = m.redraws;
        rec.boot_se.resize(n_est);
        rec.covered.resize(n_est);
        for (std::size_t e = 0; e < n_est; ++e) {
          const BootstrapResult res =
              summarize_bootstrap(rec.point[kOracleRows + e], m.column(e), m.redraws, bc);
          rec.boot_se[e] = res.se;
          rec.covered[e] = (res.ci_low <= tau && tau <= res.ci_high) ? 1 : 0;
        }
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned id = 0; id < threads; ++id) pool.emplace_back(worker, id);
    for (auto& t : pool) t.join();
  }

  SimulationSummary summary;
  summary.tau = tau;
  summary.reps = study.reps;
  const double reps = static_cast<double>(study.reps);
  summary.rows.resize(n_rows);
  summary.rows[0].name = "oracle_sate";
  summary.rows[1].name = "oracle_nu";
  summary.rows[0].oracle = summary.rows[1].oracle = true;
  for (std::size_t e = 0; e < n_est; ++e) {
    summary.rows[kOracleRows + e].name = std::string(to_string(specs[e].id));
  }
  for (std::size_t k = 0; k < n_rows; ++k) {
    double sum = 0.0;
    for (const auto& rec : records) sum += rec.point[k];
    const double mean = sum / reps;
    double m2 = 0.0;
    for (const auto& rec : records) m2 += (rec.point[k] - mean) * (rec.point[k] - mean);
    EstimatorSummary& row = summary.rows[k];
    row.mean = mean;
    row.bias = mean - tau;
    row.se = std::sqrt(m2 / reps);
    row.rmse = std::sqrt(row.bias * row.bias + row.se * row.se);
    if (boot && k >= kOracleRows) {
      double se_sum = 0.0;
      std::size_t covered = 0;
      for (const auto& rec : records) {
        se_sum += rec.boot_se[k - kOracleRows];
        covered += rec.covered[k - kOracleRows];
      }
      row.mean_boot_se = se_sum / reps;
      row.coverage = static_cast<double>(covered) / reps;
    }
  }
  summary.mean_oracle_sate = summary.rows[0].mean;
  summary.mean_oracle_nu = summary.rows[1].mean;
  for (const auto& rec : records) {
    summary.assignment_redraws += rec.assignment_redraws;
    summary.bootstrap_redraws += rec.bootstrap_redraws;
  }
  summary.inclusion_frequency.assign(pop.size(), 0.0);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    std::uint64_t count = 0;
    for (const auto& h : hits) count += h[i];
    summary.inclusion_frequency[i] = static_cast<double>(count) / reps;
  }
  return summary;
}

const SweepRow& SweepResult::average(double gamma, const std::string& estimator) const {
  for (const auto& r : averages) {
    if (r.gamma == gamma && r.estimator == estimator) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "no sweep average for '" + estimator + "'");
}

SweepResult gamma_sweep(const DgpConfig& base, const StudyConfig& study,
                        const std::vector<double>& gammas,
                        std::size_t populations_per_gamma) {
  if (gammas.empty()) throw Error(ErrorCode::kInvalidArgument, "no gamma values");
  if (populations_per_gamma < 1) {
    throw Error(ErrorCode::kInvalidArgument, "populations_per_gamma must be >= 1");
  }
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "gamma values must lie in [0, 1]");
    }
  }

  SweepResult out;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    std::vector<SweepRow> block;
    for (std::size_t p = 0; p < populations_per_gamma; ++p) {
      const std::uint64_t slot = gi * populations_per_gamma + p;
      DgpConfig cfg = base;
      cfg.gamma = gammas[gi];
      Rng pop_rng = Rng::substream(mix64(study.seed ^ 0x9e3779b97f4a7c15ULL), slot);
      const GeneratedPopulation gen = generate_population(cfg, study.sample_n, pop_rng);
      StudyConfig sc = study;
      sc.seed = mix64(study.seed + 0x2545f4914f6cdd1dULL * (slot + 1));
      const SimulationSummary s = run_study(gen.population, sc);
      for (const auto& r : s.rows) {
        SweepRow row;
        row.gamma = gammas[gi];
        row.population = static_cast<int>(p);
        row.estimator = r.name;
        row.tau = s.tau;
        row.mean = r.mean;
        row.bias = r.bias;
        row.se = r.se;
        row.rmse = r.rmse;
        row.bias_mcse = r.se / std::sqrt(static_cast<double>(s.reps));
        block.push_back(row);
        out.rows.push_back(row);
      }
    }
    const std::size_t per_pop = block.size() / populations_per_gamma;
    const double pops = static_cast<double>(populations_per_gamma);
    for (std::size_t k = 0; k < per_pop; ++k) {
      SweepRow avg;
      avg.gamma = gammas[gi];
      avg.population = -1;
      avg.estimator = block[k].estimator;
      double mcse_sq = 0.0;
      for (std::size_t p = 0; p < populations_per_gamma; ++p) {
        const SweepRow& r = block[p * per_pop + k];
        avg.tau += r.tau / pops;
        avg.mean += r.mean / pops;
        avg.bias += r.bias / pops;
        avg.se += r.se / pops;
        avg.rmse += r.rmse / pops;
        mcse_sq += r.bias_mcse * r.bias_mcse;
      }
      avg.bias_mcse = std::sqrt(mcse_sq) / pops;
      out.averages.push_back(avg);
    }
  }
  return out;
}

}  // namespace svyexp
