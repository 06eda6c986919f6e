#include "svyexp/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "svyexp/error.hpp"

namespace svyexp {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Population Population::create(std::vector<double> y0, std::vector<double> y1,
                              std::vector<double> pi, bool allow_pi_above_one) {
  const std::size_t n = y0.size();
  if (y1.size() != n || pi.size() != n) {
    throw Error(ErrorCode::kInvalidPopulation,
                "y0, y1 and pi must have equal length");
  }
  if (n < 2) {
    throw Error(ErrorCode::kInvalidPopulation, "population needs N >= 2");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y0[i]) || !std::isfinite(y1[i])) {
      throw Error(ErrorCode::kInvalidPopulation,
                  "non-finite potential outcome at unit " + std::to_string(i));
    }
    if (!(pi[i] > 0.0) || !std::isfinite(pi[i]) ||
        (!allow_pi_above_one && pi[i] > 1.0)) {
      throw Error(ErrorCode::kInvalidPopulation,
                  "selection probability outside (0, 1] at unit " +
                      std::to_string(i));
    }
  }

  Population pop;
  pop.y0_ = std::move(y0);
  pop.y1_ = std::move(y1);
  pop.pi_ = std::move(pi);
  pop.pi_bar_ = mean_of(pop.pi_);
  pop.w_.resize(n);
  pop.delta_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pop.w_[i] = pop.pi_bar_ / pop.pi_[i];
    pop.delta_[i] = pop.y1_[i] - pop.y0_[i];
  }
  pop.mean_y0_ = mean_of(pop.y0_);
  pop.mean_y1_ = mean_of(pop.y1_);
  return pop;
}

void validate_draw(const SampleDraw& draw, std::size_t population_size) {
  std::vector<std::size_t> sorted = draw.indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kInvalidArgument, "sample draw has repeated units");
  }
  if (!sorted.empty() && sorted.back() >= population_size) {
    throw Error(ErrorCode::kInvalidArgument, "sample index out of range");
  }
}

ObservedSample observe(const Population& pop, const SampleDraw& draw,
                       std::vector<std::uint8_t> treatment) {
  if (treatment.size() != draw.n()) {
    throw Error(ErrorCode::kLengthMismatch, "treatment vector does not match the draw");
  }
  ObservedSample obs;
  obs.t = std::move(treatment);
  obs.y.resize(draw.n());
  obs.w.resize(draw.n());
  const auto y0 = pop.y0();
  const auto y1 = pop.y1();
  const auto w = pop.weights();
  for (std::size_t k = 0; k < draw.n(); ++k) {
    const std::size_t i = draw.indices[k];
    obs.y[k] = obs.t[k] != 0 ? y1[i] : y0[i];
    obs.w[k] = w[i];
  }
  return obs;
}

ArmCounts arm_counts(const ExperimentView& view) {
  if (view.t.size() != view.y.size() || view.w.size() != view.y.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "outcome, treatment and weight columns differ in length");
  }
  ArmCounts c;
  c.n = view.y.size();
  for (std::size_t i = 0; i < c.n; ++i) {
    if (view.t[i] != 0) {
      ++c.n1;
      c.mass_treated += view.w[i];
    } else {
      c.mass_control += view.w[i];
    }
  }
  c.n0 = c.n - c.n1;
  c.mass = c.mass_treated + c.mass_control;
  return c;
}

const std::vector<std::string>& ExperimentData::covariate(
    const std::string& name) const {
  auto it = covariates_.find(name);
  if (it == covariates_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no covariate column '" + name + "'");
  }
  return it->second;
}

std::vector<double> normalize_weights(std::span<const double> w) {
  if (w.empty()) throw Error(ErrorCode::kEmptyInput, "no weights");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
      throw Error(ErrorCode::kNonPositiveWeight,
                  "weight at row " + std::to_string(i) + " is not positive");
    }
  }
  const double mean = mean_of(w);
  std::vector<double> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(),
                 [mean](double x) { return x / mean; });
  return out;
}

ExperimentData validate_experiment(ExperimentColumns columns) {
  const std::size_t n = columns.y.size();
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "experiment has no rows");
  if (columns.t.size() != n || columns.w.size() != n) {
    throw Error(ErrorCode::kLengthMismatch,
                "outcome, treatment and weight columns differ in length");
  }
  for (const auto& [name, values] : columns.covariates) {
    if (values.size() != n) {
      throw Error(ErrorCode::kLengthMismatch,
                  "covariate '" + name + "' has the wrong length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i].empty()) {
        throw Error(ErrorCode::kMissingValue,
                    "covariate '" + name + "' missing at row " + std::to_string(i));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(columns.y[i]) || std::isnan(columns.w[i])) {
      throw Error(ErrorCode::kMissingValue, "missing value at row " + std::to_string(i));
    }
    if (!std::isfinite(columns.y[i])) {
      throw Error(ErrorCode::kParse, "non-finite outcome at row " + std::to_string(i));
    }
    if (columns.t[i] != 0 && columns.t[i] != 1) {
      throw Error(ErrorCode::kNonBinaryTreatment,
                  "treatment at row " + std::to_string(i) + " is not 0/1");
    }
  }

  ExperimentData data;
  data.w_ = normalize_weights(columns.w);
  data.y_ = std::move(columns.y);
  data.t_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.t_[i] = static_cast<std::uint8_t>(columns.t[i]);
  }
  data.covariates_ = std::move(columns.covariates);
  data.counts_ = arm_counts(data.view());
  if (data.counts_.n1 == 0 || data.counts_.n0 == 0) {
    throw Error(ErrorCode::kDegenerateArm,
                data.counts_.n1 == 0 ? "no treated units" : "no control units");
  }
  return data;
}

std::string_view to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::kSateDm: return "sate_dm";
    case EstimatorId::kHajekMean: return "hajek_mean";
    case EstimatorId::kHtMean: return "ht_mean";
    case EstimatorId::kDoubleHajek: return "double_hajek";
    case EstimatorId::kSingleHajek: return "single_hajek";
    case EstimatorId::kTauSd: return "tau_sd";
    case EstimatorId::kPsDouble: return "ps_double";
    case EstimatorId::kPsSingle: return "ps_single";
  }
  return "unknown";
}

std::string_view to_string(SeMethod method) {
  switch (method) {
    case SeMethod::kPlugin: return "plugin";
    case SeMethod::kBootstrap: return "bootstrap";
    case SeMethod::kNone: return "none";
  }
  return "unknown";
}

EstimatorId parse_estimator_id(std::string_view name) {
  for (EstimatorId id :
       {EstimatorId::kSateDm, EstimatorId::kHajekMean, EstimatorId::kHtMean,
        EstimatorId::kDoubleHajek, EstimatorId::kSingleHajek, EstimatorId::kTauSd,
        EstimatorId::kPsDouble, EstimatorId::kPsSingle}) {
    if (to_string(id) == name) return id;
  }
  if (name == "hh") return EstimatorId::kDoubleHajek;
  if (name == "ps") return EstimatorId::kPsDouble;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown estimator '" + std::string(name) + "'");
}

}  // namespace svyexp
