#include <doctest.h>

#include <cmath>
#include <limits>

#include "svyexp/core_model.hpp"
#include "svyexp/error.hpp"
#include "expect_error.hpp"

using namespace svyexp;

namespace {

ExperimentColumns cols(std::vector<double> y, std::vector<int> t, std::vector<double> w) {
  ExperimentColumns c;
  c.y = std::move(y);
  c.t = std::move(t);
  c.w = std::move(w);
  return c;
}

}  // namespace

TEST_CASE("two-unit experiment validates with unit masses") {
  const ExperimentData d = validate_experiment(cols({1, 2}, {1, 0}, {1, 1}));
  CHECK(d.n() == 2);
  CHECK(d.mass() == doctest::Approx(2.0));
  CHECK(d.mass_treated() == doctest::Approx(1.0));
  CHECK(d.mass_control() == doctest::Approx(1.0));
}

TEST_CASE("validation rejects bad experiments") {
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {1, 1}, {1, 1})); }) ==
        ErrorCode::kDegenerateArm);
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {0, 0}, {1, 1})); }) ==
        ErrorCode::kDegenerateArm);
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {1, 0}, {1, -1})); }) ==
        ErrorCode::kNonPositiveWeight);
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {1, 0}, {1, 0})); }) ==
        ErrorCode::kNonPositiveWeight);
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {1, 2}, {1, 1})); }) ==
        ErrorCode::kNonBinaryTreatment);
  CHECK(code_of([] { validate_experiment(cols({}, {}, {})); }) == ErrorCode::kEmptyInput);
  CHECK(code_of([] { validate_experiment(cols({1, 2}, {1}, {1, 1})); }) ==
        ErrorCode::kLengthMismatch);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { validate_experiment(cols({1, nan}, {1, 0}, {1, 1})); }) ==
        ErrorCode::kMissingValue);
  CHECK(code_of([&] { validate_experiment(cols({1, 2}, {1, 0}, {nan, 1})); }) ==
        ErrorCode::kMissingValue);
  ExperimentColumns c = cols({1, 2}, {1, 0}, {1, 1});
  c.covariates["party"] = {"D", ""};
  CHECK(code_of([&] { validate_experiment(c); }) == ErrorCode::kMissingValue);
}

TEST_CASE("validation normalizes weights to mean one and is pure") {
  const ExperimentColumns c = cols({1, 2, 3}, {1, 0, 1}, {2, 4, 6});
  const ExperimentData a = validate_experiment(c);
  const ExperimentData b = validate_experiment(c);
  CHECK(a.w()[0] == doctest::Approx(0.5));
  CHECK(a.w()[1] == doctest::Approx(1.0));
  CHECK(a.w()[2] == doctest::Approx(1.5));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.w()[i] == b.w()[i]);
    CHECK(a.y()[i] == b.y()[i]);
    CHECK(a.t()[i] == b.t()[i]);
  }
  CHECK(a.mass_treated() == doctest::Approx(2.0));
}

TEST_CASE("normalize_weights examples") {
  auto check = [](std::vector<double> in, std::vector<double> want) {
    const auto out = normalize_weights(in);
    REQUIRE(out.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(out[i] == doctest::Approx(want[i]));
  };
  check({2, 2, 2}, {1, 1, 1});
  check({1, 3}, {0.5, 1.5});
  check({1, 1, 4}, {0.5, 0.5, 2});
  CHECK(code_of([] { normalize_weights(std::vector<double>{1, 0}); }) ==
        ErrorCode::kNonPositiveWeight);
  CHECK(code_of([] { normalize_weights(std::vector<double>{}); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("normalize_weights is idempotent") {
  const std::vector<double> w{0.3, 7.1, 2.2, 9.9, 0.01, 4.4};
  const auto once = normalize_weights(w);
  const auto twice = normalize_weights(once);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(std::abs(once[i] - twice[i]) <= 1e-15 * once[i] + 1e-16);
  }
}

TEST_CASE("population derived quantities") {
  const Population pop = Population::create({1, 2, 3, 4}, {2, 2, 5, 8}, {0.5, 0.25, 0.25, 1.0});
  CHECK(pop.pi_bar() == doctest::Approx(0.5));
  CHECK(pop.weights()[0] == doctest::Approx(1.0));
  CHECK(pop.weights()[1] == doctest::Approx(2.0));
  CHECK(pop.weights()[3] == doctest::Approx(0.5));
  CHECK(pop.effects()[3] == doctest::Approx(4.0));
  CHECK(pop.tau() == doctest::Approx(17.0 / 4 - 10.0 / 4));
  CHECK(pop.expected_n() == doctest::Approx(2.0));
}

TEST_CASE("population validation") {
  CHECK(code_of([] { Population::create({1}, {1}, {0.5}); }) == ErrorCode::kInvalidPopulation);
  CHECK(code_of([] { Population::create({1, 2}, {1}, {0.5, 0.5}); }) ==
        ErrorCode::kInvalidPopulation);
  CHECK(code_of([] { Population::create({1, 2}, {1, 2}, {0.0, 0.5}); }) ==
        ErrorCode::kInvalidPopulation);
  CHECK(code_of([] { Population::create({1, 2}, {1, 2}, {1.5, 0.5}); }) ==
        ErrorCode::kInvalidPopulation);
  CHECK_NOTHROW(Population::create({1, 2}, {1, 2}, {1.5, 0.5}, true));
}

TEST_CASE("sample draws and observation") {
  const Population pop = Population::create({1, 2, 3}, {10, 20, 30}, {1, 0.5, 0.5});
  CHECK_NOTHROW(validate_draw(SampleDraw{{0, 2}}, 3));
  CHECK(code_of([] { validate_draw(SampleDraw{{0, 0}}, 3); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { validate_draw(SampleDraw{{3}}, 3); }) == ErrorCode::kInvalidArgument);
  const ObservedSample obs = observe(pop, SampleDraw{{2, 0}}, {1, 0});
  CHECK(obs.y[0] == 30);
  CHECK(obs.y[1] == 1);
  CHECK(obs.w[0] == doctest::Approx(pop.weights()[2]));
  const ArmCounts c = arm_counts(obs.view());
  CHECK(c.n1 == 1);
  CHECK(c.n0 == 1);
}

TEST_CASE("estimator names round-trip") {
  for (EstimatorId id : {EstimatorId::kSateDm, EstimatorId::kHajekMean, EstimatorId::kHtMean,
                         EstimatorId::kDoubleHajek, EstimatorId::kSingleHajek,
                         EstimatorId::kTauSd, EstimatorId::kPsDouble, EstimatorId::kPsSingle}) {
    CHECK(parse_estimator_id(to_string(id)) == id);
  }
  CHECK(parse_estimator_id("hh") == EstimatorId::kDoubleHajek);
  CHECK(code_of([] { parse_estimator_id("ols"); }) == ErrorCode::kInvalidArgument);
}
