#include <doctest.h>

#include <cmath>

#include "superconv/data.hpp"
#include "superconv/error.hpp"
#include "superconv/estimator.hpp"

using namespace superconv;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// theta_{k+1} = theta_k - eps * lambda * theta_k, written out by hand.
std::vector<Vector> gd_iterates(const Vector& lambda, const Vector& start, double eps, int n) {
  std::vector<Vector> out{start};
  for (int k = 1; k < n; ++k) {
    Vector next = out.back();
    for (Eigen::Index j = 0; j < next.size(); ++j) next[j] -= eps * lambda[j] * out.back()[j];
    out.push_back(next);
  }
  return out;
}

double global_estimate(const std::vector<Vector>& it, double eps, Aggregation mode) {
  return *aggregate(per_weight_estimates(it[0], it[1], it[2], eps), mode);
}

}  // namespace

TEST_CASE("snapshot window") {
  EstimatorState s;
  s = record_snapshot(s, vec({1.0}));
  CHECK(s.window.size() == 1);
  s = record_snapshot(s, vec({2.0}));
  s = record_snapshot(s, vec({3.0}));
  s = record_snapshot(s, vec({4.0}));
  REQUIRE(s.window.size() == 3);
  CHECK(s.window[0][0] == 2.0);
  CHECK(s.window[2][0] == 4.0);
  CHECK_THROWS_AS(record_snapshot(s, vec({1.0, 2.0})), DimensionError);

  Vector p = vec({5.0});
  s = record_snapshot(s, p);
  p[0] = -1.0;
  CHECK(s.window.back()[0] == 5.0);
}

TEST_CASE("per-weight estimate on the scalar quadratic") {
  const auto pw = per_weight_estimates(vec({1.0}), vec({0.8}), vec({0.64}), 0.1);
  REQUIRE(pw.valid_count == 1);
  CHECK(pw.estimates[0] == doctest::Approx(0.5).epsilon(1e-12));
  const auto pw3 = per_weight_estimates(vec({1.0}), vec({0.4}), vec({0.16}), 0.3);
  CHECK(pw3.estimates[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("stalled iterates are invalid") {
  const auto pw = per_weight_estimates(vec({1.0, 1.0}), vec({1.0, 0.8}), vec({1.0, 0.64}), 0.1);
  CHECK(pw.valid[0] == 0);
  CHECK(std::isnan(pw.estimates[0]));
  CHECK(pw.valid[1] == 1);
  CHECK(pw.valid_count == 1);

  const auto none = per_weight_estimates(vec({2.0}), vec({2.0}), vec({2.0}), 0.1);
  CHECK(none.valid_count == 0);
  CHECK_FALSE(aggregate(none, Aggregation::abs_sum).has_value());
  CHECK_FALSE(aggregate(none, Aggregation::rms).has_value());
}

TEST_CASE("denominator floor") {
  // 1e-12 * max(1, |theta|_inf)
  CHECK(default_denom_floor(vec({0.5}), vec({0.2}), vec({-0.1})) == 1e-12);
  CHECK(default_denom_floor(vec({0.5}), vec({-300.0}), vec({0.0})) == doctest::Approx(3e-10));
  const auto pw = per_weight_estimates(vec({0.0}), vec({0.0}), vec({1e-13}), 0.1);
  CHECK(pw.valid_count == 0);
  const auto custom = per_weight_estimates(vec({0.0}), vec({0.0}), vec({1e-13}), 0.1, 1e-14);
  CHECK(custom.valid_count == 1);
}

TEST_CASE("estimate errors") {
  CHECK_THROWS_AS(per_weight_estimates(vec({1.0}), vec({1.0, 2.0}), vec({1.0}), 0.1), DimensionError);
  CHECK_THROWS_AS(per_weight_estimates(vec({1.0}), vec({0.8}), vec({0.64}), 0.0), ValidationError);
  CHECK_THROWS_AS(parse_aggregation("max"), ValidationError);
}

TEST_CASE("aggregate on diagonal quadratics") {
  const auto equal = gd_iterates(vec({2.0, 2.0}), vec({1.0, -1.0}), 0.1, 3);
  CHECK(global_estimate(equal, 0.1, Aggregation::abs_sum) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(global_estimate(equal, 0.1, Aggregation::rms) == doctest::Approx(0.5).epsilon(1e-12));

  const auto single = gd_iterates(vec({3.0}), vec({0.7}), 0.05, 3);
  const auto pw = per_weight_estimates(single[0], single[1], single[2], 0.05);
  CHECK(*aggregate(pw, Aggregation::abs_sum) == doctest::Approx(pw.estimates[0]).epsilon(1e-15));

  // Mixed curvatures: sums computed coordinate by coordinate.
  const Vector lambda = vec({2.0, 0.5});
  const auto mixed = gd_iterates(lambda, vec({1.0, 1.0}), 0.1, 3);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < 2; ++j) {
    num += std::abs(mixed[1][j] - mixed[0][j]);
    den += std::abs(2 * mixed[1][j] - mixed[0][j] - mixed[2][j]);
  }
  const double oracle = 0.1 * num / den;
  CHECK(oracle == doctest::Approx(0.1 * 0.25 / 0.0425).epsilon(1e-12));
  const double got = global_estimate(mixed, 0.1, Aggregation::abs_sum);
  CHECK(got == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(got > 0.5);
  CHECK(got < 2.0);
}

TEST_CASE("aggregate span overload checks lengths") {
  const std::vector<std::uint8_t> flags{1};
  CHECK_THROWS_AS(aggregate(vec({1.0, 2.0}), vec({1.0, 2.0}), flags, 0.1, Aggregation::abs_sum),
                  DimensionError);
}

TEST_CASE("smoothing") {
  EstimatorState s;
  s = smooth(s, 3.0);
  CHECK(*s.smoothed_lr == 3.0);
  s.smoothed_lr = 1.0;
  s = smooth(s, 2.0);
  CHECK(*s.smoothed_lr == doctest::Approx(1.1).epsilon(1e-15));
  CHECK_THROWS_AS(smooth(s, 0.0), ValidationError);
  CHECK_THROWS_AS(smooth(s, -1.0), ValidationError);

  EstimatorState z;
  z.smoothed_lr = 0.0;
  const double c = 4.0;
  for (int k = 1; k <= 10; ++k) {
    z = smooth(z, c);
    CHECK(*z.smoothed_lr == doctest::Approx(c * (1 - std::pow(0.9, k))).epsilon(1e-13));
  }
}

TEST_CASE("curvature probe") {
  const GradientFn quad = [](const Vector& t) { return Vector(2.0 * t); };
  CHECK(probe_curvature(quad, vec({0.3}), vec({0.01})) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(probe_curvature(quad, vec({-5.0}), vec({0.01})) == doctest::Approx(2.0).epsilon(1e-12));

  const GradientFn linear = [](const Vector& t) { return Vector(Vector::Constant(t.size(), 3.0)); };
  CHECK(probe_curvature(linear, vec({1.0, 2.0}), vec({0.1, -0.1})) == 0.0);

  const GradientFn quartic = [](const Vector& t) { return Vector(4.0 * t.array().cube().matrix()); };
  double prev_err = 1e9;
  for (double d : {1e-2, 1e-3, 1e-4}) {
    const double est = probe_curvature(quartic, vec({1.0}), vec({d}));
    const double err = std::abs(est - 12.0);
    CHECK(err < 20 * d);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK_THROWS_AS(probe_curvature(quad, vec({1.0}), vec({0.0})), ValidationError);
}

TEST_CASE("online estimator on a quadratic") {
  QuadraticProblem q{vec({2.0, 2.0, 2.0}), vec({1.0, -0.5, 0.25})};
  EstimatorConfig cfg;
  LrEstimator est(cfg);
  Vector theta = q.start;
  std::optional<LrEstimate> last;
  for (int t = 0; t < 6; ++t) {
    const auto e = est.observe(t, theta, 0.1);
    if (t < 2) CHECK_FALSE(e.has_value());
    if (e) last = e;
    theta -= 0.1 * q.gradient(theta);
  }
  REQUIRE(last.has_value());
  CHECK(last->raw == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(last->smoothed == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("online estimator cadence") {
  EstimatorConfig cfg;
  cfg.cadence = 10;
  LrEstimator est(cfg);
  const QuadraticProblem q{vec({1.0}), vec({1.0})};
  const auto iters = q.descent_iterates(0.1, 31);
  int produced = 0;
  for (int t = 0; t < 31; ++t) {
    if (est.observe(t, iters[static_cast<std::size_t>(t)], 0.1)) ++produced;
  }
  CHECK(produced == 2);
  CHECK(est.state().window.size() == 3);
  cfg.cadence = 0;
  CHECK_THROWS_AS(LrEstimator{cfg}, ValidationError);
}

TEST_CASE("property: quadratic exactness") {
  for (double lambda : {0.5, 2.0, 10.0}) {
    for (double frac : {0.01, 0.3, 0.7, 0.99}) {
      const double eps = frac * 2.0 / lambda;
      const QuadraticProblem q{Vector::Constant(4, lambda), vec({1.0, -2.0, 0.5, 3.0})};
      const auto it = q.descent_iterates(eps, 3);
      for (auto mode : {Aggregation::abs_sum, Aggregation::rms}) {
        const double got = global_estimate(it, eps, mode);
        CHECK(std::abs(got - 1.0 / lambda) * lambda < 1e-9);
      }
    }
  }
}

TEST_CASE("property: scale invariance") {
  const Vector lambda = vec({2.0, 0.5, 7.0});
  const auto it = gd_iterates(lambda, vec({1.0, 1.5, -0.3}), 0.1, 3);
  const auto base = per_weight_estimates(it[0], it[1], it[2], 0.1);
  for (double c : {-3.0, 1e-3, 250.0}) {
    const auto scaled = per_weight_estimates(c * it[0], c * it[1], c * it[2], 0.1);
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(std::abs(scaled.estimates[j] - base.estimates[j]) / std::abs(base.estimates[j]) < 1e-9);
    }
  }
}

TEST_CASE("property: independence from the rate used") {
  const Vector lambda = vec({2.0, 0.5, 7.0});
  for (double eps : {0.01, 0.1, 0.3}) {
    const auto it = gd_iterates(lambda, vec({1.0, 1.5, -0.3}), eps, 3);
    const auto pw = per_weight_estimates(it[0], it[1], it[2], eps);
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(std::abs(pw.estimates[j] * lambda[j] - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("property: smoothing contraction") {
  EstimatorState s;
  s.smoothed_lr = 10.0;
  const double c = 2.5;
  for (int k = 0; k < 20; ++k) {
    const double before = std::abs(*s.smoothed_lr - c);
    s = smooth(s, c);
    CHECK(std::abs(*s.smoothed_lr - c) == doctest::Approx(0.9 * before).epsilon(1e-12));
  }
}

TEST_CASE("property: abs-sum and rms agreement") {
  const auto one = gd_iterates(vec({3.0}), vec({2.0}), 0.05, 3);
  CHECK(global_estimate(one, 0.05, Aggregation::abs_sum) ==
        doctest::Approx(global_estimate(one, 0.05, Aggregation::rms)).epsilon(1e-15));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.1, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 2 + trial % 7;
    Vector lambda(dim), start(dim);
    for (int j = 0; j < dim; ++j) {
      lambda[j] = d(rng);
      start[j] = d(rng) - 2.5;
    }
    const auto it = gd_iterates(lambda, start, 0.05, 3);
    const double a = global_estimate(it, 0.05, Aggregation::abs_sum);
    const double r = global_estimate(it, 0.05, Aggregation::rms);
    const double bound = std::sqrt(static_cast<double>(dim));
    CHECK(a / r <= bound * (1 + 1e-12));
    CHECK(r / a <= bound * (1 + 1e-12));
  }
}
