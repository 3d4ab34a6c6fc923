#include <doctest.h>

#include <sstream>

#include "superconv/data.hpp"
#include "superconv/error.hpp"
#include "superconv/range_test.hpp"
#include "support.hpp"

using namespace superconv;

namespace {

RangeTestReport quadratic_range_test(std::uint64_t seed) {
  QuadraticProblem q{Vector::Constant(1, 1.0), Vector::Constant(1, 1.0)};
  NoisyQuadraticSubject subject(q, 1.0, 16, seed);
  RangeTestConfig cfg;
  cfg.start_lr = 0.0;
  cfg.end_lr = 4.0;
  cfg.n_iters = 400;
  return run_range_test(subject, cfg);
}

// Replays the accuracy list through a scripted subject.
class Scripted : public RangeTestSubject {
 public:
  explicit Scripted(std::vector<double> losses) : losses_(std::move(losses)) {}
  double loss() override { return losses_.at(calls_++); }
  void update(double, double) override { ++updates; }
  std::optional<double> evaluate() override { return 0.5; }
  int updates = 0;

 private:
  std::vector<double> losses_;
  std::size_t calls_ = 0;
};

RangeTestReport report_from(const std::vector<std::pair<double, double>>& lr_acc) {
  RangeTestReport r;
  std::int64_t t = 0;
  for (auto [lr, acc] : lr_acc) r.samples.push_back({t++, lr, 1.0, acc});
  return r;
}

}  // namespace

TEST_CASE("quadratic stops near the stability threshold") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = quadratic_range_test(seed);
    REQUIRE(r.stopped_early);
    CHECK(*r.stop_lr >= 1.6);
    CHECK(*r.stop_lr <= 2.4);
  }
}

TEST_CASE("two iterations hit both endpoints") {
  RangeTestConfig cfg;
  cfg.start_lr = 0.1;
  cfg.end_lr = 3.0;
  cfg.n_iters = 2;
  Scripted s({1.0, 1.0});
  const auto r = run_range_test(s, cfg);
  REQUIRE(r.samples.size() == 2);
  CHECK(r.samples[0].lr == 0.1);
  CHECK(r.samples[1].lr == 3.0);
  CHECK_FALSE(r.stopped_early);
}

TEST_CASE("early stop applies no further updates") {
  RangeTestConfig cfg;
  cfg.n_iters = 10;
  cfg.smooth_beta = 0.0;
  Scripted s({1.0, 0.9, 0.8, 5.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto r = run_range_test(s, cfg);
  CHECK(r.stopped_early);
  CHECK(r.samples.size() == 4);
  CHECK(r.updates_applied == 3);
  CHECK(s.updates == 3);
  CHECK(*r.stop_lr == r.samples.back().lr);
}

TEST_CASE("non-finite loss") {
  RangeTestConfig cfg;
  cfg.n_iters = 10;
  Scripted bad({std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(run_range_test(bad, cfg), ValidationError);
  Scripted later({1.0, 1.0, std::numeric_limits<double>::infinity()});
  const auto r = run_range_test(later, cfg);
  CHECK(r.stopped_early);
  CHECK(r.updates_applied == 2);
  Scripted huge({1.0, 2e6});
  CHECK(run_range_test(huge, cfg).stopped_early);
}

TEST_CASE("debiased smoothing") {
  RangeTestConfig cfg;
  cfg.n_iters = 3;
  cfg.smooth_beta = 0.5;
  Scripted s({2.0, 1.0, 1.0});
  const auto r = run_range_test(s, cfg);
  CHECK(r.samples[0].smoothed_loss == doctest::Approx(2.0));
  // (0.5*0.5*2 + 0.5*1) / (1 - 0.25)
  CHECK(r.samples[1].smoothed_loss == doctest::Approx(1.0 / 0.75));
}

TEST_CASE("config validation") {
  RangeTestConfig cfg;
  cfg.start_lr = 1.0;
  cfg.end_lr = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.n_iters = 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.divergence_factor = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.smooth_beta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("suggest bounds") {
  const auto r = report_from({{0.5, 0.8}, {1.0, 0.9}, {2.0, 0.7}});
  const auto b = suggest_bounds(r, 4);
  CHECK(b.max_lr == 1.0);
  CHECK(b.min_lr == 0.25);
  CHECK(b.peak_bracketed);
  CHECK(suggest_bounds(r, 3).min_lr == doctest::Approx(1.0 / 3));

  const auto flat = suggest_bounds(report_from({{0.5, 0.6}, {1.0, 0.6}, {2.0, 0.6}}), 4);
  CHECK(flat.max_lr == 0.5);

  const auto rising = suggest_bounds(report_from({{0.5, 0.1}, {1.0, 0.5}, {2.0, 0.9}}), 4);
  CHECK(rising.max_lr == 2.0);
  CHECK_FALSE(rising.peak_bracketed);

  CHECK_THROWS_AS(suggest_bounds(report_from({{0.5, 0.6}, {1.0, 0.7}}), 4), InsufficientDataError);
}

TEST_CASE("plateau diagnostic") {
  const auto b = suggest_bounds(
      report_from({{0.1, 0.5}, {0.2, 0.955}, {0.4, 0.97}, {0.8, 0.96}, {1.6, 0.90}, {3.2, 0.96}}), 4);
  CHECK(b.max_lr == 0.4);
  CHECK(b.plateau_low == 0.2);
  CHECK(b.plateau_high == 0.8);
}

TEST_CASE("loss valley mode") {
  RangeTestReport r;
  r.samples = {{0, 0.1, 2.0, std::nullopt}, {1, 0.2, 1.0, std::nullopt}, {2, 0.3, 1.5, std::nullopt}};
  const auto b = suggest_bounds(r, 4, PeakMode::loss_valley);
  CHECK(b.max_lr == 0.2);
}

TEST_CASE("csv columns") {
  auto r = report_from({{0.5, 0.8}, {1.0, 0.9}});
  r.samples[1].test_accuracy.reset();
  std::ostringstream out;
  write_range_test_csv(r, out);
  CHECK(out.str() == "iteration,lr,smoothed_loss,test_accuracy\n0,0.5,1,0.80000000000000004\n1,1,1,\n");
}

TEST_CASE("blobs smoke run") {
  const Dataset train = synth_blobs(3, 100, 0.1, 1);
  const Dataset test = synth_blobs(3, 50, 0.1, 2);
  Model model(testsupport::mlp(train.dim(), 16, 3, 4));
  RangeTestConfig cfg;
  cfg.start_lr = 0.0;
  cfg.end_lr = 0.05;
  cfg.n_iters = 100;
  cfg.eval_every = 10;
  const auto r = run_range_test(model, {}, train, &test, 16, 3, cfg);
  CHECK_FALSE(r.stopped_early);
  CHECK(r.updates_applied == 100);
  std::vector<double> acc;
  for (const auto& s : r.samples) {
    if (s.test_accuracy) acc.push_back(*s.test_accuracy);
  }
  REQUIRE(acc.size() == 11);
  for (std::size_t i = 1; i < 6; ++i) CHECK(acc[i] >= acc[i - 1]);
  REQUIRE(r.suggested.has_value());
  CHECK(r.suggested->min_lr == doctest::Approx(r.suggested->max_lr / 4));
}

TEST_CASE("property: lr sequence is linear") {
  RangeTestConfig cfg;
  cfg.start_lr = 0.001;
  cfg.end_lr = 3.7;
  cfg.n_iters = 997;
  for (std::int64_t t = 2; t < cfg.n_iters; ++t) {
    const double d2 = cfg.lr_at(t) - 2 * cfg.lr_at(t - 1) + cfg.lr_at(t - 2);
    REQUIRE(std::abs(d2) < 1e-12);
    REQUIRE(cfg.lr_at(t) > cfg.lr_at(t - 1));
  }
}

TEST_CASE("property: argmax invariance under monotone rescaling") {
  const auto r = report_from({{0.1, 0.3}, {0.2, 0.8}, {0.4, 0.8}, {0.8, 0.6}, {1.6, 0.2}});
  const double base = suggest_bounds(r, 4).max_lr;
  for (auto f : {+[](double a) { return 3 * a + 1; }, +[](double a) { return std::exp(a); },
                 +[](double a) { return a * a * a; }}) {
    auto s = r;
    for (auto& x : s.samples) x.test_accuracy = f(*x.test_accuracy);
    CHECK(suggest_bounds(s, 4).max_lr == base);
  }
}

TEST_CASE("property: determinism") {
  const auto a = quadratic_range_test(3);
  const auto b = quadratic_range_test(3);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].smoothed_loss == b.samples[i].smoothed_loss);
  }
}
