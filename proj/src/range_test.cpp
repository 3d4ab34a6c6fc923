#include "superconv/range_test.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "superconv/error.hpp"
#include "superconv/format.hpp"
#include "superconv/training.hpp"

namespace superconv {

void RangeTestConfig::validate() const {
  SUPERCONV_CHECK(std::isfinite(start_lr) && start_lr >= 0, ValidationError,
                  "range test: start_lr must be >= 0");
  SUPERCONV_CHECK(std::isfinite(end_lr) && end_lr > start_lr, ValidationError,
                  "range test: end_lr must exceed start_lr");
  SUPERCONV_CHECK(n_iters >= 2, ValidationError, "range test: n_iters must be >= 2");
  SUPERCONV_CHECK(smooth_beta >= 0 && smooth_beta < 1, ValidationError,
                  "range test: smooth_beta must lie in [0,1)");
  SUPERCONV_CHECK(divergence_factor > 1, ValidationError,
                  "range test: divergence_factor must exceed 1");
  SUPERCONV_CHECK(eval_every >= 1, ValidationError, "range test: eval_every must be >= 1");
  SUPERCONV_CHECK(momentum >= 0 && momentum < 1, ValidationError,
                  "range test: momentum must lie in [0,1)");
  SUPERCONV_CHECK(divisor >= 1, ValidationError, "range test: divisor must be >= 1");
}

double RangeTestConfig::lr_at(std::int64_t iter) const {
  if (iter == n_iters - 1) return end_lr;
  return start_lr + (end_lr - start_lr) * static_cast<double>(iter) / static_cast<double>(n_iters - 1);
}

NetworkSubject::NetworkSubject(Model& model, const OptimizerConfig& optimizer, const Dataset& train,
                               const Dataset* test, Eigen::Index batch_size, std::uint64_t seed)
    : model_(model),
      optimizer_(optimizer),
      train_(train),
      test_(test),
      sampler_(train.size(), batch_size, seed) {
  optimizer_.validate();
}

double NetworkSubject::loss() {
  gather_batch(train_, sampler_.next(), inputs_, labels_);
  try {
    const ForwardTrace trace = model_.forward({inputs_, labels_}, Mode::train);
    grad_ = model_.backward(trace);
    return trace.loss;
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
}

void NetworkSubject::update(double lr, double momentum) {
  if (lr <= 0) return;  // a zero-rate step is the identity for every method
  apply_update_in_place(optimizer_, state_, model_.params(), grad_, lr, momentum);
}

std::optional<double> NetworkSubject::evaluate() {
  if (test_ == nullptr) return std::nullopt;
  return superconv::evaluate(model_, *test_).accuracy;
}

NoisyQuadraticSubject::NoisyQuadraticSubject(QuadraticProblem problem, double noise_sigma, int batch,
                                             std::uint64_t seed)
    : problem_(std::move(problem)), sigma_(noise_sigma), batch_(batch), rng_(seed) {
  problem_.validate();
  SUPERCONV_CHECK(noise_sigma >= 0, ValidationError, "noisy quadratic: sigma must be >= 0");
  SUPERCONV_CHECK(batch >= 1, ValidationError, "noisy quadratic: batch must be >= 1");
  theta_ = problem_.start;
}

double NoisyQuadraticSubject::loss() {
  std::normal_distribution<double> noise(0.0, sigma_);
  const Eigen::Index d = theta_.size();
  Vector mean_x = Vector::Zero(d);
  double total = 0.0;
  for (int b = 0; b < batch_; ++b) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double x = sigma_ > 0 ? noise(rng_) : 0.0;
      const double diff = theta_[j] - x;
      total += 0.5 * problem_.curvatures[j] * diff * diff;
      mean_x[j] += x / batch_;
    }
  }
  grad_ = (problem_.curvatures.array() * (theta_ - mean_x).array()).matrix();
  return total / batch_;
}

void NoisyQuadraticSubject::update(double lr, double /*momentum*/) { theta_ -= lr * grad_; }

RangeTestReport run_range_test(RangeTestSubject& subject, const RangeTestConfig& cfg) {
  cfg.validate();
  RangeTestReport report;
  double avg = 0.0;
  double best = std::numeric_limits<double>::infinity();
  constexpr double kBlowUp = 1e6;

  for (std::int64_t t = 0; t < cfg.n_iters; ++t) {
    const double lr = cfg.lr_at(t);
    const double loss = subject.loss();
    if (t == 0 && !std::isfinite(loss)) {
      throw ValidationError("range test: non-finite loss at start_lr; start_lr is too large");
    }

    RangeTestSample sample{t, lr, std::numeric_limits<double>::infinity(), std::nullopt};
    bool diverged = !std::isfinite(loss) || loss > kBlowUp;
    if (std::isfinite(loss)) {
      // Debiased exponential average of the training loss.
      avg = cfg.smooth_beta * avg + (1.0 - cfg.smooth_beta) * loss;
      sample.smoothed_loss = avg / (1.0 - std::pow(cfg.smooth_beta, static_cast<double>(t + 1)));
      if (t > 0 && sample.smoothed_loss > cfg.divergence_factor * best) diverged = true;
      best = std::min(best, sample.smoothed_loss);
    }
    if (diverged) {
      report.samples.push_back(sample);
      report.stopped_early = true;
      report.stop_lr = lr;
      break;
    }

    subject.update(lr, cfg.momentum);
    ++report.updates_applied;
    if (t % cfg.eval_every == 0 || t == cfg.n_iters - 1) sample.test_accuracy = subject.evaluate();
    report.samples.push_back(sample);
  }

  const auto with_acc = std::count_if(report.samples.begin(), report.samples.end(),
                                      [](const auto& s) { return s.test_accuracy.has_value(); });
  if (with_acc >= 3) report.suggested = suggest_bounds(report, cfg.divisor);
  return report;
}

RangeTestReport run_range_test(Model& model, const OptimizerConfig& optimizer, const Dataset& train,
                               const Dataset* test, Eigen::Index batch_size, std::uint64_t seed,
                               const RangeTestConfig& cfg) {
  NetworkSubject subject(model, optimizer, train, test, batch_size, seed);
  return run_range_test(subject, cfg);
}

SuggestedBounds suggest_bounds(const RangeTestReport& report, double divisor, PeakMode mode) {
  std::vector<const RangeTestSample*> acc;
  for (const auto& s : report.samples) {
    if (s.test_accuracy) acc.push_back(&s);
  }
  SuggestedBounds out;
  if (mode == PeakMode::loss_valley) {
    SUPERCONV_CHECK(report.samples.size() >= 3, InsufficientDataError,
                    "suggest_bounds: fewer than 3 samples");
    const auto* lowest = &report.samples.front();
    for (const auto& s : report.samples) {
      if (s.smoothed_loss < lowest->smoothed_loss) lowest = &s;
    }
    out.max_lr = lowest->lr;
    out.peak_bracketed = lowest != &report.samples.back();
    out.plateau_low = out.plateau_high = out.max_lr;
  } else {
    if (acc.size() < 3) {
      throw InsufficientDataError("suggest_bounds: " + std::to_string(acc.size()) +
                                  " accuracy samples, at least 3 needed");
    }
    // Strict comparison keeps the earliest (smallest lr) sample on ties.
    std::size_t peak = 0;
    for (std::size_t i = 1; i < acc.size(); ++i) {
      if (*acc[i]->test_accuracy > *acc[peak]->test_accuracy) peak = i;
    }
    out.max_lr = acc[peak]->lr;
    out.peak_bracketed = peak + 1 < acc.size();
    const double floor = *acc[peak]->test_accuracy - 0.02;
    std::size_t lo = peak;
    std::size_t hi = peak;
    while (lo > 0 && *acc[lo - 1]->test_accuracy >= floor) --lo;
    while (hi + 1 < acc.size() && *acc[hi + 1]->test_accuracy >= floor) ++hi;
    out.plateau_low = acc[lo]->lr;
    out.plateau_high = acc[hi]->lr;
  }
  SUPERCONV_CHECK(out.max_lr > 0, ValidationError, "suggest_bounds: peak lies at lr 0");
  SUPERCONV_CHECK(divisor >= 1, ValidationError, "suggest_bounds: divisor must be >= 1");
  out.min_lr = out.max_lr / divisor;
  return out;
}

void write_range_test_csv(const RangeTestReport& report, std::ostream& out) {
  out << "iteration,lr,smoothed_loss,test_accuracy\n";
  for (const auto& s : report.samples) {
    out << s.iteration << ',' << format_real(s.lr) << ',' << format_real(s.smoothed_loss) << ','
        << format_optional(s.test_accuracy) << '\n';
  }
}

}  // namespace superconv
