#include "superconv/estimator.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "superconv/error.hpp"

namespace superconv {

Aggregation parse_aggregation(std::string_view name) {
  if (name == "abs-sum") return Aggregation::abs_sum;
  if (name == "rms") return Aggregation::rms;
  throw ValidationError("unknown aggregation '" + std::string(name) + "'");
}

std::string_view to_string(Aggregation mode) {
  return mode == Aggregation::abs_sum ? "abs-sum" : "rms";
}

void EstimatorState::validate() const {
  SUPERCONV_CHECK(alpha > 0 && alpha <= 1, ValidationError, "estimator: alpha must lie in (0,1]");
  SUPERCONV_CHECK(window.size() <= kWindow, ValidationError, "estimator: window holds at most 3");
  SUPERCONV_CHECK(!smoothed_lr || std::isfinite(*smoothed_lr), ValidationError,
                  "estimator: smoothed_lr must be finite");
  SUPERCONV_CHECK(!denom_floor || *denom_floor > 0, ValidationError,
                  "estimator: denom_floor must be positive");
}

EstimatorState record_snapshot(EstimatorState state, const Vector& params) {
  if (!state.window.empty() && state.window.back().size() != params.size()) {
    throw DimensionError("record_snapshot: snapshot length " + std::to_string(params.size()) +
                         " differs from window length " +
                         std::to_string(state.window.back().size()));
  }
  state.window.push_back(params);
  if (state.window.size() > EstimatorState::kWindow) state.window.pop_front();
  return state;
}

double default_denom_floor(const Vector& theta0, const Vector& theta1, const Vector& theta2) {
  double inf_norm = 0.0;
  for (const Vector* v : {&theta0, &theta1, &theta2}) {
    if (v->size() > 0) inf_norm = std::max(inf_norm, v->cwiseAbs().maxCoeff());
  }
  return 1e-12 * std::max(1.0, inf_norm);
}

PerWeightEstimates per_weight_estimates(const Vector& theta0, const Vector& theta1,
                                        const Vector& theta2, double eps_used,
                                        std::optional<double> denom_floor) {
  if (theta0.size() != theta1.size() || theta1.size() != theta2.size()) {
    throw DimensionError("per_weight_estimates: snapshot lengths differ");
  }
  SUPERCONV_CHECK(std::isfinite(eps_used) && eps_used > 0, ValidationError,
                  "per_weight_estimates: eps_used must be positive");
  const double floor = denom_floor.value_or(default_denom_floor(theta0, theta1, theta2));

  PerWeightEstimates out;
  out.eps_used = eps_used;
  out.numerators = theta1 - theta0;
  out.denominators = 2.0 * theta1 - theta0 - theta2;
  out.estimates = Vector::Constant(theta0.size(), std::numeric_limits<double>::quiet_NaN());
  out.valid.assign(static_cast<std::size_t>(theta0.size()), 0);
  for (Eigen::Index k = 0; k < theta0.size(); ++k) {
    const double den = out.denominators[k];
    if (std::isfinite(den) && std::abs(den) >= floor && std::isfinite(out.numerators[k])) {
      out.valid[static_cast<std::size_t>(k)] = 1;
      out.estimates[k] = eps_used * out.numerators[k] / den;
      ++out.valid_count;
    }
  }
  return out;
}

std::optional<double> aggregate(const Vector& numerators, const Vector& denominators,
                                std::span<const std::uint8_t> valid, double eps_used,
                                Aggregation mode) {
  if (numerators.size() != denominators.size() ||
      static_cast<std::size_t>(numerators.size()) != valid.size()) {
    throw DimensionError("aggregate: numerator, denominator and flag lengths differ");
  }
  SUPERCONV_CHECK(std::isfinite(eps_used) && eps_used > 0, ValidationError,
                  "aggregate: eps_used must be positive");
  // Fixed left-to-right reduction so results are bit-reproducible.
  double num = 0.0;
  double den = 0.0;
  bool any = false;
  for (Eigen::Index k = 0; k < numerators.size(); ++k) {
    if (!valid[static_cast<std::size_t>(k)]) continue;
    any = true;
    if (mode == Aggregation::abs_sum) {
      num += std::abs(numerators[k]);
      den += std::abs(denominators[k]);
    } else {
      num += numerators[k] * numerators[k];
      den += denominators[k] * denominators[k];
    }
  }
  if (!any || den == 0.0) return std::nullopt;
  if (mode == Aggregation::rms) return eps_used * std::sqrt(num) / std::sqrt(den);
  return eps_used * num / den;
}

std::optional<double> aggregate(const PerWeightEstimates& per_weight, Aggregation mode) {
  return aggregate(per_weight.numerators, per_weight.denominators, per_weight.valid,
                   per_weight.eps_used, mode);
}

EstimatorState smooth(EstimatorState state, double estimate) {
  SUPERCONV_CHECK(std::isfinite(estimate) && estimate > 0, ValidationError,
                  "smooth: estimate must be finite and positive");
  SUPERCONV_CHECK(state.alpha > 0 && state.alpha <= 1, ValidationError,
                  "smooth: alpha must lie in (0,1]");
  if (!state.smoothed_lr) {
    state.smoothed_lr = estimate;
  } else {
    state.smoothed_lr = state.alpha * estimate + (1.0 - state.alpha) * *state.smoothed_lr;
  }
  return state;
}

double probe_curvature(const GradientFn& grad_fn, const Vector& theta, const Vector& delta) {
  if (theta.size() != delta.size()) {
    throw DimensionError("probe_curvature: theta and delta lengths differ");
  }
  const double norm_sq = delta.squaredNorm();
  SUPERCONV_CHECK(norm_sq > 0 && std::isfinite(norm_sq), ValidationError,
                  "probe_curvature: delta must be nonzero");
  const Vector g0 = grad_fn(theta);
  const Vector g1 = grad_fn(theta + delta);
  if (g0.size() != theta.size() || g1.size() != theta.size()) {
    throw DimensionError("probe_curvature: gradient oracle returned the wrong length");
  }
  return delta.dot(g1 - g0) / norm_sq;
}

LrEstimator::LrEstimator(const EstimatorConfig& config) : config_(config) {
  state_.alpha = config.alpha;
  state_.aggregation = config.aggregation;
  state_.validate();
  SUPERCONV_CHECK(config.cadence >= 1, ValidationError, "estimator: cadence must be >= 1");
}

std::optional<LrEstimate> LrEstimator::observe(std::int64_t iter, const Vector& params,
                                               double lr_applied) {
  if (iter % config_.cadence != 0) return std::nullopt;
  state_ = record_snapshot(std::move(state_), params);
  lrs_.push_back(lr_applied);
  if (lrs_.size() > EstimatorState::kWindow) lrs_.pop_front();
  if (state_.window.size() < EstimatorState::kWindow) return std::nullopt;

  // The rate that carried theta_i to theta_{i+1}.
  const double eps_used = lrs_.front();
  const auto per_weight = per_weight_estimates(state_.window[0], state_.window[1],
                                               state_.window[2], eps_used, state_.denom_floor);
  const auto raw = aggregate(per_weight, state_.aggregation);
  if (!raw || !(*raw > 0) || !std::isfinite(*raw)) return std::nullopt;
  state_ = smooth(std::move(state_), *raw);
  return LrEstimate{*raw, *state_.smoothed_lr};
}

}  // namespace superconv
