#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "superconv/optim.hpp"

namespace superconv {

enum class Aggregation { abs_sum, rms };

Aggregation parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation mode);

// Rolling window of the three most recent weight snapshots plus the
// exponentially smoothed learning-rate estimate.
struct EstimatorState {
  std::deque<Vector> window;
  std::optional<double> smoothed_lr;
  double alpha = 0.1;
  Aggregation aggregation = Aggregation::abs_sum;
  // Absolute floor on |2 theta_{i+1} - theta_i - theta_{i+2}|. When unset,
  // 1e-12 * max(1, ||theta||_inf) over the three snapshots is used.
  std::optional<double> denom_floor;

  static constexpr std::size_t kWindow = 3;
  void validate() const;
};

// Appends a copy of `params`, evicting the oldest snapshot beyond three.
EstimatorState record_snapshot(EstimatorState state, const Vector& params);

// Per-coordinate optimal-rate estimates from three consecutive iterates:
//   eps * (theta1 - theta0) / (2 theta1 - theta0 - theta2).
struct PerWeightEstimates {
  Vector numerators;    // theta1 - theta0
  Vector denominators;  // 2 theta1 - theta0 - theta2
  Vector estimates;     // NaN where invalid
  std::vector<std::uint8_t> valid;
  Eigen::Index valid_count = 0;
  double eps_used = 0.0;
};

double default_denom_floor(const Vector& theta0, const Vector& theta1, const Vector& theta2);

PerWeightEstimates per_weight_estimates(const Vector& theta0, const Vector& theta1,
                                        const Vector& theta2, double eps_used,
                                        std::optional<double> denom_floor = std::nullopt);

// Global estimate over the valid coordinates. abs-sum: eps * sum|num| /
// sum|den|; rms: eps * ||num||_2 / ||den||_2. Returns nullopt when no
// coordinate is valid.
std::optional<double> aggregate(const PerWeightEstimates& per_weight, Aggregation mode);
std::optional<double> aggregate(const Vector& numerators, const Vector& denominators,
                                std::span<const std::uint8_t> valid, double eps_used,
                                Aggregation mode);

// smoothed' = alpha * estimate + (1 - alpha) * smoothed; the first estimate
// initializes the average.
EstimatorState smooth(EstimatorState state, double estimate);

// Curvature along delta from two gradients:
//   delta . (grad(theta + delta) - grad(theta)) / ||delta||^2.
using GradientFn = std::function<Vector(const Vector&)>;
double probe_curvature(const GradientFn& grad_fn, const Vector& theta, const Vector& delta);

struct EstimatorConfig {
  double alpha = 0.1;
  Aggregation aggregation = Aggregation::abs_sum;
  std::int64_t cadence = 1;  // snapshot every `cadence` iterations
};

struct LrEstimate {
  double raw = 0.0;
  double smoothed = 0.0;
};

// Training-loop adapter: feed it the parameters before each update along
// with the learning rate that update is about to apply. It never touches
// the parameters it is shown.
class LrEstimator {
 public:
  explicit LrEstimator(const EstimatorConfig& config);

  std::optional<LrEstimate> observe(std::int64_t iter, const Vector& params, double lr_applied);

  const EstimatorState& state() const { return state_; }

 private:
  EstimatorConfig config_;
  EstimatorState state_;
  std::deque<double> lrs_;
};

}  // namespace superconv
