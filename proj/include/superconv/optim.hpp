#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace superconv {

using Vector = Eigen::VectorXd;

enum class OptimizerMethod { sgd_momentum, nesterov, adagrad, adadelta, adam };

OptimizerMethod parse_optimizer_method(std::string_view name);
std::string_view to_string(OptimizerMethod method);

// Hyper-parameters for every supported rule. Defaults for the adaptive
// methods are the values from their original publications.
struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::sgd_momentum;
  double weight_decay = 0.0;  // coupled: g' = g + wd * theta
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double adagrad_eps = 1e-10;
  double rho = 0.95;
  double adadelta_eps = 1e-6;

  void validate() const;
};

// Per-run buffers. Empty buffers are lazily zero-initialized on the first
// update; afterwards their length is pinned to the parameter vector.
struct OptimizerState {
  Vector velocity;         // sgd-momentum, nesterov
  Vector grad_sq_sum;      // adagrad
  Vector grad_sq_avg;      // adadelta
  Vector update_sq_avg;    // adadelta
  Vector first_moment;     // adam
  Vector second_moment;    // adam
  std::int64_t step = 0;   // adam bias correction
};

struct UpdateResult {
  Vector params;
  OptimizerState state;
};

// Pure form: returns new parameters and state, inputs untouched.
// `momentum` is the SGD momentum coefficient; the adaptive methods ignore it.
UpdateResult apply_update(const OptimizerConfig& config, const OptimizerState& state,
                          const Vector& params, const Vector& grads, double lr, double momentum);

// Same rule, updating params and state in place (used by the training loop).
void apply_update_in_place(const OptimizerConfig& config, OptimizerState& state,
                           Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads,
                           double lr, double momentum);

// SGD noise scale g ~ lr * N / (B * (1 - m)).
double noise_scale(double lr, std::int64_t n_samples, std::int64_t batch_size, double momentum);

}  // namespace superconv
