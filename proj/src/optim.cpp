#include "superconv/optim.hpp"

#include <cmath>
#include <string>

#include "superconv/error.hpp"

namespace superconv {

namespace {

void require_finite(const Eigen::Ref<const Vector>& v, const char* name) {
  if (!v.allFinite()) throw NumericError(std::string("apply_update: non-finite values in ") + name);
}

void ensure_buffer(Vector& buf, Eigen::Index n, const char* name) {
  if (buf.size() == 0) {
    buf = Vector::Zero(n);
  } else if (buf.size() != n) {
    throw DimensionError(std::string("apply_update: state buffer ") + name + " has length " +
                         std::to_string(buf.size()) + ", parameters have " + std::to_string(n));
  }
}

}  // namespace

OptimizerMethod parse_optimizer_method(std::string_view name) {
  if (name == "sgd-momentum" || name == "sgd") return OptimizerMethod::sgd_momentum;
  if (name == "nesterov") return OptimizerMethod::nesterov;
  if (name == "adagrad") return OptimizerMethod::adagrad;
  if (name == "adadelta") return OptimizerMethod::adadelta;
  if (name == "adam") return OptimizerMethod::adam;
  throw ValidationError("unknown optimizer method '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerMethod method) {
  switch (method) {
    case OptimizerMethod::sgd_momentum: return "sgd-momentum";
    case OptimizerMethod::nesterov: return "nesterov";
    case OptimizerMethod::adagrad: return "adagrad";
    case OptimizerMethod::adadelta: return "adadelta";
    case OptimizerMethod::adam: return "adam";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  SUPERCONV_CHECK(std::isfinite(weight_decay) && weight_decay >= 0, ValidationError,
                  "optimizer: weight_decay must be >= 0");
  SUPERCONV_CHECK(beta1 >= 0 && beta1 < 1, ValidationError, "optimizer: beta1 must lie in [0,1)");
  SUPERCONV_CHECK(beta2 >= 0 && beta2 < 1, ValidationError, "optimizer: beta2 must lie in [0,1)");
  SUPERCONV_CHECK(rho >= 0 && rho < 1, ValidationError, "optimizer: rho must lie in [0,1)");
  SUPERCONV_CHECK(adam_eps > 0 && adagrad_eps > 0 && adadelta_eps > 0, ValidationError,
                  "optimizer: eps values must be positive");
}

void apply_update_in_place(const OptimizerConfig& config, OptimizerState& state,
                           Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads,
                           double lr, double momentum) {
  const Eigen::Index n = params.size();
  if (grads.size() != n) {
    throw DimensionError("apply_update: " + std::to_string(n) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  SUPERCONV_CHECK(std::isfinite(lr) && lr > 0, ValidationError, "apply_update: lr must be positive");
  SUPERCONV_CHECK(momentum >= 0 && momentum < 1, ValidationError,
                  "apply_update: momentum must lie in [0,1)");
  require_finite(params, "params");
  require_finite(grads, "grads");

  const Vector g = config.weight_decay != 0.0 ? Vector(grads + config.weight_decay * params)
                                              : Vector(grads);

  switch (config.method) {
    case OptimizerMethod::sgd_momentum: {
      ensure_buffer(state.velocity, n, "velocity");
      require_finite(state.velocity, "velocity");
      state.velocity = momentum * state.velocity + lr * g;
      params -= state.velocity;
      break;
    }
    case OptimizerMethod::nesterov: {
      ensure_buffer(state.velocity, n, "velocity");
      require_finite(state.velocity, "velocity");
      state.velocity = momentum * state.velocity + lr * g;
      params -= momentum * state.velocity + lr * g;
      break;
    }
    case OptimizerMethod::adagrad: {
      ensure_buffer(state.grad_sq_sum, n, "grad_sq_sum");
      require_finite(state.grad_sq_sum, "grad_sq_sum");
      state.grad_sq_sum += g.cwiseAbs2();
      params.array() -= lr * g.array() / (state.grad_sq_sum.array().sqrt() + config.adagrad_eps);
      break;
    }
    case OptimizerMethod::adadelta: {
      ensure_buffer(state.grad_sq_avg, n, "grad_sq_avg");
      ensure_buffer(state.update_sq_avg, n, "update_sq_avg");
      require_finite(state.grad_sq_avg, "grad_sq_avg");
      require_finite(state.update_sq_avg, "update_sq_avg");
      const double rho = config.rho;
      const double eps = config.adadelta_eps;
      state.grad_sq_avg = rho * state.grad_sq_avg + (1 - rho) * g.cwiseAbs2();
      const Vector delta = ((state.update_sq_avg.array() + eps).sqrt() /
                            (state.grad_sq_avg.array() + eps).sqrt() * g.array())
                               .matrix();
      state.update_sq_avg = rho * state.update_sq_avg + (1 - rho) * delta.cwiseAbs2();
      params -= lr * delta;
      break;
    }
    case OptimizerMethod::adam: {
      ensure_buffer(state.first_moment, n, "first_moment");
      ensure_buffer(state.second_moment, n, "second_moment");
      require_finite(state.first_moment, "first_moment");
      require_finite(state.second_moment, "second_moment");
      const double b1 = config.beta1;
      const double b2 = config.beta2;
      state.first_moment = b1 * state.first_moment + (1 - b1) * g;
      state.second_moment = b2 * state.second_moment + (1 - b2) * g.cwiseAbs2();
      state.step += 1;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
      params.array() -= lr * (state.first_moment.array() / c1) /
                        ((state.second_moment.array() / c2).sqrt() + config.adam_eps);
      break;
    }
  }
}

UpdateResult apply_update(const OptimizerConfig& config, const OptimizerState& state,
                          const Vector& params, const Vector& grads, double lr, double momentum) {
  UpdateResult out{params, state};
  apply_update_in_place(config, out.state, out.params, grads, lr, momentum);
  return out;
}

double noise_scale(double lr, std::int64_t n_samples, std::int64_t batch_size, double momentum) {
  SUPERCONV_CHECK(std::isfinite(lr) && lr > 0, ValidationError, "noise_scale: lr must be positive");
  SUPERCONV_CHECK(n_samples > 0 && batch_size > 0, ValidationError,
                  "noise_scale: sample and batch counts must be positive");
  SUPERCONV_CHECK(batch_size <= n_samples, ValidationError,
                  "noise_scale: batch_size exceeds n_samples");
  SUPERCONV_CHECK(momentum >= 0 && momentum < 1, ValidationError,
                  "noise_scale: momentum must lie in [0,1)");
  return lr * static_cast<double>(n_samples) / (static_cast<double>(batch_size) * (1.0 - momentum));
}

}  // namespace superconv
