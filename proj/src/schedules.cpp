#include "superconv/schedules.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "superconv/error.hpp"

namespace superconv {

namespace {

std::int64_t to_iterations(std::int64_t value, StepUnit unit, std::int64_t iters_per_epoch) {
  return unit == StepUnit::epochs ? value * iters_per_epoch : value;
}

}  // namespace

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "piecewise-constant" || name == "step") return ScheduleKind::piecewise_constant;
  if (name == "inv") return ScheduleKind::inv;
  if (name == "exp") return ScheduleKind::exp;
  if (name == "clr-triangular" || name == "clr") return ScheduleKind::clr_triangular;
  if (name == "one-cycle" || name == "1cycle") return ScheduleKind::one_cycle;
  if (name == "sgdr-cosine") return ScheduleKind::sgdr_cosine;
  throw ValidationError("unknown schedule kind '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::piecewise_constant: return "piecewise-constant";
    case ScheduleKind::inv: return "inv";
    case ScheduleKind::exp: return "exp";
    case ScheduleKind::clr_triangular: return "clr-triangular";
    case ScheduleKind::one_cycle: return "one-cycle";
    case ScheduleKind::sgdr_cosine: return "sgdr-cosine";
  }
  return "unknown";
}

ScheduleSpec::ScheduleSpec(const ScheduleParams& p)
    : kind_(p.kind),
      min_lr_(p.min_lr),
      max_lr_(p.max_lr),
      stepsize_(0),
      total_iters_(p.total_iters),
      drop_factor_(p.drop_factor),
      final_div_(p.final_div),
      gamma_(p.gamma),
      power_(p.power) {
  SUPERCONV_CHECK(p.iters_per_epoch >= 1, ValidationError, "schedule: iters_per_epoch must be >= 1");
  SUPERCONV_CHECK(total_iters_ >= 1, ValidationError, "schedule: total_iters must be >= 1");
  SUPERCONV_CHECK(std::isfinite(max_lr_) && max_lr_ > 0, ValidationError,
                  "schedule: max_lr must be positive");

  const bool single_rate = kind_ == ScheduleKind::piecewise_constant || kind_ == ScheduleKind::inv ||
                           kind_ == ScheduleKind::exp;
  if (single_rate && min_lr_ == 0.0) min_lr_ = max_lr_;
  SUPERCONV_CHECK(std::isfinite(min_lr_) && min_lr_ > 0, ValidationError,
                  "schedule: min_lr must be positive");
  SUPERCONV_CHECK(min_lr_ <= max_lr_, ValidationError, "schedule: min_lr must not exceed max_lr");

  switch (kind_) {
    case ScheduleKind::piecewise_constant: {
      SUPERCONV_CHECK(drop_factor_ > 0 && drop_factor_ < 1, ValidationError,
                      "schedule: drop_factor must lie in (0,1)");
      std::int64_t prev = -1;
      for (auto b : p.boundaries) {
        auto it = to_iterations(b, p.unit, p.iters_per_epoch);
        SUPERCONV_CHECK(it > prev, ValidationError, "schedule: boundaries must be strictly ascending");
        SUPERCONV_CHECK(it < total_iters_, ValidationError,
                        "schedule: boundary " + std::to_string(it) + " is not below total_iters");
        boundaries_.push_back(it);
        prev = it;
      }
      break;
    }
    case ScheduleKind::inv:
      SUPERCONV_CHECK(gamma_ >= 0 && power_ >= 0, ValidationError,
                      "schedule: inv needs gamma >= 0 and power >= 0");
      break;
    case ScheduleKind::exp:
      SUPERCONV_CHECK(gamma_ > 0 && gamma_ <= 1, ValidationError, "schedule: exp needs gamma in (0,1]");
      break;
    case ScheduleKind::clr_triangular:
    case ScheduleKind::one_cycle:
    case ScheduleKind::sgdr_cosine:
      stepsize_ = to_iterations(p.stepsize, p.unit, p.iters_per_epoch);
      SUPERCONV_CHECK(stepsize_ >= 1, ValidationError, "schedule: stepsize must be >= 1");
      break;
  }
  if (kind_ == ScheduleKind::one_cycle) {
    SUPERCONV_CHECK(final_div_ >= 1, ValidationError, "schedule: final_div must be >= 1");
    SUPERCONV_CHECK(2 * stepsize_ <= total_iters_, ValidationError,
                    "schedule: one-cycle needs 2*stepsize <= total_iters (stepsize " +
                        std::to_string(stepsize_) + ", total " + std::to_string(total_iters_) + ")");
  }
}

// Fraction of the way from the bottom to the top of the triangle wave.
// Integer arithmetic keeps the wave exactly symmetric about each peak.
double ScheduleSpec::triangle(std::int64_t iter) const {
  const std::int64_t pos = iter % (2 * stepsize_);
  const std::int64_t dist = pos > stepsize_ ? pos - stepsize_ : stepsize_ - pos;
  return static_cast<double>(stepsize_ - dist) / static_cast<double>(stepsize_);
}

double ScheduleSpec::lr_at(std::int64_t iter) const {
  if (iter < 0 || iter >= total_iters_) {
    throw OutOfRangeError("lr_at: iteration " + std::to_string(iter) + " outside [0, " +
                          std::to_string(total_iters_) + ")");
  }
  switch (kind_) {
    case ScheduleKind::piecewise_constant: {
      double lr = max_lr_;
      for (auto b : boundaries_) {
        if (iter >= b) lr *= drop_factor_;
      }
      return lr;
    }
    case ScheduleKind::inv:
      return max_lr_ * std::pow(1.0 + gamma_ * static_cast<double>(iter), -power_);
    case ScheduleKind::exp:
      return max_lr_ * std::pow(gamma_, static_cast<double>(iter));
    case ScheduleKind::clr_triangular:
      return min_lr_ + (max_lr_ - min_lr_) * triangle(iter);
    case ScheduleKind::one_cycle: {
      if (iter < 2 * stepsize_) return min_lr_ + (max_lr_ - min_lr_) * triangle(iter);
      // Annihilation: linear from min_lr down to min_lr / final_div on the last iteration.
      const std::int64_t tail = total_iters_ - 2 * stepsize_;
      const double frac = tail > 1 ? static_cast<double>(iter - 2 * stepsize_) /
                                         static_cast<double>(tail - 1)
                                   : 1.0;
      const double final = min_lr_ / final_div_;
      return min_lr_ + (final - min_lr_) * frac;
    }
    case ScheduleKind::sgdr_cosine: {
      const double pos = static_cast<double>(iter % stepsize_) / static_cast<double>(stepsize_);
      return min_lr_ + 0.5 * (max_lr_ - min_lr_) * (1.0 + std::cos(std::numbers::pi * pos));
    }
  }
  return max_lr_;
}

MomentumSpec::MomentumSpec(const MomentumParams& p)
    : kind_(p.kind), max_m_(p.max_m), min_m_(p.min_m), stepsize_(1), single_cycle_(p.single_cycle) {
  if (kind_ == MomentumKind::constant) min_m_ = max_m_;
  SUPERCONV_CHECK(max_m_ >= 0 && max_m_ < 1, ValidationError, "momentum: max_m must lie in [0,1)");
  SUPERCONV_CHECK(min_m_ >= 0 && min_m_ < 1, ValidationError, "momentum: min_m must lie in [0,1)");
  SUPERCONV_CHECK(min_m_ <= max_m_, ValidationError, "momentum: min_m must not exceed max_m");
  if (kind_ == MomentumKind::cyclical) {
    SUPERCONV_CHECK(p.iters_per_epoch >= 1, ValidationError, "momentum: iters_per_epoch must be >= 1");
    stepsize_ = to_iterations(p.stepsize, p.unit, p.iters_per_epoch);
    SUPERCONV_CHECK(stepsize_ >= 1, ValidationError, "momentum: stepsize must be >= 1");
  }
}

double MomentumSpec::momentum_at(std::int64_t iter) const {
  if (iter < 0) throw OutOfRangeError("momentum_at: negative iteration");
  if (kind_ == MomentumKind::constant) return max_m_;
  if (single_cycle_ && iter >= 2 * stepsize_) return max_m_;
  const std::int64_t pos = iter % (2 * stepsize_);
  const std::int64_t dist = pos > stepsize_ ? pos - stepsize_ : stepsize_ - pos;
  return max_m_ - (max_m_ - min_m_) * static_cast<double>(stepsize_ - dist) /
                      static_cast<double>(stepsize_);
}

double suggest_min_from_max(double max_lr, double divisor) {
  SUPERCONV_CHECK(std::isfinite(max_lr) && max_lr > 0, ValidationError,
                  "suggest_min_from_max: max_lr must be positive");
  SUPERCONV_CHECK(std::isfinite(divisor) && divisor >= 1, ValidationError,
                  "suggest_min_from_max: divisor must be >= 1");
  return max_lr / divisor;
}

}  // namespace superconv
