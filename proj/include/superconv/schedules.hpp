#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace superconv {

enum class ScheduleKind { piecewise_constant, inv, exp, clr_triangular, one_cycle, sgdr_cosine };
enum class StepUnit { iterations, epochs };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

// Raw schedule description as it appears in a config file. Stepsize and
// boundaries are expressed in `unit`; total_iters is always in iterations.
//
// Single-rate policies (piecewise-constant, inv, exp) start from max_lr.
struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::clr_triangular;
  double min_lr = 0.0;
  double max_lr = 0.0;
  std::int64_t stepsize = 1;
  std::int64_t total_iters = 1;
  double drop_factor = 0.1;
  std::vector<std::int64_t> boundaries;
  double final_div = 1000.0;
  double gamma = 1e-4;  // inv: (1 + gamma*t)^-power, exp: gamma^t
  double power = 0.75;
  StepUnit unit = StepUnit::iterations;
  std::int64_t iters_per_epoch = 1;
};

// Validated, immutable learning-rate policy. All stepsizes are stored in
// iterations; evaluation is a pure function of the iteration index.
class ScheduleSpec {
 public:
  explicit ScheduleSpec(const ScheduleParams& params);

  double lr_at(std::int64_t iter) const;

  ScheduleKind kind() const { return kind_; }
  double min_lr() const { return min_lr_; }
  double max_lr() const { return max_lr_; }
  std::int64_t stepsize() const { return stepsize_; }
  std::int64_t total_iters() const { return total_iters_; }
  double final_lr() const { return min_lr_ / final_div_; }
  const std::vector<std::int64_t>& boundaries() const { return boundaries_; }

 private:
  double triangle(std::int64_t iter) const;

  ScheduleKind kind_;
  double min_lr_;
  double max_lr_;
  std::int64_t stepsize_;
  std::int64_t total_iters_;
  double drop_factor_;
  std::vector<std::int64_t> boundaries_;
  double final_div_;
  double gamma_;
  double power_;
};

enum class MomentumKind { constant, cyclical };

struct MomentumParams {
  MomentumKind kind = MomentumKind::constant;
  double max_m = 0.9;
  double min_m = 0.9;
  std::int64_t stepsize = 1;
  // Hold at max_m after the first full cycle, pairing with a one-cycle LR.
  bool single_cycle = false;
  StepUnit unit = StepUnit::iterations;
  std::int64_t iters_per_epoch = 1;
};

// Momentum policy run anti-phase to the triangular LR wave: it falls while
// the learning rate rises and climbs back while it falls.
class MomentumSpec {
 public:
  explicit MomentumSpec(const MomentumParams& params);

  double momentum_at(std::int64_t iter) const;

  MomentumKind kind() const { return kind_; }
  double max_m() const { return max_m_; }
  double min_m() const { return min_m_; }
  std::int64_t stepsize() const { return stepsize_; }

 private:
  MomentumKind kind_;
  double max_m_;
  double min_m_;
  std::int64_t stepsize_;
  bool single_cycle_;
};

// Lower CLR bound from the upper one, conventionally max_lr / 3 or / 4.
double suggest_min_from_max(double max_lr, double divisor);

}  // namespace superconv
