#pragma once

#include <span>
#include <string>
#include <string_view>

#include "hexreg/hierarchy.hpp"

namespace hexreg {

enum class ScheduleKind { Step, Cos, Adaptive, Fixed };

std::string_view to_string(ScheduleKind kind) noexcept;
ScheduleKind parse_schedule_kind(std::string_view name);
MaskSource mask_source(ScheduleKind kind) noexcept;

/// Threshold strategy for splitting negatives into hierarchical and regular members.
/// `start` and `floor` bound the manual schedules; a fixed schedule
/// always returns `start`.
struct ThresholdSchedule {
  ScheduleKind kind = ScheduleKind::Adaptive;
  double start = 0.9;
  double floor = 0.1;
  double step_down = 0.1;
  int period_epochs = 100;
  int total_epochs = 1;
  double sigma_multiplier = 2.0;

  void validate() const;
  bool data_dependent() const { return kind == ScheduleKind::Adaptive; }

  /// Step period used when none is configured: 25 for 100-epoch runs, 100 otherwise.
  static int default_period(int total_epochs) { return total_epochs == 100 ? 25 : 100; }
};

namespace schedule {

double step_threshold(const ThresholdSchedule& s, int epoch);
double cosine_threshold(const ThresholdSchedule& s, int epoch);

/// Batch mean plus `sigma_multiplier` population standard deviations. Not clamped.
double adaptive_threshold(std::span<const double> batch_sims, double sigma_multiplier);

/// Epoch threshold for the manual kinds (step, cos, fixed).
double manual_threshold(const ThresholdSchedule& s, int epoch);

}  // namespace schedule
}  // namespace hexreg
