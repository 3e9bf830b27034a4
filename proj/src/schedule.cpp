#include "hexreg/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hexreg {

std::string_view to_string(ScheduleKind kind) noexcept {
  switch (kind) {
    case ScheduleKind::Step: return "step";
    case ScheduleKind::Cos: return "cos";
    case ScheduleKind::Adaptive: return "adaptive";
    case ScheduleKind::Fixed: return "fixed";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "step") return ScheduleKind::Step;
  if (name == "cos") return ScheduleKind::Cos;
  if (name == "adaptive") return ScheduleKind::Adaptive;
  if (name == "fixed") return ScheduleKind::Fixed;
  fail(ErrorCode::BadConfig, "unknown schedule kind '" + std::string(name) + "'");
}

MaskSource mask_source(ScheduleKind kind) noexcept {
  switch (kind) {
    case ScheduleKind::Step: return MaskSource::Step;
    case ScheduleKind::Cos: return MaskSource::Cos;
    case ScheduleKind::Adaptive: return MaskSource::Adaptive;
    case ScheduleKind::Fixed: return MaskSource::Fixed;
  }
  return MaskSource::Fixed;
}

void ThresholdSchedule::validate() const {
  require(std::isfinite(start) && std::isfinite(floor), ErrorCode::BadSchedule, "start/floor must be finite");
  require(start >= floor, ErrorCode::BadSchedule, "start must be >= floor");
  require(period_epochs >= 1, ErrorCode::BadSchedule, "period_epochs must be >= 1");
  require(sigma_multiplier > 0, ErrorCode::BadSchedule, "sigma_multiplier must be > 0");
  if (kind == ScheduleKind::Step) require(step_down > 0, ErrorCode::BadSchedule, "step_down must be > 0");
  if (kind == ScheduleKind::Cos) require(total_epochs >= 1, ErrorCode::BadSchedule, "total_epochs must be >= 1");
}

namespace schedule {

double step_threshold(const ThresholdSchedule& s, int epoch) {
  require(s.kind == ScheduleKind::Step, ErrorCode::BadSchedule, "step_threshold on a non-step schedule");
  s.validate();
  const int steps = std::max(epoch, 0) / s.period_epochs;
  return std::max(s.floor, s.start - s.step_down * steps);
}

double cosine_threshold(const ThresholdSchedule& s, int epoch) {
  require(s.kind == ScheduleKind::Cos, ErrorCode::BadSchedule, "cosine_threshold on a non-cos schedule");
  s.validate();
  const double progress =
      static_cast<double>(std::clamp(epoch, 0, s.total_epochs)) / static_cast<double>(s.total_epochs);
  return s.floor + (s.start - s.floor) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

double adaptive_threshold(std::span<const double> batch_sims, double sigma_multiplier) {
  require(!batch_sims.empty(), ErrorCode::EmptyBatch, "no similarities to pool");
  require(sigma_multiplier > 0, ErrorCode::BadSchedule, "sigma_multiplier must be > 0");
  const auto n = static_cast<double>(batch_sims.size());
  double mean = 0.0;
  for (double v : batch_sims) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : batch_sims) var += (v - mean) * (v - mean);
  var /= n;
  return mean + sigma_multiplier * std::sqrt(var);
}

double manual_threshold(const ThresholdSchedule& s, int epoch) {
  switch (s.kind) {
    case ScheduleKind::Step: return step_threshold(s, epoch);
    case ScheduleKind::Cos: return cosine_threshold(s, epoch);
    case ScheduleKind::Fixed: s.validate(); return s.start;
    case ScheduleKind::Adaptive: break;
  }
  fail(ErrorCode::BadSchedule, "adaptive thresholds depend on batch similarities");
}

}  // namespace schedule
}  // namespace hexreg
