#include <doctest.h>

#include <vector>

#include "hexreg/schedule.hpp"
#include "support.hpp"

using namespace hexreg;

namespace {

ThresholdSchedule step(double start = 0.9, double floor = 0.1) {
  ThresholdSchedule s;
  s.kind = ScheduleKind::Step;
  s.start = start;
  s.floor = floor;
  s.step_down = 0.1;
  s.period_epochs = 100;
  return s;
}

ThresholdSchedule cosine(double start, double floor, int total) {
  ThresholdSchedule s;
  s.kind = ScheduleKind::Cos;
  s.start = start;
  s.floor = floor;
  s.total_epochs = total;
  return s;
}

}  // namespace

TEST_CASE("step schedule") {
  CHECK(schedule::step_threshold(step(), 0) == 0.9);
  CHECK(schedule::step_threshold(step(), 99) == 0.9);
  CHECK(schedule::step_threshold(step(), 100) == 0.8);
  CHECK(schedule::step_threshold(step(), 200) == 0.7);
  CHECK(schedule::step_threshold(step(), 300) == 0.6);
  CHECK(schedule::step_threshold(step(0.9, 0.45), 1000) == 0.45);
}

TEST_CASE("cosine schedule") {
  const ThresholdSchedule s = cosine(0.95, 0.65, 450);
  CHECK(schedule::cosine_threshold(s, 0) == 0.95);
  CHECK(schedule::cosine_threshold(s, 450) == 0.65);
  CHECK(schedule::cosine_threshold(s, 900) == 0.65);
  CHECK(schedule::cosine_threshold(s, 225) == doctest::Approx(0.80).epsilon(1e-14));
}

TEST_CASE("manual schedules are monotone and bounded") {
  CounterRng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const double floor = rng.uniform(-0.5, 0.5);
    const double start = floor + rng.uniform(0, 1);
    for (const ThresholdSchedule& s : {step(start, floor), cosine(start, floor, 1 + static_cast<int>(rng.below(500)))}) {
      double prev = schedule::manual_threshold(s, 0);
      for (int e = 0; e <= 1200; e += 7) {
        const double v = schedule::manual_threshold(s, e);
        CHECK(v <= prev);
        CHECK(v <= start);
        CHECK(v >= floor);
        prev = v;
      }
    }
  }
}

TEST_CASE("adaptive threshold") {
  const std::vector<double> flat(5, 0.3);
  CHECK(schedule::adaptive_threshold(flat, 2.0) == doctest::Approx(0.3).epsilon(1e-15));
  const std::vector<double> two{0.0, 1.0};
  CHECK(schedule::adaptive_threshold(two, 2.0) == 1.5);
  const std::vector<double> sym{-0.5, 0.5};
  CHECK(schedule::adaptive_threshold(sym, 1.0) == 0.5);
  CHECK_THROWS_AS(schedule::adaptive_threshold(std::vector<double>{}, 2.0), Error);
}

TEST_CASE("adaptive threshold is translation equivariant") {
  CounterRng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(3 + rng.below(40));
    for (double& x : v) x = rng.uniform(-1, 1);
    const double delta = rng.uniform(-0.5, 0.5);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += delta;
    CHECK(schedule::adaptive_threshold(shifted, 2.0) ==
          doctest::Approx(schedule::adaptive_threshold(v, 2.0) + delta).epsilon(1e-12));
  }
}

TEST_CASE("fixed schedule and validation") {
  ThresholdSchedule f;
  f.kind = ScheduleKind::Fixed;
  f.start = 0.7;
  CHECK(schedule::manual_threshold(f, 123) == 0.7);

  ThresholdSchedule a;
  CHECK(a.data_dependent());
  CHECK_THROWS_AS(schedule::manual_threshold(a, 0), Error);

  ThresholdSchedule bad = step(0.1, 0.5);
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(ThresholdSchedule::default_period(100) == 25);
  CHECK(ThresholdSchedule::default_period(400) == 100);
  CHECK(parse_schedule_kind("cos") == ScheduleKind::Cos);
  CHECK_THROWS_AS(parse_schedule_kind("linear"), Error);
}
