#include <doctest.h>

#include <cmath>
#include <vector>

#include "hexreg/rng.hpp"

using hexreg::CounterRng;

TEST_CASE("streams are pure functions of key and counter") {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CounterRng c(42, 50);
  CounterRng d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("derived stream keys depend on every path component") {
  CHECK(CounterRng::derive(0, {1, 2}) != CounterRng::derive(0, {2, 1}));
  CHECK(CounterRng::derive(0, {1}) != CounterRng::derive(1, {1}));
  CHECK(CounterRng::derive(0, {1, 0}) != CounterRng::derive(0, {1}));
}

TEST_CASE("uniform and normal moments") {
  CounterRng r(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below is unbiased over a small range") {
  CounterRng r(9);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) ++counts[r.below(3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}
