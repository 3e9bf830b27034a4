#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hexreg/autodiff.hpp"
#include "hexreg/linalg.hpp"
#include "hexreg/rng.hpp"

namespace testing {

using hexreg::CounterRng;
using hexreg::Index;
using hexreg::Matrix;

inline Matrix random_matrix(CounterRng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Matrix random_unit_rows(CounterRng& rng, Index rows, Index cols) {
  return hexreg::linalg::l2_normalize_rows(random_matrix(rng, rows, cols));
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Central differences of `f` with respect to every entry of `x` (restored afterwards).
inline Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Largest relative error between the tape gradient of every input and central differences.
inline double tape_gradient_error(hexreg::ad::Tape& t, double h = 1e-5) {
  t.forward();
  t.backward();
  const std::vector<hexreg::ad::Var> inputs = t.inputs();
  std::vector<Matrix> analytic;
  for (hexreg::ad::Var v : inputs) analytic.push_back(t.grad(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const hexreg::ad::Var v = inputs[k];
    Matrix x = t.value(v);
    const Matrix numeric = numeric_gradient(
        x,
        [&] {
          t.set_value(v, x);
          return t.forward();
        },
        h);
    t.set_value(v, x);
    for (Index i = 0; i < x.size(); ++i)
      worst = std::max(worst, relative_error(analytic[k].data()[i], numeric.data()[i]));
  }
  t.forward();
  return worst;
}

}  // namespace testing
