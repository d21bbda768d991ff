#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mgnet/autodiff.hpp"

namespace mgnet::test {

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

using ScalarFn = std::function<Var<double>(Tape<double>&, Var<double>)>;

/// Largest relative disagreement between the tape gradient of f at x0 and
/// central differences with step h.
inline double input_grad_error(const Matrix<double>& x0, const ScalarFn& f, double h = 1e-5) {
  Tape<double> tape;
  Var<double> x = tape.variable(x0);
  tape.backward(f(tape, x));
  const Matrix<double> analytic = x.grad();
  double worst = 0.0;
  for (Index i = 0; i < x0.size(); ++i) {
    Matrix<double> xp = x0, xm = x0;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Tape<double> tp, tm;
    const double fp = f(tp, tp.variable(xp)).value()(0, 0);
    const double fm = f(tm, tm.variable(xm)).value()(0, 0);
    worst = std::max(worst, rel_error(analytic.data()[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

/// Same check against a parameter; `f` must read the parameter through the tape.
inline double param_grad_error(Parameter<double>& p, const std::function<Var<double>(Tape<double>&)>& f,
                               double h = 1e-5, Index max_entries = 64) {
  p.zero_grad();
  {
    Tape<double> tape;
    tape.backward(f(tape));
  }
  const Matrix<double> analytic = p.grad;
  double worst = 0.0;
  const Index n = std::min<Index>(p.value.size(), max_entries);
  for (Index i = 0; i < n; ++i) {
    const double saved = p.value.data()[i];
    p.value.data()[i] = saved + h;
    Tape<double> tp;
    const double fp = f(tp).value()(0, 0);
    p.value.data()[i] = saved - h;
    Tape<double> tm;
    const double fm = f(tm).value()(0, 0);
    p.value.data()[i] = saved;
    worst = std::max(worst, rel_error(analytic.data()[i], (fp - fm) / (2 * h)));
  }
  p.zero_grad();
  return worst;
}

inline Matrix<double> random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// A fixed, smooth reduction that weights every entry differently.
inline Var<double> probe_sum(Tape<double>& tape, Var<double> y) {
  Matrix<double> w(y.rows(), y.cols());
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return sum(hadamard(y, tape.constant(w)));
}

}  // namespace mgnet::test
