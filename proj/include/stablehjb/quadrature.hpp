#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

namespace stablehjb {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive 15/31-point Gauss-Kronrod on a finite interval.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-10,
                                    unsigned max_depth = 15) {
  QuadratureResult r;
  r.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, rel_tol,
                                                                          &r.error);
  return r;
}

}  // namespace stablehjb
