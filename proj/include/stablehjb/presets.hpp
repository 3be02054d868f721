#pragma once

// Preset data for drifts and cost functions. Every preset carries the sup
// norm and Lipschitz constant that the problem invariants need.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "stablehjb/ou.hpp"

namespace stablehjb {

/// Bounded Lipschitz drift F: R^N -> R^N.
struct Drift {
  std::function<void(std::span<const double>, std::span<double>)> apply;
  double lipschitz = 0.0;
  double bound = 0.0;  // sup of |F(x)|
};

inline Drift zero_drift() {
  return {[](std::span<const double>, std::span<double> out) {
            for (auto& v : out) v = 0.0;
          },
          0.0, 0.0};
}

/// F_i(x) = scale * tanh(x_i).
inline Drift tanh_drift(double scale, std::size_t dim) {
  return {[scale](std::span<const double> x, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * std::tanh(x[i]);
          },
          std::abs(scale), std::abs(scale) * std::sqrt(static_cast<double>(dim))};
}

inline Drift constant_drift(Point value) {
  const double b = norm(value);
  return {[value](std::span<const double>, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = value[i];
          },
          0.0, b};
}

inline TestFunction constant_function(double c) {
  TestFunction f;
  f.eval = [c](std::span<const double>) { return c; };
  f.grad = [](std::span<const double>, std::span<double> g) {
    for (auto& v : g) v = 0.0;
  };
  f.bound = std::abs(c);
  return f;
}

inline TestFunction zero_function() { return constant_function(0.0); }

/// amplitude * exp(-|x - center|^2 / (2 width^2)); an empty center means the origin.
inline TestFunction gaussian_bump(double amplitude, double width, Point center = {}) {
  TestFunction f;
  auto sq = [center](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - (i < center.size() ? center[i] : 0.0);
      s += d * d;
    }
    return s;
  };
  const double inv = 1.0 / (2.0 * width * width);
  f.eval = [=](std::span<const double> x) { return amplitude * std::exp(-sq(x) * inv); };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    const double v = amplitude * std::exp(-sq(x) * inv);
    for (std::size_t i = 0; i < x.size(); ++i)
      g[i] = -v * 2.0 * inv * (x[i] - (i < center.size() ? center[i] : 0.0));
  };
  f.bound = std::abs(amplitude);
  return f;
}

/// amplitude * sum_i tanh(x_i / width): a ramp that saturates, over `dim` coordinates.
inline TestFunction smoothed_ramp(double amplitude, double width, std::size_t dim) {
  TestFunction f;
  f.eval = [=](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::tanh(v / width);
    return amplitude * s;
  };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double th = std::tanh(x[i] / width);
      g[i] = amplitude * (1.0 - th * th) / width;
    }
  };
  f.bound = std::abs(amplitude) * static_cast<double>(dim);
  return f;
}

/// scale * tanh(x_coord / scale): equals x_coord near 0, bounded by |scale|.
inline TestFunction smoothed_linear(std::size_t coord, double scale) {
  TestFunction f;
  f.eval = [=](std::span<const double> x) { return scale * std::tanh(x[coord] / scale); };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    for (auto& v : g) v = 0.0;
    const double th = std::tanh(x[coord] / scale);
    g[coord] = 1.0 - th * th;
  };
  f.active = {coord};
  f.bound = std::abs(scale);
  return f;
}

/// 1 / (1 + exp(-steepness * x_coord)), a smoothed step.
inline TestFunction steep_sigmoid(std::size_t coord, double steepness) {
  TestFunction f;
  f.eval = [=](std::span<const double> x) { return 0.5 * (1.0 + std::tanh(0.5 * steepness * x[coord])); };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    for (auto& v : g) v = 0.0;
    const double th = std::tanh(0.5 * steepness * x[coord]);
    g[coord] = 0.25 * steepness * (1.0 - th * th);
  };
  f.active = {coord};
  f.bound = 1.0;
  return f;
}

/// exp(1 - 1 / (1 - (x_coord/width)^2)) inside |x_coord| < width, 0 outside; peak 1.
inline TestFunction compact_bump(std::size_t coord, double width) {
  TestFunction f;
  f.eval = [=](std::span<const double> x) {
    const double r = x[coord] / width;
    if (std::abs(r) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - r * r));
  };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    for (auto& v : g) v = 0.0;
    const double r = x[coord] / width;
    if (std::abs(r) >= 1.0) return;
    const double q = 1.0 - r * r;
    g[coord] = std::exp(1.0 - 1.0 / q) * (-2.0 * r / (q * q)) / width;
  };
  f.active = {coord};
  f.bound = 1.0;
  return f;
}

/// tanh(x_coord); odd, bounded by 1.
inline TestFunction tanh_coordinate(std::size_t coord) {
  TestFunction f;
  f.eval = [=](std::span<const double> x) { return std::tanh(x[coord]); };
  f.grad = [=](std::span<const double> x, std::span<double> g) {
    for (auto& v : g) v = 0.0;
    const double th = std::tanh(x[coord]);
    g[coord] = 1.0 - th * th;
  };
  f.active = {coord};
  f.bound = 1.0;
  return f;
}

}  // namespace stablehjb
