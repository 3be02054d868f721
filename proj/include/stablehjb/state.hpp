#pragma once

// Controlled state equation dX = (AX + F(X) + a) ds + dZ in mild form,
// solved path by path with Picard iteration on a uniform time grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/ou.hpp"
#include "stablehjb/policy.hpp"
#include "stablehjb/presets.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/spectrum.hpp"

namespace stablehjb {

struct ProblemSpec {
  Drift drift;
  TestFunction running_cost;   // g
  TestFunction terminal_cost;  // h
  double radius = 1.0;         // R
  double horizon = 1.0;        // T

  /// L = R + |F|_0, the Lipschitz constant of the Hamiltonian in p.
  double hamiltonian_lipschitz() const noexcept { return radius + drift.bound; }
};

/// Spot-checks the declared Lipschitz constant and bound of F and the bounds
/// of g and h at random points of [-box, box]^dim.
inline void validate_problem(const ProblemSpec& p, std::size_t dim, RngStream rng, std::size_t n_checks = 64,
                             double box = 5.0) {
  if (!(p.radius > 0.0)) throw ParameterError("radius R must be positive");
  if (!(p.horizon > 0.0)) throw ParameterError("horizon T must be positive");
  if (!p.drift.apply || !p.running_cost.eval || !p.terminal_cost.eval)
    throw ParameterError("problem data incomplete");
  Point x(dim), y(dim), fx(dim), fy(dim);
  for (std::size_t c = 0; c < n_checks; ++c) {
    for (std::size_t i = 0; i < dim; ++i) {
      x[i] = box * (2.0 * rng.uniform_open() - 1.0);
      y[i] = box * (2.0 * rng.uniform_open() - 1.0);
    }
    p.drift.apply(x, fx);
    p.drift.apply(y, fy);
    double dfx = 0.0, dxy = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      dfx += (fx[i] - fy[i]) * (fx[i] - fy[i]);
      dxy += (x[i] - y[i]) * (x[i] - y[i]);
    }
    if (std::sqrt(dfx) > p.drift.lipschitz * std::sqrt(dxy) * (1.0 + 1e-12) + 1e-15)
      throw ParameterError("drift violates its declared Lipschitz constant");
    if (norm(fx) > p.drift.bound * (1.0 + 1e-12) + 1e-15)
      throw ParameterError("drift violates its declared bound");
    for (const TestFunction* f : {&p.running_cost, &p.terminal_cost})
      if (f->bound && std::abs((*f)(x)) > *f->bound * (1.0 + 1e-12) + 1e-15)
        throw ParameterError("cost function violates its declared bound");
  }
}

/// Stochastic convolution int_{t0}^{s_k} e^{(s_k - r)A} dZ_r on the grid s_k = t0 + k dt.
struct NoisePath {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Point> conv;  // conv[0] = 0

  std::size_t cells() const noexcept { return conv.empty() ? 0 : conv.size() - 1; }

  /// The same noise seen from grid index `begin` onward, restarted at zero there.
  NoisePath restart(const SpectralModel& model, std::size_t begin, std::size_t end) const {
    if (begin >= end || end >= conv.size()) throw ParameterError("NoisePath::restart: bad index range");
    NoisePath out{t0 + static_cast<double>(begin) * dt, dt, {}};
    for (std::size_t k = begin; k <= end; ++k) {
      const auto f = semigroup_factor(model, static_cast<double>(k - begin) * dt);
      Point w(conv[k].size());
      for (std::size_t n = 0; n < w.size(); ++n) w[n] = conv[k][n] - f[n] * conv[begin][n];
      out.conv.push_back(std::move(w));
    }
    return out;
  }
};

/// Noise path from the exact per-step recursion, started from zero at t0.
inline NoisePath generate_noise_path(const SpectralModel& model, double t0, double dt, std::size_t cells,
                                     RngStream& rng) {
  NoisePath path{t0, dt, {}};
  path.conv.reserve(cells + 1);
  ConvolutionState state = zero_convolution(model, t0);
  path.conv.push_back(state.coords);
  for (std::size_t k = 0; k < cells; ++k) {
    state = advance_convolution(state, model, dt, rng);
    path.conv.push_back(state.coords);
  }
  return path;
}

struct StatePath {
  std::vector<double> times;
  std::vector<Point> states;
  std::vector<Point> control_values;  // at every grid time; the last repeats the final cell for open loop
  std::vector<double> picard_residuals;  // concatenated over blocks
  std::size_t max_sweeps = 0;            // largest sweep count of any block
  double contraction_factor = 0.0;       // largest residual ratio above the roundoff floor
};

struct PicardOptions {
  double tol = 1e-10;
  std::size_t max_sweeps = 50;
  /// Residual ratios are measured only while the earlier residual exceeds this floor.
  double ratio_floor = 1e-13;
};

/// Solves the mild equation along a given noise path with initial state x at noise.t0.
///
/// With W the stochastic convolution, Y = X - W solves
///   Y_s = e^{(s-t0)A} x + int_{t0}^s e^{(s-r)A} (F(Y_r + W_r) + a_r) dr,
/// discretised by the exponential integrator (left-endpoint F and a, exact
/// weights (1 - e^{-gamma_n dt}) / gamma_n). The map is iterated on whole
/// blocks of the grid with the noise frozen; a block is the whole interval when
/// [F]_Lip (T - t0) < 0.5, otherwise the longest run of cells keeping
/// [F]_Lip * length below 0.5.
inline StatePath solve_on_noise(const SpectralModel& model, const ProblemSpec& problem, const ControlInput& control,
                                std::span<const double> x, const NoisePath& noise, const PicardOptions& opts = {}) {
  const std::size_t dim = model.n_modes();
  const std::size_t cells = noise.cells();
  if (x.size() != dim) throw ParameterError("solve_state_path: initial point dimension mismatch");
  if (cells == 0) throw ParameterError("solve_state_path: empty time grid");
  if (!(opts.tol > 0.0)) throw ParameterError("solve_state_path: picard_tol must be positive");

  const auto* open_loop = std::get_if<OpenLoopControl>(&control);
  const auto* feedback = std::get_if<FeedbackPolicy>(&control);
  if (open_loop) {
    if (open_loop->values.size() != cells)
      throw ParameterError("open-loop control needs one value per cell");
    for (const auto& v : open_loop->values) {
      if (v.size() != dim) throw ParameterError("open-loop control dimension mismatch");
      if (norm(v) > problem.radius * (1.0 + 1e-12)) throw AdmissibilityError("open-loop control outside the ball");
    }
  }

  const double dt = noise.dt;
  const auto step_factor = semigroup_factor(model, dt);
  Point phi1(dim);
  for (std::size_t n = 0; n < dim; ++n) phi1[n] = -std::expm1(-model.gammas[n] * dt) / model.gammas[n];

  const double lip = problem.drift.lipschitz;
  const double total = dt * static_cast<double>(cells);
  std::size_t block_cells = cells;
  if (lip * total >= 0.5) {
    block_cells = static_cast<std::size_t>(std::floor(0.5 / (lip * dt) * (1.0 - 1e-12)));
    block_cells = std::clamp<std::size_t>(block_cells, 1, cells);
  }

  StatePath path;
  path.times.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) path.times[k] = noise.t0 + static_cast<double>(k) * dt;

  std::vector<Point> y(cells + 1, Point(dim)), y_new(cells + 1, Point(dim)), a(cells + 1, Point(dim, 0.0));
  std::copy(x.begin(), x.end(), y[0].begin());
  Point xk(dim), drive(dim), acc(dim);

  auto control_at = [&](std::size_t k, std::span<const double> state, std::span<double> out) {
    if (open_loop) {
      const auto& v = open_loop->values[std::min(k, cells - 1)];
      std::copy(v.begin(), v.end(), out.begin());
    } else {
      feedback->evaluate(path.times[k], state, out);
    }
  };

  for (std::size_t b = 0; b < cells; b += block_cells) {
    const std::size_t e = std::min(cells, b + block_cells);
    // Initial iterate: free evolution of Y_b.
    for (std::size_t k = b + 1; k <= e; ++k)
      for (std::size_t n = 0; n < dim; ++n) y[k][n] = step_factor[n] * y[k - 1][n];

    std::size_t sweeps = 0;
    double prev = -1.0;
    while (true) {
      std::fill(acc.begin(), acc.end(), 0.0);
      Point free = y[b];
      for (std::size_t k = b; k < e; ++k) {
        for (std::size_t n = 0; n < dim; ++n) xk[n] = y[k][n] + noise.conv[k][n];
        control_at(k, xk, a[k]);
        problem.drift.apply(xk, drive);
        for (std::size_t n = 0; n < dim; ++n) {
          acc[n] = step_factor[n] * acc[n] + phi1[n] * (drive[n] + a[k][n]);
          free[n] *= step_factor[n];
          y_new[k + 1][n] = free[n] + acc[n];
        }
      }
      double residual = 0.0;
      for (std::size_t k = b + 1; k <= e; ++k) {
        double d = 0.0;
        for (std::size_t n = 0; n < dim; ++n) d += (y_new[k][n] - y[k][n]) * (y_new[k][n] - y[k][n]);
        residual = std::max(residual, std::sqrt(d));
        y[k] = y_new[k];
      }
      for (std::size_t k = b + 1; k <= e; ++k)
        for (double v : y[k])
          if (!std::isfinite(v)) throw NonContractionError(lip * dt * static_cast<double>(e - b), "state became non-finite");
      ++sweeps;
      path.picard_residuals.push_back(residual);
      if (prev > opts.ratio_floor) path.contraction_factor = std::max(path.contraction_factor, residual / prev);
      prev = residual;
      if (residual < opts.tol) break;
      if (sweeps >= opts.max_sweeps)
        throw NonContractionError(lip * dt * static_cast<double>(e - b),
                                  "Picard iteration exceeded " + std::to_string(opts.max_sweeps) +
                                      " sweeps; [F]_Lip * block length = " +
                                      std::to_string(lip * dt * static_cast<double>(e - b)));
    }
    path.max_sweeps = std::max(path.max_sweeps, sweeps);
  }

  path.states.resize(cells + 1, Point(dim));
  path.control_values.resize(cells + 1, Point(dim));
  for (std::size_t k = 0; k <= cells; ++k) {
    for (std::size_t n = 0; n < dim; ++n) path.states[k][n] = y[k][n] + noise.conv[k][n];
    control_at(k, path.states[k], path.control_values[k]);
  }
  return path;
}

/// Number of cells for a step on [t0, T]; the step must divide T - t0 up to rounding.
inline std::size_t grid_cells(double t0, double horizon, double step) {
  if (!(t0 >= 0.0 && t0 < horizon)) throw ParameterError("t0 must lie in [0, T)");
  if (!(step > 0.0)) throw ParameterError("step must be positive");
  const double ratio = (horizon - t0) / step;
  const double cells = std::max(1.0, std::round(ratio));
  if (std::abs(ratio - cells) > 1e-6 * cells) throw ParameterError("step must divide T - t0");
  return static_cast<std::size_t>(cells);
}

/// X^{t0,x,a} on [t0, T] with noise drawn from `noise_rng` (advanced in place).
inline StatePath solve_state_path(const SpectralModel& model, const ProblemSpec& problem, const ControlInput& control,
                                  double t0, std::span<const double> x, double step, RngStream& noise_rng,
                                  double picard_tol, std::size_t picard_max) {
  const std::size_t cells = grid_cells(t0, problem.horizon, step);
  const double dt = (problem.horizon - t0) / static_cast<double>(cells);
  const NoisePath noise = generate_noise_path(model, t0, dt, cells, noise_rng);
  return solve_on_noise(model, problem, control, x, noise, PicardOptions{picard_tol, picard_max});
}

}  // namespace stablehjb
