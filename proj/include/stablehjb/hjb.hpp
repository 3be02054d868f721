#pragma once

// Mild HJB equation
//   u(t,x) = P_t h(x) + int_0^t P_{t-s}[ H(., Du(s,.)) ](x) ds
// on a tensor grid, solved by Picard iteration with frozen Monte Carlo draws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/ou.hpp"
#include "stablehjb/parallel.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/spectrum.hpp"
#include "stablehjb/state.hpp"

namespace stablehjb {

/// inf over |lambda| <= R of <lambda, p> + |lambda|^2 / 2.
inline double hamiltonian_inf(std::span<const double> p, double radius) {
  const double n = norm(p);
  return n <= radius ? -0.5 * n * n : -radius * n + 0.5 * radius * radius;
}

/// The minimiser of <lambda, p> + |lambda|^2 / 2 over B_R: -p, projected onto the ball.
inline Point argmin_control(std::span<const double> p, double radius) {
  const double n = norm(p);
  Point a(p.size());
  const double scale = n <= radius ? -1.0 : -radius / n;
  for (std::size_t i = 0; i < p.size(); ++i) a[i] = scale * p[i];
  return a;
}

/// H(x, p) = hamiltonian_inf(p, R) + <F(x), p> + g(x).
inline double hamiltonian_full(std::span<const double> x, std::span<const double> p, const ProblemSpec& problem) {
  Point f(x.size());
  problem.drift.apply(x, f);
  return hamiltonian_inf(p, problem.radius) + dot(f, p) + problem.running_cost(x);
}

/// Uniform tensor grid on [-b, b]^dim with m nodes per axis; axis 0 varies fastest.
class TensorGrid {
 public:
  static constexpr std::size_t kMaxDim = 3;

  TensorGrid() = default;
  TensorGrid(std::size_t dim, double half_width, std::size_t nodes_per_axis)
      : dim_(dim), m_(nodes_per_axis), b_(half_width) {
    if (dim < 1 || dim > kMaxDim) throw ParameterError("grid dimension must lie in [1, 3]");
    if (nodes_per_axis < 3 || nodes_per_axis % 2 == 0) throw ParameterError("nodes_per_axis must be odd and >= 3");
    if (!(half_width > 0.0)) throw ParameterError("box half-width must be positive");
    h_ = 2.0 * b_ / static_cast<double>(m_ - 1);
    size_ = 1;
    for (std::size_t d = 0; d < dim_; ++d) size_ *= m_;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nodes_per_axis() const noexcept { return m_; }
  std::size_t size() const noexcept { return size_; }
  double half_width() const noexcept { return b_; }
  double spacing() const noexcept { return h_; }
  double axis_coord(std::size_t i) const noexcept { return -b_ + h_ * static_cast<double>(i); }

  void node(std::size_t flat, std::span<double> out) const {
    for (std::size_t d = 0; d < dim_; ++d) {
      out[d] = axis_coord(flat % m_);
      flat /= m_;
    }
  }

  bool outside(std::span<const double> x) const {
    for (std::size_t d = 0; d < dim_; ++d)
      if (x[d] < -b_ || x[d] > b_) return true;
    return false;
  }

  /// Multilinear interpolation of `ncomp` interleaved components, with constant
  /// continuation outside the box. Exact at nodes.
  void interpolate(std::span<const double> data, std::size_t ncomp, std::span<const double> x,
                   std::span<double> out) const {
    std::array<std::size_t, kMaxDim> base{};
    std::array<double, kMaxDim> w{};
    for (std::size_t d = 0; d < dim_; ++d) {
      double pos = (std::clamp(x[d], -b_, b_) + b_) / h_;
      const double r = std::round(pos);
      if (std::abs(pos - r) < 1e-10) pos = r;
      std::size_t i = static_cast<std::size_t>(pos);
      if (i >= m_ - 1) i = m_ - 2;
      base[d] = i;
      w[d] = pos - static_cast<double>(i);
    }
    for (std::size_t c = 0; c < ncomp; ++c) out[c] = 0.0;
    const std::size_t corners = std::size_t{1} << dim_;
    for (std::size_t corner = 0; corner < corners; ++corner) {
      double weight = 1.0;
      std::size_t flat = 0, stride = 1;
      for (std::size_t d = 0; d < dim_; ++d) {
        const bool hi = (corner >> d) & 1U;
        weight *= hi ? w[d] : 1.0 - w[d];
        flat += (base[d] + (hi ? 1 : 0)) * stride;
        stride *= m_;
      }
      if (weight == 0.0) continue;
      for (std::size_t c = 0; c < ncomp; ++c) out[c] += weight * data[flat * ncomp + c];
    }
  }

  /// Central differences inside, one-sided at the faces; output interleaved (node, axis).
  void gradient(std::span<const double> values, std::span<double> grads) const {
    for (std::size_t flat = 0; flat < size_; ++flat) {
      std::size_t rem = flat, stride = 1;
      for (std::size_t d = 0; d < dim_; ++d) {
        const std::size_t i = rem % m_;
        rem /= m_;
        double g;
        if (i == 0)
          g = (values[flat + stride] - values[flat]) / h_;
        else if (i == m_ - 1)
          g = (values[flat] - values[flat - stride]) / h_;
        else
          g = (values[flat + stride] - values[flat - stride]) / (2.0 * h_);
        grads[flat * dim_ + d] = g;
        stride *= m_;
      }
    }
  }

 private:
  std::size_t dim_ = 0;
  std::size_t m_ = 0;
  std::size_t size_ = 0;
  double b_ = 0.0;
  double h_ = 0.0;
};

/// Values and spatial gradients of u on a uniform time grid t_k = k T / M.
/// Level 0 holds h at the nodes; its gradient is the difference quotient of h.
struct GridValueFunction {
  std::vector<double> times;
  TensorGrid grid;
  std::vector<std::vector<double>> values;     // [level][node]
  std::vector<std::vector<double>> gradients;  // [level][node * dim + axis]
  double gamma_smooth = 0.7;
  double gradient_budget = 0.0;  // max_{k>=1} t_k^gamma max_node |Du(t_k)|

  std::size_t levels() const noexcept { return times.size(); }

  std::size_t nearest_level(double t) const {
    if (!(t >= -1e-12 && t <= times.back() * (1.0 + 1e-12) + 1e-12))
      throw DomainError("time " + std::to_string(t) + " outside [0, T]");
    const double dt = times.back() / static_cast<double>(times.size() - 1);
    const auto k = static_cast<std::size_t>(std::llround(std::clamp(t, 0.0, times.back()) / dt));
    return std::min(k, times.size() - 1);
  }

  double value_at(std::size_t level, std::span<const double> x) const {
    double v;
    grid.interpolate(values[level], 1, x, {&v, 1});
    return v;
  }

  void gradient_at(std::size_t level, std::span<const double> x, std::span<double> out) const {
    grid.interpolate(gradients[level], grid.dim(), x, out);
  }

  double max_gradient_norm(std::size_t level) const {
    double best = 0.0;
    const std::size_t dim = grid.dim();
    for (std::size_t i = 0; i < grid.size(); ++i)
      best = std::max(best, norm(std::span<const double>(gradients[level]).subspan(i * dim, dim)));
    return best;
  }

  double max_abs_value(std::size_t level) const {
    double best = 0.0;
    for (double v : values[level]) best = std::max(best, std::abs(v));
    return best;
  }
};

struct HjbGridSpec {
  double box = 4.0;           // half-width b
  std::size_t nodes = 65;     // per axis, odd
  std::size_t levels = 16;    // M time cells
};

struct McSpec {
  std::size_t n_mc = 20000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct HjbOptions {
  double tol = 1e-4;
  std::size_t max_iter = 25;
  /// Redraw the Monte Carlo samples every sweep (validation runs only; the map is then random).
  bool fresh_noise = false;
};

inline constexpr const char* kTimeQuadratureRule = "trapezoid-on-levels";

struct HJBSolution {
  GridValueFunction grid_fn;
  std::vector<double> residual_history;
  double c1gamma_norm = 0.0;
  McSpec mc;
  std::string quadrature = kTimeQuadratureRule;
  bool converged = false;
  double radius = 1.0;
  double horizon = 1.0;
  double clipped_fraction = 0.0;    // share of sampled points outside the box
  double max_mc_std_error = 0.0;    // largest per-node standard error of the final map
  double contraction_factor = 0.0;  // largest observed residual ratio
  double analytic_contraction_factor = 0.0;  // T^(1-g)/(1-g) L (1 + 4^g C) with C = 1
};

/// Trapezoid weights on t_0..t_k, uniform spacing dt.
inline std::vector<double> level_weights(std::size_t k, double dt) {
  std::vector<double> w(k + 1, dt);
  if (k == 0) return {0.0};
  w.front() = w.back() = 0.5 * dt;
  return w;
}

namespace detail {

/// Frozen Monte Carlo data of the fixed-point map: draws of Z^0_{A, t_k - t_j} for j < k.
struct HjbDraws {
  std::vector<std::vector<MarginalSamples>> samples;  // [k][j]
  std::vector<std::vector<std::vector<double>>> factors;  // [k][j] -> e^{(t_k - t_j)A}

  static HjbDraws make(const SpectralModel& model, const std::vector<double>& times, std::size_t n_mc,
                       const RngStream& root, unsigned workers) {
    HjbDraws d;
    const std::size_t levels = times.size();
    d.samples.resize(levels);
    d.factors.resize(levels);
    for (std::size_t k = 1; k < levels; ++k) {
      for (std::size_t j = 0; j < k; ++j) {
        const double lag = times[k] - times[j];
        d.samples[k].push_back(draw_marginals(model, lag, n_mc, root.substream(k).substream(j), workers));
        d.factors[k].push_back(semigroup_factor(model, lag));
      }
    }
    return d;
  }
};

struct NodeTerms {
  double mean = 0.0;
  double variance = 0.0;  // variance of the estimator of `mean`
};

/// One application of the fixed-point map at (level k >= 1, node x).
/// With `with_data` the terms P_t h and int P_{t-s} g are included; otherwise
/// only the gradient-dependent part H_inf(p) + <F, p> is summed.
inline NodeTerms apply_map_at(const SpectralModel& model, const ProblemSpec& problem, const GridValueFunction& u,
                              const HjbDraws& draws, std::size_t k, std::span<const double> x, bool with_data) {
  const std::size_t dim = model.n_modes();
  const double dt = u.times[1] - u.times[0];
  const auto w = level_weights(k, dt);
  std::array<double, TensorGrid::kMaxDim> y{}, p{}, f{};
  std::span<double> ys(y.data(), dim), ps(p.data(), dim), fs(f.data(), dim);

  auto integrand = [&](std::size_t j, std::span<const double> at) {
    u.gradient_at(j, at, ps);
    problem.drift.apply(at, fs);
    double v = hamiltonian_inf(ps, problem.radius) + dot(fs, ps);
    if (with_data) v += problem.running_cost(at);
    return v;
  };

  NodeTerms out;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& s = draws.samples[k][j];
    const auto& fac = draws.factors[k][j];
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < s.count; ++i) {
      const auto xi = s[i];
      for (std::size_t n = 0; n < dim; ++n) y[n] = fac[n] * x[n] + xi[n];
      double v = w[j] * integrand(j, ys);
      if (with_data && j == 0) v += problem.terminal_cost(ys);
      if (!std::isfinite(v)) throw PoisonedEstimateError(i, "non-finite Hamiltonian in fixed-point map");
      sum += v;
      sumsq += v * v;
    }
    const double n = static_cast<double>(s.count);
    const double mean = sum / n;
    out.mean += mean;
    if (s.count > 1) out.variance += std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0)) / n;
  }
  // Lag zero: P_0 is the identity, no sampling.
  out.mean += w[k] * integrand(k, x);
  return out;
}

}  // namespace detail

inline double c1gamma_norm(const GridValueFunction& u) {
  double sup_u = 0.0, sup_grad = 0.0;
  for (std::size_t k = 0; k < u.levels(); ++k) {
    sup_u = std::max(sup_u, u.max_abs_value(k));
    if (k >= 1) sup_grad = std::max(sup_grad, std::pow(u.times[k], u.gamma_smooth) * u.max_gradient_norm(k));
  }
  return sup_u + sup_grad;
}

/// Picard iteration u^{m+1} = S(u^m) from u^0(t_k) = P_{t_k} h.
///
/// S(u)(t_k, x) = P_{t_k} h(x) + sum_j w_j P_{t_k - t_j}[ H(., Du(t_j, .)) ](x)
/// with trapezoid weights on the time levels. P is estimated from draws seeded
/// by (seed, k, j) and frozen across sweeps, so S is a deterministic map on grid
/// functions. Du(t_j, .) is read by multilinear interpolation with constant
/// continuation outside the box, and recomputed from the values by central
/// differences after each sweep.
inline HJBSolution picard_solve(const SpectralModel& model, const ProblemSpec& problem, const HjbGridSpec& grid_spec,
                                const McSpec& mc, const HjbOptions& opts) {
  validate_model(model);
  const std::size_t dim = model.n_modes();
  if (dim > TensorGrid::kMaxDim) throw ParameterError("the HJB grid solver supports at most 3 modes");
  if (grid_spec.levels < 1) throw ParameterError("at least one time level is required");
  if (!(opts.tol > 0.0)) throw ParameterError("tol must be positive");
  if (mc.n_mc < 2) throw ParameterError("n_mc must be at least 2");

  HJBSolution sol;
  sol.mc = mc;
  sol.radius = problem.radius;
  sol.horizon = problem.horizon;
  const double gamma = model.gamma_smooth;
  sol.analytic_contraction_factor = std::pow(problem.horizon, 1.0 - gamma) / (1.0 - gamma) *
                                    problem.hamiltonian_lipschitz() * (1.0 + std::pow(4.0, gamma));

  GridValueFunction& u = sol.grid_fn;
  u.grid = TensorGrid(dim, grid_spec.box, grid_spec.nodes);
  u.gamma_smooth = gamma;
  const std::size_t levels = grid_spec.levels + 1;
  const double dt = problem.horizon / static_cast<double>(grid_spec.levels);
  u.times.resize(levels);
  for (std::size_t k = 0; k < levels; ++k) u.times[k] = dt * static_cast<double>(k);
  const std::size_t n_nodes = u.grid.size();
  u.values.assign(levels, std::vector<double>(n_nodes));
  u.gradients.assign(levels, std::vector<double>(n_nodes * dim));

  std::vector<double> nodes(n_nodes * dim);
  for (std::size_t i = 0; i < n_nodes; ++i) u.grid.node(i, std::span<double>(nodes).subspan(i * dim, dim));
  auto node = [&](std::size_t i) { return std::span<const double>(nodes).subspan(i * dim, dim); };

  const RngStream root(mc.seed);
  detail::HjbDraws draws = detail::HjbDraws::make(model, u.times, mc.n_mc, root, mc.workers);

  // Clipping diagnostic over every sampled point of the map.
  {
    std::uint64_t clipped = 0, total = 0;
    std::array<double, TensorGrid::kMaxDim> y{};
    for (std::size_t k = 1; k < levels; ++k)
      for (std::size_t j = 0; j < k; ++j) {
        const auto& s = draws.samples[k][j];
        const auto& fac = draws.factors[k][j];
        for (std::size_t i = 0; i < n_nodes; ++i)
          for (std::size_t q = 0; q < s.count; ++q) {
            for (std::size_t n = 0; n < dim; ++n) y[n] = fac[n] * node(i)[n] + s[q][n];
            clipped += u.grid.outside({y.data(), dim}) ? 1 : 0;
            ++total;
          }
      }
    sol.clipped_fraction = total ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
  }

  // Level 0 is h; u^0 at later levels is P_{t_k} h, sharing the (k, 0) draws.
  for (std::size_t i = 0; i < n_nodes; ++i) u.values[0][i] = problem.terminal_cost(node(i));
  const std::size_t work = (levels - 1) * n_nodes;
  parallel_for(work, mc.workers, [&](std::size_t q) {
    const std::size_t k = 1 + q / n_nodes, i = q % n_nodes;
    const auto& s = draws.samples[k][0];
    const auto& fac = draws.factors[k][0];
    std::array<double, TensorGrid::kMaxDim> y{};
    double sum = 0.0;
    for (std::size_t r = 0; r < s.count; ++r) {
      for (std::size_t n = 0; n < dim; ++n) y[n] = fac[n] * node(i)[n] + s[r][n];
      const double v = problem.terminal_cost({y.data(), dim});
      if (!std::isfinite(v)) throw PoisonedEstimateError(r, "non-finite terminal cost");
      sum += v;
    }
    u.values[k][i] = sum / static_cast<double>(s.count);
  });
  for (std::size_t k = 0; k < levels; ++k) u.grid.gradient(u.values[k], u.gradients[k]);

  // The data terms P_{t_k} h + int P g do not depend on u.
  std::vector<std::vector<double>> data_part(levels, std::vector<double>(n_nodes, 0.0));
  auto compute_data_part = [&] {
    parallel_for(work, mc.workers, [&](std::size_t q) {
      const std::size_t k = 1 + q / n_nodes, i = q % n_nodes;
      const auto& w = level_weights(k, dt);
      double acc = w[k] * problem.running_cost(node(i));
      std::array<double, TensorGrid::kMaxDim> y{};
      for (std::size_t j = 0; j < k; ++j) {
        const auto& s = draws.samples[k][j];
        const auto& fac = draws.factors[k][j];
        double sum = 0.0;
        for (std::size_t r = 0; r < s.count; ++r) {
          for (std::size_t n = 0; n < dim; ++n) y[n] = fac[n] * node(i)[n] + s[r][n];
          double v = w[j] * problem.running_cost({y.data(), dim});
          if (j == 0) v += problem.terminal_cost({y.data(), dim});
          sum += v;
        }
        acc += sum / static_cast<double>(s.count);
      }
      data_part[k][i] = acc;
    });
  };
  compute_data_part();

  std::vector<std::vector<double>> next(levels, std::vector<double>(n_nodes));
  next[0] = u.values[0];
  std::size_t non_decreasing = 0;
  for (std::size_t sweep = 0; sweep < opts.max_iter; ++sweep) {
    if (opts.fresh_noise && sweep > 0) {
      draws = detail::HjbDraws::make(model, u.times, mc.n_mc, root.substream(1000003 + sweep), mc.workers);
      compute_data_part();
    }
    parallel_for(work, mc.workers, [&](std::size_t q) {
      const std::size_t k = 1 + q / n_nodes, i = q % n_nodes;
      next[k][i] = data_part[k][i] + detail::apply_map_at(model, problem, u, draws, k, node(i), false).mean;
    });
    double residual = 0.0;
    for (std::size_t k = 1; k < levels; ++k)
      for (std::size_t i = 0; i < n_nodes; ++i) residual = std::max(residual, std::abs(next[k][i] - u.values[k][i]));
    for (std::size_t k = 1; k < levels; ++k) {
      u.values[k] = next[k];
      u.grid.gradient(u.values[k], u.gradients[k]);
    }
    const auto& hist = sol.residual_history;
    if (!hist.empty()) {
      if (hist.back() > 0.0) sol.contraction_factor = std::max(sol.contraction_factor, residual / hist.back());
      non_decreasing = residual >= hist.back() ? non_decreasing + 1 : 0;
    }
    sol.residual_history.push_back(residual);
    if (residual < opts.tol) {
      sol.converged = true;
      break;
    }
    if (non_decreasing >= 3)
      throw DivergenceError(residual / hist[hist.size() - 2], sol.analytic_contraction_factor,
                            "fixed-point residual did not decrease for 3 consecutive sweeps (empirical factor " +
                                std::to_string(residual / hist[hist.size() - 2]) + ", analytic factor with C = 1: " +
                                std::to_string(sol.analytic_contraction_factor) + ")");
  }

  // Standard error of the final map, all terms included.
  std::vector<double> se(work, 0.0);
  parallel_for(work, mc.workers, [&](std::size_t q) {
    const std::size_t k = 1 + q / n_nodes, i = q % n_nodes;
    se[q] = std::sqrt(detail::apply_map_at(model, problem, u, draws, k, node(i), true).variance);
  });
  for (double v : se) sol.max_mc_std_error = std::max(sol.max_mc_std_error, v);

  u.gradient_budget = 0.0;
  for (std::size_t k = 1; k < levels; ++k)
    u.gradient_budget = std::max(u.gradient_budget, std::pow(u.times[k], gamma) * u.max_gradient_norm(k));
  sol.c1gamma_norm = c1gamma_norm(u);
  return sol;
}

/// max over node pairs of |Du(t_k, x) - Du(t_k, y)| / |x - y|^theta, at most 1e5 pairs
/// (a fixed pseudo-random subsample beyond that).
inline double holder_seminorm(const HJBSolution& solution, std::size_t level, double theta) {
  const double gamma = solution.grid_fn.gamma_smooth;
  if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("theta must lie in (0, 1)");
  if (!(gamma + theta * gamma < 1.0))
    throw ParameterError("Hoelder exponent requires gamma + theta * gamma < 1, got " +
                         std::to_string(gamma + theta * gamma));
  const auto& u = solution.grid_fn;
  if (level < 1 || level >= u.levels()) throw ParameterError("Hoelder level must lie in [1, M]");
  if (!solution.converged) throw ParameterError("Hoelder seminorm needs a converged solution");

  const std::size_t dim = u.grid.dim();
  const std::size_t n = u.grid.size();
  const auto& g = u.gradients[level];
  Point xi(dim), xj(dim);
  auto ratio = [&](std::size_t a, std::size_t b) {
    u.grid.node(a, xi);
    u.grid.node(b, xj);
    double dg = 0.0, dx = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      dg += (g[a * dim + d] - g[b * dim + d]) * (g[a * dim + d] - g[b * dim + d]);
      dx += (xi[d] - xj[d]) * (xi[d] - xj[d]);
    }
    return std::sqrt(dg) / std::pow(std::sqrt(dx), theta);
  };
  double best = 0.0;
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= 100000) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) best = std::max(best, ratio(a, b));
  } else {
    RngStream rng(0x5EED0001ULL, level);
    for (std::size_t c = 0; c < 100000; ++c) {
      const std::size_t a = rng.next_u64() % n;
      std::size_t b = rng.next_u64() % (n - 1);
      if (b >= a) ++b;
      best = std::max(best, ratio(a, b));
    }
  }
  return best;
}

}  // namespace stablehjb
