#pragma once

// Cost functional J(t0, x, a) by Monte Carlo over state paths, feedback
// extraction from an HJB solution, and the verification identity
//   u(T - t0, x) = J(t0, x, a) + E int_{t0}^T [ H_inf(Du) - |a|^2 / 2 - <Du, a> ] ds.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/hjb.hpp"
#include "stablehjb/parallel.hpp"
#include "stablehjb/policy.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/state.hpp"

namespace stablehjb {

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double clipped_fraction = 0.0;  // share of visited states outside the policy's grid box
};

struct PathOptions {
  unsigned workers = 1;
  double picard_tol = 1e-10;
  std::size_t picard_max = 50;
};

/// a(s, x) = argmin_control(Du(T - s, x), R), Du interpolated in space on the
/// nearest time level.
inline FeedbackPolicy extract_feedback(const HJBSolution& solution) {
  if (!solution.converged) throw ParameterError("extract_feedback needs a converged solution");
  auto u = std::make_shared<const GridValueFunction>(solution.grid_fn);
  const double horizon = solution.horizon;
  const double radius = solution.radius;
  return FeedbackPolicy(
      PolicyKind::from_solution, radius,
      [u, horizon, radius](double s, std::span<const double> x, std::span<double> a) {
        if (!(s >= -1e-12 && s <= horizon + 1e-12)) throw DomainError("feedback queried at time outside [0, T]");
        const std::size_t level = u->nearest_level(std::clamp(horizon - s, 0.0, horizon));
        std::array<double, TensorGrid::kMaxDim> p{};
        std::span<double> ps(p.data(), x.size());
        u->gradient_at(level, x, ps);
        const Point opt = argmin_control(ps, radius);
        std::copy(opt.begin(), opt.end(), a.begin());
      },
      "feedback", solution.grid_fn.grid.half_width());
}

namespace detail {

struct PathTotals {
  double cost = 0.0;
  double bracket = 0.0;
  std::size_t clipped = 0;
  std::size_t points = 0;
};

inline double trapezoid(const std::vector<double>& times, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) s += 0.5 * (times[k + 1] - times[k]) * (f[k] + f[k + 1]);
  return s;
}

/// Runs n_paths state paths with noise from rng.substream(p) and integrates
/// cost (and, when `u` is given, the bracket term) along each.
inline std::vector<PathTotals> run_paths(const SpectralModel& model, const ProblemSpec& problem,
                                         const FeedbackPolicy& policy, double t0, std::span<const double> x,
                                         double step, std::size_t n_paths, const RngStream& rng,
                                         const PathOptions& opts, const GridValueFunction* u,
                                         std::optional<double> box) {
  if (n_paths < 1) throw ParameterError("n_paths must be at least 1");
  const std::size_t cells = grid_cells(t0, problem.horizon, step);
  const double dt = (problem.horizon - t0) / static_cast<double>(cells);
  const std::size_t dim = model.n_modes();
  if (x.size() != dim) throw ParameterError("initial point dimension mismatch");
  const ControlInput control = policy;
  const Point x0(x.begin(), x.end());
  std::vector<PathTotals> totals(n_paths);
  parallel_for(n_paths, opts.workers, [&](std::size_t p) {
    StatePath path;
    try {
      RngStream noise_rng = rng.substream(p);
      const NoisePath noise = generate_noise_path(model, t0, dt, cells, noise_rng);
      path = solve_on_noise(model, problem, control, x0, noise, PicardOptions{opts.picard_tol, opts.picard_max});
    } catch (const Error& e) {
      throw PathError(p, e.what());
    }
    PathTotals& out = totals[p];
    std::vector<double> running(cells + 1), bracket(cells + 1);
    Point grad(dim);
    for (std::size_t k = 0; k <= cells; ++k) {
      const auto& xs = path.states[k];
      const auto& as = path.control_values[k];
      running[k] = problem.running_cost(xs) + 0.5 * dot(as, as);
      if (u) {
        const std::size_t level = u->nearest_level(std::clamp(problem.horizon - path.times[k], 0.0, problem.horizon));
        u->gradient_at(level, xs, grad);
        bracket[k] = hamiltonian_inf(grad, problem.radius) - 0.5 * dot(as, as) - dot(grad, as);
      }
      if (box) {
        const double b = *box;
        bool outside = false;
        for (double v : xs) outside = outside || v < -b || v > b;
        out.clipped += outside ? 1 : 0;
      }
      ++out.points;
    }
    out.cost = trapezoid(path.times, running) + problem.terminal_cost(path.states.back());
    if (u) out.bracket = trapezoid(path.times, bracket);
    if (!std::isfinite(out.cost) || !std::isfinite(out.bracket)) throw PathError(p, "non-finite path cost");
  });
  return totals;
}

inline CostEstimate summarize_cost(const std::vector<PathTotals>& totals) {
  std::vector<double> costs(totals.size());
  std::size_t clipped = 0, points = 0;
  for (std::size_t p = 0; p < totals.size(); ++p) {
    costs[p] = totals[p].cost;
    clipped += totals[p].clipped;
    points += totals[p].points;
  }
  const SampleStats s = sample_stats(costs);
  return CostEstimate{s.mean, s.std_error, totals.size(),
                      points ? static_cast<double>(clipped) / static_cast<double>(points) : 0.0};
}

}  // namespace detail

/// Mean over n_paths paths of the trapezoid integral of g(X_s) + |a_s|^2 / 2 plus h(X_T).
/// Path p draws its noise from rng.substream(p), so two calls with the same rng
/// use common random numbers.
inline CostEstimate cost_of_policy(const SpectralModel& model, const ProblemSpec& problem,
                                   const FeedbackPolicy& policy, double t0, std::span<const double> x, double step,
                                   std::size_t n_paths, const RngStream& rng, const PathOptions& opts = {}) {
  return detail::summarize_cost(detail::run_paths(model, problem, policy, t0, x, step, n_paths, rng, opts, nullptr,
                                                     policy.box()));
}

/// Tolerance for comparing u(T - t0, x) with a cost estimate.
struct ToleranceBudget {
  double mc = 0.0;        // 3 joint standard errors
  double clipping = 0.0;  // clipped fraction times sup|h| + T sup|g|
  double grid = 0.0;      // max_k sup|Du(t_k)| times the grid spacing
  double total() const noexcept { return mc + clipping + grid; }
};

struct FundamentalResidual {
  double lhs = 0.0;               // u(T - t0, x)
  CostEstimate rhs;               // J(t0, x, a)
  double bracket_mean = 0.0;
  double bracket_std_error = 0.0;
  double lhs_std_error = 0.0;     // Monte Carlo error of the HJB solution
  ToleranceBudget budget;
};

/// sup|h| + T sup|g| when both bounds are declared, else +inf.
inline double data_bound(const ProblemSpec& problem) {
  if (!problem.terminal_cost.bound || !problem.running_cost.bound) return std::numeric_limits<double>::infinity();
  return *problem.terminal_cost.bound + problem.horizon * *problem.running_cost.bound;
}

inline double grid_lipschitz_budget(const HJBSolution& solution) {
  const auto& u = solution.grid_fn;
  double lip = 0.0;
  for (std::size_t k = 0; k < u.levels(); ++k) lip = std::max(lip, u.max_gradient_norm(k));
  return lip * u.grid.spacing();
}

inline ToleranceBudget tolerance_budget(const HJBSolution& solution, const ProblemSpec& problem,
                                        double cost_std_error, double clipped_fraction) {
  ToleranceBudget b;
  b.mc = 3.0 * std::hypot(cost_std_error, solution.max_mc_std_error);
  b.clipping = clipped_fraction > 0.0 ? clipped_fraction * data_bound(problem) : 0.0;
  b.grid = grid_lipschitz_budget(solution);
  return b;
}

/// lhs, rhs and bracket term along the same paths; the bracket uses the same
/// snapped and interpolated Du as extract_feedback.
inline FundamentalResidual fundamental_residual(const SpectralModel& model, const ProblemSpec& problem,
                                                const HJBSolution& solution, const FeedbackPolicy& policy, double t0,
                                                std::span<const double> x, double step, std::size_t n_paths,
                                                const RngStream& rng, const PathOptions& opts = {}) {
  if (!solution.converged) throw ParameterError("fundamental_residual needs a converged solution");
  if (std::abs(solution.horizon - problem.horizon) > 1e-12) throw ParameterError("solution horizon differs from T");
  const auto& u = solution.grid_fn;
  // Visits outside the solution box are counted for every policy.
  const auto totals =
      detail::run_paths(model, problem, policy, t0, x, step, n_paths, rng, opts, &u, u.grid.half_width());
  FundamentalResidual r;
  r.lhs = u.value_at(u.nearest_level(problem.horizon - t0), x);
  r.rhs = detail::summarize_cost(totals);
  std::vector<double> brackets(totals.size());
  for (std::size_t p = 0; p < totals.size(); ++p) brackets[p] = totals[p].bracket;
  const SampleStats s = sample_stats(brackets);
  r.bracket_mean = s.mean;
  r.bracket_std_error = s.std_error;
  r.lhs_std_error = solution.max_mc_std_error;
  r.budget = tolerance_budget(solution, problem, r.rhs.std_error, r.rhs.clipped_fraction);
  return r;
}

struct BruteForceResult {
  CostEstimate best_cost;
  std::size_t best_index = 0;
  std::vector<CostEstimate> costs;  // one per family member
};

/// Evaluates every policy with the same noise paths; ties go to the lowest index.
inline BruteForceResult brute_force_value(const SpectralModel& model, const ProblemSpec& problem, double t0,
                                          std::span<const double> x, const std::vector<FeedbackPolicy>& family,
                                          double step, std::size_t n_paths, const RngStream& rng,
                                          const PathOptions& opts = {}) {
  if (family.empty()) throw ParameterError("policy family must be nonempty");
  BruteForceResult r;
  for (const auto& policy : family) r.costs.push_back(cost_of_policy(model, problem, policy, t0, x, step, n_paths, rng, opts));
  for (std::size_t i = 1; i < r.costs.size(); ++i)
    if (r.costs[i].mean < r.costs[r.best_index].mean) r.best_index = i;
  r.best_cost = r.costs[r.best_index];
  return r;
}

}  // namespace stablehjb
