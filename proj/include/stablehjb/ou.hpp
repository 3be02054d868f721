#pragma once

// Ornstein-Uhlenbeck process dZ = A Z dt + dZ_t driven by the truncated
// cylindrical stable noise: exact marginals, the transition semigroup P_t by
// Monte Carlo, derivative estimators and the generator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/parallel.hpp"
#include "stablehjb/quadrature.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/spectrum.hpp"
#include "stablehjb/stable.hpp"

namespace stablehjb {

using Point = std::vector<double>;

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Real function on R^N with an optional analytic gradient.
struct TestFunction {
  std::function<double(std::span<const double>)> eval;
  std::function<void(std::span<const double>, std::span<double>)> grad;
  std::vector<std::size_t> active;  // coordinates the function depends on; empty = all
  std::optional<double> bound;      // sup norm, when known

  bool has_grad() const noexcept { return static_cast<bool>(grad); }
  bool is_cylindrical() const noexcept { return !active.empty(); }
  double operator()(std::span<const double> x) const { return eval(x); }
};

/// True when the analytic gradient matches central differences (step 1e-4,
/// relative tolerance 1e-5) at `n_probes` uniform points of [-box, box]^dim.
inline bool gradient_consistent(const TestFunction& phi, std::size_t dim, RngStream rng,
                                std::size_t n_probes = 32, double box = 3.0) {
  if (!phi.has_grad()) return false;
  Point x(dim), xp(dim), g(dim);
  for (std::size_t p = 0; p < n_probes; ++p) {
    for (auto& v : x) v = box * (2.0 * rng.uniform_open() - 1.0);
    phi.grad(x, g);
    for (std::size_t n = 0; n < dim; ++n) {
      const double h = 1e-4;
      xp = x;
      xp[n] += h;
      const double up = phi(xp);
      xp[n] -= 2.0 * h;
      const double dn = phi(xp);
      const double fd = (up - dn) / (2.0 * h);
      if (std::abs(fd - g[n]) > 1e-5 * std::max(1.0, std::abs(g[n]))) return false;
    }
  }
  return true;
}

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Coordinates of Z^0_{A,time} in the eigenbasis.
struct ConvolutionState {
  double time = 0.0;
  Point coords;
};

inline ConvolutionState zero_convolution(const SpectralModel& model, double time = 0.0) {
  return ConvolutionState{time, Point(model.n_modes(), 0.0)};
}

/// Per-mode stable scales of the stochastic convolution over an interval of length t.
inline std::vector<double> marginal_scales(const SpectralModel& model, double t) {
  std::vector<double> s(model.n_modes());
  for (std::size_t n = 0; n < s.size(); ++n) s[n] = kernel_scale(model.gammas[n], model.betas[n], model.alpha, t);
  return s;
}

/// One exact draw of Z^0_{A,t}.
inline Point sample_marginal(const SpectralModel& model, double t, RngStream& rng) {
  if (!(t > 0.0)) throw ParameterError("sample_marginal: t must be positive");
  const auto scales = marginal_scales(model, t);
  Point out(scales.size());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = scales[n] * sample_standard(model.alpha, rng);
  return out;
}

/// Exact recursion Z_{t+dt} = e^{dt A} Z_t + independent increment.
inline ConvolutionState advance_convolution(const ConvolutionState& state, const SpectralModel& model, double dt,
                                            RngStream& rng) {
  if (!(dt > 0.0)) throw ParameterError("advance_convolution: dt must be positive");
  if (state.coords.size() != model.n_modes()) throw ParameterError("advance_convolution: state dimension mismatch");
  const auto factor = semigroup_factor(model, dt);
  const auto scales = marginal_scales(model, dt);
  ConvolutionState next{state.time + dt, Point(state.coords.size())};
  for (std::size_t n = 0; n < next.coords.size(); ++n)
    next.coords[n] = factor[n] * state.coords[n] + scales[n] * sample_standard(model.alpha, rng);
  return next;
}

/// A batch of marginal draws stored row-major (count x dim).
struct MarginalSamples {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<double> data;

  std::span<const double> operator[](std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// `count` draws of Z^0_{A,t}; chunk c uses rng.substream(c).
inline MarginalSamples draw_marginals(const SpectralModel& model, double t, std::size_t count, const RngStream& rng,
                                      unsigned workers = 1) {
  if (!(t > 0.0)) throw ParameterError("draw_marginals: t must be positive");
  const auto scales = marginal_scales(model, t);
  MarginalSamples s{model.n_modes(), count, std::vector<double>(count * model.n_modes())};
  parallel_for(chunk_count(count), workers, [&](std::size_t c) {
    RngStream sub = rng.substream(c);
    const std::size_t end = std::min(count, (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < end; ++i)
      for (std::size_t n = 0; n < s.dim; ++n) s.data[i * s.dim + n] = scales[n] * sample_standard(model.alpha, sub);
  });
  return s;
}

namespace detail {

/// Evaluates value(i) for every sample and checks finiteness.
template <class Fn>
std::vector<double> per_sample(std::size_t count, unsigned workers, Fn&& value, const char* what) {
  std::vector<double> out(count);
  parallel_for(chunk_count(count), workers, [&](std::size_t c) {
    const std::size_t end = std::min(count, (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < end; ++i) {
      out[i] = value(i);
      if (!std::isfinite(out[i])) throw PoisonedEstimateError(i, what);
    }
  });
  return out;
}

inline void shifted(std::span<const double> factor, std::span<const double> x, std::span<const double> xi,
                    std::span<double> out) {
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = factor[n] * x[n] + xi[n];
}

}  // namespace detail

/// P_t phi(x) from a given batch of marginal draws at time t.
inline Estimate semigroup_apply(const SpectralModel& model, const TestFunction& phi, double t, std::span<const double> x,
                                const MarginalSamples& draws, unsigned workers = 1) {
  const auto factor = semigroup_factor(model, t);
  const auto values = detail::per_sample(draws.count, workers, [&](std::size_t i) {
    Point y(x.size());
    detail::shifted(factor, x, draws[i], y);
    return phi(y);
  }, "non-finite test function value in semigroup estimate");
  const auto st = sample_stats(values);
  return {st.mean, st.std_error};
}

/// Monte Carlo estimate of P_t phi(x) = E[phi(e^{tA} x + Z^0_{A,t})].
inline Estimate semigroup_apply(const SpectralModel& model, const TestFunction& phi, double t, std::span<const double> x,
                                std::size_t n_mc, const RngStream& rng, unsigned workers = 1) {
  if (!(t >= 0.0)) throw ParameterError("semigroup_apply: t must be nonnegative");
  if (x.size() != model.n_modes()) throw ParameterError("semigroup_apply: point dimension mismatch");
  if (t == 0.0) {
    const double v = phi(x);
    if (!std::isfinite(v)) throw PoisonedEstimateError(0, "non-finite test function value in semigroup estimate");
    return {v, 0.0};
  }
  return semigroup_apply(model, phi, t, x, draw_marginals(model, t, n_mc, rng, workers), workers);
}

enum class GradientMethod { pathwise, central_fd };

struct GradientEstimate {
  Point grad;
  Point std_error;
};

inline double default_fd_step(std::span<const double> x) { return 1e-3 * (1.0 + norm(x)); }

/// Directional derivative <D P_t phi(x), q> by central differences with common
/// random numbers: every draw is shared by x + delta q and x - delta q.
inline Estimate directional_fd(const SpectralModel& model, const TestFunction& phi, double t, std::span<const double> x,
                               std::span<const double> q, const MarginalSamples& draws, double delta,
                               unsigned workers = 1) {
  const auto factor = semigroup_factor(model, t);
  const auto values = detail::per_sample(draws.count, workers, [&](std::size_t i) {
    Point up(x.size()), dn(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double base = factor[n] * x[n] + draws[i][n];
      up[n] = base + delta * factor[n] * q[n];
      dn[n] = base - delta * factor[n] * q[n];
    }
    return (phi(up) - phi(dn)) / (2.0 * delta);
  }, "non-finite test function value in gradient estimate");
  const auto st = sample_stats(values);
  return {st.mean, st.std_error};
}

/// Gradient of P_t phi at x from a given batch of draws.
inline GradientEstimate semigroup_gradient(const SpectralModel& model, const TestFunction& phi, double t,
                                           std::span<const double> x, const MarginalSamples& draws,
                                           GradientMethod method, double fd_step = 0.0, unsigned workers = 1) {
  const std::size_t dim = model.n_modes();
  GradientEstimate out{Point(dim, 0.0), Point(dim, 0.0)};
  if (method == GradientMethod::pathwise) {
    if (!phi.has_grad()) throw MissingDerivativeError("pathwise gradient requires an analytic gradient");
    const auto factor = semigroup_factor(model, t);
    for (std::size_t n = 0; n < dim; ++n) {
      const auto values = detail::per_sample(draws.count, workers, [&](std::size_t i) {
        Point y(dim), g(dim);
        detail::shifted(factor, x, draws[i], y);
        phi.grad(y, g);
        return factor[n] * g[n];
      }, "non-finite gradient value in pathwise estimate");
      const auto st = sample_stats(values);
      out.grad[n] = st.mean;
      out.std_error[n] = st.std_error;
    }
    return out;
  }
  const double delta = fd_step > 0.0 ? fd_step : default_fd_step(x);
  Point e(dim, 0.0);
  for (std::size_t n = 0; n < dim; ++n) {
    std::fill(e.begin(), e.end(), 0.0);
    e[n] = 1.0;
    const auto est = directional_fd(model, phi, t, x, e, draws, delta, workers);
    out.grad[n] = est.value;
    out.std_error[n] = est.std_error;
  }
  return out;
}

/// Gradient of P_t phi at x, pathwise (needs phi.grad) or by CRN central differences.
inline GradientEstimate semigroup_gradient(const SpectralModel& model, const TestFunction& phi, double t,
                                           std::span<const double> x, std::size_t n_mc, const RngStream& rng,
                                           GradientMethod method, double fd_step = 0.0, unsigned workers = 1) {
  if (!(t > 0.0)) throw ParameterError("semigroup_gradient: t must be positive");
  if (x.size() != model.n_modes()) throw ParameterError("semigroup_gradient: point dimension mismatch");
  if (method == GradientMethod::pathwise && !phi.has_grad())
    throw MissingDerivativeError("pathwise gradient requires an analytic gradient");
  return semigroup_gradient(model, phi, t, x, draw_marginals(model, t, n_mc, rng, workers), method, fd_step, workers);
}

struct DecayRow {
  double t = 0.0;
  double sup_grad = 0.0;
  double std_err = 0.0;
};

struct DecayFit {
  std::vector<DecayRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares slope of log y against log x.
inline std::pair<double, double> fit_loglog(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

/// Measures G(t) = max over probes of |D P_t phi| (central differences) and
/// fits log G against log t. Probes at one t share their draws.
inline DecayFit gradient_decay_check(const SpectralModel& model, const TestFunction& phi,
                                     std::span<const double> t_grid, std::span<const Point> probe_points,
                                     std::size_t n_mc, const RngStream& rng, unsigned workers = 1) {
  if (t_grid.size() < 4) throw InconclusiveResultError("decay fit needs at least 4 times");
  const auto [tmin, tmax] = std::minmax_element(t_grid.begin(), t_grid.end());
  if (!(*tmin > 0.0) || *tmax / *tmin < 100.0 * (1.0 - 1e-12))
    throw InconclusiveResultError("decay fit needs positive times spanning at least two decades");
  if (probe_points.empty()) throw ParameterError("decay fit needs probe points");

  DecayFit fit;
  bool any_signal = false;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const double t = t_grid[k];
    const auto draws = draw_marginals(model, t, n_mc, rng.substream(k), workers);
    DecayRow row{t, 0.0, 0.0};
    for (const auto& x : probe_points) {
      const auto g = semigroup_gradient(model, phi, t, x, draws, GradientMethod::central_fd, 0.0, workers);
      const double mag = norm(g.grad);
      if (mag > row.sup_grad || (row.sup_grad == 0.0 && row.std_err == 0.0)) {
        row.sup_grad = mag;
        row.std_err = norm(g.std_error);
      }
    }
    if (row.sup_grad > 3.0 * row.std_err && row.sup_grad > 0.0) any_signal = true;
    fit.rows.push_back(row);
  }
  if (!any_signal) throw InconclusiveResultError("all gradient magnitudes are below the Monte Carlo noise floor");

  std::vector<double> ts, gs;
  for (const auto& r : fit.rows)
    if (r.sup_grad > 0.0) {
      ts.push_back(r.t);
      gs.push_back(r.sup_grad);
    }
  if (ts.size() < 2) throw InconclusiveResultError("fewer than two nonzero gradient magnitudes");
  std::tie(fit.slope, fit.intercept) = fit_loglog(ts, gs);
  return fit;
}

/// D^2_{kp} P_t phi(x) through the nested identity
///   D^2_{kp} P_t phi(x) = < D P_{t/2}( <D P_{t/2} phi(.), e^{tA/2} p> )(x), k >,
/// both derivatives by CRN central differences. Outer draws use
/// rng.substream(0), inner draws rng.substream(1).
inline Estimate second_derivative_estimate(const SpectralModel& model, const TestFunction& phi, double t,
                                           std::span<const double> x, std::span<const double> p,
                                           std::span<const double> k, std::size_t n_mc, const RngStream& rng,
                                           double fd_step = 0.0, unsigned workers = 1) {
  if (!(t > 0.0)) throw ParameterError("second_derivative_estimate: t must be positive");
  const std::size_t dim = model.n_modes();
  if (x.size() != dim || p.size() != dim || k.size() != dim)
    throw ParameterError("second_derivative_estimate: dimension mismatch");
  const double half = 0.5 * t;
  const auto factor = semigroup_factor(model, half);
  const double delta = fd_step > 0.0 ? fd_step : default_fd_step(x);
  const auto outer = draw_marginals(model, half, n_mc, rng.substream(0), workers);
  const auto inner = draw_marginals(model, half, n_mc, rng.substream(1), workers);

  Point q(dim);
  for (std::size_t n = 0; n < dim; ++n) q[n] = factor[n] * p[n];

  // psi(y) = <D P_{t/2} phi(y), q>, sequential inside one outer sample.
  auto psi = [&](std::span<const double> y) {
    return directional_fd(model, phi, half, y, q, inner, delta, 1).value;
  };
  const auto values = detail::per_sample(outer.count, workers, [&](std::size_t i) {
    Point up(dim), dn(dim);
    for (std::size_t n = 0; n < dim; ++n) {
      const double base = factor[n] * x[n] + outer[i][n];
      up[n] = base + delta * factor[n] * k[n];
      dn[n] = base - delta * factor[n] * k[n];
    }
    return (psi(up) - psi(dn)) / (2.0 * delta);
  }, "non-finite value in second-derivative estimate");
  const auto st = sample_stats(values);
  return {st.mean, st.std_error};
}

struct GeneratorQuadSpec {
  double rel_tol = 1e-10;
  double fail_tol = 1e-6;       // absolute error estimate above which the result is rejected
  double tail_tolerance = 1e-8;  // bound on the neglected |xi| > xi_max contribution
  double inner_cutoff = 1e-2;    // below this |xi| the jump integrand is replaced by its Taylor expansion
};

struct GeneratorResult {
  double value = 0.0;
  double drift_part = 0.0;
  double jump_part = 0.0;
  double error_estimate = 0.0;
};

/// L^OU phi(x) = <Ax, D phi(x)>
///   + c_alpha sum_{j <= j_max} beta_j^alpha int (phi(x + xi e_j) - phi(x) - xi d_j phi(x)) |xi|^(-1-alpha) d xi.
///
/// Each jump integral is folded onto xi > 0, where the first-order compensation
/// cancels. On (0, eps) the integrand is replaced by its fourth-order Taylor
/// expansion and integrated in closed form; [eps, xi_max] is integrated directly, with
/// xi_max chosen so that 2 |phi|_0 c_alpha beta_j^alpha xi_max^(-alpha)/alpha
/// stays below the tail tolerance.
inline GeneratorResult generator_apply(const SpectralModel& model, const TestFunction& phi, std::span<const double> x,
                                       std::size_t j_max, const GeneratorQuadSpec& quad = {}) {
  const std::size_t dim = model.n_modes();
  if (x.size() != dim) throw ParameterError("generator_apply: point dimension mismatch");
  if (j_max < 1 || j_max > dim) throw ParameterError("generator_apply: j_max must lie in [1, n_modes]");
  for (double v : x)
    if (!std::isfinite(v)) throw ParameterError("generator_apply: x must be finite");
  if (phi.is_cylindrical()) {
    for (auto j : phi.active)
      if (j >= j_max) throw ParameterError("generator_apply: test function depends on a coordinate beyond j_max");
  } else if (j_max < dim) {
    throw ParameterError("generator_apply: j_max < n_modes needs a cylindrical test function");
  }
  if (!phi.bound) throw ParameterError("generator_apply: test function needs a declared bound");

  const double alpha = model.alpha;
  const double c_alpha = levy_constant(alpha);
  const double fx = phi(x);

  Point g(dim, 0.0);
  if (phi.has_grad()) {
    phi.grad(x, g);
  } else {
    Point xp(x.begin(), x.end());
    for (std::size_t j = 0; j < j_max; ++j) {
      const double h = 1e-5 * (1.0 + std::abs(x[j]));
      xp[j] = x[j] + h;
      const double up = phi(xp);
      xp[j] = x[j] - h;
      const double dn = phi(xp);
      xp[j] = x[j];
      g[j] = (up - dn) / (2.0 * h);
    }
  }

  GeneratorResult r;
  for (std::size_t j = 0; j < j_max; ++j) r.drift_part -= model.gammas[j] * x[j] * g[j];

  Point xp(x.begin(), x.end());
  for (std::size_t j = 0; j < j_max; ++j) {
    const double beta_alpha = std::pow(model.betas[j], alpha);
    if (beta_alpha == 0.0) continue;
    auto sym = [&](double xi) {
      xp[j] = x[j] + xi;
      const double up = phi(xp);
      xp[j] = x[j] - xi;
      const double dn = phi(xp);
      xp[j] = x[j];
      return up + dn - 2.0 * fx;
    };
    // On (0, eps) the symmetric difference is d2 xi^2 + d4 xi^4 / 12 + O(xi^6);
    // d2 and d4 come from sym(eps) and sym(2 eps).
    const double eps = quad.inner_cutoff;
    const double s1 = sym(eps), s2 = sym(2.0 * eps);
    const double d2 = (16.0 * s1 - s2) / (12.0 * eps * eps);
    const double d4 = (s2 - 4.0 * s1) / (eps * eps * eps * eps);
    auto kernel = [&](double xi) { return sym(xi) * std::pow(xi, -1.0 - alpha); };

    auto in = integrate_adaptive(kernel, eps, 1.0, quad.rel_tol, 20);
    double integral = in.value + d2 * std::pow(eps, 2.0 - alpha) / (2.0 - alpha) +
                      d4 * std::pow(eps, 4.0 - alpha) / (12.0 * (4.0 - alpha));
    double err = in.error;

    const double xi_max = std::max(
        1.0, std::pow(2.0 * *phi.bound * c_alpha * beta_alpha / (alpha * quad.tail_tolerance), 1.0 / alpha));
    for (double lo = 1.0; lo < xi_max; lo *= 2.0) {
      const double hi = std::min(2.0 * lo, xi_max);
      auto piece = integrate_adaptive(kernel, lo, hi, quad.rel_tol, 15);
      integral += piece.value;
      err += piece.error;
    }
    r.jump_part += c_alpha * beta_alpha * integral;
    r.error_estimate += c_alpha * beta_alpha * err;
  }
  r.value = r.drift_part + r.jump_part;
  if (!(r.error_estimate <= quad.fail_tol * std::max(1.0, std::abs(r.value))))
    throw QuadratureError(r.error_estimate, "generator jump integral did not converge");
  return r;
}

struct GeneratorConsistency {
  Estimate difference_quotient;  // (P_t phi(x) - phi(x)) / t
  double generator = 0.0;
  double relative_error = 0.0;
};

/// Compares the semigroup difference quotient at small t with the generator.
inline GeneratorConsistency generator_consistency(const SpectralModel& model, const TestFunction& phi,
                                                  std::span<const double> x, double t, std::size_t n_mc,
                                                  const RngStream& rng, unsigned workers = 1,
                                                  const GeneratorQuadSpec& quad = {}) {
  if (!(t > 0.0)) throw ParameterError("generator_consistency: t must be positive");
  const auto draws = draw_marginals(model, t, n_mc, rng, workers);
  const auto factor = semigroup_factor(model, t);
  const double fx = phi(x);
  const auto values = detail::per_sample(draws.count, workers, [&](std::size_t i) {
    Point y(x.size());
    detail::shifted(factor, x, draws[i], y);
    return (phi(y) - fx) / t;
  }, "non-finite test function value in difference quotient");
  GeneratorConsistency out;
  const auto st = sample_stats(values);
  out.difference_quotient = {st.mean, st.std_error};
  out.generator = generator_apply(model, phi, x, model.n_modes(), quad).value;
  out.relative_error = std::abs(st.mean - out.generator) / std::abs(out.generator);
  return out;
}

}  // namespace stablehjb
