#pragma once

// Spectrally truncated linear operator A (diagonal in the coordinate basis,
// A e_n = -gamma_n e_n) together with the noise coefficients beta_n.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "stablehjb/error.hpp"

namespace stablehjb {

enum class BetaSchedule { cylindrical, critical };

inline constexpr const char* kScheduleHeatCylindrical = "heat-dirichlet-cylindrical";
inline constexpr const char* kScheduleHeatCritical = "heat-dirichlet-critical";
inline constexpr const char* kScheduleCustom = "custom";

struct SpectralModel {
  std::vector<double> gammas;  // eigenvalues of -A, nondecreasing
  std::vector<double> betas;   // noise coefficients
  double alpha = 1.5;          // stability index
  double gamma_smooth = 0.7;   // smoothing index
  double c_bar = 1.0;
  std::string schedule_id = kScheduleCustom;

  std::size_t n_modes() const noexcept { return gammas.size(); }
};

/// Throws ParameterError naming the first violated bound.
inline void check_alpha(double alpha) {
  if (!(alpha > 1.0 && alpha < 2.0))
    throw ParameterError("alpha must lie in (1, 2), got " + std::to_string(alpha));
}

inline void validate_model(const SpectralModel& m) {
  check_alpha(m.alpha);
  if (!(m.gamma_smooth >= 1.0 / m.alpha && m.gamma_smooth < 1.0))
    throw ParameterError("gamma_smooth must lie in [1/alpha, 1), got " + std::to_string(m.gamma_smooth));
  if (m.gammas.empty()) throw ParameterError("n_modes must be >= 1");
  if (m.betas.size() != m.gammas.size()) throw ParameterError("betas and gammas differ in length");
  if (!(m.c_bar > 0.0)) throw ParameterError("c_bar must be positive");
  for (std::size_t n = 0; n < m.gammas.size(); ++n) {
    if (!(m.gammas[n] > 0.0) || !std::isfinite(m.gammas[n]))
      throw ParameterError("gammas[" + std::to_string(n) + "] must be positive and finite");
    if (n > 0 && m.gammas[n] < m.gammas[n - 1])
      throw ParameterError("gammas must be nondecreasing (index " + std::to_string(n) + ")");
    if (!(m.betas[n] >= 0.0) || !std::isfinite(m.betas[n]))
      throw ParameterError("betas[" + std::to_string(n) + "] must be nonnegative and finite");
  }
}

/// Dirichlet heat operator on (0, 1): gamma_n = n^2 pi^2, c_bar = 1.
inline SpectralModel make_heat_dirichlet_model(std::size_t n_modes, double alpha, double gamma_smooth,
                                               BetaSchedule schedule) {
  if (n_modes < 1) throw ParameterError("n_modes must be >= 1");
  check_alpha(alpha);
  if (!(gamma_smooth >= 1.0 / alpha && gamma_smooth < 1.0))
    throw ParameterError("gamma_smooth must lie in [1/alpha, 1), got " + std::to_string(gamma_smooth));
  SpectralModel m;
  m.alpha = alpha;
  m.gamma_smooth = gamma_smooth;
  m.c_bar = 1.0;
  m.schedule_id = schedule == BetaSchedule::cylindrical ? kScheduleHeatCylindrical : kScheduleHeatCritical;
  m.gammas.resize(n_modes);
  m.betas.resize(n_modes);
  const double exponent = 1.0 / alpha - gamma_smooth;
  for (std::size_t n = 0; n < n_modes; ++n) {
    const double k = static_cast<double>(n + 1);
    m.gammas[n] = k * k * std::numbers::pi * std::numbers::pi;
    m.betas[n] = schedule == BetaSchedule::cylindrical ? 1.0 : std::pow(m.gammas[n], exponent);
  }
  return m;
}

inline SpectralModel make_custom_model(std::vector<double> gammas, std::vector<double> betas, double alpha,
                                       double gamma_smooth, double c_bar = 1.0) {
  SpectralModel m{std::move(gammas), std::move(betas), alpha, gamma_smooth, c_bar, kScheduleCustom};
  validate_model(m);
  return m;
}

struct HypothesisReport {
  bool pointwise_ok = false;
  double series_partial = 0.0;  // sum over stored modes of beta_n^alpha / gamma_n
  double tail_bound = 0.0;      // analytic bound on the remainder beyond the stored modes
  bool series_converges = false;
  bool partial_only = false;    // no analytic tail for the schedule
};

/// Checks the lower bound on beta_n and the convergence of sum beta_n^alpha / gamma_n.
///
/// For the heat schedules the tail sum_{n>N} is bounded by adding the next
/// `tail_terms` terms exactly and an integral-test bound for the rest:
///   cylindrical: terms 1/(pi^2 n^2),      tail <= 1/(pi^2 K)
///   critical:    terms (pi^2 n^2)^(-a g), tail <= pi^(-2ag) K^(1-2ag)/(2ag-1)
/// where K is the last explicitly summed index.
inline HypothesisReport validate_hypothesis(const SpectralModel& model, std::size_t tail_terms) {
  const bool heat_cyl = model.schedule_id == kScheduleHeatCylindrical;
  const bool heat_crit = model.schedule_id == kScheduleHeatCritical;
  if (!heat_cyl && !heat_crit && model.schedule_id != kScheduleCustom)
    throw UnsupportedScheduleError("unsupported schedule '" + model.schedule_id + "'");
  if (tail_terms < 1) throw ParameterError("tail_terms must be >= 1");

  HypothesisReport r;
  const double exponent = 1.0 / model.alpha - model.gamma_smooth;
  r.pointwise_ok = true;
  for (std::size_t n = 0; n < model.n_modes(); ++n) {
    const double bound = model.c_bar * std::pow(model.gammas[n], exponent);
    if (!(model.betas[n] >= bound) || !(model.betas[n] > 0.0)) r.pointwise_ok = false;
    r.series_partial += std::pow(model.betas[n], model.alpha) / model.gammas[n];
  }

  if (!heat_cyl && !heat_crit) {
    r.partial_only = true;
    r.series_converges = false;
    r.tail_bound = std::numeric_limits<double>::infinity();
    return r;
  }

  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double ag = model.alpha * model.gamma_smooth;
  auto term = [&](double n) {
    return heat_cyl ? 1.0 / (pi2 * n * n) : std::pow(pi2 * n * n, -ag);
  };
  const std::size_t first = model.n_modes() + 1;
  const std::size_t last = model.n_modes() + tail_terms;
  double explicit_tail = 0.0;
  for (std::size_t n = first; n <= last; ++n) explicit_tail += term(static_cast<double>(n));
  const double k = static_cast<double>(last);
  const double integral = heat_cyl ? 1.0 / (pi2 * k)
                                   : std::pow(std::numbers::pi, -2.0 * ag) * std::pow(k, 1.0 - 2.0 * ag) /
                                         (2.0 * ag - 1.0);
  r.tail_bound = explicit_tail + integral;
  r.series_converges = std::isfinite(r.tail_bound);
  return r;
}

/// Coordinates of e^{tA}: exp(-gamma_n t), with values below 1e-300 flushed to 0.
inline std::vector<double> semigroup_factor(const SpectralModel& model, double t) {
  if (!(t >= 0.0)) throw ParameterError("semigroup_factor: t must be nonnegative");
  std::vector<double> f(model.n_modes());
  for (std::size_t n = 0; n < f.size(); ++n) {
    const double v = std::exp(-model.gammas[n] * t);
    f[n] = v < 1e-300 ? 0.0 : v;
  }
  return f;
}

}  // namespace stablehjb
