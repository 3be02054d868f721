#pragma once

// Symmetric alpha-stable laws with characteristic function exp(-scale^alpha |h|^alpha).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/parallel.hpp"
#include "stablehjb/quadrature.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/spectrum.hpp"

namespace stablehjb {

struct StableLaw {
  double alpha = 1.5;
  double scale = 1.0;
};

/// One draw with characteristic function exp(-|h|^alpha) (Chambers-Mallows-Stuck).
inline double sample_standard(double alpha, RngStream& rng) {
  check_alpha(alpha);
  const double u = std::numbers::pi * (rng.uniform_open() - 0.5);
  const double e = rng.exponential();
  const double cos_u = std::cos(u);
  return std::sin(alpha * u) / std::pow(cos_u, 1.0 / alpha) *
         std::pow(std::cos((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
}

inline double sample(const StableLaw& law, RngStream& rng) {
  return law.scale == 0.0 ? 0.0 : law.scale * sample_standard(law.alpha, rng);
}

/// n standard draws; chunk c uses rng.substream(c).
inline std::vector<double> sample_standard_batch(double alpha, std::size_t n, const RngStream& rng,
                                                 unsigned workers = 1) {
  check_alpha(alpha);
  std::vector<double> out(n);
  parallel_for(chunk_count(n), workers, [&](std::size_t c) {
    RngStream sub = rng.substream(c);
    const std::size_t end = std::min(n, (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < end; ++i) out[i] = sample_standard(alpha, sub);
  });
  return out;
}

/// c_alpha = 1 / (2 (-Gamma(-alpha) cos(pi alpha / 2))), density constant of the Levy measure.
inline double levy_constant(double alpha) {
  check_alpha(alpha);
  // Gamma(-alpha) through the recurrence from Gamma(2 - alpha), away from the poles.
  const double gamma_neg = std::tgamma(2.0 - alpha) / ((-alpha) * (1.0 - alpha));
  return 0.5 / (-gamma_neg * std::cos(std::numbers::pi * alpha / 2.0));
}

/// Left side of the Levy-Khintchine consistency identity, which equals 1 exactly:
///   integral over R of (1 - cos xi) c_alpha |xi|^(-1-alpha) d xi.
inline QuadratureResult levy_identity_integral(double alpha) {
  check_alpha(alpha);
  const double c = levy_constant(alpha);
  // 1 - cos written as 2 sin^2 for accuracy.
  auto inner = [alpha](double xi) {
    const double s = std::sin(0.5 * xi);
    return 2.0 * s * s * std::pow(xi, -1.0 - alpha);
  };
  // The xi^2 / 2 leading term is integrated exactly; the remainder is O(xi^(3-alpha)).
  auto remainder = [alpha](double xi) {
    const double s = std::sin(0.5 * xi);
    return (2.0 * s * s - 0.5 * xi * xi) * std::pow(xi, -1.0 - alpha);
  };
  QuadratureResult total = integrate_adaptive(remainder, 0.0, 1.0, 1e-13, 20);
  total.value += 0.5 / (2.0 - alpha);
  // [1, X]: one panel per period; X a multiple of 2 pi so the oscillatory tail is O(X^(-2-alpha)).
  const int periods = 4000;
  const double two_pi = 2.0 * std::numbers::pi;
  double lo = 1.0;
  for (int k = 1; k <= periods; ++k) {
    const double hi = two_pi * k;
    const auto piece = integrate_adaptive(inner, lo, hi, 1e-13, 10);
    total.value += piece.value;
    total.error += piece.error;
    lo = hi;
  }
  // [X, inf): the non-oscillatory part of 1 - cos integrates in closed form.
  total.value += std::pow(lo, -alpha) / alpha;
  total.value *= 2.0 * c;
  total.error *= 2.0 * c;
  return total;
}

/// Stable scale of beta * int_0^t exp(-gamma (t - s)) dZ_s, i.e. beta times the
/// L^alpha norm of the kernel: beta ((1 - exp(-alpha gamma t)) / (alpha gamma))^(1/alpha).
inline double kernel_scale(double gamma_n, double beta_n, double alpha, double t) {
  if (!(t >= 0.0)) throw ParameterError("kernel_scale: t must be nonnegative");
  if (!(gamma_n >= 0.0)) throw ParameterError("kernel_scale: gamma_n must be nonnegative");
  if (t == 0.0 || beta_n == 0.0) return 0.0;
  const double rate = alpha * gamma_n;
  const double integral = rate * t < 1e-300 ? t : -std::expm1(-rate * t) / rate;
  return beta_n * std::pow(integral, 1.0 / alpha);
}

struct EcfRow {
  double h = 0.0;
  double real = 0.0;
  double imag = 0.0;
  double exact = 0.0;
  double abs_error = 0.0;
};

struct EcfReport {
  double max_abs_error = 0.0;
  double max_abs_imag = 0.0;
  std::vector<EcfRow> rows;
};

/// Empirical characteristic function of standard draws against exp(-|h|^alpha).
inline EcfReport ecf_check(double alpha, std::span<const double> h_values, std::size_t n_samples,
                           const RngStream& rng, unsigned workers = 1) {
  check_alpha(alpha);
  if (n_samples < 10000) throw ParameterError("ecf_check needs at least 1e4 samples");
  const std::vector<double> draws = sample_standard_batch(alpha, n_samples, rng, workers);
  EcfReport report;
  std::vector<double> c(n_samples), s(n_samples);
  for (double h : h_values) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      c[i] = std::cos(h * draws[i]);
      s[i] = std::sin(h * draws[i]);
    }
    EcfRow row;
    row.h = h;
    row.real = pairwise_sum(c) / static_cast<double>(n_samples);
    row.imag = pairwise_sum(s) / static_cast<double>(n_samples);
    row.exact = std::exp(-std::pow(std::abs(h), alpha));
    row.abs_error = std::abs(row.real - row.exact);
    report.max_abs_error = std::max(report.max_abs_error, row.abs_error);
    report.max_abs_imag = std::max(report.max_abs_imag, std::abs(row.imag));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace stablehjb
