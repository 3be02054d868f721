#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/stable.hpp"

using namespace stablehjb;

namespace {

struct Ecf {
  double re, im;
};

Ecf empirical_cf(const std::vector<double>& x, double h) {
  double re = 0.0, im = 0.0;
  for (double v : x) {
    re += std::cos(h * v);
    im += std::sin(h * v);
  }
  return {re / x.size(), im / x.size()};
}

}  // namespace

TEST(StableSampler, EcfAtOneMatchesExpMinusOne) {
  const std::vector<double> h{1.0};
  const auto r = ecf_check(1.5, h, 1000000, RngStream(11));
  EXPECT_LT(r.max_abs_error, 0.01);
  EXPECT_NEAR(r.rows[0].exact, std::exp(-1.0), 1e-15);
}

TEST(StableSampler, HalfOfDrawsArePositive) {
  const auto x = sample_standard_batch(1.3, 200000, RngStream(2));
  double pos = 0;
  for (double v : x) pos += v > 0.0;
  const double n = static_cast<double>(x.size());
  EXPECT_NEAR(pos / n, 0.5, 3.0 * 0.5 / std::sqrt(n));
}

TEST(StableSampler, RejectsBoundaryAlpha) {
  RngStream r(1);
  EXPECT_THROW(sample_standard(2.0, r), ParameterError);
  EXPECT_THROW(sample_standard(1.0, r), ParameterError);
}

TEST(StableSampler, DeterministicAcrossWorkerCounts) {
  const auto a = sample_standard_batch(1.7, 50000, RngStream(3), 1);
  const auto b = sample_standard_batch(1.7, 50000, RngStream(3), 4);
  const auto c = sample_standard_batch(1.7, 50000, RngStream(3), 8);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  RngStream s1(99, 5), s2(99, 5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_standard(1.4, s1), sample_standard(1.4, s2));
}

TEST(StableSampler, ScalingMultipliesScale) {
  const double alpha = 1.6, c = 2.5;
  auto x = sample_standard_batch(alpha, 400000, RngStream(7));
  for (auto& v : x) v *= c;
  const double se = 1.0 / std::sqrt(static_cast<double>(x.size()));
  for (double h : {0.2, 0.5}) EXPECT_NEAR(empirical_cf(x, h).re, std::exp(-std::pow(c * h, alpha)), 4.0 * se);
}

TEST(StableSampler, SumOfIndependentDrawsAddsScalesToPowerAlpha) {
  const double alpha = 1.4, s1 = 0.7, s2 = 1.3;
  const auto a = sample_standard_batch(alpha, 400000, RngStream(8));
  const auto b = sample_standard_batch(alpha, 400000, RngStream(9));
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = s1 * a[i] + s2 * b[i];
  const double scale = std::pow(std::pow(s1, alpha) + std::pow(s2, alpha), 1.0 / alpha);
  const double se = 1.0 / std::sqrt(static_cast<double>(sum.size()));
  for (double h : {0.3, 0.8}) EXPECT_NEAR(empirical_cf(sum, h).re, std::exp(-std::pow(scale * h, alpha)), 4.0 * se);
}

TEST(StableSampler, SampleWithZeroScaleIsZero) {
  RngStream r(1);
  EXPECT_EQ(sample(StableLaw{1.5, 0.0}, r), 0.0);
}

TEST(EcfCheck, ZeroFrequencyIsExact) {
  const std::vector<double> h{0.0};
  const auto r = ecf_check(1.5, h, 10000, RngStream(4));
  EXPECT_EQ(r.max_abs_error, 0.0);
  EXPECT_EQ(r.rows[0].imag, 0.0);
}

TEST(EcfCheck, ImaginaryPartVanishes) {
  const std::vector<double> h{1.0};
  const std::size_t n = 200000;
  const auto r = ecf_check(1.5, h, n, RngStream(5));
  EXPECT_LT(std::abs(r.rows[0].imag), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(EcfCheck, RejectsSmallSampleCounts) {
  const std::vector<double> h{1.0};
  EXPECT_THROW(ecf_check(1.5, h, 9999, RngStream(5)), ParameterError);
}

TEST(LevyConstant, ClosedFormAtThreeHalves) {
  // Gamma(-3/2) = 4 sqrt(pi) / 3, cos(3 pi / 4) = -sqrt(2) / 2.
  const double expected = 0.5 / ((4.0 * std::sqrt(std::numbers::pi) / 3.0) * (std::sqrt(2.0) / 2.0));
  EXPECT_NEAR(levy_constant(1.5), expected, 1e-14);
  EXPECT_NEAR(levy_constant(1.5), 0.29921, 5e-6);
}

TEST(LevyConstant, AgreesWithDirectGammaEvaluation) {
  for (int i = 0; i < 50; ++i) {
    const double alpha = 1.01 + 0.98 * i / 49.0;
    const double direct = 0.5 / (-boost::math::tgamma(-alpha) * std::cos(std::numbers::pi * alpha / 2.0));
    EXPECT_GT(levy_constant(alpha), 0.0);
    EXPECT_NEAR(levy_constant(alpha), direct, 1e-12 * direct);
  }
}

TEST(LevyConstant, QuadratureIdentityHolds) {
  for (double alpha : {1.2, 1.5, 1.8}) {
    const auto r = levy_identity_integral(alpha);
    EXPECT_NEAR(r.value, 1.0, 1e-6) << "alpha=" << alpha;
  }
}

TEST(KernelScale, ZeroTimeGivesZero) { EXPECT_EQ(kernel_scale(3.0, 1.0, 1.5, 0.0), 0.0); }

TEST(KernelScale, SmallRateLimitIsStableIncrementScale) {
  EXPECT_NEAR(kernel_scale(1e-12, 2.0, 1.5, 0.8), 2.0 * std::pow(0.8, 1.0 / 1.5), 1e-10);
  EXPECT_DOUBLE_EQ(kernel_scale(0.0, 2.0, 1.5, 0.8), 2.0 * std::pow(0.8, 1.0 / 1.5));
}

TEST(KernelScale, MatchesNumericalLAlphaNorm) {
  const double alpha = 1.5, g = 1.0, t = 1.0;
  auto f = [&](double s) { return std::pow(std::exp(-g * (t - s)), alpha); };
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 10, 1e-14);
  EXPECT_NEAR(kernel_scale(g, 1.0, alpha, t), std::pow(integral, 1.0 / alpha), 1e-13);
  EXPECT_NEAR(kernel_scale(g, 1.0, alpha, t), std::pow((1.0 - std::exp(-1.5)) / 1.5, 2.0 / 3.0), 1e-15);
}

TEST(KernelScale, IncreasingInTimeWithStationaryLimit) {
  const double g = 5.0, b = 0.8, alpha = 1.3;
  double prev = 0.0;
  for (double t = 0.01; t < 4.0; t *= 1.5) {
    const double s = kernel_scale(g, b, alpha, t);
    EXPECT_GT(s, prev);
    prev = s;
  }
  EXPECT_NEAR(kernel_scale(g, b, alpha, 100.0), b * std::pow(alpha * g, -1.0 / alpha), 1e-15);
}
