#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/presets.hpp"
#include "stablehjb/state.hpp"

using namespace stablehjb;

namespace {

ProblemSpec problem_with(Drift f, double horizon, double radius = 1.0) {
  return ProblemSpec{std::move(f), zero_function(), zero_function(), radius, horizon};
}

FeedbackPolicy zero_policy(std::size_t dim, double radius = 1.0) { return make_constant_policy(Point(dim, 0.0), radius); }

}  // namespace

TEST(StatePath, FreeDynamicsIsSemigroupPlusRestartedConvolution) {
  const auto m = make_heat_dirichlet_model(2, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(zero_drift(), 1.0);
  const Point x{0.7, -0.4};
  const double t0 = 0.25, dt = 1.0 / 64;
  RngStream noise_rng(3);
  const auto noise = generate_noise_path(m, t0, dt, 48, noise_rng);
  const auto path = solve_on_noise(m, p, zero_policy(2), x, noise);
  EXPECT_EQ(path.max_sweeps, 1u);
  for (std::size_t k = 0; k <= 48; ++k) {
    const auto f = semigroup_factor(m, path.times[k] - t0);
    for (std::size_t n = 0; n < 2; ++n)
      EXPECT_NEAR(path.states[k][n], f[n] * x[n] + noise.conv[k][n], 1e-14) << "k=" << k;
  }
  EXPECT_DOUBLE_EQ(path.times.back(), 1.0);
}

TEST(StatePath, ZeroNoiseConstantControlSolvesLinearOde) {
  auto m = make_heat_dirichlet_model(2, 1.5, 0.7, BetaSchedule::critical);
  m.betas = {0.0, 0.0};
  const auto p = problem_with(zero_drift(), 1.0);
  const Point x{1.0, -2.0}, c{0.6, -0.8};
  const double t0 = 0.2;
  RngStream rng(1);
  for (int kind = 0; kind < 2; ++kind) {
    const ControlInput control = kind == 0 ? ControlInput(make_constant_policy(c, 1.0))
                                           : ControlInput(OpenLoopControl{std::vector<Point>(64, c)});
    const auto path = solve_state_path(m, p, control, t0, x, 0.8 / 64, rng, 1e-12, 10);
    for (std::size_t k = 0; k <= 64; ++k) {
      const double s = path.times[k] - t0;
      for (std::size_t n = 0; n < 2; ++n) {
        const double g = m.gammas[n];
        const double exact = std::exp(-g * s) * x[n] + c[n] * (1.0 - std::exp(-g * s)) / g;
        EXPECT_NEAR(path.states[k][n], exact, 1e-13);
      }
      EXPECT_LE(norm(path.control_values[k]), 1.0 + 1e-15);
    }
  }
}

TEST(StatePath, ContractionFactorBoundedByLipschitzTimesLength) {
  const auto m = make_heat_dirichlet_model(1, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(0.5, 1), 0.5);
  const Point x{0.3};
  for (std::uint64_t path_id = 0; path_id < 20; ++path_id) {
    RngStream rng(11, path_id);
    const auto path = solve_state_path(m, p, zero_policy(1), 0.25, x, 1.0 / 256, rng, 1e-10, 50);
    EXPECT_LE(path.contraction_factor, 0.125 * 1.5);
    EXPECT_LE(path.max_sweeps, 8u);
  }
}

TEST(StatePath, ResidualsDecreaseAfterFirstSweep) {
  const auto m = make_heat_dirichlet_model(2, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(0.8, 2), 0.5);  // [F]_Lip (T - t0) = 0.4: a single block
  const Point x{1.0, 0.5};
  RngStream rng(5);
  const auto path = solve_state_path(m, p, zero_policy(2), 0.0, x, 1.0 / 64, rng, 1e-12, 100);
  const auto& r = path.picard_residuals;
  ASSERT_GE(r.size(), 3u);
  for (std::size_t i = 2; i < r.size(); ++i)
    if (r[i - 1] > 1e-13) EXPECT_LT(r[i], r[i - 1]);
}

TEST(StatePath, LongIntervalsAreSplitIntoContractingBlocks) {
  const auto m = make_heat_dirichlet_model(1, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(4.0, 1), 1.0);  // [F]_Lip T = 4
  const Point x{0.5};
  RngStream a(6), b(6);
  const auto path = solve_state_path(m, p, zero_policy(1), 0.0, x, 1.0 / 128, a, 1e-11, 60);
  // Reference: the explicit one-step recursion X_{k+1} = e^{dA} X_k + phi1 F(X_k) + increment.
  const auto noise = generate_noise_path(m, 0.0, 1.0 / 128, 128, b);
  const double g = m.gammas[0], d = 1.0 / 128;
  const double e = std::exp(-g * d), phi1 = -std::expm1(-g * d) / g;
  double y = x[0];
  for (std::size_t k = 0; k < 128; ++k) y = e * y + phi1 * 4.0 * std::tanh(y + noise.conv[k][0]);
  EXPECT_NEAR(path.states.back()[0], y + noise.conv.back()[0], 1e-9);
}

TEST(StatePath, BitwiseDeterministic) {
  const auto m = make_heat_dirichlet_model(3, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(0.25, 3), 0.5);
  const Point x{0.1, 0.2, 0.3};
  RngStream a(9), b(9);
  const auto p1 = solve_state_path(m, p, zero_policy(3), 0.0, x, 1.0 / 32, a, 1e-10, 50);
  const auto p2 = solve_state_path(m, p, zero_policy(3), 0.0, x, 1.0 / 32, b, 1e-10, 50);
  EXPECT_EQ(p1.states, p2.states);
  EXPECT_EQ(p1.picard_residuals, p2.picard_residuals);
}

TEST(StatePath, FlowPropertyWithRestartedNoise) {
  const auto m = make_heat_dirichlet_model(2, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(0.5, 2), 1.0);
  const auto policy = make_custom_policy(
      [](double, std::span<const double> x, std::span<double> a) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = -0.5 * std::tanh(x[i]);
      },
      1.0);
  const Point x{0.8, -0.3};
  RngStream rng(12);
  const auto noise = generate_noise_path(m, 0.0, 1.0 / 64, 64, rng);
  const auto full = solve_on_noise(m, p, policy, x, noise);
  const auto second = solve_on_noise(m, p, policy, full.states[24], noise.restart(m, 24, 64));
  for (std::size_t k = 0; k <= 40; ++k)
    for (std::size_t n = 0; n < 2; ++n) EXPECT_NEAR(second.states[k][n], full.states[24 + k][n], 1e-9);
}

TEST(StatePath, FirstOrderConvergenceInStep) {
  auto m = make_heat_dirichlet_model(1, 1.5, 0.7, BetaSchedule::critical);
  m.betas = {0.0};
  const auto p = problem_with(tanh_drift(2.0, 1), 1.0);
  const auto policy = make_custom_policy(
      [](double s, std::span<const double>, std::span<double> a) { a[0] = std::sin(6.0 * s); }, 1.0);
  const Point x{1.0};
  auto endpoint = [&](std::size_t cells) {
    RngStream rng(1);
    return solve_state_path(m, p, policy, 0.0, x, 1.0 / cells, rng, 1e-13, 100).states.back()[0];
  };
  const double ref = endpoint(1 << 14);
  const double e1 = std::abs(endpoint(64) - ref), e2 = std::abs(endpoint(128) - ref), e3 = std::abs(endpoint(256) - ref);
  EXPECT_GE(std::log2(e1 / e2), 0.8);
  EXPECT_GE(std::log2(e2 / e3), 0.8);
}

TEST(StatePath, PolicyOutsideBallIsInadmissible) {
  const auto m = make_heat_dirichlet_model(1, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(zero_drift(), 1.0);
  const Point x{0.0};
  const auto wild = make_custom_policy([](double, std::span<const double>, std::span<double> a) { a[0] = 1.5; }, 1.0);
  RngStream rng(1);
  EXPECT_THROW(solve_state_path(m, p, wild, 0.0, x, 0.1, rng, 1e-10, 20), AdmissibilityError);
  EXPECT_THROW(solve_state_path(m, p, OpenLoopControl{std::vector<Point>(10, Point{2.0})}, 0.0, x, 0.1, rng, 1e-10, 20),
               AdmissibilityError);
  EXPECT_THROW(make_constant_policy({1.1}, 1.0), AdmissibilityError);
}

TEST(StatePath, ConstantPolicyProjectionIsCounted) {
  const FeedbackPolicy outside(PolicyKind::constant, 1.0,
                               [](double, std::span<const double>, std::span<double> a) { a[0] = 2.0; });
  Point a(1);
  const Point x{0.0};
  outside.evaluate(0.0, x, a);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_EQ(outside.clamp_count(), 1u);
}

TEST(StatePath, PicardBudgetExceededReportsLipschitzLength) {
  const auto m = make_heat_dirichlet_model(1, 1.5, 0.7, BetaSchedule::critical);
  const auto p = problem_with(tanh_drift(0.4, 1), 0.5);
  const Point x{2.0};
  RngStream rng(2);
  try {
    solve_state_path(m, p, zero_policy(1), 0.0, x, 1.0 / 32, rng, 1e-15, 2);
    FAIL() << "expected non-contraction";
  } catch (const NonContractionError& e) {
    EXPECT_NEAR(e.lipschitz_times_length(), 0.2, 1e-12);
  }
}

TEST(StatePath, GridMustFitTheInterval) {
  EXPECT_THROW(grid_cells(0.0, 1.0, 0.3), ParameterError);
  EXPECT_THROW(grid_cells(1.0, 1.0, 0.1), ParameterError);
  EXPECT_THROW(grid_cells(0.0, 1.0, -0.1), ParameterError);
  EXPECT_EQ(grid_cells(0.25, 0.5, 1.0 / 64), 16u);
}

TEST(ProblemSpecCheck, RejectsWrongDeclaredConstants) {
  auto p = problem_with(tanh_drift(1.0, 2), 1.0);
  EXPECT_NO_THROW(validate_problem(p, 2, RngStream(1)));
  p.drift.lipschitz = 0.5;
  EXPECT_THROW(validate_problem(p, 2, RngStream(1)), ParameterError);
  p = problem_with(tanh_drift(1.0, 2), 1.0);
  p.drift.bound = 0.5;
  EXPECT_THROW(validate_problem(p, 2, RngStream(1)), ParameterError);
  p = problem_with(tanh_drift(1.0, 2), 1.0);
  p.running_cost = constant_function(2.0);
  p.running_cost.bound = 1.0;
  EXPECT_THROW(validate_problem(p, 2, RngStream(1)), ParameterError);
  p = problem_with(zero_drift(), 1.0, -1.0);
  EXPECT_THROW(validate_problem(p, 2, RngStream(1)), ParameterError);
  EXPECT_DOUBLE_EQ(problem_with(tanh_drift(0.25, 4), 1.0, 2.0).hamiltonian_lipschitz(), 2.5);
}
