#pragma once

// Admissible controls: processes with values in the closed ball B_R.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "stablehjb/error.hpp"
#include "stablehjb/ou.hpp"

namespace stablehjb {

enum class PolicyKind { from_solution, constant, custom };

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::from_solution: return "from_solution";
    case PolicyKind::constant: return "constant";
    case PolicyKind::custom: return "custom";
  }
  return "?";
}

/// Feedback a(s, x). Outputs of `constant` and `from_solution` policies are
/// projected onto B_R; projections larger than 1e-12 are counted. A `custom`
/// rule leaving the ball is an admissibility error.
class FeedbackPolicy {
 public:
  using Rule = std::function<void(double s, std::span<const double> x, std::span<double> a)>;

  FeedbackPolicy(PolicyKind kind, double radius, Rule rule, std::string label = {},
                 std::optional<double> box = std::nullopt)
      : kind_(kind),
        radius_(radius),
        rule_(std::move(rule)),
        label_(std::move(label)),
        box_(box),
        clamp_count_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    if (!(radius > 0.0)) throw ParameterError("policy radius must be positive");
  }

  void evaluate(double s, std::span<const double> x, std::span<double> a) const {
    rule_(s, x, a);
    const double n = norm(a);
    if (!std::isfinite(n)) throw AdmissibilityError("policy '" + label_ + "' returned a non-finite control");
    if (n <= radius_) return;
    if (kind_ == PolicyKind::custom && n > radius_ * (1.0 + 1e-12))
      throw AdmissibilityError("policy '" + label_ + "' left the ball: |a| = " + std::to_string(n) +
                               " > R = " + std::to_string(radius_));
    if (n - radius_ > 1e-12) clamp_count_->fetch_add(1, std::memory_order_relaxed);
    for (auto& v : a) v *= radius_ / n;
  }

  PolicyKind kind() const noexcept { return kind_; }
  double radius() const noexcept { return radius_; }
  const std::string& label() const noexcept { return label_; }
  /// Half-width of the grid the policy was built on, for clipping diagnostics.
  std::optional<double> box() const noexcept { return box_; }
  std::uint64_t clamp_count() const noexcept { return clamp_count_->load(); }

 private:
  PolicyKind kind_;
  double radius_;
  Rule rule_;
  std::string label_;
  std::optional<double> box_;
  std::shared_ptr<std::atomic<std::uint64_t>> clamp_count_;
};

inline FeedbackPolicy make_constant_policy(Point value, double radius) {
  if (norm(value) > radius * (1.0 + 1e-12)) throw AdmissibilityError("constant control outside the ball");
  std::string label = "constant(";
  for (std::size_t i = 0; i < value.size(); ++i) label += (i ? ";" : "") + std::to_string(value[i]);
  label += ")";
  return FeedbackPolicy(PolicyKind::constant, radius,
                        [value](double, std::span<const double>, std::span<double> a) {
                          for (std::size_t i = 0; i < a.size(); ++i) a[i] = value[i];
                        },
                        label);
}

inline FeedbackPolicy make_custom_policy(FeedbackPolicy::Rule rule, double radius, std::string label = "custom") {
  return FeedbackPolicy(PolicyKind::custom, radius, std::move(rule), std::move(label));
}

/// Constants on a tensor grid inside B_R: `per_axis`^dim points in [-R/sqrt(dim), R/sqrt(dim)]^dim.
inline std::vector<FeedbackPolicy> make_constant_family(std::size_t dim, double radius, std::size_t per_axis) {
  if (per_axis < 1) throw ParameterError("constant family needs at least one point per axis");
  const double half = radius / std::sqrt(static_cast<double>(dim));
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= per_axis;
  std::vector<FeedbackPolicy> family;
  for (std::size_t flat = 0; flat < total; ++flat) {
    Point c(dim);
    std::size_t rem = flat;
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t i = rem % per_axis;
      rem /= per_axis;
      c[d] = per_axis == 1 ? 0.0 : -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(per_axis - 1);
    }
    family.push_back(make_constant_policy(c, radius));
  }
  return family;
}

/// Open-loop control, constant on each cell of the time grid.
struct OpenLoopControl {
  std::vector<Point> values;
};

using ControlInput = std::variant<FeedbackPolicy, OpenLoopControl>;

}  // namespace stablehjb
