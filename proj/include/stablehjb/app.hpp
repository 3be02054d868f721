#pragma once

// Subcommands of the command-line tool. Each one reads an ExperimentConfig and
// writes CSV files into the output directory. CSV bodies carry no timestamps,
// so reruns with the same config and seed are byte-identical.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stablehjb/config.hpp"
#include "stablehjb/control.hpp"
#include "stablehjb/error.hpp"
#include "stablehjb/hjb.hpp"
#include "stablehjb/io.hpp"
#include "stablehjb/ou.hpp"
#include "stablehjb/spectrum.hpp"
#include "stablehjb/stable.hpp"
#include "stablehjb/state.hpp"

namespace stablehjb::app {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kNonConvergence = 3, kAcceptanceFailure = 4 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"check-noise", "check-hypothesis", "check-ou", "solve-hjb", "verify",
                                              "report"};
  return names;
}

/// Pass/fail thresholds used by `report`.
namespace threshold {
inline constexpr double kEcf = 0.01;
inline constexpr double kLevy = 1e-6;
inline constexpr double kGenerator = 0.05;
inline constexpr double kDecayMargin = 0.15;
inline constexpr double kContractionSlack = 1.5;
inline constexpr double kContractionRegime = 0.25;
inline constexpr std::size_t kStateSweeps = 8;
inline constexpr double kSweepRatio = 0.9;
inline constexpr std::size_t kMaxSweeps = 25;
inline constexpr double kRefinement = 2e-2;
inline constexpr double kHolderSpread = 3.0;
}  // namespace threshold

// Substream tags keep the subcommands' noise disjoint.
namespace stream {
inline constexpr std::uint64_t kNoise = 1, kOuGenerator = 2, kOuDecay = 3, kOuSemigroup = 4, kVerify = 5,
                               kContraction = 6;
}

inline const std::filesystem::path kSolutionFile = "solution.bin";

namespace detail {

inline Point origin_if_empty(const Point& x, std::size_t dim) { return x.empty() ? Point(dim, 0.0) : x; }

inline std::vector<Point> decay_probes(const OuConfig& ou, std::size_t dim) {
  std::vector<Point> probes;
  for (std::size_t i = 0; i < ou.decay_probes; ++i) {
    Point x(dim, 0.0);
    x[0] = ou.decay_probes == 1 ? 0.0
                                : -ou.decay_probe_box + 2.0 * ou.decay_probe_box * static_cast<double>(i) /
                                                            static_cast<double>(ou.decay_probes - 1);
    probes.push_back(x);
  }
  return probes;
}

inline std::vector<double> decay_times(const OuConfig& ou) {
  std::vector<double> t(ou.decay_times);
  const double r = std::log(ou.decay_t_max / ou.decay_t_min);
  for (std::size_t k = 0; k < t.size(); ++k)
    t[k] = ou.decay_t_min * std::exp(r * static_cast<double>(k) / static_cast<double>(t.size() - 1));
  t.back() = ou.decay_t_max;
  return t;
}

inline std::vector<std::string> point_header(const std::string& prefix, std::size_t dim) {
  std::vector<std::string> h;
  for (std::size_t d = 0; d < dim; ++d) h.push_back(prefix + std::to_string(d));
  return h;
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

inline void check_noise(const ExperimentConfig& c, const std::filesystem::path& dir) {
  CsvTable ecf({"alpha", "h", "real", "imag", "exact", "abs_error"});
  CsvTable levy({"alpha", "c_alpha", "integral", "error_estimate", "abs_deviation"});
  const RngStream root = RngStream(c.mc.seed).substream(stream::kNoise);
  for (std::size_t i = 0; i < c.noise.alphas.size(); ++i) {
    const double alpha = c.noise.alphas[i];
    const auto report = ecf_check(alpha, c.noise.h_values, c.noise.samples, root.substream(i), c.mc.workers);
    for (const auto& r : report.rows) ecf.row().add(alpha).add(r.h).add(r.real).add(r.imag).add(r.exact).add(r.abs_error);
    const auto q = levy_identity_integral(alpha);
    levy.row().add(alpha).add(levy_constant(alpha)).add(q.value).add(q.error).add(std::abs(q.value - 1.0));
  }
  ecf.write(dir / "noise_ecf.csv");
  levy.write(dir / "noise_levy.csv");
}

inline void check_hypothesis(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto model = make_model(c.model);
  CsvTable modes({"n", "gamma", "beta", "lower_bound", "ok"});
  const double exponent = 1.0 / model.alpha - model.gamma_smooth;
  for (std::size_t n = 0; n < model.n_modes(); ++n) {
    const double bound = model.c_bar * std::pow(model.gammas[n], exponent);
    modes.row().add_int(static_cast<long long>(n + 1)).add(model.gammas[n]).add(model.betas[n]).add(bound).add_int(
        model.betas[n] >= bound ? 1 : 0);
  }
  const auto r = validate_hypothesis(model, c.ou.tail_terms);
  CsvTable summary({"schedule", "pointwise_ok", "series_partial", "tail_bound", "series_converges", "partial_only"});
  summary.row()
      .add(model.schedule_id)
      .add_int(r.pointwise_ok)
      .add(r.series_partial)
      .add(r.tail_bound)
      .add_int(r.series_converges)
      .add_int(r.partial_only);
  modes.write(dir / "hypothesis_modes.csv");
  summary.write(dir / "hypothesis_summary.csv");
}

inline void check_ou(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto model = make_model(c.model);
  const std::size_t dim = model.n_modes();
  const RngStream root(c.mc.seed);

  const auto gphi = make_function(c.ou.generator_phi, dim);
  const Point gx = detail::origin_if_empty(c.ou.generator_x, dim);
  const auto gc = generator_consistency(model, gphi, gx, c.ou.generator_t, c.ou.generator_samples,
                                        root.substream(stream::kOuGenerator), c.mc.workers);
  CsvTable gen(detail::concat(detail::concat({"t"}, detail::point_header("x", dim)),
                              {"difference_quotient", "std_error", "generator", "relative_error"}));
  gen.row().add(c.ou.generator_t);
  for (double v : gx) gen.add(v);
  gen.add(gc.difference_quotient.value).add(gc.difference_quotient.std_error).add(gc.generator).add(gc.relative_error);
  gen.write(dir / "ou_generator.csv");

  const auto times = detail::decay_times(c.ou);
  CsvTable semi(detail::concat(detail::concat({"t"}, detail::point_header("x", dim)), {"estimate", "std_error"}));
  const RngStream semi_rng = root.substream(stream::kOuSemigroup);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto e = semigroup_apply(model, gphi, times[k], gx, c.ou.decay_samples, semi_rng.substream(k), c.mc.workers);
    semi.row().add(times[k]);
    for (double v : gx) semi.add(v);
    semi.add(e.value).add(e.std_error);
  }
  semi.write(dir / "ou_semigroup.csv");

  const auto dphi = make_function(c.ou.decay_phi, dim);
  const auto probes = detail::decay_probes(c.ou, dim);
  const auto fit = gradient_decay_check(model, dphi, times, probes, c.ou.decay_samples, root.substream(stream::kOuDecay),
                                        c.mc.workers);
  CsvTable decay({"t", "sup_grad", "std_error"});
  for (const auto& r : fit.rows) decay.row().add(r.t).add(r.sup_grad).add(r.std_err);
  decay.write(dir / "ou_decay.csv");
  CsvTable dfit({"slope", "intercept", "lower_bound", "upper_bound"});
  dfit.row().add(fit.slope).add(fit.intercept).add(-model.gamma_smooth - threshold::kDecayMargin).add(0.0);
  dfit.write(dir / "ou_decay_fit.csv");
}

/// Max over nodes of |u(0, x) - h(x)|.
inline double initial_level_error(const HJBSolution& sol, const ProblemSpec& problem) {
  const auto& u = sol.grid_fn;
  double err = 0.0;
  Point x(u.grid.dim());
  for (std::size_t i = 0; i < u.grid.size(); ++i) {
    u.grid.node(i, x);
    err = std::max(err, std::abs(u.values[0][i] - problem.terminal_cost(x)));
  }
  return err;
}

/// Returns the solver's convergence flag.
inline bool solve_hjb(const ExperimentConfig& c, const std::filesystem::path& dir, std::ostream& log) {
  const auto model = make_model(c.model);
  const auto problem = make_problem(c.problem, model.n_modes());
  const auto sol = picard_solve(model, problem, c.grid, c.mc, c.solver);
  save_solution(dir / kSolutionFile, sol);

  CsvTable res({"sweep", "residual", "ratio"});
  for (std::size_t i = 0; i < sol.residual_history.size(); ++i) {
    res.row().add_int(static_cast<long long>(i + 1)).add(sol.residual_history[i]);
    if (i == 0) res.add("");
    else res.add(sol.residual_history[i] / sol.residual_history[i - 1]);
  }
  res.write(dir / "hjb_residuals.csv");

  CsvTable summary({"quantity", "value"});
  summary.row().add("converged").add_int(sol.converged);
  summary.row().add("sweeps").add_int(static_cast<long long>(sol.residual_history.size()));
  summary.row().add("final_residual").add(sol.residual_history.back());
  summary.row().add("c1gamma_norm").add(sol.c1gamma_norm);
  summary.row().add("gradient_budget").add(sol.grid_fn.gradient_budget);
  summary.row().add("clipped_fraction").add(sol.clipped_fraction);
  summary.row().add("max_mc_std_error").add(sol.max_mc_std_error);
  summary.row().add("contraction_factor").add(sol.contraction_factor);
  summary.row().add("analytic_contraction_factor").add(sol.analytic_contraction_factor);
  summary.row().add("initial_level_max_error").add(initial_level_error(sol, problem));
  summary.row().add("time_quadrature").add(sol.quadrature);
  summary.write(dir / "hjb_summary.csv");

  level_table(sol, sol.grid_fn.levels() - 1).write(dir / "hjb_level_final.csv");

  if (!sol.converged) {
    log << "solve-hjb: no convergence after " << sol.residual_history.size() << " sweeps\n";
    return false;
  }

  CsvTable holder({"level", "t", "seminorm", "weighted"});
  const double g = sol.grid_fn.gamma_smooth;
  for (std::size_t k = 1; k < sol.grid_fn.levels(); ++k) {
    const double t = sol.grid_fn.times[k];
    const double s = holder_seminorm(sol, k, c.theta);
    holder.row().add_int(static_cast<long long>(k)).add(t).add(s).add(s * std::pow(t, g + g * c.theta));
  }
  holder.write(dir / "hjb_holder.csv");

  if (c.refinement_check) {
    HjbGridSpec fine = c.grid;
    fine.nodes = 2 * c.grid.nodes - 1;
    const auto sol_fine = picard_solve(model, problem, fine, c.mc, c.solver);
    CsvTable ref(detail::concat(detail::concat({"t0"}, detail::point_header("x", model.n_modes())),
                                {"u_coarse", "u_fine", "abs_diff"}));
    for (const auto& [t0, x] : c.verify.probes) {
      const std::size_t level = sol.grid_fn.nearest_level(problem.horizon - t0);
      const double a = sol.grid_fn.value_at(level, x), b = sol_fine.grid_fn.value_at(level, x);
      ref.row().add(t0);
      for (double v : x) ref.add(v);
      ref.add(a).add(b).add(std::abs(a - b));
    }
    ref.write(dir / "hjb_refinement.csv");
  }
  return true;
}

inline void verify(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto model = make_model(c.model);
  const std::size_t dim = model.n_modes();
  const auto problem = make_problem(c.problem, dim);
  if (!std::filesystem::exists(dir / kSolutionFile)) throw IoError("verify needs " + (dir / kSolutionFile).string() +
                                                                   "; run solve-hjb first");
  const auto sol = load_solution(dir / kSolutionFile);
  if (sol.grid_fn.grid.dim() != dim || std::abs(sol.horizon - problem.horizon) > 1e-12 ||
      std::abs(sol.radius - problem.radius) > 1e-12)
    throw ConfigError("stored solution does not match the configured problem");

  const auto feedback = extract_feedback(sol);
  auto family = make_constant_family(dim, problem.radius, c.verify.constants_per_axis);
  const PathOptions opts{c.mc.workers, c.verify.picard_tol, c.verify.picard_max};
  const RngStream root = RngStream(c.mc.seed).substream(stream::kVerify);

  CsvTable table(detail::concat(
      detail::concat({"policy", "check", "t0"}, detail::point_header("x", dim)),
      {"lhs", "rhs", "rhs_std_error", "bracket_mean", "bracket_std_error", "lhs_std_error", "clipped_fraction",
       "budget_mc", "budget_clipping", "budget_grid", "budget_total", "pass"}));
  auto emit = [&](const FeedbackPolicy& pol, const char* check, double t0, const Point& x,
                  const FundamentalResidual& r, bool pass) {
    table.row().add(pol.label()).add(check).add(t0);
    for (double v : x) table.add(v);
    table.add(r.lhs).add(r.rhs.mean).add(r.rhs.std_error).add(r.bracket_mean).add(r.bracket_std_error)
        .add(r.lhs_std_error).add(r.rhs.clipped_fraction).add(r.budget.mc).add(r.budget.clipping).add(r.budget.grid)
        .add(r.budget.total()).add_int(pass);
  };
  for (std::size_t j = 0; j < c.verify.probes.size(); ++j) {
    const auto& [t0, x] = c.verify.probes[j];
    const RngStream rng = root.substream(j);
    const auto fr = fundamental_residual(model, problem, sol, feedback, t0, x, c.verify.step, c.n_paths, rng, opts);
    const bool attained = std::abs(fr.lhs - fr.rhs.mean) <= fr.budget.total() &&
                          std::abs(fr.bracket_mean) <= 3.0 * fr.bracket_std_error + 1e-12;
    emit(feedback, "attainment", t0, x, fr, attained);
    for (const auto& pol : family) {
      const auto r = fundamental_residual(model, problem, sol, pol, t0, x, c.verify.step, c.n_paths, rng, opts);
      emit(pol, "dominance", t0, x, r, r.lhs <= r.rhs.mean + r.budget.total());
    }
  }
  table.write(dir / "verify.csv");

  // Picard contraction of the state equation under the zero control.
  CsvTable contraction(detail::concat(detail::concat({"t0"}, detail::point_header("x", dim)),
                                      {"lip_times_horizon", "paths", "max_contraction", "bound", "max_sweeps", "pass"}));
  const auto zero = make_constant_policy(Point(dim, 0.0), problem.radius);
  const RngStream croot = RngStream(c.mc.seed).substream(stream::kContraction);
  for (std::size_t j = 0; j < c.verify.probes.size(); ++j) {
    const auto& [t0, x] = c.verify.probes[j];
    const double lip_h = problem.drift.lipschitz * (problem.horizon - t0);
    double worst = 0.0;
    std::size_t sweeps = 0;
    for (std::size_t p = 0; p < c.verify.contraction_paths; ++p) {
      RngStream rng = croot.substream(j).substream(p);
      const auto path = solve_state_path(model, problem, zero, t0, x, c.verify.step, rng, c.verify.picard_tol,
                                         c.verify.picard_max);
      worst = std::max(worst, path.contraction_factor);
      sweeps = std::max(sweeps, path.max_sweeps);
    }
    const double bound = threshold::kContractionSlack * lip_h;
    contraction.row().add(t0);
    for (double v : x) contraction.add(v);
    contraction.add(lip_h).add_int(static_cast<long long>(c.verify.contraction_paths)).add(worst).add(bound)
        .add_int(static_cast<long long>(sweeps)).add_int(worst <= bound && sweeps <= threshold::kStateSweeps);
  }
  contraction.write(dir / "state_contraction.csv");
}

/// Minimal reader for the CSV files written above.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("missing CSV column " + name);
  }
  double number(std::size_t row, const std::string& name) const {
    const auto& s = rows.at(row).at(column(name));
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw IoError("bad number '" + s + "' in column " + name);
    return v;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::optional<CsvData> read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  CsvData d;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) d.header = split_csv_line(line);
    else d.rows.push_back(split_csv_line(line));
    first = false;
  }
  return d;
}

struct CriterionStatus {
  std::string name;
  std::string measured;
  std::string threshold;
  enum { pass, fail, not_run } status = not_run;
};

/// Aggregates the CSV outputs into report.md. Returns false if any evaluated
/// criterion fails.
inline bool report(const ExperimentConfig& c, const std::filesystem::path& dir) {
  std::vector<CriterionStatus> rows;
  auto add = [&](std::string name, std::string threshold) -> CriterionStatus& {
    rows.push_back({std::move(name), "", std::move(threshold)});
    return rows.back();
  };
  auto set = [](CriterionStatus& s, bool ok, std::string measured) {
    s.status = ok ? CriterionStatus::pass : CriterionStatus::fail;
    s.measured = std::move(measured);
  };

  {
    auto& s = add("noise law (ecf)", "max |ecf - exp(-|h|^alpha)| < 0.01");
    if (auto d = read_csv(dir / "noise_ecf.csv")) {
      double m = 0.0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) m = std::max(m, d->number(i, "abs_error"));
      set(s, !d->rows.empty() && m < threshold::kEcf, format_double(m));
    }
  }
  {
    auto& s = add("Levy constant identity", "|integral - 1| <= 1e-6");
    if (auto d = read_csv(dir / "noise_levy.csv")) {
      double m = 0.0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) m = std::max(m, d->number(i, "abs_deviation"));
      set(s, !d->rows.empty() && m <= threshold::kLevy, format_double(m));
    }
  }
  {
    auto& s = add("generator consistency", "relative error < 0.05");
    if (auto d = read_csv(dir / "ou_generator.csv")) {
      const double e = d->number(0, "relative_error");
      set(s, e < threshold::kGenerator, format_double(e));
    }
  }
  {
    auto& s = add("gradient decay exponent", "slope in [-gamma - 0.15, 0]");
    if (auto d = read_csv(dir / "ou_decay_fit.csv")) {
      const double slope = d->number(0, "slope"), lo = d->number(0, "lower_bound"), hi = d->number(0, "upper_bound");
      set(s, slope >= lo && slope <= hi, format_double(slope) + " in [" + format_double(lo) + ", " + format_double(hi) + "]");
    }
  }
  {
    auto& s = add("state equation contraction", "factor <= 1.5 [F]_Lip (T - t0), <= 8 sweeps, where [F]_Lip (T - t0) <= 0.25");
    if (auto d = read_csv(dir / "state_contraction.csv")) {
      bool ok = true;
      std::size_t applicable = 0;
      double worst = 0.0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) {
        if (d->number(i, "lip_times_horizon") > threshold::kContractionRegime) continue;
        ++applicable;
        ok = ok && d->number(i, "pass") == 1.0;
        worst = std::max(worst, d->number(i, "max_contraction"));
      }
      if (applicable) set(s, ok, "max factor " + format_double(worst) + " over " + std::to_string(applicable) + " probes");
    }
  }
  {
    auto& s = add("HJB fixed point", "ratios <= 0.9, converged within 25 sweeps, u(0) = h exactly");
    auto res = read_csv(dir / "hjb_residuals.csv");
    auto sum = read_csv(dir / "hjb_summary.csv");
    if (res && sum) {
      std::map<std::string, std::string> kv;
      for (const auto& r : sum->rows) kv[r.at(0)] = r.at(1);
      double worst = 0.0;
      for (std::size_t i = 1; i < res->rows.size(); ++i) worst = std::max(worst, res->number(i, "ratio"));
      const bool converged = kv["converged"] == "1";
      const auto sweeps = static_cast<std::size_t>(std::stoull(kv["sweeps"]));
      const bool exact = kv["initial_level_max_error"] == "0";
      set(s, converged && sweeps <= threshold::kMaxSweeps && worst <= threshold::kSweepRatio && exact,
          "converged=" + kv["converged"] + ", sweeps=" + kv["sweeps"] + ", max ratio " + format_double(worst) +
              ", |u(0) - h| = " + kv["initial_level_max_error"]);
    }
  }
  {
    auto& s = add("HJB grid refinement", "|u_m - u_2m| < 2e-2 at probes");
    if (auto d = read_csv(dir / "hjb_refinement.csv")) {
      double m = 0.0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) m = std::max(m, d->number(i, "abs_diff"));
      set(s, !d->rows.empty() && m < threshold::kRefinement, format_double(m));
    }
  }
  {
    auto& s = add("Holder diagnostic", "max/min of seminorm(t_k) t_k^(gamma + gamma theta) over k >= 2 < 3");
    if (auto d = read_csv(dir / "hjb_holder.csv")) {
      double lo = INFINITY, hi = 0.0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) {
        if (d->number(i, "level") < 2) continue;
        lo = std::min(lo, d->number(i, "weighted"));
        hi = std::max(hi, d->number(i, "weighted"));
      }
      if (hi > 0.0) set(s, hi / lo < threshold::kHolderSpread, "spread " + format_double(hi / lo));
    }
  }
  {
    auto& s = add("dominance and attainment", "every verify row passes");
    if (auto d = read_csv(dir / "verify.csv")) {
      std::size_t failed = 0;
      for (std::size_t i = 0; i < d->rows.size(); ++i) failed += d->number(i, "pass") == 1.0 ? 0 : 1;
      set(s, !d->rows.empty() && failed == 0,
          std::to_string(d->rows.size() - failed) + " of " + std::to_string(d->rows.size()) + " rows pass");
    }
  }

  std::ostringstream md;
  md << "# Verification report\n\n";
  md << "Config: " << c.model.n_modes << " mode(s), alpha " << format_double(c.model.alpha) << ", gamma "
     << format_double(c.model.gamma_smooth) << ", schedule " << c.model.schedule << ", T "
     << format_double(c.problem.horizon) << ", R " << format_double(c.problem.radius) << ", seed " << c.mc.seed
     << ".\n\n";
  md << "The value identity u(T - t, x) = J(t, x, a) + E[bracket] is checked numerically here; it is a conjecture "
        "check, not a proof.\n\n";
  md << "| criterion | measured | threshold | status |\n|---|---|---|---|\n";
  bool ok = true;
  for (const auto& r : rows) {
    const char* st = r.status == CriterionStatus::pass ? "PASS" : r.status == CriterionStatus::fail ? "FAIL" : "not run";
    if (r.status == CriterionStatus::fail) ok = false;
    auto cell = [](const std::string& text) {
      std::string out;
      for (char ch : text) out += ch == '|' ? std::string("\\|") : std::string(1, ch);
      return out;
    };
    md << "| " << cell(r.name) << " | " << (r.measured.empty() ? "-" : cell(r.measured)) << " | " << cell(r.threshold)
       << " | " << st << " |\n";
  }
  std::ofstream f(dir / "report.md", std::ios::binary);
  if (!f) throw IoError("cannot write report.md");
  f << md.str();
  return ok;
}

/// Runs one subcommand and maps errors to exit codes. Nothing is written when
/// the config fails to load.
inline int run(const std::string& subcommand, const std::filesystem::path& config_path,
               const std::vector<std::string>& overrides, const std::optional<std::filesystem::path>& out_dir,
               std::ostream& log) {
  ExperimentConfig cfg;
  try {
    if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
      throw ConfigError("unknown subcommand '" + subcommand + "'");
    cfg = load_config(config_path, overrides);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  }
  const std::filesystem::path dir = out_dir ? *out_dir : cfg.output_dir;
  try {
    std::filesystem::create_directories(dir);
    if (subcommand == "check-noise") check_noise(cfg, dir);
    else if (subcommand == "check-hypothesis") check_hypothesis(cfg, dir);
    else if (subcommand == "check-ou") check_ou(cfg, dir);
    else if (subcommand == "solve-hjb") {
      if (!solve_hjb(cfg, dir, log)) return kNonConvergence;
    } else if (subcommand == "verify") verify(cfg, dir);
    else if (subcommand == "report") {
      if (!report(cfg, dir)) {
        log << "report: acceptance failures, see " << (dir / "report.md").string() << "\n";
        return kAcceptanceFailure;
      }
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DivergenceError& e) {
    log << "divergence: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const NonContractionError& e) {
    log << "non-contraction: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const std::exception& e) {
    log << subcommand << " failed: " << e.what() << "\n";
    return kOther;
  }
  return kOk;
}

}  // namespace stablehjb::app
