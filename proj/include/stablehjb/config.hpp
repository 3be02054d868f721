#pragma once

// Experiment configuration read from a TOML file. Every table rejects keys it
// does not know, and the inner modules' constraints are re-checked at load.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <toml++/toml.hpp>

#include "stablehjb/error.hpp"
#include "stablehjb/hjb.hpp"
#include "stablehjb/presets.hpp"
#include "stablehjb/spectrum.hpp"
#include "stablehjb/state.hpp"

namespace stablehjb {

/// A preset id plus its parameters. Unused parameters keep their defaults.
struct FunctionSpec {
  std::string preset = "zero";
  double value = 0.0;
  double amplitude = 1.0;
  double width = 1.0;
  double scale = 1.0;
  double steepness = 1.0;
  std::size_t coord = 0;
  Point center;
};

struct DriftSpec {
  std::string preset = "zero";
  double scale = 0.0;
  Point value;
};

struct ModelConfig {
  std::size_t n_modes = 1;
  double alpha = 1.5;
  double gamma_smooth = 0.7;
  std::string schedule = "critical";  // critical | cylindrical | custom
  std::vector<double> gammas, betas;  // custom only
  double c_bar = 1.0;
};

struct ProblemConfig {
  DriftSpec drift;
  FunctionSpec running_cost;
  FunctionSpec terminal_cost;
  double radius = 1.0;
  double horizon = 0.5;
};

struct NoiseConfig {
  std::vector<double> alphas{1.2, 1.5, 1.8};
  std::vector<double> h_values{0.5, 1.0, 2.0};
  std::size_t samples = 1000000;
};

struct OuConfig {
  FunctionSpec generator_phi{"compact_bump", 0.0, 1.0, 0.5, 1.0, 1.0, 0, {}};
  Point generator_x;  // empty means the origin
  double generator_t = 1e-3;
  std::size_t generator_samples = 1000000;
  FunctionSpec decay_phi{"steep_sigmoid", 0.0, 1.0, 1.0, 1.0, 50.0, 0, {}};
  double decay_t_min = 1e-3;
  double decay_t_max = 1.0;
  std::size_t decay_times = 8;
  std::size_t decay_probes = 17;  // evenly spaced on [-decay_probe_box, decay_probe_box] along e_1
  double decay_probe_box = 1.0;
  std::size_t decay_samples = 100000;
  std::size_t tail_terms = 100000;  // for check-hypothesis
};

struct VerifyConfig {
  std::vector<std::pair<double, Point>> probes;  // (t0, x)
  double step = 1.0 / 64;
  std::size_t constants_per_axis = 9;
  std::size_t contraction_paths = 100;
  double picard_tol = 1e-10;
  std::size_t picard_max = 50;
};

struct ExperimentConfig {
  ModelConfig model;
  ProblemConfig problem;
  HjbGridSpec grid;
  McSpec mc;
  std::size_t n_paths = 10000;
  HjbOptions solver;
  double theta = 0.3;
  bool refinement_check = false;
  NoiseConfig noise;
  OuConfig ou;
  VerifyConfig verify;
  std::filesystem::path output_dir = "out";
};

namespace detail {

inline void expect_keys(const toml::table& t, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, node] : t) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key.str() == a;
    if (!ok) throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" + std::string(where) + "]");
  }
}

inline const toml::table* sub_table(const toml::table& t, std::string_view key, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return nullptr;
  const auto* tbl = node->as_table();
  if (!tbl) throw ConfigError("[" + std::string(where) + "] " + std::string(key) + " must be a table");
  return tbl;
}

inline void read(const toml::table& t, std::string_view key, double& out, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return;
  const auto v = node->value<double>();
  if (!v || node->is_boolean()) throw ConfigError(std::string(where) + "." + std::string(key) + " must be a number");
  out = *v;
}

inline void read(const toml::table& t, std::string_view key, std::uint64_t& out, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return;
  const auto* i = node->as_integer();
  if (!i || i->get() < 0)
    throw ConfigError(std::string(where) + "." + std::string(key) + " must be a nonnegative integer");
  out = static_cast<std::uint64_t>(i->get());
}

inline void read(const toml::table& t, std::string_view key, unsigned& out, std::string_view where) {
  std::uint64_t v = out;
  read(t, key, v, where);
  if (v < 1) throw ConfigError(std::string(where) + "." + std::string(key) + " must be at least 1");
  out = static_cast<unsigned>(v);
}

inline void read(const toml::table& t, std::string_view key, bool& out, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return;
  const auto v = node->value<bool>();
  if (!v || !node->is_boolean()) throw ConfigError(std::string(where) + "." + std::string(key) + " must be a boolean");
  out = *v;
}

inline void read(const toml::table& t, std::string_view key, std::string& out, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return;
  const auto v = node->value<std::string>();
  if (!v) throw ConfigError(std::string(where) + "." + std::string(key) + " must be a string");
  out = *v;
}

inline std::vector<double> number_array(const toml::node& node, std::string_view what) {
  const auto* arr = node.as_array();
  if (!arr) throw ConfigError(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *arr) {
    const auto v = e.value<double>();
    if (!v || e.is_boolean()) throw ConfigError(std::string(what) + " must be an array of numbers");
    out.push_back(*v);
  }
  return out;
}

inline void read(const toml::table& t, std::string_view key, std::vector<double>& out, std::string_view where) {
  const auto* node = t.get(key);
  if (!node) return;
  out = number_array(*node, std::string(where) + "." + std::string(key));
}

inline FunctionSpec read_function(const toml::table& t, std::string where) {
  FunctionSpec f;
  read(t, "preset", f.preset, where);
  if (f.preset == "zero") {
    expect_keys(t, where, {"preset"});
  } else if (f.preset == "constant") {
    expect_keys(t, where, {"preset", "value"});
    read(t, "value", f.value, where);
  } else if (f.preset == "gaussian_bump") {
    expect_keys(t, where, {"preset", "amplitude", "width", "center"});
    read(t, "amplitude", f.amplitude, where);
    read(t, "width", f.width, where);
    read(t, "center", f.center, where);
  } else if (f.preset == "smoothed_ramp") {
    expect_keys(t, where, {"preset", "amplitude", "width"});
    read(t, "amplitude", f.amplitude, where);
    read(t, "width", f.width, where);
  } else if (f.preset == "smoothed_linear") {
    expect_keys(t, where, {"preset", "coord", "scale"});
    read(t, "coord", f.coord, where);
    read(t, "scale", f.scale, where);
  } else if (f.preset == "tanh_coordinate") {
    expect_keys(t, where, {"preset", "coord"});
    read(t, "coord", f.coord, where);
  } else if (f.preset == "steep_sigmoid") {
    expect_keys(t, where, {"preset", "coord", "steepness"});
    read(t, "coord", f.coord, where);
    read(t, "steepness", f.steepness, where);
  } else if (f.preset == "compact_bump") {
    expect_keys(t, where, {"preset", "coord", "width"});
    read(t, "coord", f.coord, where);
    read(t, "width", f.width, where);
  } else {
    throw ConfigError("unknown function preset '" + f.preset + "' in [" + where + "]");
  }
  return f;
}

inline DriftSpec read_drift(const toml::table& t, std::string where) {
  DriftSpec d;
  read(t, "preset", d.preset, where);
  if (d.preset == "zero") {
    expect_keys(t, where, {"preset"});
  } else if (d.preset == "tanh") {
    expect_keys(t, where, {"preset", "scale"});
    read(t, "scale", d.scale, where);
  } else if (d.preset == "constant") {
    expect_keys(t, where, {"preset", "value"});
    read(t, "value", d.value, where);
  } else {
    throw ConfigError("unknown drift preset '" + d.preset + "' in [" + where + "]");
  }
  return d;
}

}  // namespace detail

inline TestFunction make_function(const FunctionSpec& f, std::size_t dim) {
  auto check_coord = [&] {
    if (f.coord >= dim) throw ConfigError("preset coordinate " + std::to_string(f.coord) + " out of range");
  };
  auto check_positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
  };
  if (f.preset == "zero") return zero_function();
  if (f.preset == "constant") return constant_function(f.value);
  if (f.preset == "gaussian_bump") {
    check_positive(f.width, "width");
    if (!f.center.empty() && f.center.size() != dim) throw ConfigError("gaussian_bump center has wrong dimension");
    return gaussian_bump(f.amplitude, f.width, f.center);
  }
  if (f.preset == "smoothed_ramp") {
    check_positive(f.width, "width");
    return smoothed_ramp(f.amplitude, f.width, dim);
  }
  if (f.preset == "smoothed_linear") {
    check_coord();
    check_positive(f.scale, "scale");
    return smoothed_linear(f.coord, f.scale);
  }
  if (f.preset == "tanh_coordinate") {
    check_coord();
    return tanh_coordinate(f.coord);
  }
  if (f.preset == "steep_sigmoid") {
    check_coord();
    check_positive(f.steepness, "steepness");
    return steep_sigmoid(f.coord, f.steepness);
  }
  if (f.preset == "compact_bump") {
    check_coord();
    check_positive(f.width, "width");
    return compact_bump(f.coord, f.width);
  }
  throw ConfigError("unknown function preset '" + f.preset + "'");
}

inline Drift make_drift(const DriftSpec& d, std::size_t dim) {
  if (d.preset == "zero") return zero_drift();
  if (d.preset == "tanh") return tanh_drift(d.scale, dim);
  if (d.preset == "constant") {
    if (d.value.size() != dim) throw ConfigError("constant drift has wrong dimension");
    return constant_drift(d.value);
  }
  throw ConfigError("unknown drift preset '" + d.preset + "'");
}

inline SpectralModel make_model(const ModelConfig& m) {
  try {
    if (m.schedule == "critical") return make_heat_dirichlet_model(m.n_modes, m.alpha, m.gamma_smooth, BetaSchedule::critical);
    if (m.schedule == "cylindrical")
      return make_heat_dirichlet_model(m.n_modes, m.alpha, m.gamma_smooth, BetaSchedule::cylindrical);
    if (m.schedule == "custom") {
      if (m.gammas.size() != m.n_modes || m.betas.size() != m.n_modes)
        throw ConfigError("custom schedule needs n_modes gammas and betas");
      return make_custom_model(m.gammas, m.betas, m.alpha, m.gamma_smooth, m.c_bar);
    }
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  throw ConfigError("unknown schedule '" + m.schedule + "'");
}

inline ProblemSpec make_problem(const ProblemConfig& p, std::size_t dim) {
  return ProblemSpec{make_drift(p.drift, dim), make_function(p.running_cost, dim), make_function(p.terminal_cost, dim),
                     p.radius, p.horizon};
}

/// Cross-field checks; throws ConfigError.
inline void validate_config(const ExperimentConfig& c) {
  const auto model = make_model(c.model);
  const std::size_t dim = model.n_modes();
  const auto problem = make_problem(c.problem, dim);
  try {
    validate_problem(problem, dim, RngStream(c.mc.seed));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  if (dim > TensorGrid::kMaxDim) throw ConfigError("grids support at most 3 modes");
  if (c.grid.nodes < 3 || c.grid.nodes % 2 == 0) throw ConfigError("grid.nodes must be odd and at least 3");
  if (!(c.grid.box > 0.0)) throw ConfigError("grid.box must be positive");
  if (c.grid.levels < 1) throw ConfigError("grid.levels must be at least 1");
  if (c.mc.n_mc < 2 || c.n_paths < 2) throw ConfigError("mc.n_mc and mc.n_paths must be at least 2");
  if (!(c.solver.tol > 0.0) || c.solver.max_iter < 1) throw ConfigError("solver.tol and solver.max_iter must be positive");
  if (!(c.theta > 0.0 && c.theta < 1.0)) throw ConfigError("solver.theta must lie in (0, 1)");
  for (double a : c.noise.alphas)
    if (!(a > 1.0 && a < 2.0)) throw ConfigError("noise.alphas entries must lie in (1, 2)");
  if (c.noise.samples < 10000) throw ConfigError("noise.samples must be at least 1e4");
  if (!c.ou.generator_x.empty() && c.ou.generator_x.size() != dim) throw ConfigError("ou.generator_x has wrong dimension");
  if (!(c.ou.generator_t > 0.0)) throw ConfigError("ou.generator_t must be positive");
  if (!(c.ou.decay_t_min > 0.0 && c.ou.decay_t_max > c.ou.decay_t_min) || c.ou.decay_times < 2)
    throw ConfigError("ou decay times must satisfy 0 < t_min < t_max with at least 2 points");
  if (c.ou.decay_probes < 1) throw ConfigError("ou.decay_probes must be at least 1");
  make_function(c.ou.generator_phi, dim);
  make_function(c.ou.decay_phi, dim);
  if (!(c.verify.step > 0.0)) throw ConfigError("verify.step must be positive");
  if (c.verify.constants_per_axis < 1) throw ConfigError("verify.constants_per_axis must be at least 1");
  for (const auto& [t0, x] : c.verify.probes) {
    if (!(t0 >= 0.0 && t0 < c.problem.horizon)) throw ConfigError("verify probe t0 must lie in [0, T)");
    if (x.size() != dim) throw ConfigError("verify probe point has wrong dimension");
  }
}

/// Applies "a.b.c=value" to the document. The value is parsed as TOML and
/// falls back to a plain string.
inline void apply_override(toml::table& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override must look like key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  toml::table* table = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    if (dot == std::string::npos) break;
    const std::string part = key.substr(start, dot - start);
    auto* node = table->get(part);
    if (!node) {
      table->insert(part, toml::table{});
      node = table->get(part);
    }
    table = node->as_table();
    if (!table) throw ConfigError("override path '" + key + "' crosses a non-table");
    start = dot + 1;
  }
  const std::string leaf = key.substr(start);
  if (leaf.empty()) throw ConfigError("override key is empty");
  try {
    auto parsed = toml::parse("v = " + value);
    table->insert_or_assign(leaf, std::move(*parsed.get("v")));
  } catch (const toml::parse_error&) {
    table->insert_or_assign(leaf, value);
  }
}

inline ExperimentConfig config_from_table(const toml::table& doc) {
  using detail::read;
  ExperimentConfig c;
  detail::expect_keys(doc, "root", {"model", "problem", "grid", "mc", "solver", "noise", "ou", "verify", "output"});

  if (const auto* t = detail::sub_table(doc, "model", "root")) {
    detail::expect_keys(*t, "model", {"n_modes", "alpha", "gamma_smooth", "schedule", "gammas", "betas", "c_bar"});
    read(*t, "n_modes", c.model.n_modes, "model");
    read(*t, "alpha", c.model.alpha, "model");
    read(*t, "gamma_smooth", c.model.gamma_smooth, "model");
    read(*t, "schedule", c.model.schedule, "model");
    read(*t, "gammas", c.model.gammas, "model");
    read(*t, "betas", c.model.betas, "model");
    read(*t, "c_bar", c.model.c_bar, "model");
  }
  if (const auto* t = detail::sub_table(doc, "problem", "root")) {
    detail::expect_keys(*t, "problem", {"radius", "horizon", "drift", "running_cost", "terminal_cost"});
    read(*t, "radius", c.problem.radius, "problem");
    read(*t, "horizon", c.problem.horizon, "problem");
    if (const auto* d = detail::sub_table(*t, "drift", "problem")) c.problem.drift = detail::read_drift(*d, "problem.drift");
    if (const auto* g = detail::sub_table(*t, "running_cost", "problem"))
      c.problem.running_cost = detail::read_function(*g, "problem.running_cost");
    if (const auto* h = detail::sub_table(*t, "terminal_cost", "problem"))
      c.problem.terminal_cost = detail::read_function(*h, "problem.terminal_cost");
  }
  if (const auto* t = detail::sub_table(doc, "grid", "root")) {
    detail::expect_keys(*t, "grid", {"box", "nodes", "levels"});
    read(*t, "box", c.grid.box, "grid");
    read(*t, "nodes", c.grid.nodes, "grid");
    read(*t, "levels", c.grid.levels, "grid");
  }
  if (const auto* t = detail::sub_table(doc, "mc", "root")) {
    detail::expect_keys(*t, "mc", {"n_mc", "n_paths", "seed", "workers"});
    read(*t, "n_mc", c.mc.n_mc, "mc");
    read(*t, "n_paths", c.n_paths, "mc");
    read(*t, "seed", c.mc.seed, "mc");
    read(*t, "workers", c.mc.workers, "mc");
  }
  if (const auto* t = detail::sub_table(doc, "solver", "root")) {
    detail::expect_keys(*t, "solver", {"tol", "max_iter", "theta", "fresh_noise", "refinement_check"});
    read(*t, "tol", c.solver.tol, "solver");
    read(*t, "max_iter", c.solver.max_iter, "solver");
    read(*t, "theta", c.theta, "solver");
    read(*t, "fresh_noise", c.solver.fresh_noise, "solver");
    read(*t, "refinement_check", c.refinement_check, "solver");
  }
  if (const auto* t = detail::sub_table(doc, "noise", "root")) {
    detail::expect_keys(*t, "noise", {"alphas", "h", "samples"});
    read(*t, "alphas", c.noise.alphas, "noise");
    read(*t, "h", c.noise.h_values, "noise");
    read(*t, "samples", c.noise.samples, "noise");
  }
  if (const auto* t = detail::sub_table(doc, "ou", "root")) {
    detail::expect_keys(*t, "ou", {"generator_phi", "generator_x", "generator_t", "generator_samples", "decay_phi",
                                   "decay_t_min", "decay_t_max", "decay_times", "decay_probes", "decay_probe_box",
                                   "decay_samples", "tail_terms"});
    if (const auto* f = detail::sub_table(*t, "generator_phi", "ou"))
      c.ou.generator_phi = detail::read_function(*f, "ou.generator_phi");
    if (const auto* f = detail::sub_table(*t, "decay_phi", "ou")) c.ou.decay_phi = detail::read_function(*f, "ou.decay_phi");
    read(*t, "generator_x", c.ou.generator_x, "ou");
    read(*t, "generator_t", c.ou.generator_t, "ou");
    read(*t, "generator_samples", c.ou.generator_samples, "ou");
    read(*t, "decay_t_min", c.ou.decay_t_min, "ou");
    read(*t, "decay_t_max", c.ou.decay_t_max, "ou");
    read(*t, "decay_times", c.ou.decay_times, "ou");
    read(*t, "decay_probes", c.ou.decay_probes, "ou");
    read(*t, "decay_probe_box", c.ou.decay_probe_box, "ou");
    read(*t, "decay_samples", c.ou.decay_samples, "ou");
    read(*t, "tail_terms", c.ou.tail_terms, "ou");
  }
  if (const auto* t = detail::sub_table(doc, "verify", "root")) {
    detail::expect_keys(*t, "verify", {"probes", "step", "constants_per_axis", "contraction_paths", "picard_tol",
                                       "picard_max"});
    if (const auto* node = t->get("probes")) {
      const auto* arr = node->as_array();
      if (!arr) throw ConfigError("verify.probes must be an array of [t0, x...] arrays");
      for (const auto& e : *arr) {
        const auto v = detail::number_array(e, "verify.probes entry");
        if (v.size() < 2) throw ConfigError("verify.probes entries need t0 and a point");
        c.verify.probes.emplace_back(v[0], Point(v.begin() + 1, v.end()));
      }
    }
    read(*t, "step", c.verify.step, "verify");
    read(*t, "constants_per_axis", c.verify.constants_per_axis, "verify");
    read(*t, "contraction_paths", c.verify.contraction_paths, "verify");
    read(*t, "picard_tol", c.verify.picard_tol, "verify");
    read(*t, "picard_max", c.verify.picard_max, "verify");
  }
  if (const auto* t = detail::sub_table(doc, "output", "root")) {
    detail::expect_keys(*t, "output", {"dir"});
    std::string dir = c.output_dir.string();
    read(*t, "dir", dir, "output");
    c.output_dir = dir;
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  toml::table doc;
  try {
    doc = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse " << path.string() << ": " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_table(doc);
}

inline ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {}) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("cannot parse config: ") + std::string(e.description()));
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_table(doc);
}

}  // namespace stablehjb
