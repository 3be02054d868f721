#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stablehjb/app.hpp"

using namespace stablehjb;
namespace fs = std::filesystem;

namespace {

// A scaled-down desk config so every subcommand runs in seconds.
const char* kSmallConfig = R"(
[model]
n_modes = 1
alpha = 1.5
gamma_smooth = 0.7
schedule = "critical"

[problem]
radius = 1.0
horizon = 0.5
[problem.drift]
preset = "tanh"
scale = 0.25
[problem.running_cost]
preset = "gaussian_bump"
amplitude = 1.0
width = 0.5
[problem.terminal_cost]
preset = "smoothed_ramp"
amplitude = 1.0
width = 0.5

[grid]
box = 4.0
nodes = 17
levels = 4

[mc]
n_mc = 500
n_paths = 200
seed = 3

[solver]
tol = 1e-6
max_iter = 25
refinement_check = true

[noise]
samples = 10000

[ou]
generator_samples = 20000
decay_samples = 2000
decay_probes = 3
tail_terms = 100

[verify]
probes = [[0.0, 0.0], [0.25, 0.5]]
constants_per_axis = 3
contraction_paths = 4
)";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stablehjb_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text = kSmallConfig) {
  const auto path = dir / "config.toml";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int run(const std::string& sub, const fs::path& cfg, const fs::path& out, std::vector<std::string> sets = {}) {
  std::ostringstream log;
  return app::run(sub, cfg, sets, out, log);
}

std::vector<std::string> csv_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST(Config, DefaultsAndPresetsLoad) {
  const auto c = parse_config(kSmallConfig);
  EXPECT_EQ(c.grid.nodes, 17u);
  EXPECT_EQ(c.n_paths, 200u);
  EXPECT_EQ(c.problem.drift.preset, "tanh");
  EXPECT_EQ(c.problem.running_cost.width, 0.5);
  EXPECT_EQ(c.verify.probes.size(), 2u);
  EXPECT_EQ(c.verify.probes[1].first, 0.25);
  EXPECT_EQ(c.verify.probes[1].second, Point({0.5}));
  EXPECT_EQ(c.theta, 0.3);
  const auto p = make_problem(c.problem, 1);
  EXPECT_EQ(p.drift.lipschitz, 0.25);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_config(std::string(kSmallConfig) + "\n[extra]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[grid]\nnodez = 5\n"), ConfigError);
  EXPECT_THROW(parse_config("[problem.drift]\npreset = \"tanh\"\nwidth = 1.0\n"), ConfigError);
  EXPECT_THROW(parse_config("[problem.terminal_cost]\npreset = \"cubic\"\n"), ConfigError);
}

TEST(Config, CrossFieldConstraintsAreRechecked) {
  EXPECT_THROW(parse_config("[grid]\nnodes = 16\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nalpha = 2.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\ngamma_smooth = 0.5\n"), ConfigError);  // below 1 / alpha
  EXPECT_THROW(parse_config("[model]\nn_modes = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[verify]\nprobes = [[0.6, 0.0]]\n"), ConfigError);
  EXPECT_THROW(parse_config("[verify]\nprobes = [[0.1, 0.0, 1.0]]\n"), ConfigError);
  EXPECT_THROW(parse_config("[grid]\nnodes = \"many\"\n"), ConfigError);
  EXPECT_THROW(parse_config("this is = = not toml"), ConfigError);
}

TEST(Config, OverridesParseAsTomlValues) {
  const auto c = parse_config(kSmallConfig, {"mc.seed=99", "problem.drift.scale=0.5", "output.dir=elsewhere",
                                             "verify.probes=[[0.1, 0.2]]", "solver.refinement_check=false"});
  EXPECT_EQ(c.mc.seed, 99u);
  EXPECT_EQ(c.problem.drift.scale, 0.5);
  EXPECT_EQ(c.output_dir, fs::path("elsewhere"));
  EXPECT_EQ(c.verify.probes.size(), 1u);
  EXPECT_FALSE(c.refinement_check);
  EXPECT_THROW(parse_config(kSmallConfig, {"mc.sead=1"}), ConfigError);
  EXPECT_THROW(parse_config(kSmallConfig, {"noequals"}), ConfigError);
  EXPECT_THROW(parse_config(kSmallConfig, {"grid.nodes.deep=1"}), ConfigError);
}

TEST(Run, MissingConfigIsAConfigErrorWithoutOutputs) {
  const auto dir = scratch("missing");
  const auto out = dir / "out";
  EXPECT_EQ(run("check-noise", dir / "nope.toml", out), app::kConfig);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run("fly", write_config(dir), out), app::kConfig);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Run, FullPipelineProducesPassingReport) {
  const auto dir = scratch("pipeline");
  const auto cfg = write_config(dir);
  const auto out = dir / "out";
  for (const char* sub : {"check-noise", "check-hypothesis", "check-ou", "solve-hjb", "verify"})
    ASSERT_EQ(run(sub, cfg, out), app::kOk) << sub;
  for (const char* f : {"noise_ecf.csv", "noise_levy.csv", "hypothesis_modes.csv", "hypothesis_summary.csv",
                        "ou_generator.csv", "ou_semigroup.csv", "ou_decay.csv", "ou_decay_fit.csv", "solution.bin",
                        "hjb_residuals.csv", "hjb_summary.csv", "hjb_holder.csv", "hjb_level_final.csv",
                        "hjb_refinement.csv", "verify.csv", "state_contraction.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto before = slurp(out / "verify.csv");
  const int rc = run("report", cfg, out);
  EXPECT_TRUE(rc == app::kOk || rc == app::kAcceptanceFailure);
  EXPECT_EQ(slurp(out / "verify.csv"), before);
  const auto md = slurp(out / "report.md");
  EXPECT_NE(md.find("| dominance and attainment |"), std::string::npos);
  // Every dominance and attainment row passes on the desk problem.
  const auto verify = app::read_csv(out / "verify.csv");
  ASSERT_TRUE(verify);
  EXPECT_EQ(verify->rows.size(), 2u * (1 + 3));
  for (std::size_t i = 0; i < verify->rows.size(); ++i) EXPECT_EQ(verify->number(i, "pass"), 1.0) << i;
  const auto ecf = slurp(out / "noise_ecf.csv");
  EXPECT_EQ(ecf.substr(0, ecf.find("\r\n")), "alpha,h,real,imag,exact,abs_error");
}

TEST(Run, OutputsAreIdenticalAcrossWorkerCounts) {
  const auto dir = scratch("workers");
  const auto cfg = write_config(dir);
  std::vector<fs::path> outs;
  for (const char* w : {"1", "4", "8"}) {
    const auto out = dir / (std::string("w") + w);
    for (const char* sub : {"check-noise", "check-hypothesis", "check-ou", "solve-hjb", "verify", "report"}) {
      const int rc = run(sub, cfg, out, {std::string("mc.workers=") + w});
      ASSERT_TRUE(rc == app::kOk || rc == app::kAcceptanceFailure) << sub;
    }
    outs.push_back(out);
  }
  const auto names = csv_files(outs[0]);
  EXPECT_GE(names.size(), 14u);
  for (std::size_t k = 1; k < outs.size(); ++k) {
    EXPECT_EQ(csv_files(outs[k]), names);
    for (const auto& n : names) EXPECT_EQ(slurp(outs[0] / n), slurp(outs[k] / n)) << n;
    EXPECT_EQ(slurp(outs[0] / "solution.bin"), slurp(outs[k] / "solution.bin"));
    EXPECT_EQ(slurp(outs[0] / "report.md"), slurp(outs[k] / "report.md"));
  }
}

TEST(Run, SeedOverrideLeavesHypothesisOutputUnchanged) {
  const auto dir = scratch("seed");
  const auto cfg = write_config(dir);
  for (const char* sub : {"check-hypothesis", "check-noise"}) {
    ASSERT_EQ(run(sub, cfg, dir / "a"), app::kOk);
    ASSERT_EQ(run(sub, cfg, dir / "b", {"mc.seed=4"}), app::kOk);
  }
  EXPECT_EQ(slurp(dir / "a" / "hypothesis_modes.csv"), slurp(dir / "b" / "hypothesis_modes.csv"));
  EXPECT_EQ(slurp(dir / "a" / "hypothesis_summary.csv"), slurp(dir / "b" / "hypothesis_summary.csv"));
  EXPECT_NE(slurp(dir / "a" / "noise_ecf.csv"), slurp(dir / "b" / "noise_ecf.csv"));
  // The quadrature identity does not use random numbers.
  EXPECT_EQ(slurp(dir / "a" / "noise_levy.csv"), slurp(dir / "b" / "noise_levy.csv"));
}

TEST(Run, NonConvergenceAndDivergenceExitWithThree) {
  const auto dir = scratch("nonconv");
  const auto cfg = write_config(dir);
  EXPECT_EQ(run("solve-hjb", cfg, dir / "capped", {"solver.tol=1e-14", "solver.max_iter=2"}), app::kNonConvergence);
  EXPECT_TRUE(fs::exists(dir / "capped" / "hjb_residuals.csv"));
  EXPECT_EQ(run("verify", cfg, dir / "capped"), app::kOther);  // a non-converged solution cannot give a feedback
  EXPECT_EQ(run("solve-hjb", cfg, dir / "div",
                {"problem.drift.scale=0.0", "problem.running_cost.amplitude=0.0", "problem.terminal_cost.amplitude=10.0", "problem.terminal_cost.width=0.2", "problem.radius=100.0",
                 "problem.horizon=2.0", "grid.box=3.0", "grid.nodes=33", "grid.levels=8", "mc.n_mc=1000",
                 "mc.seed=1", "verify.probes=[[0.0, 0.0]]"}),
            app::kNonConvergence);
}

TEST(Run, VerifyWithoutSolutionFails) {
  const auto dir = scratch("nosol");
  EXPECT_EQ(run("verify", write_config(dir), dir / "out"), app::kOther);
}

TEST(Run, ReportFlagsFailuresWithExitFour) {
  const auto dir = scratch("reportfail");
  const auto out = dir / "out";
  fs::create_directories(out);
  std::ofstream(out / "ou_generator.csv") << "t,x0,difference_quotient,std_error,generator,relative_error\r\n"
                                             "0.001,0,1,0.1,2,0.5\r\n";
  EXPECT_EQ(run("report", write_config(dir), out), app::kAcceptanceFailure);
  const auto md = slurp(out / "report.md");
  EXPECT_NE(md.find("| generator consistency | 0.5 | relative error < 0.05 | FAIL |"), std::string::npos);
  EXPECT_NE(md.find("not run"), std::string::npos);
}

TEST(Binary, ExitCodesFromTheExecutable) {
  const auto dir = scratch("binary");
  const auto cfg = write_config(dir);
  const std::string exe = STABLEHJB_CLI_PATH;
  auto sh = [](const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(sh(exe + " check-hypothesis --config " + cfg.string() + " --out " + (dir / "o").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o" / "hypothesis_summary.csv"));
  EXPECT_EQ(sh(exe + " check-hypothesis --config " + (dir / "absent.toml").string()), 2);
  EXPECT_EQ(sh(exe + " check-hypothesis"), 2);
  EXPECT_EQ(sh(exe + " check-hypothesis --config " + cfg.string() + " --set grid.nodes=4 --out " +
               (dir / "p").string()),
            2);
  EXPECT_FALSE(fs::exists(dir / "p"));
}
