#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <string>

#include "stablehjb/io.hpp"
#include "stablehjb/presets.hpp"

using namespace stablehjb;

namespace {

HJBSolution tiny_solution() {
  const auto m = make_heat_dirichlet_model(2, 1.5, 0.7, BetaSchedule::critical);
  ProblemSpec p{tanh_drift(0.25, 2), gaussian_bump(1.0, 0.5), smoothed_ramp(1.0, 0.5, 2), 1.0, 0.5};
  return picard_solve(m, p, HjbGridSpec{3.0, 9, 4}, McSpec{300, 5, 1}, HjbOptions{1e-6, 25});
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-320}) {
    const auto s = format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(Csv, QuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
}

TEST(Csv, TableUsesCrlfAndDotDecimal) {
  CsvTable t({"name", "value"});
  t.row().add("x,y").add(0.5);
  t.row().add("z").add_int(-3);
  EXPECT_EQ(t.str(), "name,value\r\n\"x,y\",0.5\r\nz,-3\r\n");
  EXPECT_EQ(t.size(), 2u);
}

TEST(SolutionFile, RoundTripIsBitwise) {
  const auto s = tiny_solution();
  std::stringstream buf;
  write_solution(buf, s);
  const auto r = read_solution(buf);
  EXPECT_EQ(r.grid_fn.values, s.grid_fn.values);
  EXPECT_EQ(r.grid_fn.gradients, s.grid_fn.gradients);
  EXPECT_EQ(r.grid_fn.times, s.grid_fn.times);
  EXPECT_EQ(r.grid_fn.grid.dim(), 2u);
  EXPECT_EQ(r.grid_fn.grid.nodes_per_axis(), 9u);
  EXPECT_EQ(r.grid_fn.grid.half_width(), 3.0);
  EXPECT_EQ(r.residual_history, s.residual_history);
  EXPECT_EQ(r.c1gamma_norm, s.c1gamma_norm);
  EXPECT_EQ(r.converged, s.converged);
  EXPECT_EQ(r.max_mc_std_error, s.max_mc_std_error);
  EXPECT_EQ(r.mc.seed, 5u);
  const Point x{0.3, -1.1};
  EXPECT_EQ(r.grid_fn.value_at(3, x), s.grid_fn.value_at(3, x));
}

TEST(SolutionFile, HeaderIsJsonAfterMagicAndLength) {
  const auto s = tiny_solution();
  std::stringstream buf;
  write_solution(buf, s);
  const std::string bytes = buf.str();
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 8), "SHJBSOL1");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + i]);
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  EXPECT_EQ(header.at("dim"), 2);
  EXPECT_EQ(header.at("quadrature"), kTimeQuadratureRule);
  const std::size_t levels = s.grid_fn.levels(), nodes = s.grid_fn.grid.size();
  EXPECT_EQ(bytes.size(), 16 + len + 8 * levels * nodes * 3);
}

TEST(SolutionFile, RejectsForeignAndTruncatedFiles) {
  std::stringstream junk("not a solution at all");
  EXPECT_THROW(read_solution(junk), IoError);
  const auto s = tiny_solution();
  std::stringstream buf;
  write_solution(buf, s);
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_solution(cut), IoError);
  EXPECT_THROW(load_solution("/nonexistent/solution.bin"), IoError);
}

TEST(LevelTable, OneRowPerNode) {
  const auto s = tiny_solution();
  const auto t = level_table(s, 2);
  EXPECT_EQ(t.size(), 81u);
  EXPECT_EQ(t.header(), (std::vector<std::string>{"x0", "x1", "u", "du0", "du1"}));
  EXPECT_EQ(t.rows()[0][0], "-3");
  EXPECT_EQ(t.rows()[0][2], format_double(s.grid_fn.values[2][0]));
  EXPECT_THROW(level_table(s, 5), ParameterError);
}
