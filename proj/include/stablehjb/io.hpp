#pragma once

// Solution files: "SHJBSOL1", a little-endian uint64 header length, a JSON
// header, then float64 little-endian values and gradients level by level.
// CSV output uses shortest round-trip decimal formatting.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stablehjb/error.hpp"
#include "stablehjb/hjb.hpp"

namespace stablehjb {

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// RFC 4180 field quoting.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Accumulates rows and writes them with CRLF line endings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(std::string_view s) {
    rows_.back().push_back(csv_field(s));
    return *this;
  }
  CsvTable& add(double v) { return add(format_double(v)); }
  CsvTable& add_int(long long v) { return add(std::to_string(v)); }

  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += "\r\n";
    };
    std::vector<std::string> h;
    for (const auto& c : header_) h.push_back(csv_field(c));
    line(h);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

namespace detail {

inline constexpr char kSolutionMagic[8] = {'S', 'H', 'J', 'B', 'S', 'O', 'L', '1'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    const double le = to_little(d);
    out.write(reinterpret_cast<const char*>(&le), sizeof le);
  }
}

inline void read_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    double le;
    if (!in.read(reinterpret_cast<char*>(&le), sizeof le)) throw IoError("solution file truncated");
    d = to_little(le);
  }
}

}  // namespace detail

inline nlohmann::json solution_header(const HJBSolution& s) {
  const auto& u = s.grid_fn;
  nlohmann::json j;
  j["format"] = "stablehjb-solution";
  j["version"] = 1;
  j["dim"] = u.grid.dim();
  j["box"] = u.grid.half_width();
  j["nodes_per_axis"] = u.grid.nodes_per_axis();
  j["times"] = u.times;
  j["gamma_smooth"] = u.gamma_smooth;
  j["gradient_budget"] = u.gradient_budget;
  j["horizon"] = s.horizon;
  j["radius"] = s.radius;
  j["converged"] = s.converged;
  j["residual_history"] = s.residual_history;
  j["c1gamma_norm"] = s.c1gamma_norm;
  j["quadrature"] = s.quadrature;
  j["mc"] = {{"n_mc", s.mc.n_mc}, {"seed", s.mc.seed}};
  j["clipped_fraction"] = s.clipped_fraction;
  j["max_mc_std_error"] = s.max_mc_std_error;
  j["contraction_factor"] = s.contraction_factor;
  j["analytic_contraction_factor"] = s.analytic_contraction_factor;
  j["layout"] = "values[level][node] then gradients[level][node][axis], axis 0 fastest in node order, float64 LE";
  return j;
}

inline void write_solution(std::ostream& out, const HJBSolution& s) {
  const std::string header = solution_header(s).dump();
  out.write(detail::kSolutionMagic, sizeof detail::kSolutionMagic);
  const std::uint64_t len = detail::to_little(static_cast<std::uint64_t>(header.size()));
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& v : s.grid_fn.values) detail::write_doubles(out, v);
  for (const auto& g : s.grid_fn.gradients) detail::write_doubles(out, g);
}

inline void save_solution(const std::filesystem::path& path, const HJBSolution& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  write_solution(f, s);
}

inline HJBSolution read_solution(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, detail::kSolutionMagic, sizeof magic) != 0)
    throw IoError("not a solution file");
  std::uint64_t len;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) throw IoError("solution file truncated");
  len = detail::to_little(len);
  if (len > (1ULL << 30)) throw IoError("solution header too large");
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) throw IoError("solution file truncated");

  HJBSolution s;
  try {
    const auto j = nlohmann::json::parse(header);
    auto& u = s.grid_fn;
    u.grid = TensorGrid(j.at("dim").get<std::size_t>(), j.at("box").get<double>(),
                        j.at("nodes_per_axis").get<std::size_t>());
    u.times = j.at("times").get<std::vector<double>>();
    u.gamma_smooth = j.at("gamma_smooth").get<double>();
    u.gradient_budget = j.at("gradient_budget").get<double>();
    s.horizon = j.at("horizon").get<double>();
    s.radius = j.at("radius").get<double>();
    s.converged = j.at("converged").get<bool>();
    s.residual_history = j.at("residual_history").get<std::vector<double>>();
    s.c1gamma_norm = j.at("c1gamma_norm").get<double>();
    s.quadrature = j.at("quadrature").get<std::string>();
    s.mc.n_mc = j.at("mc").at("n_mc").get<std::size_t>();
    s.mc.seed = j.at("mc").at("seed").get<std::uint64_t>();
    s.clipped_fraction = j.at("clipped_fraction").get<double>();
    s.max_mc_std_error = j.at("max_mc_std_error").get<double>();
    s.contraction_factor = j.at("contraction_factor").get<double>();
    s.analytic_contraction_factor = j.at("analytic_contraction_factor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad solution header: ") + e.what());
  }
  auto& u = s.grid_fn;
  if (u.times.size() < 2) throw IoError("solution has fewer than two time levels");
  u.values.assign(u.times.size(), std::vector<double>(u.grid.size()));
  u.gradients.assign(u.times.size(), std::vector<double>(u.grid.size() * u.grid.dim()));
  for (auto& v : u.values) detail::read_doubles(in, v);
  for (auto& g : u.gradients) detail::read_doubles(in, g);
  return s;
}

inline HJBSolution load_solution(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  return read_solution(f);
}

/// One row per node: coordinates, u, Du.
inline CsvTable level_table(const HJBSolution& s, std::size_t level) {
  const auto& u = s.grid_fn;
  if (level >= u.levels()) throw ParameterError("level out of range");
  const std::size_t dim = u.grid.dim();
  std::vector<std::string> header;
  for (std::size_t d = 0; d < dim; ++d) header.push_back("x" + std::to_string(d));
  header.push_back("u");
  for (std::size_t d = 0; d < dim; ++d) header.push_back("du" + std::to_string(d));
  CsvTable t(header);
  Point x(dim);
  for (std::size_t i = 0; i < u.grid.size(); ++i) {
    u.grid.node(i, x);
    t.row();
    for (double v : x) t.add(v);
    t.add(u.values[level][i]);
    for (std::size_t d = 0; d < dim; ++d) t.add(u.gradients[level][i * dim + d]);
  }
  return t;
}

}  // namespace stablehjb
