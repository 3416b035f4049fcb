#include "tvflcm/io.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace tvflcm {
namespace {

using nlohmann::json;

[[noreturn]] void fail_at(const std::string& source, std::size_t line, std::size_t column, const std::string& what) {
  throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what);
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto d = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(d.size()) != r * c) throw ValidationError("model file: matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(d.data(), r, c);
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vec_from(const json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

json margin_json(const MarginBasis& m) {
  json j;
  switch (m.kind()) {
    case MarginKind::spline:
      j["kind"] = "spline";
      j["family"] = std::string(to_string(m.spec().family()));
      j["domain"] = {m.domain().lo, m.domain().hi};
      j["knots"] = m.spec().knots();
      break;
    case MarginKind::constant:
      j["kind"] = "constant";
      j["domain"] = {m.domain().lo, m.domain().hi};
      break;
    case MarginKind::indicator:
      j["kind"] = "indicator";
      j["levels"] = m.levels();
      break;
  }
  return j;
}

MarginBasis margin_from(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "indicator") return MarginBasis::indicator(j.at("levels").get<std::vector<double>>());
  const Interval dom{j.at("domain").at(0).get<double>(), j.at("domain").at(1).get<double>()};
  if (kind == "constant") return MarginBasis::constant(dom);
  if (kind == "spline")
    return MarginBasis::spline(BasisSpec(spline_family_from_string(j.at("family").get<std::string>()), dom,
                                         j.at("knots").get<std::vector<double>>()));
  throw ValidationError("model file: unknown margin kind '" + kind + "'");
}

// JSON has no infinity; windows use null for an unbounded window.
json windows_json(const std::vector<double>& w) {
  json a = json::array();
  for (double x : w) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

std::vector<double> windows_from(const json& j) {
  std::vector<double> w;
  for (const auto& x : j) w.push_back(x.is_null() ? INFINITY : x.get<double>());
  return w;
}

}  // namespace

GridDefinition resolve_grid(const std::string& option) {
  if (starts_with(option, "uniform:")) {
    double j = 0;
    if (!parse_double(std::string_view(option).substr(8), j) || j < 2 || j != std::floor(j) || j > 1e7)
      throw ValidationError("--grid uniform:J needs an integer J >= 2, got '" + option + "'");
    GridDefinition g;
    g.grid = midpoint_grid(static_cast<int>(j), {0.0, 1.0});
    g.weights = quadrature_weights(g.grid);
    return g;
  }
  std::ifstream in(option);
  if (!in) throw ValidationError("cannot open grid file '" + option + "'");
  return read_grid_sidecar(in, option);
}

GridDefinition read_grid_sidecar(std::istream& in, const std::string& source) {
  GridDefinition g;
  bool weighted = false;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    const auto f = split_fields(t);
    double u = 0, w = 0;
    if (!parse_double(trim(f[0]), u)) {
      if (g.grid.empty() && ln == 1) continue;
      fail_at(source, ln, 1, "grid abscissa '" + std::string(f[0]) + "' is not a number");
    }
    if (f.size() > 2) fail_at(source, ln, 3, "expected 'u' or 'u,w'");
    if (f.size() == 2) {
      if (!parse_double(trim(f[1]), w) || !(w > 0)) fail_at(source, ln, 2, "weight must be a positive number");
      if (!g.grid.empty() && !weighted) fail_at(source, ln, 2, "weights given for some points only");
      weighted = true;
      g.weights.push_back(w);
    } else if (weighted) {
      fail_at(source, ln, 2, "weights given for some points only");
    }
    if (!g.grid.empty() && !(u > g.grid.back())) fail_at(source, ln, 1, "grid must be strictly increasing");
    g.grid.push_back(u);
  }
  if (g.grid.size() < 2) throw ValidationError(source + ": grid needs at least two points");
  if (!weighted) g.weights = quadrature_weights(g.grid);
  return g;
}

FunctionalDataset read_functional_csv(std::istream& in, const GridDefinition& grid, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty file");
  const auto header = split_fields(line);
  if (header.size() < 4 || trim(header[0]) != "id" || trim(header[1]) != "time" || trim(header[2]) != "delta")
    fail_at(source, 1, 1, "header must start with id,time,delta");
  FunctionalDataset d;
  std::size_t first_z = header.size();
  for (std::size_t c = 3; c < header.size(); ++c) {
    const std::string_view h = trim(header[c]);
    if (starts_with(h, "z_")) {
      first_z = c;
      break;
    }
    d.scalar_names.emplace_back(h);
  }
  const std::size_t j = header.size() - first_z;
  if (j == 0) fail_at(source, 1, header.size(), "no functional columns (z_0001..)");
  for (std::size_t c = first_z; c < header.size(); ++c) {
    char want[32];
    std::snprintf(want, sizeof want, "z_%04zu", c - first_z + 1);
    if (trim(header[c]) != want) fail_at(source, 1, c + 1, "expected column '" + std::string(want) + "'");
  }
  if (j != grid.grid.size())
    throw ValidationError(source + ": " + std::to_string(j) + " functional columns but the grid has " +
                          std::to_string(grid.grid.size()) + " points");
  std::vector<std::vector<double>> rows;
  std::size_t ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      fail_at(source, ln, std::min(f.size(), header.size()) + 1,
              "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    std::vector<double> v(f.size());
    for (std::size_t c = 0; c < f.size(); ++c)
      if (!parse_double(trim(f[c]), v[c]) || !std::isfinite(v[c]))
        fail_at(source, ln, c + 1, "field '" + std::string(trim(f[c])) + "' is not a finite number");
    SurvivalRecord r;
    if (v[0] != std::floor(v[0]) || std::abs(v[0]) > 9.0e15) fail_at(source, ln, 1, "id must be an integer");
    r.id = static_cast<std::int64_t>(v[0]);
    r.y = v[1];
    if (!(r.y > 0)) fail_at(source, ln, 2, "row " + std::to_string(ln - 1) + " (id " + std::to_string(r.id) +
                                                 "): time must be positive, got " + format_double(r.y));
    if (v[2] != 0 && v[2] != 1) fail_at(source, ln, 3, "delta must be 0 or 1");
    r.delta = static_cast<int>(v[2]);
    r.x.assign(v.begin() + 3, v.begin() + static_cast<std::ptrdiff_t>(first_z));
    d.records.push_back(std::move(r));
    rows.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(first_z), v.end());
  }
  if (d.records.empty()) throw ValidationError(source + ": no data rows");
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t v = 0; v < j; ++v) z(i, v) = rows[i][v];
  d.z.values = std::move(z);
  d.z.grid = grid.grid;
  d.z.weights = grid.weights;
  d.z.validate();
  validate_records(d.records);
  return d;
}

FunctionalDataset read_functional_file(const std::string& path, const GridDefinition& grid) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  return read_functional_csv(in, grid, path);
}

void write_functional_csv(std::ostream& out, const FunctionalDataset& d) {
  out << "id,time,delta";
  for (const auto& n : d.scalar_names) out << ',' << n;
  char name[32];
  for (int v = 0; v < d.z.grid_size(); ++v) {
    std::snprintf(name, sizeof name, "z_%04d", v + 1);
    out << ',' << name;
  }
  out << '\n';
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    out << r.id << ',' << format_double(r.y) << ',' << r.delta;
    for (double x : r.x) out << ',' << format_double(x);
    for (int v = 0; v < d.z.grid_size(); ++v) out << ',' << format_double(d.z.values(i, v));
    out << '\n';
  }
}

void write_grid_sidecar(std::ostream& out, const GridDefinition& g) {
  out << "u,w\n";
  for (std::size_t v = 0; v < g.grid.size(); ++v) out << format_double(g.grid[v]) << ',' << format_double(g.weights[v]) << '\n';
}

void save_model(std::ostream& out, const RouteFit& f) {
  json j;
  j["format"] = "tvflcm-model-1";
  j["route"] = std::string(to_string(f.route));
  j["u_margin"] = margin_json(f.u_margin);
  j["t_margin"] = margin_json(f.t_margin);
  j["scalar_margin"] = margin_json(f.scalar_margin);
  j["layout"] = {{"scalar_count", f.layout.scalar_count},
                 {"scalar_offset", f.layout.scalar_offset},
                 {"scalar_size", f.layout.scalar_size},
                 {"gamma_offset", f.layout.gamma_offset},
                 {"gamma_size", f.layout.gamma_size}};
  j["constraint_transform"] = matrix_json(f.constraint_transform);
  j["constraint_rank"] = f.constraint_rank;
  j["coefficients"] = vec(f.fit.coefficients);
  j["covariance"] = matrix_json(f.fit.covariance);
  j["lambdas"] = f.fit.lambdas;
  j["log10_lambdas"] = f.fit.log10_lambdas;
  j["edf"] = f.fit.edf;
  j["edf_total"] = f.fit.edf_total;
  j["loglik"] = f.fit.loglik;
  j["reml"] = f.fit.reml.value;
  j["iterations"] = f.fit.convergence.iterations;
  j["grid"] = f.grid;
  j["weights"] = f.weights;
  j["strata_times"] = f.strata_times;
  j["windows"] = windows_json(f.windows);
  j["z_means"] = matrix_json(f.z_means);
  json base = json::array();
  for (const auto& h : f.baseline) base.push_back({{"times", h.times}, {"jumps", h.jumps}, {"cumulative", h.cumulative}});
  j["baseline"] = base;
  j["rows"] = f.rows;
  j["warnings"] = f.warnings;
  out << j.dump(1) << '\n';
}

RouteFit load_model(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  try {
    if (j.value("format", "") != "tvflcm-model-1") throw ValidationError("model file: unrecognised format");
    RouteFit f;
    f.route = route_from_string(j.at("route").get<std::string>());
    f.u_margin = margin_from(j.at("u_margin"));
    f.t_margin = margin_from(j.at("t_margin"));
    f.scalar_margin = margin_from(j.at("scalar_margin"));
    const json& l = j.at("layout");
    f.layout.scalar_count = l.at("scalar_count");
    f.layout.scalar_offset = l.at("scalar_offset");
    f.layout.scalar_size = l.at("scalar_size");
    f.layout.gamma_offset = l.at("gamma_offset");
    f.layout.gamma_size = l.at("gamma_size");
    f.constraint_transform = matrix_from(j.at("constraint_transform"));
    f.constraint_rank = j.at("constraint_rank");
    f.fit.coefficients = vec_from(j.at("coefficients"));
    f.fit.covariance = matrix_from(j.at("covariance"));
    f.fit.lambdas = j.at("lambdas").get<std::vector<double>>();
    f.fit.log10_lambdas = j.at("log10_lambdas").get<std::vector<double>>();
    f.fit.edf = j.at("edf").get<std::vector<double>>();
    f.fit.edf_total = j.at("edf_total");
    f.fit.loglik = j.at("loglik");
    f.fit.reml.value = j.at("reml");
    f.fit.convergence.iterations = j.at("iterations");
    f.grid = j.at("grid").get<std::vector<double>>();
    f.weights = j.at("weights").get<std::vector<double>>();
    f.strata_times = j.at("strata_times").get<std::vector<double>>();
    f.windows = windows_from(j.at("windows"));
    f.z_means = matrix_from(j.at("z_means"));
    for (const auto& b : j.at("baseline")) {
      CumulativeHazard h;
      h.times = b.at("times").get<std::vector<double>>();
      h.jumps = b.at("jumps").get<std::vector<double>>();
      h.cumulative = b.at("cumulative").get<std::vector<double>>();
      f.baseline.push_back(std::move(h));
    }
    f.rows = j.at("rows");
    f.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (f.fit.coefficients.size() != f.layout.gamma_offset + f.layout.gamma_size)
      throw ValidationError("model file: coefficient count does not match the layout");
    return f;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

}  // namespace tvflcm
