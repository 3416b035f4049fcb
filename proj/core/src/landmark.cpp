#include "tvflcm/landmark.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

namespace tvflcm {

void LandmarkGrid::validate() const {
  detail::require(!s.empty(), "landmark grid is empty");
  detail::require(s.size() == w.size(), "landmark grid: " + std::to_string(s.size()) + " landmarks but " +
                                            std::to_string(w.size()) + " windows");
  for (std::size_t l = 0; l < s.size(); ++l) {
    detail::require(std::isfinite(s[l]) && s[l] >= 0.0, "landmark grid: landmark times must be finite and >= 0");
    detail::require(w[l] > 0.0 && !std::isnan(w[l]), "landmark grid: windows must be positive");
    if (l > 0) detail::require(s[l] >= s[l - 1], "landmark grid: landmark times must be nondecreasing");
  }
}

LandmarkGrid LandmarkGrid::partition(double start, double step, int count, double window) {
  detail::require(count >= 1 && step > 0.0, "LandmarkGrid::partition: need count >= 1 and step > 0");
  LandmarkGrid g;
  for (int l = 0; l < count; ++l) {
    g.s.push_back(start + step * l);
    g.w.push_back(window);
  }
  g.validate();
  return g;
}

Eigen::MatrixXd StackedLandmarkData::smat() const {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(umat.size()));
  for (std::size_t r = 0; r < rows(); ++r) s.row(static_cast<Eigen::Index>(r)).setConstant(svec[r]);
  return s;
}

StackedLandmarkData build_landmark_dataset(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                                           const LandmarkGrid& grid) {
  grid.validate();
  z.validate();
  validate_records(records);
  detail::require(z.subjects() == static_cast<int>(records.size()),
                  "build_landmark_dataset: " + std::to_string(records.size()) + " records but " +
                      std::to_string(z.subjects()) + " functional rows");
  const std::size_t p = records.empty() ? 0 : records.front().x.size();
  const Eigen::Index j = z.grid_size();

  std::vector<int> by_id(records.size());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::stable_sort(by_id.begin(), by_id.end(), [&](int a, int b) { return records[a].id < records[b].id; });

  StackedLandmarkData out;
  out.umat = z.grid;
  std::vector<int> rows_subject;
  std::vector<int> rows_stratum;
  out.stratum_start.push_back(0);
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double s = grid.s[l];
    const double end = s + grid.w[l];
    const std::size_t before = out.id.size();
    const int stratum = static_cast<int>(out.landmarks.size());
    for (int i : by_id) {
      const auto& r = records[i];
      if (!(r.y > s)) continue;
      out.id.push_back(r.id);
      out.subject.push_back(i);
      out.capped_time.push_back(std::min(r.y, end));
      out.d.push_back(r.delta == 1 && r.y <= end ? 1 : 0);
      out.svec.push_back(s);
      out.stratum.push_back(stratum);
    }
    if (out.id.size() == before) {
      out.warnings.push_back("landmark s=" + format_double(s) + " has an empty risk set and was dropped");
      continue;
    }
    out.landmarks.push_back(s);
    out.windows.push_back(grid.w[l]);
    out.stratum_start.push_back(static_cast<int>(out.id.size()));
  }

  const auto n = static_cast<Eigen::Index>(out.rows());
  out.x.resize(n, static_cast<Eigen::Index>(p));
  out.zmat.resize(n, j);
  out.lmat.resize(n, j);
  const Eigen::Map<const Eigen::RowVectorXd> wts(z.weights.data(), j);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int i = out.subject[r];
    for (std::size_t c = 0; c < p; ++c) out.x(r, static_cast<Eigen::Index>(c)) = records[i].x[c];
    out.zmat.row(r) = z.values.row(i);
    out.lmat.row(r) = wts;
  }
  out.zlmat = out.zmat.cwiseProduct(out.lmat);
  return out;
}

StackedLandmarkData center_by_landmark(StackedLandmarkData data) {
  const Eigen::Index j = data.zmat.cols();
  data.z_means = Eigen::MatrixXd::Zero(data.strata(), j);
  for (int l = 0; l < data.strata(); ++l) {
    const int a = data.stratum_start[l];
    const int m = data.stratum_start[l + 1] - a;
    auto block = data.zmat.middleRows(a, m);
    const Eigen::RowVectorXd mean = block.colwise().sum() / static_cast<double>(m);
    block.rowwise() -= mean;
    data.z_means.row(l) = mean;
  }
  data.zlmat = data.zmat.cwiseProduct(data.lmat);
  data.centered = true;
  return data;
}

void write_stacked(std::ostream& out, const StackedLandmarkData& data) {
  const Eigen::Index p = data.x.cols();
  const Eigen::Index j = data.zmat.cols();
  out << "id,time,d,svec";
  for (Eigen::Index c = 0; c < p; ++c) out << ",x_" << c + 1;
  for (const char* prefix : {"u_", "z_", "l_"})
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << prefix << v + 1;
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    out << data.id[r] << ',' << format_double(data.capped_time[r]) << ',' << data.d[r] << ','
        << format_double(data.svec[r]);
    for (Eigen::Index c = 0; c < p; ++c) out << ',' << format_double(data.x(ri, c));
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.umat[v]);
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.zmat(ri, v));
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.lmat(ri, v));
    out << '\n';
  }
}

StackedLandmarkData read_stacked(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("stacked file: missing header");
  const auto header = split_fields(line);
  detail::require(header.size() >= 4 && trim(header[0]) == "id" && trim(header[1]) == "time" &&
                      trim(header[2]) == "d" && trim(header[3]) == "svec",
                  "stacked file: header must start with id,time,d,svec");
  std::size_t p = 0, j = 0;
  for (std::size_t c = 4; c < header.size(); ++c) {
    const auto h = trim(header[c]);
    if (h.starts_with("x_")) ++p;
    else if (h.starts_with("u_")) ++j;
  }
  detail::require(header.size() == 4 + p + 3 * j, "stacked file: header column count is inconsistent");

  StackedLandmarkData data;
  std::vector<std::vector<double>> xs, zs, ls;
  std::map<std::int64_t, int> subject_of;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw ValidationError("stacked file line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    std::vector<double> v(f.size());
    for (std::size_t c = 0; c < f.size(); ++c)
      if (!parse_double(f[c], v[c]))
        throw ValidationError("stacked file line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                              ": not a number");
    const auto id = static_cast<std::int64_t>(v[0]);
    data.id.push_back(id);
    auto [it, fresh] = subject_of.emplace(id, static_cast<int>(subject_of.size()));
    data.subject.push_back(it->second);
    data.capped_time.push_back(v[1]);
    data.d.push_back(static_cast<int>(v[2]));
    data.svec.push_back(v[3]);
    xs.emplace_back(v.begin() + 4, v.begin() + 4 + static_cast<std::ptrdiff_t>(p));
    if (data.umat.empty()) data.umat.assign(v.begin() + 4 + static_cast<std::ptrdiff_t>(p),
                                            v.begin() + 4 + static_cast<std::ptrdiff_t>(p + j));
    zs.emplace_back(v.begin() + 4 + static_cast<std::ptrdiff_t>(p + j),
                    v.begin() + 4 + static_cast<std::ptrdiff_t>(p + 2 * j));
    ls.emplace_back(v.begin() + 4 + static_cast<std::ptrdiff_t>(p + 2 * j), v.end());
  }
  const auto n = static_cast<Eigen::Index>(data.id.size());
  data.x.resize(n, static_cast<Eigen::Index>(p));
  data.zmat.resize(n, static_cast<Eigen::Index>(j));
  data.lmat.resize(n, static_cast<Eigen::Index>(j));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < p; ++c) data.x(r, static_cast<Eigen::Index>(c)) = xs[r][c];
    for (std::size_t v = 0; v < j; ++v) {
      data.zmat(r, static_cast<Eigen::Index>(v)) = zs[r][v];
      data.lmat(r, static_cast<Eigen::Index>(v)) = ls[r][v];
    }
  }
  data.zlmat = data.zmat.cwiseProduct(data.lmat);
  data.stratum_start.push_back(0);
  for (std::size_t r = 0; r < data.id.size(); ++r) {
    if (r > 0 && data.svec[r] < data.svec[r - 1])
      throw ValidationError("stacked file: rows must be grouped by nondecreasing landmark");
    if (data.landmarks.empty() || data.svec[r] != data.landmarks.back()) {
      if (!data.landmarks.empty()) data.stratum_start.push_back(static_cast<int>(r));
      data.landmarks.push_back(data.svec[r]);
      data.windows.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    data.stratum.push_back(static_cast<int>(data.landmarks.size()) - 1);
  }
  data.stratum_start.push_back(static_cast<int>(data.id.size()));
  if (data.id.empty()) data.stratum_start.assign(1, 0);
  return data;
}

LandmarkExample two_subject_example() {
  LandmarkExample ex;
  ex.records = {{1, 4.5, 1, {7.0}}, {2, 3.5, 1, {4.0}}};
  Eigen::MatrixXd z(2, 4);
  z << 1.0, 0.3, 0.7, 1.1, 1.2, 0.2, 0.6, 1.5;
  ex.z = make_predictor(z, {0.0, 2.0, 4.0, 6.0}, Quadrature::riemann);
  ex.grid = LandmarkGrid::partition(0.0, 1.0, 5, 1.0);
  return ex;
}

void write_table_layout(std::ostream& out, const StackedLandmarkData& data) {
  const Eigen::Index j = data.zmat.cols();
  const Eigen::Index p = data.x.cols();
  out << "ID,T,d";
  for (Eigen::Index c = 0; c < p; ++c) out << (p == 1 ? std::string(",X") : ",X_" + std::to_string(c + 1));
  out << ",svec";
  for (const char* name : {"umat", "zmat", "smat", "lmat", "zlmat"})
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << name << '_' << v + 1;
  out << '\n';
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data.id[a] != data.id[b]) return data.id[a] < data.id[b];
    return data.svec[a] < data.svec[b];
  });
  for (std::size_t r : order) {
    const auto ri = static_cast<Eigen::Index>(r);
    out << data.id[r] << ',' << format_double(data.capped_time[r]) << ',' << data.d[r];
    for (Eigen::Index c = 0; c < p; ++c) out << ',' << format_double(data.x(ri, c));
    out << ',' << format_double(data.svec[r]);
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.umat[v]);
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.zmat(ri, v));
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.svec[r]);
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.lmat(ri, v));
    for (Eigen::Index v = 0; v < j; ++v) out << ',' << format_double(data.zlmat(ri, v));
    out << '\n';
  }
}

}  // namespace tvflcm
