#include "tvflcm/spline_basis.hpp"

#include "tvflcm/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace tvflcm {
namespace {

constexpr double kDomainSlack = 1e-12;

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  out.back() = hi;
  return out;
}

// Tridiagonal-band system for the natural cubic spline: B m = D beta on the
// interior knots, with m = 0 at both ends.
Eigen::MatrixXd natural_curvature_map(const std::vector<double>& x, Eigen::MatrixXd* penalty) {
  const int k = static_cast<int>(x.size());
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k - 2, k - 2);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k - 2, k);
  for (int i = 0; i < k - 2; ++i) {
    const double h0 = x[i + 1] - x[i];
    const double h1 = x[i + 2] - x[i + 1];
    d(i, i) = 1.0 / h0;
    d(i, i + 1) = -1.0 / h0 - 1.0 / h1;
    d(i, i + 2) = 1.0 / h1;
    b(i, i) = (h0 + h1) / 3.0;
    if (i + 1 < k - 2) {
      b(i, i + 1) = h1 / 6.0;
      b(i + 1, i) = h1 / 6.0;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  Eigen::MatrixXd interior = llt.solve(d);
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, k);
  f.block(1, 0, k - 2, k) = interior;
  if (penalty) *penalty = d.transpose() * interior;
  return f;
}

// Periodic version: x holds K+1 knots with x[K] identified with x[0].
Eigen::MatrixXd cyclic_curvature_map(const std::vector<double>& x, Eigen::MatrixXd* penalty) {
  const int k = static_cast<int>(x.size()) - 1;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, k);
  auto h = [&](int i) { return x[(i + k) % k + 1] - x[(i + k) % k]; };
  for (int i = 0; i < k; ++i) {
    const int prev = (i - 1 + k) % k;
    const int next = (i + 1) % k;
    const double hp = h(i - 1);
    const double hc = h(i);
    b(i, prev) += hp / 6.0;
    b(i, i) += (hp + hc) / 3.0;
    b(i, next) += hc / 6.0;
    d(i, prev) += 1.0 / hp;
    d(i, i) += -1.0 / hp - 1.0 / hc;
    d(i, next) += 1.0 / hc;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  Eigen::MatrixXd f = llt.solve(d);
  if (penalty) *penalty = d.transpose() * f;
  return f;
}

// Clamped knot vector with repeated end knots.
std::vector<double> clamped_knots(const std::vector<double>& breaks) {
  std::vector<double> t;
  t.reserve(breaks.size() + 6);
  for (int r = 0; r < 3; ++r) t.push_back(breaks.front());
  t.insert(t.end(), breaks.begin(), breaks.end());
  for (int r = 0; r < 3; ++r) t.push_back(breaks.back());
  return t;
}

// Nonzero cubic B-splines and derivatives at x (Cox-de Boor with derivative
// recursion). Returns the index of the first nonzero function.
int bspline_nonzero(const std::vector<double>& t, int n_basis, double x, int deriv,
                    std::array<double, 4>& out) {
  constexpr int p = 3;
  // span s with t[s] <= x < t[s+1], clamped to the last nondegenerate span
  int s = static_cast<int>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
  s = std::clamp(s, p, n_basis - 1);

  std::array<std::array<double, 4>, 4> ndu{};
  std::array<double, 4> left{}, right{};
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[s + 1 - j];
    right[j] = t[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  if (deriv == 0) {
    for (int j = 0; j <= p; ++j) out[j] = ndu[j][p];
    return s - p;
  }
  std::array<std::array<double, 4>, 2> a{};
  std::array<std::array<double, 4>, 3> ders{};
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0] = {};
    a[1] = {};
    a[0][0] = 1.0;
    for (int k = 1; k <= deriv; ++k) {
      double dv = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        dv = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        dv += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        dv += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = dv;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= deriv; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }
  for (int j = 0; j <= p; ++j) out[j] = ders[deriv][j];
  return s - p;
}

// Value-at-knot cubic pieces on [x0, x1]: weights for (beta_j, beta_j+1, m_j, m_j+1).
std::array<double, 4> cardinal_piece(double x0, double x1, double x, int deriv) {
  const double h = x1 - x0;
  const double am = x1 - x;
  const double ap = x - x0;
  switch (deriv) {
    case 0:
      return {am / h, ap / h, (am * am * am / h - h * am) / 6.0, (ap * ap * ap / h - h * ap) / 6.0};
    case 1:
      return {-1.0 / h, 1.0 / h, (-3.0 * am * am / h + h) / 6.0, (3.0 * ap * ap / h - h) / 6.0};
    default:
      return {0.0, 0.0, am / h, ap / h};
  }
}

}  // namespace

std::string_view to_string(SplineFamily family) {
  switch (family) {
    case SplineFamily::bspline_cubic: return "bspline_cubic";
    case SplineFamily::cubic_regression: return "cubic_regression";
    case SplineFamily::cyclic_cubic: return "cyclic_cubic";
  }
  return "unknown";
}

SplineFamily spline_family_from_string(std::string_view name) {
  if (name == "bspline_cubic" || name == "bs") return SplineFamily::bspline_cubic;
  if (name == "cubic_regression" || name == "cr") return SplineFamily::cubic_regression;
  if (name == "cyclic_cubic" || name == "cc") return SplineFamily::cyclic_cubic;
  throw ValidationError("unknown spline family '" + std::string(name) + "'");
}

BasisSpec::BasisSpec(SplineFamily family, Interval domain, std::vector<double> knots)
    : family_(family), domain_(domain), knots_(std::move(knots)) {
  detail::require(std::isfinite(domain_.lo) && std::isfinite(domain_.hi) && domain_.hi > domain_.lo,
                  "basis domain must be a nondegenerate finite interval");
  detail::require(knots_.size() >= 2, "basis needs at least two knots");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    detail::require(knots_[i] >= domain_.lo - kDomainSlack && knots_[i] <= domain_.hi + kDomainSlack,
                    "basis knots must lie within the domain");
    if (i > 0) detail::require(knots_[i] > knots_[i - 1], "basis knots must be strictly increasing");
  }
  switch (family_) {
    case SplineFamily::cubic_regression:
      dim_ = static_cast<int>(knots_.size());
      detail::require(dim_ >= 3, "cubic_regression basis needs K >= 3");
      curvature_map_ = natural_curvature_map(knots_, nullptr);
      break;
    case SplineFamily::cyclic_cubic:
      dim_ = static_cast<int>(knots_.size()) - 1;
      detail::require(dim_ >= 3, "cyclic_cubic basis needs K >= 3");
      detail::require(std::abs(knots_.front() - domain_.lo) < 1e-12 &&
                          std::abs(knots_.back() - domain_.hi) < 1e-12,
                      "cyclic_cubic end knots must coincide with the domain ends");
      curvature_map_ = cyclic_curvature_map(knots_, nullptr);
      break;
    case SplineFamily::bspline_cubic:
      dim_ = static_cast<int>(knots_.size()) + 2;
      detail::require(dim_ >= 4, "bspline_cubic basis needs K >= 4");
      break;
  }
}

BasisSpec make_basis(SplineFamily family, Interval domain, int dimension) {
  detail::require(std::isfinite(domain.lo) && std::isfinite(domain.hi) && domain.hi > domain.lo,
                  "make_basis: degenerate domain");
  const int min_k = family == SplineFamily::bspline_cubic ? 4 : 3;
  detail::require(dimension >= min_k, "make_basis: K=" + std::to_string(dimension) + " too small for " +
                                          std::string(to_string(family)) + " (need >= " +
                                          std::to_string(min_k) + ")");
  switch (family) {
    case SplineFamily::cubic_regression:
      return BasisSpec(family, domain, linspace(domain.lo, domain.hi, dimension));
    case SplineFamily::cyclic_cubic:
      return BasisSpec(family, domain, linspace(domain.lo, domain.hi, dimension + 1));
    case SplineFamily::bspline_cubic:
      return BasisSpec(family, domain, linspace(domain.lo, domain.hi, dimension - 2));
  }
  throw ValidationError("make_basis: unknown family");
}

BasisMatrix evaluate_basis(const BasisSpec& spec, std::span<const double> points, int derivative) {
  detail::require(derivative >= 0 && derivative <= 2, "evaluate_basis: derivative order must be 0, 1 or 2");
  const int k = spec.dimension();
  const auto& dom = spec.domain();
  const auto& x = spec.knots();
  BasisMatrix out;
  out.points.assign(points.begin(), points.end());
  out.derivative = derivative;
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), k);

  const bool cyclic = spec.family() == SplineFamily::cyclic_cubic;
  const std::vector<double> clamped =
      spec.family() == SplineFamily::bspline_cubic ? clamped_knots(x) : std::vector<double>{};
  const Eigen::MatrixXd& f = spec.knot_curvature();
  const double slack = kDomainSlack * dom.length();

  for (std::size_t r = 0; r < points.size(); ++r) {
    double p = points[r];
    if (!std::isfinite(p)) throw ValidationError("evaluate_basis: non-finite evaluation point");
    if (cyclic) {
      const double period = dom.length();
      p = dom.lo + std::fmod(p - dom.lo, period);
      if (p < dom.lo) p += period;
      if (p >= dom.hi) p = dom.lo;
    } else {
      if (p < dom.lo - slack || p > dom.hi + slack) {
        throw ValidationError("evaluate_basis: point " + std::to_string(points[r]) + " outside domain [" +
                              std::to_string(dom.lo) + ", " + std::to_string(dom.hi) + "]");
      }
      p = std::clamp(p, dom.lo, dom.hi);
    }
    const auto row = static_cast<Eigen::Index>(r);
    if (spec.family() == SplineFamily::bspline_cubic) {
      std::array<double, 4> vals{};
      const int first = bspline_nonzero(clamped, k, p, derivative, vals);
      for (int j = 0; j < 4; ++j) out.values(row, first + j) = vals[j];
      continue;
    }
    const int n_int = cyclic ? k : k - 1;
    int j = static_cast<int>(std::upper_bound(x.begin(), x.end(), p) - x.begin()) - 1;
    j = std::clamp(j, 0, n_int - 1);
    const int jn = cyclic ? (j + 1) % k : j + 1;
    const auto w = cardinal_piece(x[j], x[j + 1], p, derivative);
    out.values(row, j) += w[0];
    out.values(row, jn) += w[1];
    out.values.row(row) += w[2] * f.row(j) + w[3] * f.row(jn);
  }
  return out;
}

MarginalPenalty roughness_penalty(const BasisSpec& spec) {
  MarginalPenalty pen;
  switch (spec.family()) {
    case SplineFamily::cubic_regression:
      natural_curvature_map(spec.knots(), &pen.matrix);
      pen.null_space_dim = 2;
      break;
    case SplineFamily::cyclic_cubic:
      cyclic_curvature_map(spec.knots(), &pen.matrix);
      pen.null_space_dim = 1;
      break;
    case SplineFamily::bspline_cubic: {
      // f'' is piecewise linear: 3-point Gauss-Legendre per interval is exact.
      const std::array<double, 3> gx{-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
      const std::array<double, 3> gw{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      const auto& br = spec.knots();
      std::vector<double> pts, wts;
      for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double mid = 0.5 * (br[i] + br[i + 1]);
        const double half = 0.5 * (br[i + 1] - br[i]);
        for (int g = 0; g < 3; ++g) {
          pts.push_back(mid + half * gx[g]);
          wts.push_back(half * gw[g]);
        }
      }
      const BasisMatrix d2 = evaluate_basis(spec, pts, 2);
      const Eigen::Map<const Eigen::VectorXd> w(wts.data(), static_cast<Eigen::Index>(wts.size()));
      pen.matrix = d2.values.transpose() * w.asDiagonal() * d2.values;
      pen.null_space_dim = 2;
      break;
    }
  }
  pen.matrix = 0.5 * (pen.matrix + pen.matrix.transpose()).eval();
  return pen;
}

}  // namespace tvflcm
