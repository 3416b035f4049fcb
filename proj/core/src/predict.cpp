#include "tvflcm/predict.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace tvflcm {
namespace {

void require_in(const MarginBasis& b, std::span<const double> pts, const char* axis) {
  if (b.kind() == MarginKind::indicator) return;  // evaluate() rejects unknown levels
  const Interval d = b.domain();
  const double slack = 1e-12 * std::max(1.0, d.hi - d.lo);
  for (double p : pts)
    if (!(p >= d.lo - slack && p <= d.hi + slack))
      throw ValidationError(std::string("eval_surface: ") + axis + "=" + format_double(p) + " outside [" +
                            format_double(d.lo) + ", " + format_double(d.hi) + "]");
}

}  // namespace

SurfaceGrid eval_surface(const CoefficientSurface& s, std::span<const double> u_grid, std::span<const double> t_grid) {
  require_in(s.u_basis, u_grid, "u");
  require_in(s.t_basis, t_grid, "t");
  const Eigen::MatrixXd bu = s.u_basis.evaluate(u_grid);
  const Eigen::MatrixXd bt = s.t_basis.evaluate(t_grid);
  const Eigen::Index ku = bu.cols(), ks = bt.cols();
  detail::require(s.xi.rows() == ku && s.xi.cols() == ks, "eval_surface: coefficient grid does not match bases");
  const bool with_se = s.covariance.size() > 0;
  if (with_se) detail::require(s.covariance.rows() == ku * ks, "eval_surface: covariance size mismatch");
  SurfaceGrid g;
  g.u.assign(u_grid.begin(), u_grid.end());
  g.t.assign(t_grid.begin(), t_grid.end());
  g.value = bu * s.xi * bt.transpose();
  g.se = Eigen::MatrixXd::Zero(g.value.rows(), g.value.cols());
  if (!with_se) return g;
  Eigen::VectorXd b(ku * ks);
  for (Eigen::Index c = 0; c < bt.rows(); ++c) {
    for (Eigen::Index r = 0; r < bu.rows(); ++r) {
      for (Eigen::Index k = 0; k < ks; ++k) b.segment(k * ku, ku) = bt(c, k) * bu.row(r).transpose();
      g.se(r, c) = std::sqrt(std::max(0.0, b.dot(s.covariance * b)));
    }
  }
  return g;
}

std::vector<double> uniform_points(double lo, double hi, int intervals) {
  detail::require(intervals >= 1 && hi > lo, "uniform_points: need hi > lo and at least one interval");
  std::vector<double> p(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) p[i] = lo + (hi - lo) * i / intervals;
  p.back() = hi;
  return p;
}

void write_surface(std::ostream& out, const SurfaceGrid& g, double z) {
  out << "u,t,gamma,se,ci_lo,ci_hi\n";
  for (std::size_t c = 0; c < g.t.size(); ++c)
    for (std::size_t r = 0; r < g.u.size(); ++r) {
      const double v = g.value(r, c), se = g.se(r, c);
      out << format_double(g.u[r]) << ',' << format_double(g.t[c]) << ',' << format_double(v) << ','
          << format_double(se) << ',' << format_double(v - z * se) << ',' << format_double(v + z * se) << '\n';
    }
}

double survival_at(const SurvivalCurve& c, double t) {
  auto it = std::upper_bound(c.time.begin(), c.time.end(), t);
  if (it == c.time.begin()) return 1.0;
  return c.survival[static_cast<std::size_t>(it - c.time.begin()) - 1];
}

double subject_eta(const RouteFit& fit, const SubjectData& subj, int stratum, double t) {
  const std::size_t j = fit.grid.size();
  detail::require(subj.z.size() == j, "prediction: subject has " + std::to_string(subj.z.size()) +
                                          " functional values, fit grid has " + std::to_string(j));
  detail::require(static_cast<int>(subj.x.size()) == fit.layout.scalar_count,
                  "prediction: subject has " + std::to_string(subj.x.size()) + " scalar covariates, fit has " +
                      std::to_string(fit.layout.scalar_count));
  double time = t;
  Eigen::VectorXd zc = Eigen::Map<const Eigen::VectorXd>(subj.z.data(), static_cast<Eigen::Index>(j));
  if (fit.route == Route::landmark) {
    detail::require(stratum >= 0 && stratum < static_cast<int>(fit.strata_times.size()),
                    "prediction: landmark index out of range");
    time = fit.strata_times[stratum];
    if (fit.z_means.size() > 0) zc -= fit.z_means.row(stratum).transpose();
  }
  const Eigen::Map<const Eigen::VectorXd> w(fit.weights.data(), static_cast<Eigen::Index>(j));
  const Eigen::MatrixXd bu = fit.u_margin.evaluate(fit.grid);
  const double pt[1] = {time};
  const Eigen::RowVectorXd bt = fit.t_margin.evaluate(pt).row(0);
  const Eigen::VectorXd xi = fit.gamma_coefficients();
  const Eigen::Index ku = bu.cols();
  const Eigen::RowVectorXd a = zc.cwiseProduct(w).transpose() * bu;
  double eta = 0.0;
  for (Eigen::Index k = 0; k < bt.size(); ++k) eta += bt(k) * a.dot(xi.segment(k * ku, ku));
  for (int c = 0; c < fit.layout.scalar_count; ++c) eta += subj.x[c] * fit.beta(c, time);
  return eta;
}

SurvivalCurve survival_curve(const RouteFit& fit, const SubjectData& subj, int stratum) {
  SurvivalCurve c;
  if (fit.route == Route::landmark) {
    detail::require(stratum >= 0 && stratum < static_cast<int>(fit.baseline.size()),
                    "survival_curve: landmark index " + std::to_string(stratum) + " out of range");
    const double s = fit.strata_times[stratum];
    if (subj.followed_to && *subj.followed_to <= s)
      throw ValidationError("survival_curve: subject is not in the risk set at landmark " + format_double(s));
    const double r = std::exp(subject_eta(fit, subj, stratum));
    const CumulativeHazard& h = fit.baseline[stratum];
    c.origin = s;
    c.time.push_back(s);
    c.survival.push_back(1.0);
    for (std::size_t k = 0; k < h.times.size(); ++k) {
      if (h.times[k] <= s) continue;
      c.time.push_back(h.times[k]);
      c.survival.push_back(std::exp(-h.cumulative[k] * r));
    }
    return c;
  }
  detail::require(!fit.baseline.empty(), "survival_curve: fit has no baseline hazard");
  const CumulativeHazard& h = fit.baseline.front();
  double cum = 0.0;
  c.time.push_back(0.0);
  c.survival.push_back(1.0);
  for (std::size_t k = 0; k < h.times.size(); ++k) {
    cum += h.jumps[k] * std::exp(subject_eta(fit, subj, 0, h.times[k]));
    c.time.push_back(h.times[k]);
    c.survival.push_back(std::exp(-cum));
  }
  return c;
}

DynamicPrediction dynamic_predict(const RouteFit& fit, const SubjectData& subj, double t_star, int origin) {
  DynamicPrediction p;
  p.t_star = t_star;
  if (fit.route == Route::poisson) {
    const double hi = fit.t_margin.domain().hi;
    if (!(t_star >= 0.0 && t_star <= hi))
      throw ValidationError("dynamic_predict: t*=" + format_double(t_star) + " beyond the fitted range [0, " +
                            format_double(hi) + "]");
    p.direct = p.chained = survival_at(survival_curve(fit, subj), t_star);
    p.direct_covers = true;
    p.factors = {p.direct};
    return p;
  }
  const int l_count = static_cast<int>(fit.strata_times.size());
  detail::require(origin >= 0 && origin < l_count, "dynamic_predict: origin landmark out of range");
  const auto& s = fit.strata_times;
  auto window_end = [&](int l) {
    const double w = l < static_cast<int>(fit.windows.size()) ? fit.windows[l] : INFINITY;
    return std::isnan(w) ? INFINITY : s[l] + w;
  };
  detail::require(t_star >= s[origin], "dynamic_predict: t* precedes the origin landmark");
  // covered range: consecutive windows without gaps
  double covered = window_end(origin);
  auto slack = [](double v) { return 1e-9 * (1.0 + std::abs(v)); };  // s_l + w_l vs s_{l+1} rounding
  for (int l = origin + 1; l < l_count && s[l] <= covered + slack(covered); ++l)
    covered = std::max(covered, window_end(l));
  if (t_star > covered + slack(covered))
    throw ValidationError("dynamic_predict: t*=" + format_double(t_star) + " beyond the last covered time " +
                          format_double(covered));
  for (int l = origin; l < l_count && s[l] < t_star; ++l) {
    const double end = l + 1 < l_count ? std::min(t_star, s[l + 1]) : t_star;
    const double f = survival_at(survival_curve(fit, subj, l), std::min(end, window_end(l)));
    p.factors.push_back(f);
    p.chained *= f;
  }
  p.direct_covers = t_star <= window_end(origin);
  p.direct = p.direct_covers ? survival_at(survival_curve(fit, subj, origin), t_star) : p.chained;
  p.difference = std::abs(p.direct - p.chained);
  return p;
}

}  // namespace tvflcm
