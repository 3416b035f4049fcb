#include "tvflcm/routes.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace tvflcm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Interval default_u_domain(const std::vector<double>& grid, const std::vector<double>& weights) {
  return {grid.front() - 0.5 * weights.front(), grid.back() + 0.5 * weights.back()};
}

MarginBasis make_u_margin(const RouteConfig& cfg, const std::vector<double>& grid, const std::vector<double>& weights) {
  const Interval dom = cfg.u_domain.value_or(default_u_domain(grid, weights));
  if (cfg.k_u == 1) return MarginBasis::constant(dom);
  return MarginBasis::spline(make_basis(cfg.u_family, dom, cfg.k_u));
}

Interval widen(Interval dom, double lo, double hi) {
  dom.lo = std::min(dom.lo, lo);
  dom.hi = std::max(dom.hi, hi);
  return dom;
}

struct BlockPlan {
  std::vector<PenaltyGroup> groups;
  int next_lambda = 0;
};

// Scalar covariate blocks x_c * phi(t), one penalty (and smoothing parameter) each.
void add_scalar_penalties(BlockPlan& plan, const MarginBasis& margin, int count, int offset) {
  const MarginalPenalty pen = margin.penalty();
  if (pen.matrix.norm() == 0.0) return;
  for (int c = 0; c < count; ++c)
    plan.groups.push_back(single_penalty_group("beta_" + std::to_string(c + 1), offset + c * margin.dimension(), pen,
                                               plan.next_lambda++));
}

void add_gamma_penalties(BlockPlan& plan, const MarginBasis& u, const MarginBasis& t, int offset,
                         const Eigen::MatrixXd& transform) {
  const MarginalPenalty pu = u.penalty();
  const MarginalPenalty pt = t.penalty();
  const bool has_u = pu.matrix.norm() > 0.0;
  const bool has_t = pt.matrix.norm() > 0.0;
  if (!has_u && !has_t) return;
  const int lu = has_u ? plan.next_lambda++ : -1;
  const int lt = has_t ? plan.next_lambda++ : -1;
  if (transform.size() == 0) {
    plan.groups.push_back(tensor_penalty_group("gamma", offset, pu, pt, lu, lt));
    return;
  }
  auto [su, st] = tensor_penalties(pu, pt);
  std::vector<PenaltyTerm> terms;
  if (has_u) terms.push_back({transform.transpose() * su * transform, lu});
  if (has_t) terms.push_back({transform.transpose() * st * transform, lt});
  for (auto& term : terms) term.matrix = 0.5 * (term.matrix + term.matrix.transpose()).eval();
  plan.groups.push_back(generic_penalty_group("gamma", offset, std::move(terms)));
}

std::vector<std::string> coefficient_names(const CoefficientLayout& lay, int k_u, bool constrained) {
  std::vector<std::string> names;
  for (int c = 0; c < lay.scalar_count; ++c)
    for (int k = 0; k < lay.scalar_size; ++k)
      names.push_back("beta_" + std::to_string(c + 1) + "[" + std::to_string(k) + "]");
  for (int q = 0; q < lay.gamma_size; ++q)
    names.push_back(constrained ? "gamma_free[" + std::to_string(q) + "]"
                                : "xi[" + std::to_string(q % k_u) + "," + std::to_string(q / k_u) + "]");
  return names;
}

FitResult run_fit(const PenalizedProblem& problem, const RouteConfig& cfg) {
  if (cfg.log10_lambda) {
    const int nl = problem.lambda_count();
    std::vector<double> rho = *cfg.log10_lambda;
    if (rho.size() == 1 && nl > 1) rho.assign(static_cast<std::size_t>(nl), rho.front());
    detail::require(static_cast<int>(rho.size()) == nl, "fixed smoothing: " + std::to_string(rho.size()) +
                                                            " values given for " + std::to_string(nl) + " penalties");
    std::vector<double> lam(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) lam[i] = std::pow(10.0, rho[i]);
    FitResult f = newton_fit(problem, lam, cfg.smoothing.newton);
    f.log10_lambdas = rho;
    return f;
  }
  return select_smoothing(problem, cfg.smoothing);
}

std::vector<SurvivalRecord> prepared_records(std::span<const SurvivalRecord> records, TieReport* ties) {
  std::vector<SurvivalRecord> copy(records.begin(), records.end());
  validate_records(copy);
  *ties = break_ties(copy);
  return copy;
}

}  // namespace

std::string_view to_string(Route route) { return route == Route::poisson ? "poisson" : "landmark"; }

Route route_from_string(std::string_view name) {
  if (name == "poisson") return Route::poisson;
  if (name == "landmark") return Route::landmark;
  throw ValidationError("unknown route '" + std::string(name) + "' (expected poisson or landmark)");
}

Eigen::VectorXd RouteFit::gamma_coefficients() const {
  const Eigen::VectorXd free = fit.coefficients.segment(layout.gamma_offset, layout.gamma_size);
  if (constraint_transform.size() == 0) return free;
  return constraint_transform * free;
}

CoefficientSurface RouteFit::surface() const {
  CoefficientSurface s;
  s.u_basis = u_margin;
  s.t_basis = t_margin;
  const int ku = u_margin.dimension();
  const int ks = t_margin.dimension();
  const Eigen::VectorXd g = gamma_coefficients();
  s.xi = Eigen::Map<const Eigen::MatrixXd>(g.data(), ku, ks);
  const Eigen::MatrixXd cov =
      fit.covariance.block(layout.gamma_offset, layout.gamma_offset, layout.gamma_size, layout.gamma_size);
  s.covariance = constraint_transform.size() == 0 ? cov
                                                  : Eigen::MatrixXd(constraint_transform * cov *
                                                                    constraint_transform.transpose());
  return s;
}

double RouteFit::beta(int c, double t) const {
  detail::require(c >= 0 && c < layout.scalar_count, "beta: covariate index out of range");
  const double pts[1] = {t};
  const Eigen::RowVectorXd phi = scalar_margin.evaluate(pts).row(0);
  return phi.dot(fit.coefficients.segment(layout.scalar_offset + c * layout.scalar_size, layout.scalar_size));
}

PenalizedProblem build_poisson_problem(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                                       const RouteConfig& cfg, RouteFit* skel) {
  z.validate();
  validate_records(records);
  require_no_ties(records);
  detail::require(z.subjects() == static_cast<int>(records.size()),
                  "poisson route: " + std::to_string(records.size()) + " records but " +
                      std::to_string(z.subjects()) + " functional rows");
  detail::require(cfg.time_margin != TimeMargin::indicator, "poisson route: indicator time margin is landmark-only");
  const auto t_begin = Clock::now();
  RouteFit local;
  RouteFit& out = skel ? *skel : local;
  out.route = Route::poisson;
  out.grid = z.grid;
  out.weights = z.weights;

  double y_max = 0.0;
  for (const auto& r : records) y_max = std::max(y_max, r.y);
  const Interval t_dom = widen(cfg.t_domain.value_or(Interval{0.0, y_max}), 0.0, y_max);
  out.u_margin = make_u_margin(cfg, z.grid, z.weights);
  out.t_margin = cfg.k_s == 1 ? MarginBasis::constant(t_dom)
                              : MarginBasis::spline(make_basis(cfg.t_family, t_dom, cfg.k_s));
  const int px = records.empty() ? 0 : static_cast<int>(records.front().x.size());
  out.scalar_margin = cfg.k_1 >= 3 ? MarginBasis::spline(make_basis(SplineFamily::cubic_regression, t_dom, cfg.k_1))
                                   : MarginBasis::constant(t_dom);

  const Eigen::MatrixXd bu = out.u_margin.evaluate(z.grid);
  const Eigen::Map<const Eigen::VectorXd> w(z.weights.data(), z.grid_size());
  const Eigen::MatrixXd a = z.values * (w.asDiagonal() * bu);  // N x K_u

  const PseudoPoissonData pp = poisson_expand(records);
  const int e_count = pp.stratum_count();
  const Eigen::MatrixXd bt = out.t_margin.evaluate(pp.stratum_time);
  const Eigen::MatrixXd phi = out.scalar_margin.evaluate(pp.stratum_time);
  const int ku = out.u_margin.dimension();
  const int ks = out.t_margin.dimension();
  const int k1 = out.scalar_margin.dimension();

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(e_count, ku);
  Eigen::MatrixXd z_sums = Eigen::MatrixXd::Zero(e_count, z.grid_size());
  {
    // risk-set sums via suffix sums over subjects ordered by decreasing time
    std::vector<int> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return records[i].y > records[j].y; });
    Eigen::RowVectorXd sum_a = Eigen::RowVectorXd::Zero(ku);
    Eigen::RowVectorXd sum_z = Eigen::RowVectorXd::Zero(z.grid_size());
    std::size_t q = 0;
    for (int k = e_count - 1; k >= 0; --k) {
      const double tk = pp.stratum_time[k];
      while (q < order.size() && records[order[q]].y >= tk) {
        sum_a += a.row(order[q]);
        sum_z += z.values.row(order[q]);
        ++q;
      }
      const double count = static_cast<double>(pp.stratum_start[k + 1] - pp.stratum_start[k]);
      if (cfg.center) {
        means.row(k) = sum_a / count;
        z_sums.row(k) = sum_z - count * (sum_z / count);
      } else {
        z_sums.row(k) = sum_z;
      }
    }
  }

  out.layout.scalar_count = px;
  out.layout.scalar_offset = 0;
  out.layout.scalar_size = k1;
  out.layout.gamma_offset = px * k1;
  const int p_full = ku * ks;

  Eigen::MatrixXd constraint(0, p_full);
  if (cfg.constraint != ConstraintKind::none) {
    const double z_scale = std::max(1e-300, z.values.cwiseAbs().maxCoeff() * static_cast<double>(records.size()));
    constraint = constraint_rows(cfg.constraint, z_sums, bu, bt, z_scale);
  }
  out.constraint_transform = null_space_transform(constraint, &out.constraint_rank);
  const bool constrained = out.constraint_transform.size() > 0;
  out.layout.gamma_size = constrained ? static_cast<int>(out.constraint_transform.cols()) : p_full;
  const int p = out.layout.gamma_offset + out.layout.gamma_size;

  PenalizedProblem prob;
  prob.kind = cfg.expanded_likelihood;
  const auto n = static_cast<Eigen::Index>(pp.rows());
  prob.design.resize(n, p);
  prob.response = pp.outcome;
  prob.stratum = pp.stratum;
  if (prob.kind == LikelihoodKind::cox_stratified) prob.time.resize(pp.rows());
  Eigen::RowVectorXd grow(p_full);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int i = pp.subject[r];
    const int s = pp.stratum[r];
    for (int c = 0; c < px; ++c) prob.design.row(r).segment(c * k1, k1) = records[i].x[c] * phi.row(s);
    const Eigen::RowVectorXd ac = a.row(i) - means.row(s);
    for (int k = 0; k < ks; ++k) grow.segment(k * ku, ku) = bt(s, k) * ac;
    if (constrained)
      prob.design.row(r).segment(out.layout.gamma_offset, out.layout.gamma_size) = grow * out.constraint_transform;
    else
      prob.design.row(r).segment(out.layout.gamma_offset, p_full) = grow;
    if (prob.kind == LikelihoodKind::cox_stratified)
      prob.time[r] = pp.outcome[r] > 0 ? pp.stratum_time[s] : records[i].y;
  }

  BlockPlan plan;
  add_scalar_penalties(plan, out.scalar_margin, px, 0);
  add_gamma_penalties(plan, out.u_margin, out.t_margin, out.layout.gamma_offset, out.constraint_transform);
  prob.penalties = std::move(plan.groups);
  prob.coefficient_names = coefficient_names(out.layout, ku, constrained);

  out.strata_times = pp.stratum_time;
  out.rows = pp.rows();
  // per-event shift between centred and raw predictors, used for the baseline
  out.z_means = means;
  out.expand_seconds = seconds_since(t_begin);
  return prob;
}

RouteFit fit_tvflcm_poisson(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                            const RouteConfig& config) {
  RouteFit out;
  const auto copy = prepared_records(records, &out.ties);
  if (out.ties.jittered > 0)
    out.warnings.push_back(std::to_string(out.ties.jittered) + " tied event times jittered by multiples of " +
                           format_double(1e-9 * out.ties.scale));
  const PenalizedProblem prob = build_poisson_problem(copy, z, config, &out);
  const auto t0 = Clock::now();
  out.fit = run_fit(prob, config);
  out.fit_seconds = seconds_since(t0);

  // Nelson-Aalen on the raw (uncentred) predictor: jump_k = 1 / sum_{R_k} exp(eta_j(t_k)).
  const int e_count = static_cast<int>(out.strata_times.size());
  const Eigen::VectorXd xi = out.gamma_coefficients();
  const Eigen::MatrixXd bt = out.t_margin.evaluate(out.strata_times);
  const int ku = out.u_margin.dimension();
  std::vector<double> m(static_cast<std::size_t>(e_count), -INFINITY), s0(static_cast<std::size_t>(e_count), 0.0);
  for (std::size_t r = 0; r < prob.rows(); ++r) m[prob.stratum[r]] = std::max(m[prob.stratum[r]], out.fit.linear_predictor(r));
  for (std::size_t r = 0; r < prob.rows(); ++r)
    s0[prob.stratum[r]] += std::exp(out.fit.linear_predictor(r) - m[prob.stratum[r]]);
  CumulativeHazard h;
  double acc = 0.0;
  for (int k = 0; k < e_count; ++k) {
    double shift = 0.0;
    for (int kk = 0; kk < out.t_margin.dimension(); ++kk)
      shift += bt(k, kk) * out.z_means.row(k).dot(xi.segment(kk * ku, ku));
    const double jump = std::exp(-(m[k] + std::log(s0[k]) + shift));
    acc += jump;
    h.times.push_back(out.strata_times[k]);
    h.jumps.push_back(jump);
    h.cumulative.push_back(acc);
  }
  out.baseline.assign(1, std::move(h));
  out.z_means.resize(0, 0);
  return out;
}

PenalizedProblem build_landmark_problem(const StackedLandmarkData& data, const RouteConfig& cfg, RouteFit* skel) {
  detail::require(data.rows() > 0, "landmark route: stacked dataset is empty");
  RouteFit local;
  RouteFit& out = skel ? *skel : local;
  out.route = Route::landmark;
  out.grid = data.umat;
  {
    std::vector<double> w(static_cast<std::size_t>(data.lmat.cols()));
    for (Eigen::Index v = 0; v < data.lmat.cols(); ++v) w[v] = data.lmat(0, v);
    out.weights = std::move(w);
  }
  out.strata_times = data.landmarks;
  out.windows = data.windows;
  out.z_means = data.z_means;

  const double t_hi = std::max(*std::max_element(data.capped_time.begin(), data.capped_time.end()), data.landmarks.back());
  const Interval t_dom = widen(cfg.t_domain.value_or(Interval{0.0, t_hi}), 0.0, t_hi);
  out.u_margin = make_u_margin(cfg, out.grid, out.weights);
  const int n_strata = data.strata();
  switch (cfg.time_margin) {
    case TimeMargin::indicator: out.t_margin = MarginBasis::indicator(data.landmarks); break;
    case TimeMargin::constant: out.t_margin = MarginBasis::constant(t_dom); break;
    case TimeMargin::spline:
      if (cfg.k_s > 1 && n_strata == 1)
        out.warnings.push_back("single landmark: gamma cannot vary in t, using a constant time margin");
      out.t_margin = cfg.k_s == 1 || n_strata == 1
                         ? MarginBasis::constant(t_dom)
                         : MarginBasis::spline(make_basis(cfg.t_family, t_dom, cfg.k_s));
      break;
  }
  const int px = static_cast<int>(data.x.cols());
  const int k1_req = std::min(cfg.k_1, n_strata);
  if (cfg.time_margin == TimeMargin::indicator) {
    out.scalar_margin = MarginBasis::indicator(data.landmarks);
  } else if (k1_req >= 3 && data.landmarks.back() > data.landmarks.front()) {
    out.scalar_margin = MarginBasis::spline(make_basis(
        SplineFamily::cubic_regression, {data.landmarks.front(), data.landmarks.back()}, k1_req));
  } else {
    out.scalar_margin = MarginBasis::constant(t_dom);
  }

  const Eigen::MatrixXd bu = out.u_margin.evaluate(out.grid);
  const Eigen::MatrixXd a = data.zlmat * bu;
  const Eigen::MatrixXd bt = out.t_margin.evaluate(data.svec);
  const Eigen::MatrixXd phi = out.scalar_margin.evaluate(data.svec);
  const int ku = out.u_margin.dimension();
  const int ks = out.t_margin.dimension();
  const int k1 = out.scalar_margin.dimension();
  const int p_full = ku * ks;

  out.layout.scalar_count = px;
  out.layout.scalar_offset = 0;
  out.layout.scalar_size = k1;
  out.layout.gamma_offset = px * k1;

  Eigen::MatrixXd constraint(0, p_full);
  if (cfg.constraint != ConstraintKind::none) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_strata, data.zmat.cols());
    int largest = 1;
    for (int l = 0; l < n_strata; ++l) {
      const int lo = data.stratum_start[l], cnt = data.stratum_start[l + 1] - lo;
      sums.row(l) = data.zmat.middleRows(lo, cnt).colwise().sum();
      largest = std::max(largest, cnt);
    }
    double zmax = data.zmat.cwiseAbs().maxCoeff();
    if (data.z_means.size() > 0) zmax += data.z_means.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd bt_strata = out.t_margin.evaluate(data.landmarks);
    constraint = constraint_rows(cfg.constraint, sums, bu, bt_strata, std::max(1e-300, zmax * largest));
  }
  out.constraint_transform = null_space_transform(constraint, &out.constraint_rank);
  const bool constrained = out.constraint_transform.size() > 0;
  out.layout.gamma_size = constrained ? static_cast<int>(out.constraint_transform.cols()) : p_full;
  const int p = out.layout.gamma_offset + out.layout.gamma_size;

  PenalizedProblem prob;
  prob.kind = LikelihoodKind::cox_stratified;
  const auto n = static_cast<Eigen::Index>(data.rows());
  prob.design.resize(n, p);
  for (int c = 0; c < px; ++c)
    prob.design.middleCols(c * k1, k1) = data.x.col(c).asDiagonal() * phi;
  Eigen::MatrixXd g = tensor_rows(a, bt);
  if (constrained) g = g * out.constraint_transform;
  prob.design.middleCols(out.layout.gamma_offset, out.layout.gamma_size) = g;
  prob.time = data.capped_time;
  prob.response.assign(data.d.begin(), data.d.end());
  prob.stratum = data.stratum;

  BlockPlan plan;
  add_scalar_penalties(plan, out.scalar_margin, px, 0);
  add_gamma_penalties(plan, out.u_margin, out.t_margin, out.layout.gamma_offset, out.constraint_transform);
  prob.penalties = std::move(plan.groups);
  prob.coefficient_names = coefficient_names(out.layout, ku, constrained);
  out.rows = data.rows();
  return prob;
}

namespace {

// Keeps only the listed strata (relabelled 0..k-1 in order).
StackedLandmarkData subset_strata(const StackedLandmarkData& data, const std::vector<int>& keep) {
  StackedLandmarkData out;
  out.umat = data.umat;
  out.centered = data.centered;
  out.warnings = data.warnings;
  std::vector<Eigen::Index> rows;
  out.stratum_start.push_back(0);
  for (std::size_t q = 0; q < keep.size(); ++q) {
    const int l = keep[q];
    for (int r = data.stratum_start[l]; r < data.stratum_start[l + 1]; ++r) {
      rows.push_back(r);
      out.id.push_back(data.id[r]);
      out.subject.push_back(data.subject[r]);
      out.capped_time.push_back(data.capped_time[r]);
      out.d.push_back(data.d[r]);
      out.svec.push_back(data.svec[r]);
      out.stratum.push_back(static_cast<int>(q));
    }
    out.landmarks.push_back(data.landmarks[l]);
    out.windows.push_back(data.windows[l]);
    out.stratum_start.push_back(static_cast<int>(out.id.size()));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, data.x.cols());
  out.zmat.resize(n, data.zmat.cols());
  out.lmat.resize(n, data.lmat.cols());
  out.zlmat.resize(n, data.zlmat.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    out.x.row(r) = data.x.row(rows[r]);
    out.zmat.row(r) = data.zmat.row(rows[r]);
    out.lmat.row(r) = data.lmat.row(rows[r]);
    out.zlmat.row(r) = data.zlmat.row(rows[r]);
  }
  if (data.z_means.size() > 0) {
    out.z_means.resize(static_cast<Eigen::Index>(keep.size()), data.z_means.cols());
    for (std::size_t q = 0; q < keep.size(); ++q) out.z_means.row(static_cast<Eigen::Index>(q)) = data.z_means.row(keep[q]);
  }
  return out;
}

}  // namespace

RouteFit fit_tvflcm_landmark(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                             const LandmarkGrid& grid, const RouteConfig& config) {
  RouteFit out;
  const auto t_begin = Clock::now();
  const auto copy = prepared_records(records, &out.ties);
  if (out.ties.jittered > 0)
    out.warnings.push_back(std::to_string(out.ties.jittered) + " tied event times jittered by multiples of " +
                           format_double(1e-9 * out.ties.scale));
  StackedLandmarkData data = build_landmark_dataset(copy, z, grid);
  if (config.center) data = center_by_landmark(std::move(data));
  std::vector<int> keep;
  for (int l = 0; l < data.strata(); ++l) {
    int events = 0;
    for (int r = data.stratum_start[l]; r < data.stratum_start[l + 1]; ++r) events += data.d[r];
    if (events > 0)
      keep.push_back(l);
    else
      data.warnings.push_back("landmark s=" + format_double(data.landmarks[l]) +
                              " has no events in its window and was dropped");
  }
  if (keep.empty()) throw ValidationError("landmark route: no landmark window contains an event");
  if (static_cast<int>(keep.size()) != data.strata()) data = subset_strata(data, keep);
  out.warnings.insert(out.warnings.end(), data.warnings.begin(), data.warnings.end());

  if (!config.separate_models) {
    const PenalizedProblem prob = build_landmark_problem(data, config, &out);
    out.expand_seconds = seconds_since(t_begin);
    const auto t0 = Clock::now();
    out.fit = run_fit(prob, config);
    out.fit_seconds = seconds_since(t0);
    out.baseline = out.fit.baseline;
    return out;
  }

  // Separate models: one unconstrained-in-time fit per landmark, packed into
  // the indicator-coded layout of the super model.
  RouteConfig sub_cfg = config;
  sub_cfg.time_margin = TimeMargin::indicator;
  sub_cfg.separate_models = false;
  const PenalizedProblem packed = build_landmark_problem(data, sub_cfg, &out);
  out.expand_seconds = seconds_since(t_begin);
  if (out.constraint_transform.size() > 0)
    throw ValidationError("separate-model mode requires an inactive gamma constraint (centred predictor)");
  const auto t0 = Clock::now();
  const int n_strata = data.strata();
  const int ku = out.u_margin.dimension();
  const int px = out.layout.scalar_count;
  const int p = packed.coefficients();
  FitResult total;
  total.coefficients = Eigen::VectorXd::Zero(p);
  total.covariance = Eigen::MatrixXd::Zero(p, p);
  total.information = Eigen::MatrixXd::Zero(p, p);
  total.linear_predictor = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.rows()));
  RouteConfig one_cfg = config;
  one_cfg.time_margin = TimeMargin::constant;
  one_cfg.separate_models = false;
  one_cfg.k_1 = 1;
  for (int l = 0; l < n_strata; ++l) {
    const StackedLandmarkData one = subset_strata(data, {l});
    RouteFit sk;
    const PenalizedProblem prob = build_landmark_problem(one, one_cfg, &sk);
    FitResult f = run_fit(prob, one_cfg);
    // indices of this stratum's coefficients in the packed layout
    std::vector<int> map;
    for (int c = 0; c < px; ++c) map.push_back(c * n_strata + l);
    for (int j = 0; j < ku; ++j) map.push_back(out.layout.gamma_offset + l * ku + j);
    if (sk.constraint_transform.size() > 0)
      throw ValidationError("separate-model mode requires an inactive gamma constraint (centred predictor)");
    for (std::size_t a = 0; a < map.size(); ++a) {
      total.coefficients(map[a]) = f.coefficients(static_cast<Eigen::Index>(a));
      for (std::size_t b = 0; b < map.size(); ++b) {
        total.covariance(map[a], map[b]) = f.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        total.information(map[a], map[b]) = f.information(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
    total.linear_predictor.segment(data.stratum_start[l], data.stratum_start[l + 1] - data.stratum_start[l]) =
        f.linear_predictor;
    total.loglik += f.loglik;
    total.reml.value += f.reml.value;
    total.reml.penalized_loglik += f.reml.penalized_loglik;
    total.reml.half_log_pdet_s += f.reml.half_log_pdet_s;
    total.reml.half_log_det_h += f.reml.half_log_det_h;
    total.convergence.iterations = std::max(total.convergence.iterations, f.convergence.iterations);
    total.convergence.gradient_norm = std::max(total.convergence.gradient_norm, f.convergence.gradient_norm);
    total.convergence.penalized_loglik += f.convergence.penalized_loglik;
    total.lambdas.insert(total.lambdas.end(), f.lambdas.begin(), f.lambdas.end());
    total.log10_lambdas.insert(total.log10_lambdas.end(), f.log10_lambdas.begin(), f.log10_lambdas.end());
    total.edf_total += f.edf_total;
    total.edf.insert(total.edf.end(), f.edf.begin(), f.edf.end());
    total.baseline.push_back(f.baseline.front());
    out.separate_fits.push_back(std::move(f));
  }
  out.fit = std::move(total);
  out.fit_seconds = seconds_since(t0);
  out.baseline = out.fit.baseline;
  return out;
}

CostEstimate cost_planner(int n, int j, int k_u, int k_s, double event_rate, int landmarks) {
  detail::require(n > 0 && j > 0 && k_u > 0 && k_s > 0 && landmarks > 0, "cost_planner: sizes must be positive");
  detail::require(event_rate > 0.0 && event_rate <= 1.0, "cost_planner: event rate must be in (0, 1]");
  CostEstimate c;
  const double nn = n;
  const double e = std::round(event_rate * nn);
  // sum_{k=1}^{E} (N - (k-1)/r)
  c.poisson_rows = e * nn - (e * (e - 1.0) / 2.0) / event_rate;
  c.landmark_rows = nn * (landmarks + 1.0) / 2.0;
  const double p = static_cast<double>(k_u) * k_s;
  const double projection = nn * j * k_u;
  c.poisson_flops = c.poisson_rows * p * p + projection;
  c.landmark_flops = c.landmark_rows * p * p + projection;
  return c;
}

}  // namespace tvflcm
