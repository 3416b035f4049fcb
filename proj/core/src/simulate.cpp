#include "tvflcm/simulate.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

namespace tvflcm {

std::string_view to_string(GammaName g) {
  switch (g) {
    case GammaName::zero: return "zero";
    case GammaName::f1: return "f1";
    case GammaName::f2: return "f2";
    case GammaName::f3: return "f3";
    case GammaName::f4: return "f4";
  }
  return "?";
}

GammaName gamma_name_from_string(std::string_view name) {
  for (GammaName g : {GammaName::zero, GammaName::f1, GammaName::f2, GammaName::f3, GammaName::f4})
    if (name == to_string(g)) return g;
  throw ValidationError("unknown scenario '" + std::string(name) + "' (expected f1, f2, f3, f4 or zero)");
}

double gamma_true(GammaName g, double u, double t) {
  constexpr double pi = std::numbers::pi;
  switch (g) {
    case GammaName::zero: return 0.0;
    case GammaName::f1: return std::sin(2 * pi * u) / (t + 0.5);
    case GammaName::f2: return std::sin(2 * pi * u) / (t / 2 + 1);
    case GammaName::f3: return 10 * std::cos(4 * pi * (t - u));
    case GammaName::f4: return std::cos(2 * pi * (t * t * t - 2 / (u * u + 1)));
  }
  throw ValidationError("gamma_true: unknown surface");
}

int scenario_basis_dimension(GammaName g) { return g == GammaName::f3 ? 15 : 5; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t replication_seed(std::uint64_t master, int rep) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(rep) + 1));
}

std::string_view to_string(StudyMethod m) {
  switch (m) {
    case StudyMethod::landmark_window: return "landmark_w";
    case StudyMethod::landmark_infinite: return "landmark_inf";
    case StudyMethod::poisson: return "poisson";
  }
  return "?";
}

void SimulationConfig::validate() const {
  detail::require(n >= 2, "simulation: n must be at least 2");
  detail::require(j >= 4, "simulation: J must be at least 4");
  detail::require(n_t >= 1, "simulation: survival grid must have at least one interval");
  detail::require(reps >= 1, "simulation: reps must be positive");
  detail::require(window > 0.0, "simulation: window must be positive");
  detail::require(landmark_step > 0.0 && landmarks >= 1, "simulation: landmark grid must be non-empty");
  detail::require(k_u >= 1 && k_s >= 1, "simulation: basis sizes must be positive");
  detail::require(baseline_hazard > 0.0, "simulation: baseline hazard must be positive");
  detail::require(predictor_basis >= 4, "simulation: predictor basis needs at least 4 functions");
  detail::require(score_variance > 0.0, "simulation: score variance must be positive");
  detail::require(score_correlation > -1.0 / (predictor_basis - 1) && score_correlation < 1.0,
                  "simulation: score correlation makes the covariance indefinite");
  detail::require(noise_sd >= 0.0, "simulation: noise sd must be nonnegative");
  detail::require(eval_intervals >= 1, "simulation: evaluation grid must have at least one interval");
  detail::require(!methods.empty(), "simulation: no methods selected");
}

PredictorDraw gen_functional_predictors(const SimulationConfig& cfg, Rng& rng) {
  const std::vector<double> grid = midpoint_grid(cfg.j, {0.0, 1.0});
  const Eigen::MatrixXd phi =
      evaluate_basis(make_basis(SplineFamily::bspline_cubic, {0.0, 1.0}, cfg.predictor_basis), grid).values;
  const int k = cfg.predictor_basis;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(k, k, cfg.score_correlation * cfg.score_variance);
  sigma.diagonal().setConstant(cfg.score_variance);
  const Eigen::MatrixXd chol = sigma.llt().matrixL();
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Eigen::MatrixXd b(cfg.n, k);
  Eigen::VectorXd e(k);
  for (int i = 0; i < cfg.n; ++i) {
    for (int q = 0; q < k; ++q) e(q) = std_normal(rng);
    b.row(i) = (chol * e).transpose();
  }
  PredictorDraw d;
  d.scores = b;
  Eigen::MatrixXd zt = b * phi.transpose();
  Eigen::MatrixXd zo = zt;
  for (int i = 0; i < cfg.n; ++i)
    for (int v = 0; v < cfg.j; ++v) zo(i, v) += cfg.noise_sd * std_normal(rng);
  d.z_true = make_predictor(std::move(zt), grid);
  d.z_observed = make_predictor(std::move(zo), grid);
  return d;
}

Eigen::MatrixXd survival_on_grid(const FunctionalPredictor& z, GammaName g, const SimulationConfig& cfg) {
  const int j = z.grid_size();
  const int nt = cfg.n_t;
  Eigen::MatrixXd gw(j, nt + 1);
  for (int v = 0; v < j; ++v)
    for (int m = 0; m <= nt; ++m) gw(v, m) = z.weights[v] * gamma_true(g, z.grid[v], double(m) / nt);
  const Eigen::MatrixXd eta = z.values * gw;
  Eigen::MatrixXd s(z.subjects(), nt + 1);
  const double dt = 1.0 / nt;
  for (int i = 0; i < z.subjects(); ++i) {
    double cum = 0.0;
    s(i, 0) = 1.0;
    for (int m = 1; m <= nt; ++m) {
      cum += cfg.baseline_hazard * std::exp(eta(i, m - 1)) * dt;
      s(i, m) = std::exp(-cum);
    }
  }
  return s;
}

double inverse_survival(const Eigen::Ref<const Eigen::RowVectorXd>& s, int n_t, double u) {
  for (Eigen::Index m = 0; m < s.size(); ++m)
    if (s(m) <= u) return double(m) / n_t;
  return INFINITY;
}

std::vector<SurvivalRecord> simulate_survival(const FunctionalPredictor& z, GammaName g, const SimulationConfig& cfg,
                                              Rng& rng, TieReport* ties) {
  const Eigen::MatrixXd s = survival_on_grid(z, g, cfg);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::vector<SurvivalRecord> rec(static_cast<std::size_t>(z.subjects()));
  for (int i = 0; i < z.subjects(); ++i) {
    const double u = unif(rng);
    const double c = cfg.censoring ? std::min(1.0, expo(rng)) : INFINITY;
    const double t = inverse_survival(s.row(i), cfg.n_t, u);
    rec[i].id = i + 1;
    if (std::isinf(t)) {
      rec[i].y = std::min(1.0, c);  // event-free through the end of follow-up
      rec[i].delta = 0;
    } else {
      rec[i].y = std::min(t, c);
      rec[i].delta = t <= c ? 1 : 0;
    }
  }
  const TieReport tr = break_ties(rec);
  if (ties) *ties = tr;
  return rec;
}

double integrated_squared_error(const SurfaceGrid& est, GammaName truth) {
  double acc = 0.0;
  for (std::size_t c = 0; c < est.t.size(); ++c)
    for (std::size_t r = 0; r < est.u.size(); ++r) {
      const double d = est.value(r, c) - gamma_true(truth, est.u[r], est.t[c]);
      acc += d * d;
    }
  return acc / double(est.u.size() * est.t.size());
}

double amse(const std::vector<SurfaceGrid>& est, GammaName truth) {
  detail::require(!est.empty(), "amse: no estimates");
  double acc = 0.0;
  for (const auto& e : est) {
    detail::require(e.u == est.front().u && e.t == est.front().t, "amse: estimates on different grids");
    acc += integrated_squared_error(e, truth);
  }
  return acc / double(est.size());
}

CoverageResult coverage(const std::vector<SurfaceGrid>& est, GammaName truth, double z) {
  detail::require(!est.empty(), "coverage: no estimates");
  CoverageResult out;
  const auto nu = static_cast<Eigen::Index>(est.front().u.size());
  const auto nt = static_cast<Eigen::Index>(est.front().t.size());
  out.pointwise = Eigen::MatrixXd::Zero(nu, nt);
  for (const auto& e : est) {
    detail::require(e.u == est.front().u && e.t == est.front().t, "coverage: estimates on different grids");
    detail::require(e.se.rows() == nu && e.se.cols() == nt, "coverage: standard errors missing");
    for (Eigen::Index c = 0; c < nt; ++c)
      for (Eigen::Index r = 0; r < nu; ++r) {
        const double g = gamma_true(truth, e.u[r], e.t[c]);
        const double half = z * e.se(r, c);
        if (std::isnan(half)) throw ValidationError("coverage: standard error is NaN");
        if (std::abs(e.value(r, c) - g) <= half) out.pointwise(r, c) += 1.0;
      }
  }
  out.pointwise /= double(est.size());
  out.average = out.pointwise.mean();
  return out;
}

RouteConfig study_route_config(const SimulationConfig& cfg) {
  RouteConfig rc;
  rc.k_u = cfg.k_u;
  rc.k_s = cfg.k_s;
  rc.u_family = SplineFamily::cyclic_cubic;
  rc.t_family = SplineFamily::cubic_regression;
  rc.u_domain = Interval{0.0, 1.0};
  rc.t_domain = Interval{0.0, 1.0};
  rc.smoothing = cfg.smoothing;
  return rc;
}

LandmarkGrid study_landmarks(const SimulationConfig& cfg, bool infinite_window) {
  return LandmarkGrid::partition(0.0, cfg.landmark_step, cfg.landmarks, infinite_window ? INFINITY : cfg.window);
}

const MethodSummary& StudyReport::summary(StudyMethod m) const {
  for (const auto& s : methods)
    if (s.method == m) return s;
  throw ValidationError("study report: method '" + std::string(to_string(m)) + "' was not run");
}

namespace {

struct RepOutcome {
  std::vector<ReplicationRecord> records;
  std::vector<SurfaceGrid> surfaces;   // per method; empty grid on failure
};

RepOutcome run_replication(const SimulationConfig& cfg, int rep) {
  RepOutcome out;
  const std::uint64_t seed = replication_seed(cfg.seed, rep);
  Rng rng(seed);
  const PredictorDraw draw = gen_functional_predictors(cfg, rng);
  const std::vector<SurvivalRecord> records = simulate_survival(draw.z_true, cfg.gamma, cfg, rng);
  int events = 0;
  for (const auto& r : records) events += r.delta;
  const RouteConfig rc = study_route_config(cfg);
  const std::vector<double> eval = uniform_points(0.0, 1.0, cfg.eval_intervals);
  for (StudyMethod m : cfg.methods) {
    ReplicationRecord rr;
    rr.rep = rep;
    rr.seed = seed;
    rr.method = m;
    rr.events = events;
    rr.censored_fraction = 1.0 - double(events) / cfg.n;
    SurfaceGrid grid;
    try {
      RouteFit fit = m == StudyMethod::poisson
                         ? fit_tvflcm_poisson(records, draw.z_observed, rc)
                         : fit_tvflcm_landmark(records, draw.z_observed,
                                               study_landmarks(cfg, m == StudyMethod::landmark_infinite), rc);
      grid = eval_surface(fit.surface(), eval, eval);
      rr.rows = fit.rows;
      rr.expand_seconds = fit.expand_seconds;
      rr.fit_seconds = fit.fit_seconds;
      rr.log10_lambdas = fit.fit.log10_lambdas;
      rr.ise = integrated_squared_error(grid, cfg.gamma);
      if (m == StudyMethod::poisson) rr.coverage = coverage({grid}, cfg.gamma).average;
    } catch (const std::exception& e) {
      rr.failed = true;
      rr.error = e.what();
      grid = SurfaceGrid{};
    }
    out.records.push_back(std::move(rr));
    out.surfaces.push_back(std::move(grid));
  }
  return out;
}

}  // namespace

StudyReport run_study(const SimulationConfig& cfg) {
  cfg.validate();
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(cfg.reps));
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, cfg.reps);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < cfg.reps; rep = next++) outcomes[rep] = run_replication(cfg, rep);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  StudyReport rep;
  rep.config = cfg;
  rep.surfaces.resize(cfg.methods.size());
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    MethodSummary s;
    s.method = cfg.methods[mi];
    std::vector<SurfaceGrid> ok;
    for (auto& o : outcomes) {
      const ReplicationRecord& r = o.records[mi];
      s.expand_seconds += r.expand_seconds;
      s.fit_seconds += r.fit_seconds;
      if (r.failed) {
        ++s.failures;
        continue;
      }
      ++s.completed;
      ok.push_back(std::move(o.surfaces[mi]));
    }
    if (!ok.empty()) {
      s.amse = amse(ok, cfg.gamma);
      if (s.method == StudyMethod::poisson) {
        const CoverageResult cov = coverage(ok, cfg.gamma);
        s.coverage = cov.average;
        const Eigen::ArrayXXd dev = (cov.pointwise.array() - 0.95).abs();
        s.coverage_mean_deviation = dev.mean();
        s.coverage_max_deviation = dev.maxCoeff();
        rep.poisson_coverage = cov.pointwise;
      }
    }
    rep.failures += s.failures;
    if (cfg.keep_surfaces) rep.surfaces[mi] = std::move(ok);
    rep.methods.push_back(s);
  }
  for (auto& o : outcomes)
    for (auto& r : o.records) rep.records.push_back(std::move(r));
  if (!cfg.keep_surfaces) rep.surfaces.clear();
  return rep;
}

void write_study_report(std::ostream& out, const StudyReport& r) {
  const SimulationConfig& c = r.config;
  out << "key,value\n";
  out << "scenario," << to_string(c.gamma) << '\n'
      << "n," << c.n << '\n'
      << "J," << c.j << '\n'
      << "n_t," << c.n_t << '\n'
      << "reps," << c.reps << '\n'
      << "seed," << c.seed << '\n'
      << "window," << format_double(c.window) << '\n'
      << "landmarks," << c.landmarks << '\n'
      << "landmark_step," << format_double(c.landmark_step) << '\n'
      << "k_u," << c.k_u << '\n'
      << "k_s," << c.k_s << '\n'
      << "baseline_hazard," << format_double(c.baseline_hazard) << '\n'
      << "failures," << r.failures << '\n';
  out << "\nmethod,completed,failures,amse,coverage,coverage_mean_dev,coverage_max_dev\n";
  for (const auto& s : r.methods) {
    out << to_string(s.method) << ',' << s.completed << ',' << s.failures << ',' << format_double(s.amse) << ','
        << (s.coverage ? format_double(*s.coverage) : "NA") << ','
        << (s.coverage ? format_double(s.coverage_mean_deviation) : "NA") << ','
        << (s.coverage ? format_double(s.coverage_max_deviation) : "NA") << '\n';
  }
  out << "# method,expand_seconds,fit_seconds\n";
  for (const auto& s : r.methods)
    out << "# " << to_string(s.method) << ',' << format_double(s.expand_seconds) << ','
        << format_double(s.fit_seconds) << '\n';
  out << "\nrep,seed,method,status,ise,coverage,rows,events,censored_fraction,log10_lambda\n";
  for (const auto& rr : r.records) {
    out << rr.rep << ',' << rr.seed << ',' << to_string(rr.method) << ',' << (rr.failed ? "failed" : "ok") << ','
        << format_double(rr.ise) << ',' << (rr.method == StudyMethod::poisson && !rr.failed ? format_double(rr.coverage) : "NA")
        << ',' << rr.rows << ',' << rr.events << ',' << format_double(rr.censored_fraction) << ',';
    for (std::size_t q = 0; q < rr.log10_lambdas.size(); ++q)
      out << (q ? ";" : "") << format_double(rr.log10_lambdas[q]);
    out << '\n';
    if (rr.failed) out << "# rep " << rr.rep << ' ' << to_string(rr.method) << " failed: " << rr.error << '\n';
  }
  for (const auto& rr : r.records)
    out << "# timing rep=" << rr.rep << " method=" << to_string(rr.method)
        << " expand_s=" << format_double(rr.expand_seconds) << " fit_s=" << format_double(rr.fit_seconds) << '\n';
}

}  // namespace tvflcm
