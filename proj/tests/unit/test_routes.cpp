#include "tvflcm/error.hpp"
#include "tvflcm/routes.hpp"
#include "tvflcm/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace tvflcm;

namespace {

struct Cohort {
  std::vector<SurvivalRecord> records;
  FunctionalPredictor z;
};

Cohort simulated(int n, int j, GammaName g, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.j = j;
  Rng rng(seed);
  PredictorDraw d = gen_functional_predictors(cfg, rng);
  Cohort c;
  c.records = simulate_survival(d.z_true, g, cfg, rng);
  c.z = std::move(d.z_observed);
  return c;
}

double sup_difference(const RouteFit& a, const RouteFit& b, const std::vector<double>& u, const std::vector<double>& t) {
  const SurfaceGrid sa = eval_surface(a.surface(), u, t), sb = eval_surface(b.surface(), u, t);
  return (sa.value - sb.value).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("routes") {

TEST_CASE("poisson route expands one row per risk-set member") {
  const Cohort c = simulated(80, 10, GammaName::f1, 1);
  RouteConfig cfg;
  cfg.log10_lambda = std::vector<double>{0.0};
  const RouteFit f = fit_tvflcm_poisson(c.records, c.z, cfg);
  std::vector<SurvivalRecord> r = c.records;
  break_ties(r);
  CHECK(f.rows == poisson_row_count(r));
  CHECK(f.route == Route::poisson);
  CHECK(f.baseline.size() == 1);
}

TEST_CASE("poisson and stratified cox likelihoods agree on the expanded data") {
  const Cohort c = simulated(60, 20, GammaName::f1, 2);
  RouteConfig cfg;
  cfg.k_u = 4;
  cfg.k_s = 3;
  cfg.log10_lambda = std::vector<double>{-1.0, 0.5};
  const RouteFit pois = fit_tvflcm_poisson(c.records, c.z, cfg);
  cfg.expanded_likelihood = LikelihoodKind::cox_stratified;
  const RouteFit cox = fit_tvflcm_poisson(c.records, c.z, cfg);
  const std::vector<double> u = uniform_points(pois.u_margin.domain().lo, pois.u_margin.domain().hi, 100);
  const std::vector<double> t = uniform_points(pois.t_margin.domain().lo, pois.t_margin.domain().hi, 100);
  CHECK(sup_difference(pois, cox, u, t) < 1e-4);
}

TEST_CASE("single landmark with infinite window is a plain functional cox fit") {
  const Cohort c = simulated(150, 20, GammaName::zero, 3);
  RouteConfig cfg;
  cfg.k_s = 1;
  cfg.log10_lambda = std::vector<double>{-2.0};
  const RouteFit lm = fit_tvflcm_landmark(c.records, c.z, LandmarkGrid{{0.0}, {INFINITY}}, cfg);
  // independent assembly: centred Z, Riemann weights, cyclic basis, one smoothing parameter
  std::vector<SurvivalRecord> r = c.records;
  break_ties(r);
  const Eigen::RowVectorXd mean = c.z.values.colwise().mean();
  const Eigen::MatrixXd zc = c.z.values.rowwise() - mean;
  const Interval dom{c.z.grid.front() - 0.5 * c.z.weights.front(), c.z.grid.back() + 0.5 * c.z.weights.back()};
  const BasisSpec cc = make_basis(SplineFamily::cyclic_cubic, dom, 5);
  const Eigen::MatrixXd bu = evaluate_basis(cc, c.z.grid).values;
  Eigen::VectorXd w(c.z.grid_size());
  for (int v = 0; v < w.size(); ++v) w(v) = c.z.weights[v];
  PenalizedProblem p;
  p.kind = LikelihoodKind::cox_stratified;
  p.design = zc * w.asDiagonal() * bu;
  for (const auto& a : r) {
    p.time.push_back(a.y);
    p.response.push_back(a.delta);
  }
  p.penalties.push_back(single_penalty_group("g", 0, roughness_penalty(cc), 0));
  const FitResult direct = newton_fit(p, {1e-2});
  const std::vector<double> u = uniform_points(dom.lo, dom.hi, 100);
  const Eigen::VectorXd g_direct = evaluate_basis(cc, u).values * direct.coefficients;
  const SurfaceGrid s = eval_surface(lm.surface(), u, std::vector<double>{0.0});
  CHECK((s.value.col(0) - g_direct).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("separate fits equal the indicator-coded super model") {
  const Cohort c = simulated(200, 15, GammaName::f1, 4);
  const LandmarkGrid g = LandmarkGrid::partition(0.0, 0.3, 2, 0.3);
  RouteConfig cfg;
  cfg.time_margin = TimeMargin::indicator;
  cfg.log10_lambda = std::vector<double>{-1.0};
  const RouteFit super = fit_tvflcm_landmark(c.records, c.z, g, cfg);
  cfg.separate_models = true;
  const RouteFit sep = fit_tvflcm_landmark(c.records, c.z, g, cfg);
  REQUIRE(sep.separate_fits.size() == 2);
  const std::vector<double> u = uniform_points(super.u_margin.domain().lo, super.u_margin.domain().hi, 50);
  CHECK(sup_difference(super, sep, u, super.t_margin.levels()) < 1e-6);
  CHECK(super.fit.loglik == doctest::Approx(sep.fit.loglik).epsilon(1e-8));
}

TEST_CASE("an event-free landmark is dropped and leaves the fit unchanged") {
  Cohort c = simulated(150, 10, GammaName::f1, 5);
  // nobody fails in (0.5, 0.55]
  for (auto& r : c.records)
    if (r.delta && r.y > 0.5 && r.y <= 0.55) r.delta = 0;
  RouteConfig cfg;
  cfg.log10_lambda = std::vector<double>{0.0, 0.0};
  const RouteFit with = fit_tvflcm_landmark(c.records, c.z, LandmarkGrid{{0.0, 0.25, 0.5}, {0.25, 0.25, 0.05}}, cfg);
  const RouteFit without = fit_tvflcm_landmark(c.records, c.z, LandmarkGrid{{0.0, 0.25}, {0.25, 0.25}}, cfg);
  bool warned = false;
  for (const auto& w : with.warnings) warned |= w.find("no events") != std::string::npos;
  CHECK(warned);
  REQUIRE(with.fit.coefficients.size() == without.fit.coefficients.size());
  CHECK((with.fit.coefficients - without.fit.coefficients).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("null effect stays within sampling error") {
  const Cohort c = simulated(500, 30, GammaName::zero, 6);
  const RouteFit f = fit_tvflcm_poisson(c.records, c.z);
  const std::vector<double> u = uniform_points(f.u_margin.domain().lo, f.u_margin.domain().hi, 20);
  const std::vector<double> t = uniform_points(f.t_margin.domain().lo, f.t_margin.domain().hi, 20);
  const SurfaceGrid s = eval_surface(f.surface(), u, t);
  CHECK(s.value.cwiseAbs().maxCoeff() < 3 * s.se.maxCoeff());
}

TEST_CASE("cost planner") {
  CHECK(cost_planner(2, 1, 1, 1, 0.5, 1).poisson_rows == 2.0);
  CHECK(cost_planner(100, 1, 1, 1, 1.0, 1).poisson_rows == 100.0 * 101 / 2);
  CHECK(cost_planner(4445, 1440, 10, 10, 0.15, 25).poisson_rows > 1e6);
  CHECK_THROWS_AS(cost_planner(0, 1, 1, 1, 0.5, 1), ValidationError);
  const Cohort c = simulated(2000, 20, GammaName::f1, 7);
  std::vector<SurvivalRecord> r = c.records;
  break_ties(r);
  int events = 0;
  for (const auto& a : r) events += a.delta;
  const LandmarkGrid g = LandmarkGrid::partition(0.0, 0.04, 25, 0.04);
  const double measured = static_cast<double>(poisson_row_count(r)) /
                          static_cast<double>(build_landmark_dataset(r, c.z, g).rows());
  const double predicted = cost_planner(2000, 20, 5, 5, events / 2000.0, 25).row_ratio();
  CHECK(predicted / measured < 2.0);
  CHECK(measured / predicted < 2.0);
}

TEST_CASE("configuration errors") {
  const Cohort c = simulated(50, 10, GammaName::f1, 8);
  RouteConfig cfg;
  cfg.k_u = 2;
  CHECK_THROWS_AS(fit_tvflcm_poisson(c.records, c.z, cfg), ValidationError);
  CHECK_THROWS_AS(route_from_string("glm"), ValidationError);
  RouteConfig lam;
  lam.log10_lambda = std::vector<double>{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(fit_tvflcm_poisson(c.records, c.z, lam), ValidationError);
}

}
