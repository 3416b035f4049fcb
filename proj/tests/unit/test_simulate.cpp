#include "tvflcm/error.hpp"
#include "tvflcm/simulate.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace tvflcm;

namespace {

// censored fraction for gamma = 0, lambda_0 = 1, n_t = 100, C = min(1, Exp(1)):
// 1 - sum_m (exp(-(m-1)/100) - exp(-m/100)) exp(-m/100), frozen from the closed form below
constexpr double kNullCensoredFraction = 0.5698292853965468;

double null_censored_oracle() {
  double p = 0.0;
  for (int m = 1; m <= 100; ++m) p += (std::exp(-(m - 1) / 100.0) - std::exp(-m / 100.0)) * std::exp(-m / 100.0);
  return 1.0 - p;
}

std::string strip_comments(const std::string& s) {
  std::istringstream in(s);
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') out += line + '\n';
  return out;
}

SurfaceGrid truth_grid(GammaName g, int n) {
  SurfaceGrid s;
  s.u = uniform_points(0, 1, n);
  s.t = uniform_points(0, 1, n);
  s.value.resize(n + 1, n + 1);
  for (int c = 0; c <= n; ++c)
    for (int r = 0; r <= n; ++r) s.value(r, c) = gamma_true(g, s.u[r], s.t[c]);
  s.se = Eigen::MatrixXd::Zero(n + 1, n + 1);
  return s;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("true surfaces") {
  CHECK(gamma_true(GammaName::f1, 0.25, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  for (double t : {0.0, 0.3, 1.0}) CHECK(std::abs(gamma_true(GammaName::f2, 0.5, t)) < 1e-15);
  for (double u : {0.0, 0.4, 0.9}) CHECK(gamma_true(GammaName::f3, u, u) == 10.0);
  CHECK(gamma_true(GammaName::f4, 1.0, 1.0) == doctest::Approx(std::cos(2 * M_PI * (1.0 - 1.0))));
  CHECK(gamma_true(GammaName::zero, 0.3, 0.7) == 0.0);
  CHECK(scenario_basis_dimension(GammaName::f3) == 15);
  CHECK(scenario_basis_dimension(GammaName::f1) == 5);
  CHECK(gamma_name_from_string("f3") == GammaName::f3);
  CHECK_THROWS_AS(gamma_name_from_string("f9"), ValidationError);
}

TEST_CASE("seeding") {
  CHECK(replication_seed(7, 0) == splitmix64(7 ^ splitmix64(1)));
  CHECK(replication_seed(7, 0) != replication_seed(7, 1));
  CHECK(replication_seed(7, 3) != replication_seed(8, 3));
}

TEST_CASE("predictor statistics") {
  SimulationConfig cfg;
  cfg.n = 100000;
  cfg.j = 10;
  Rng rng(11);
  const PredictorDraw d = gen_functional_predictors(cfg, rng);
  const Eigen::MatrixXd b = d.scores.leftCols(2).rowwise() - d.scores.leftCols(2).colwise().mean();
  const Eigen::Matrix2d cov = b.transpose() * b / double(cfg.n - 1);
  CHECK(cov(0, 0) >= 3.9);
  CHECK(cov(0, 0) <= 4.1);
  const double cor = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  CHECK(cor >= 0.29);
  CHECK(cor <= 0.31);
  const Eigen::MatrixXd e = d.z_observed.values - d.z_true.values;
  const double sd = std::sqrt((e.array() - e.mean()).square().sum() / double(e.size() - 1));
  CHECK(sd >= 0.249);
  CHECK(sd <= 0.251);
  CHECK(d.z_observed.grid == midpoint_grid(10));
}

TEST_CASE("inverse survival") {
  Eigen::RowVectorXd s(101);
  for (int m = 0; m <= 100; ++m) s(m) = std::exp(-m / 100.0);
  CHECK(inverse_survival(s, 100, 1.0 - 1e-12) == 0.01);
  CHECK(inverse_survival(s, 100, std::exp(-0.5)) == 0.5);
  CHECK(std::isinf(inverse_survival(s, 100, 0.3)));
}

TEST_CASE("per-subject survival curves are nonincreasing and start at one") {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.j = 20;
  Rng rng(12);
  const PredictorDraw d = gen_functional_predictors(cfg, rng);
  for (GammaName g : {GammaName::f1, GammaName::f2, GammaName::f3, GammaName::f4}) {
    const Eigen::MatrixXd s = survival_on_grid(d.z_true, g, cfg);
    CHECK(s.col(0).cwiseEqual(1.0).all());
    CHECK((s.rightCols(cfg.n_t).array() <= s.leftCols(cfg.n_t).array()).all());
    CHECK(s.maxCoeff() <= 1.0);
  }
}

TEST_CASE("null model reproduces the unit exponential") {
  SimulationConfig cfg;
  cfg.n = 5000;
  cfg.j = 10;
  cfg.censoring = false;
  Rng rng(13);
  const PredictorDraw d = gen_functional_predictors(cfg, rng);
  const std::vector<SurvivalRecord> r = simulate_survival(d.z_true, GammaName::zero, cfg, rng);
  std::vector<double> y;
  for (const auto& x : r) y.push_back(x.y);
  std::sort(y.begin(), y.end());
  double sup = 0.0;
  for (int k = 0; k <= 10000; ++k) {
    const double t = k / 10000.0 * (1.0 - 1e-12);
    const double emp = double(y.end() - std::upper_bound(y.begin(), y.end(), t)) / y.size();
    sup = std::max(sup, std::abs(emp - std::exp(-t)));
  }
  CHECK(sup < 0.05);
}

TEST_CASE("censoring fraction under the null") {
  CHECK(std::abs(null_censored_oracle() - kNullCensoredFraction) < 1e-15);
  SimulationConfig cfg;
  cfg.n = 5000;
  cfg.j = 10;
  Rng rng(14);
  const PredictorDraw d = gen_functional_predictors(cfg, rng);
  const std::vector<SurvivalRecord> r = simulate_survival(d.z_true, GammaName::zero, cfg, rng);
  int censored = 0;
  for (const auto& x : r) censored += 1 - x.delta;
  const double frac = double(censored) / cfg.n;
  CHECK(frac >= 0.4);
  CHECK(frac <= 0.8);
  const double se = std::sqrt(kNullCensoredFraction * (1 - kNullCensoredFraction) / cfg.n);
  CHECK(std::abs(frac - kNullCensoredFraction) < 3 * se);
  for (const auto& x : r) CHECK(x.y <= 1.0 + 1e-6);
}

TEST_CASE("amse and coverage on constructed surfaces") {
  const SurfaceGrid truth = truth_grid(GammaName::f1, 20);
  CHECK(integrated_squared_error(truth, GammaName::f1) == 0.0);
  SurfaceGrid shifted = truth;
  shifted.value.array() += 0.3;
  CHECK(integrated_squared_error(shifted, GammaName::f1) == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(amse({truth, shifted}, GammaName::f1) == doctest::Approx(0.045).epsilon(1e-12));
  CHECK_THROWS_AS(amse({}, GammaName::f1), ValidationError);

  SurfaceGrid wide = shifted;
  wide.se.setConstant(INFINITY);
  CHECK(coverage({wide}, GammaName::f1).average == 1.0);
  CHECK(coverage({shifted}, GammaName::f1).average == 0.0);
  CHECK(coverage({truth}, GammaName::f1).average == 1.0);
  SurfaceGrid bad = truth;
  bad.se(3, 4) = NAN;
  CHECK_THROWS_AS(coverage({bad}, GammaName::f1), ValidationError);
}

TEST_CASE("config validation") {
  SimulationConfig cfg;
  cfg.n = 1;
  CHECK_THROWS_AS(run_study(cfg), ValidationError);
  cfg = SimulationConfig{};
  cfg.reps = 0;
  CHECK_THROWS_AS(run_study(cfg), ValidationError);
}

TEST_CASE("studies are reproducible") {
  SimulationConfig cfg;
  cfg.n = 120;
  cfg.j = 15;
  cfg.reps = 2;
  cfg.seed = 5;
  cfg.threads = 2;
  const StudyReport a = run_study(cfg);
  cfg.threads = 1;
  const StudyReport b = run_study(cfg);
  std::ostringstream sa, sb;
  write_study_report(sa, a);
  write_study_report(sb, b);
  CHECK(strip_comments(sa.str()) == strip_comments(sb.str()));
  CHECK(a.failures == 0);
  REQUIRE(a.methods.size() == 3);
  CHECK(a.methods[0].method == StudyMethod::landmark_window);
  CHECK(a.methods[2].method == StudyMethod::poisson);
}

TEST_CASE("study amse is the mean of per-replication errors") {
  SimulationConfig cfg;
  cfg.n = 150;
  cfg.j = 15;
  cfg.reps = 2;
  cfg.seed = 9;
  cfg.keep_surfaces = true;
  cfg.eval_intervals = 40;
  const StudyReport r = run_study(cfg);
  REQUIRE(r.surfaces.size() == cfg.methods.size());
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    REQUIRE(r.surfaces[m].size() == 2);
    const double by_hand = 0.5 * (integrated_squared_error(r.surfaces[m][0], cfg.gamma) +
                                  integrated_squared_error(r.surfaces[m][1], cfg.gamma));
    CHECK(r.summary(cfg.methods[m]).amse == doctest::Approx(by_hand).epsilon(1e-14));
    double from_records = 0.0;
    for (const auto& rr : r.records)
      if (rr.method == cfg.methods[m]) from_records += 0.5 * rr.ise;
    CHECK(from_records == doctest::Approx(by_hand).epsilon(1e-12));
  }
  CHECK(r.summary(StudyMethod::poisson).coverage.has_value());
  CHECK_FALSE(r.summary(StudyMethod::landmark_window).coverage.has_value());
}

}

TEST_SUITE("slow_properties") {

TEST_CASE("finite windows beat the infinite window on f3 and f4") {
  for (GammaName g : {GammaName::f3, GammaName::f4}) {
    SimulationConfig cfg;
    cfg.gamma = g;
    cfg.n = 400;
    cfg.reps = 8;
    cfg.seed = 31;
    cfg.k_u = cfg.k_s = scenario_basis_dimension(g);
    if (g == GammaName::f3) cfg.n = 1000, cfg.reps = 3;
    cfg.methods = {StudyMethod::landmark_window, StudyMethod::landmark_infinite};
    const StudyReport r = run_study(cfg);
    const double w = r.summary(StudyMethod::landmark_window).amse;
    const double inf = r.summary(StudyMethod::landmark_infinite).amse;
    MESSAGE(to_string(g) << ": AMSE w=0.04 " << w << ", w=inf " << inf);
    CHECK(inf > w);
  }
}

}
