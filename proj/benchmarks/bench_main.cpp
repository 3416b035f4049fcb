#include "tvflcm/fitter.hpp"
#include "tvflcm/landmark.hpp"
#include "tvflcm/routes.hpp"
#include "tvflcm/simulate.hpp"
#include "tvflcm/spline_basis.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

using namespace tvflcm;

namespace {

struct Sample {
  std::vector<SurvivalRecord> records;
  FunctionalPredictor z;
};

Sample sample(int n, int j) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.j = j;
  Rng rng(replication_seed(42, 0));
  PredictorDraw d = gen_functional_predictors(cfg, rng);
  Sample s;
  s.records = simulate_survival(d.z_true, GammaName::f1, cfg, rng);
  s.z = std::move(d.z_observed);
  return s;
}

void BM_EvaluateBasis(benchmark::State& state) {
  const BasisSpec spec = make_basis(SplineFamily::cyclic_cubic, {0, 1}, static_cast<int>(state.range(0)));
  std::vector<double> pts(1000);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = (i + 0.5) / pts.size();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_basis(spec, pts));
}
BENCHMARK(BM_EvaluateBasis)->Arg(5)->Arg(10)->Arg(15);

void BM_LandmarkBuild(benchmark::State& state) {
  const Sample s = sample(static_cast<int>(state.range(0)), 50);
  const LandmarkGrid g = LandmarkGrid::partition(0, 0.04, 25, 0.04);
  for (auto _ : state) benchmark::DoNotOptimize(center_by_landmark(build_landmark_dataset(s.records, s.z, g)));
}
BENCHMARK(BM_LandmarkBuild)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_PoissonExpand(benchmark::State& state) {
  const Sample s = sample(static_cast<int>(state.range(0)), 50);
  std::vector<SurvivalRecord> recs = s.records;
  break_ties(recs);
  for (auto _ : state) benchmark::DoNotOptimize(build_poisson_problem(recs, s.z, RouteConfig{}));
  state.counters["rows"] = static_cast<double>(poisson_row_count(recs));
}
BENCHMARK(BM_PoissonExpand)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

// one likelihood + information evaluation, the inner cost of every Newton step
void BM_PoissonEvaluate(benchmark::State& state) {
  const Sample s = sample(static_cast<int>(state.range(0)), 50);
  std::vector<SurvivalRecord> recs = s.records;
  break_ties(recs);
  const PenalizedProblem p = build_poisson_problem(recs, s.z, RouteConfig{});
  const LikelihoodEvaluator ev(p);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(p.coefficients(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(theta));
  state.counters["rows"] = static_cast<double>(p.rows());
}
BENCHMARK(BM_PoissonEvaluate)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_LandmarkEvaluate(benchmark::State& state) {
  const Sample s = sample(static_cast<int>(state.range(0)), 50);
  std::vector<SurvivalRecord> recs = s.records;
  break_ties(recs);
  const auto data = center_by_landmark(build_landmark_dataset(recs, s.z, LandmarkGrid::partition(0, 0.04, 25, 0.04)));
  const PenalizedProblem p = build_landmark_problem(data, RouteConfig{});
  const LikelihoodEvaluator ev(p);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(p.coefficients(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(theta));
  state.counters["rows"] = static_cast<double>(p.rows());
}
BENCHMARK(BM_LandmarkEvaluate)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_FitRoutes(benchmark::State& state) {
  const Sample s = sample(500, 50);
  const bool poisson = state.range(0) == 1;
  const LandmarkGrid g = LandmarkGrid::partition(0, 0.04, 25, 0.04);
  for (auto _ : state) {
    RouteFit f = poisson ? fit_tvflcm_poisson(s.records, s.z) : fit_tvflcm_landmark(s.records, s.z, g);
    state.counters["expand_s"] = f.expand_seconds;
    state.counters["fit_s"] = f.fit_seconds;
    benchmark::DoNotOptimize(f);
  }
  state.SetLabel(poisson ? "poisson" : "landmark_w");
}
BENCHMARK(BM_FitRoutes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_CostPlanner(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(cost_planner(4445, 1440, 10, 10, 0.15, 25));
}
BENCHMARK(BM_CostPlanner);

}  // namespace

BENCHMARK_MAIN();
