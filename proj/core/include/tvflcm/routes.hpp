#pragma once

// The two fitting routes for the time-varying functional linear Cox model:
//   poisson  - risk-set expansion at every event time, gamma(u, t) evaluated
//              at the event time, stratum intercepts profiled out;
//   landmark - stacked landmark strata, gamma(u, s_l) held fixed within each
//              window, stratified Cox partial likelihood.

#include "tvflcm/fitter.hpp"
#include "tvflcm/functional.hpp"
#include "tvflcm/landmark.hpp"
#include "tvflcm/surface.hpp"
#include "tvflcm/survival_core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tvflcm {

enum class Route { poisson, landmark };

std::string_view to_string(Route route);
Route route_from_string(std::string_view name);

enum class TimeMargin { spline, constant, indicator };

struct RouteConfig {
  int k_u = 5;
  int k_s = 5;                        // 1 => gamma constant in t
  int k_1 = 5;                        // scalar-effect basis size
  SplineFamily u_family = SplineFamily::cyclic_cubic;
  SplineFamily t_family = SplineFamily::cubic_regression;
  TimeMargin time_margin = TimeMargin::spline;   // landmark route may use indicator coding
  std::optional<Interval> u_domain;   // default: grid extended by half a weight at each end
  std::optional<Interval> t_domain;   // default: [0, max time]; widened to cover all times
  ConstraintKind constraint = ConstraintKind::predictor_sum_to_zero;
  bool center = true;
  std::optional<std::vector<double>> log10_lambda;  // fixed smoothing; REML otherwise
  SmoothingOptions smoothing;
  LikelihoodKind expanded_likelihood = LikelihoodKind::poisson;  // poisson route only
  bool separate_models = false;       // landmark route only
};

struct CoefficientLayout {
  int scalar_count = 0;
  int scalar_offset = 0;
  int scalar_size = 0;                // per covariate
  int gamma_offset = 0;
  int gamma_size = 0;                 // free coefficients (after constraint)
};

struct RouteFit {
  Route route = Route::poisson;
  FitResult fit;
  std::vector<FitResult> separate_fits;  // landmark separate-model mode
  MarginBasis u_margin;
  MarginBasis t_margin;
  MarginBasis scalar_margin;
  CoefficientLayout layout;
  Eigen::MatrixXd constraint_transform;  // empty: identity
  int constraint_rank = 0;
  std::vector<double> grid;
  std::vector<double> weights;
  std::vector<double> strata_times;      // landmark times or event times
  std::vector<double> windows;           // landmark route
  Eigen::MatrixXd z_means;               // landmark route: per-stratum mean of Z used for centering
  std::vector<CumulativeHazard> baseline;  // landmark: per stratum; poisson: one, uncentered predictor
  std::size_t rows = 0;
  double expand_seconds = 0.0;
  double fit_seconds = 0.0;
  TieReport ties;
  std::vector<std::string> warnings;

  CoefficientSurface surface() const;
  /// Full (unconstrained) gamma coefficients, K_u K_s.
  Eigen::VectorXd gamma_coefficients() const;
  /// beta_c(t) = sum_k coef phi_k(t) for scalar covariate c.
  double beta(int c, double t) const;
};

RouteFit fit_tvflcm_poisson(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                            const RouteConfig& config = {});

RouteFit fit_tvflcm_landmark(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                             const LandmarkGrid& grid, const RouteConfig& config = {});

/// The penalized problem the poisson route would fit (no smoothing selection);
/// exposed for audits and benchmarks.
PenalizedProblem build_poisson_problem(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                                       const RouteConfig& config, RouteFit* skeleton = nullptr);
PenalizedProblem build_landmark_problem(const StackedLandmarkData& data, const RouteConfig& config,
                                        RouteFit* skeleton = nullptr);

struct CostEstimate {
  double poisson_rows = 0.0;
  double landmark_rows = 0.0;
  double poisson_flops = 0.0;         // per Newton iteration, information matrix
  double landmark_flops = 0.0;
  double row_ratio() const { return landmark_rows > 0 ? poisson_rows / landmark_rows : 0.0; }
};

/// Expected design sizes. Poisson rows: sum_{k=1}^{E} (N - (k-1)/r) with
/// E = round(r N) events spread uniformly through the risk-set decline
/// (exactly N(N+1)/2 when r = 1). Landmark rows: N (L+1)/2 for evenly spaced
/// landmarks over uniform follow-up.
CostEstimate cost_planner(int n, int j, int k_u, int k_s, double event_rate, int landmarks);

}  // namespace tvflcm
