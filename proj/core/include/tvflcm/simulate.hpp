#pragma once

// Data-generating mechanism, true surfaces and replication studies.

#include "tvflcm/functional.hpp"
#include "tvflcm/routes.hpp"
#include "tvflcm/surface.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tvflcm {

enum class GammaName { zero, f1, f2, f3, f4 };

std::string_view to_string(GammaName g);
GammaName gamma_name_from_string(std::string_view name);

/// f1 = sin(2 pi u)/(t + 0.5), f2 = sin(2 pi u)/(t/2 + 1), f3 = 10 cos(4 pi (t - u)),
/// f4 = cos(2 pi (t^3 - 2/(u^2 + 1))).
double gamma_true(GammaName g, double u, double t);

/// Default K_u = K_s per scenario: 15 for f3 (two periods in each direction), 5 otherwise.
int scenario_basis_dimension(GammaName g);

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);
/// Stream seed of replication `rep`: splitmix64(master ^ splitmix64(rep + 1)).
std::uint64_t replication_seed(std::uint64_t master, int rep);

enum class StudyMethod { landmark_window, landmark_infinite, poisson };
std::string_view to_string(StudyMethod m);

struct SimulationConfig {
  int n = 500;
  int j = 50;                        // functional grid (midpoints of (0, 1])
  int n_t = 100;                     // survival grid t_m = m / n_t
  int reps = 1;
  GammaName gamma = GammaName::f1;
  double window = 0.04;
  double landmark_step = 0.04;
  int landmarks = 25;                // s = 0, step, ..., (landmarks - 1) step
  int k_u = 5;
  int k_s = 5;
  std::uint64_t seed = 1;
  double baseline_hazard = 1.0;
  int predictor_basis = 10;          // cubic B-splines generating Z
  double score_variance = 4.0;
  double score_correlation = 0.3;
  double noise_sd = 0.25;
  bool censoring = true;
  std::vector<StudyMethod> methods = {StudyMethod::landmark_window, StudyMethod::landmark_infinite,
                                      StudyMethod::poisson};
  int eval_intervals = 100;          // surfaces compared on an (n+1) x (n+1) grid of [0, 1]^2
  int threads = 0;                   // 0: hardware concurrency
  bool keep_surfaces = false;
  SmoothingOptions smoothing;
  void validate() const;
};

struct PredictorDraw {
  FunctionalPredictor z_true;
  FunctionalPredictor z_observed;
  Eigen::MatrixXd scores;            // N x predictor_basis
};

PredictorDraw gen_functional_predictors(const SimulationConfig& config, Rng& rng);

/// S_i(t_m), m = 0..n_t, from left-Riemann sums of lambda_0 exp(eta_i(t)).
Eigen::MatrixXd survival_on_grid(const FunctionalPredictor& z_true, GammaName g, const SimulationConfig& config);

/// inf{t_m : S(t_m) <= u}; +inf when S stays above u on the grid.
double inverse_survival(const Eigen::Ref<const Eigen::RowVectorXd>& survival, int n_t, double u);

/// Event times by inversion, censoring min(1, Exp(1)), ties jittered.
std::vector<SurvivalRecord> simulate_survival(const FunctionalPredictor& z_true, GammaName g,
                                              const SimulationConfig& config, Rng& rng, TieReport* ties = nullptr);

/// Mean over replications of the grid-average squared error.
double amse(const std::vector<SurfaceGrid>& estimates, GammaName truth);
double integrated_squared_error(const SurfaceGrid& estimate, GammaName truth);

struct CoverageResult {
  Eigen::MatrixXd pointwise;         // fraction of replications covering, |u| x |t|
  double average = 0.0;
};

CoverageResult coverage(const std::vector<SurfaceGrid>& estimates, GammaName truth, double z = kWaldZ95);

RouteConfig study_route_config(const SimulationConfig& config);
LandmarkGrid study_landmarks(const SimulationConfig& config, bool infinite_window);

struct ReplicationRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  StudyMethod method = StudyMethod::poisson;
  bool failed = false;
  std::string error;
  double ise = 0.0;
  double coverage = 0.0;             // poisson only
  std::size_t rows = 0;
  int events = 0;
  double censored_fraction = 0.0;
  double expand_seconds = 0.0;
  double fit_seconds = 0.0;
  std::vector<double> log10_lambdas;
};

struct MethodSummary {
  StudyMethod method = StudyMethod::poisson;
  int completed = 0;
  int failures = 0;
  double amse = 0.0;
  std::optional<double> coverage;
  double coverage_mean_deviation = 0.0;   // mean |CI(u,t) - 0.95|
  double coverage_max_deviation = 0.0;
  double expand_seconds = 0.0;            // totals over replications
  double fit_seconds = 0.0;
};

struct StudyReport {
  SimulationConfig config;
  std::vector<MethodSummary> methods;
  std::vector<ReplicationRecord> records;
  std::vector<std::vector<SurfaceGrid>> surfaces;   // [method][rep] when kept
  Eigen::MatrixXd poisson_coverage;
  int failures = 0;
  const MethodSummary& summary(StudyMethod m) const;
};

StudyReport run_study(const SimulationConfig& config);

/// Deterministic body; wall-clock figures only on lines starting with '#'.
void write_study_report(std::ostream& out, const StudyReport& report);

}  // namespace tvflcm
