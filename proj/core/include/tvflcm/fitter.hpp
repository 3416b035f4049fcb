#pragma once

// Penalized Newton fitting of the stratified Cox partial likelihood and of the
// stratum-profiled Poisson likelihood, with REML smoothing selection.
//
// Objective: l(theta) - 1/2 theta' S_lambda theta, S_lambda = sum lambda_m S_m.

#include "tvflcm/survival_core.hpp"
#include "tvflcm/spline_basis.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace tvflcm {

enum class LikelihoodKind { cox_stratified, poisson };

std::string_view to_string(LikelihoodKind kind);

struct PenaltyTerm {
  Eigen::MatrixXd matrix;   // size x size, symmetric PSD
  int lambda_index = 0;
};

/// Penalties acting on the coefficient range [offset, offset + size).
/// When `spectrum` is non-empty, spectrum[m] holds the eigenvalues of term m in
/// a basis shared by all terms (commuting penalties), with structural zeros
/// set exactly; log|S|_+ is then computed without a per-candidate eigensolve.
struct PenaltyGroup {
  std::string name;
  int offset = 0;
  int size = 0;
  std::vector<PenaltyTerm> terms;
  std::vector<Eigen::VectorXd> spectrum;
};

PenaltyGroup single_penalty_group(std::string name, int offset, const MarginalPenalty& penalty, int lambda_index);

/// Penalties (I kron Pu) and (Pt kron I) with the shared Kronecker spectrum.
/// A margin whose penalty is identically zero contributes no term.
PenaltyGroup tensor_penalty_group(std::string name, int offset, const MarginalPenalty& pu,
                                  const MarginalPenalty& pt, int lambda_u, int lambda_t);

/// Generic group: no shared spectrum, rank found numerically from the sum of
/// the normalized terms.
PenaltyGroup generic_penalty_group(std::string name, int offset, std::vector<PenaltyTerm> terms);

struct PenalizedProblem {
  LikelihoodKind kind = LikelihoodKind::cox_stratified;
  Eigen::MatrixXd design;              // n x p
  std::vector<double> time;            // cox: row time
  std::vector<double> response;        // cox: event indicator; poisson: count
  std::vector<int> stratum;            // per row; empty = single stratum
  std::vector<PenaltyGroup> penalties;
  std::vector<std::string> coefficient_names;  // optional, for diagnostics

  int coefficients() const { return static_cast<int>(design.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(design.rows()); }
  int lambda_count() const;
  int stratum_count() const;
  void validate() const;
};

/// Log-likelihood, score and observed information (minus the Hessian) in theta.
class LikelihoodEvaluator {
 public:
  explicit LikelihoodEvaluator(const PenalizedProblem& problem);

  struct Result {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd information;
    Eigen::VectorXd stratum_log_baseline;   // poisson: profiled alpha_s
  };

  double loglik(const Eigen::VectorXd& theta) const;
  Result evaluate(const Eigen::VectorXd& theta, bool with_information = true) const;
  const PenalizedProblem& problem() const { return *problem_; }

 private:
  const PenalizedProblem* problem_;
  std::vector<int> order_;            // cox: rows sorted by stratum, time desc, censored first
  std::vector<int> range_;            // cox: stratum boundaries in order_
  std::vector<int> stratum_;          // poisson: dense stratum ids
  int strata_ = 1;
  std::vector<double> stratum_total_; // poisson: sum of responses per stratum
  double log_factorials_ = 0.0;       // poisson: sum of log(y_r!)
};

Eigen::MatrixXd assemble_penalty(const PenalizedProblem& problem, const std::vector<double>& lambdas);

/// log|S_lambda|_+ over all groups.
double penalty_log_pdet(const PenalizedProblem& problem, const std::vector<double>& lambdas);

struct NewtonOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;                  // ||g - S theta|| < tol (1 + |ppl|)
  std::optional<Eigen::VectorXd> start;
};

struct ConvergenceInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
  double penalized_loglik = 0.0;
  std::vector<double> objective_trace;      // penalized objective after each accepted step, starting value first
};

struct RemlTerms {
  double penalized_loglik = 0.0;
  double half_log_pdet_s = 0.0;
  double half_log_det_h = 0.0;              // 1/2 log|H + S_lambda|
  double value = 0.0;                       // ppl + half_log_pdet_s - half_log_det_h
};

struct FitResult {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;               // (H + S_lambda)^{-1}
  Eigen::MatrixXd information;              // H at the optimum
  std::vector<double> lambdas;
  std::vector<double> log10_lambdas;
  ConvergenceInfo convergence;
  RemlTerms reml;
  std::vector<double> edf;                  // per penalty group
  double edf_total = 0.0;
  double loglik = 0.0;
  Eigen::VectorXd linear_predictor;
  Eigen::VectorXd stratum_log_baseline;     // poisson problems
  std::vector<CumulativeHazard> baseline;   // cox problems: Nelson-Aalen per stratum
  std::vector<std::pair<std::vector<double>, double>> smoothing_trace;  // (log10 lambda, REML)
};

FitResult newton_fit(const PenalizedProblem& problem, const std::vector<double>& lambdas,
                     const NewtonOptions& options = {});

/// Evaluator-reusing variant for callers that fit repeatedly.
FitResult newton_fit(const LikelihoodEvaluator& evaluator, const std::vector<double>& lambdas,
                     const NewtonOptions& options = {});

/// REML criterion at fixed lambdas recomputed from its parts (for audits).
RemlTerms reml_criterion(const PenalizedProblem& problem, const FitResult& fit);

struct SmoothingOptions {
  double lower = -6.0;                      // log10 lambda bounds
  double upper = 8.0;
  int sweeps = 2;
  double first_tolerance = 0.1;
  double refine_tolerance = 0.05;
  double refine_halfwidth = 1.0;
  bool polish = true;
  double plateau_tolerance = 1e-6;          // relative REML gap treated as a tie; ties go to larger lambda
  std::vector<double> initial;              // log10 lambda start; default all 0
  NewtonOptions newton;
};

FitResult select_smoothing(const PenalizedProblem& problem, const SmoothingOptions& options = {});

/// Effective degrees of freedom trace((H+S)^{-1} H) restricted to [offset, offset+size).
double block_edf(const FitResult& fit, int offset, int size);

}  // namespace tvflcm
