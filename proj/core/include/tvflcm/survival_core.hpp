#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace tvflcm {

struct SurvivalRecord {
  std::int64_t id = 0;
  double y = 0.0;     // min(T, C)
  int delta = 0;      // 1 = event observed
  std::vector<double> x;
};

void validate_records(std::span<const SurvivalRecord> records);

struct TieReport {
  int jittered = 0;       // records moved
  double scale = 0.0;     // jitter unit is 1e-9 * scale
};

/// Breaks ties among delta = 1 records: the r-th duplicate of a time (in input
/// order) is moved by r * 1e-9 * max(y). Deterministic.
TieReport break_ties(std::vector<SurvivalRecord>& records);

/// Throws ValidationError if two delta = 1 records share a time.
void require_no_ties(std::span<const SurvivalRecord> records);

struct CoxValue {
  double value = 0.0;
  Eigen::VectorXd gradient;   // d value / d eta
  Eigen::MatrixXd hessian;    // d^2 value / d eta^2 (negative semi-definite)
};

/// Cox partial log-likelihood in eta with risk sets {j : y_j >= y_i}.
CoxValue cox_partial_loglik(std::span<const double> eta, std::span<const SurvivalRecord> records,
                            bool with_hessian = true);

/// Risk-set expansion: one row per (event time t_k, subject with y >= t_k).
/// Strata are event times in increasing order; rows within a stratum follow
/// the input record order.
struct PseudoPoissonData {
  std::vector<int> subject;          // index into the record span
  std::vector<int> stratum;
  std::vector<double> outcome;       // 1 for the subject failing at t_k
  std::vector<double> stratum_time;  // t_k per stratum
  std::vector<int> stratum_start;    // row offsets, size stratum_count + 1
  Eigen::MatrixXd design;            // rows x p (empty if no row filler)

  int stratum_count() const { return static_cast<int>(stratum_time.size()); }
  std::size_t rows() const { return subject.size(); }
};

/// Fills `row` with the design row of `subject` evaluated at time `t`.
using RowFiller = std::function<void(int subject, double t, Eigen::Ref<Eigen::RowVectorXd> row)>;

PseudoPoissonData poisson_expand(std::span<const SurvivalRecord> records, int columns = 0,
                                 const RowFiller& filler = {});

/// Expansion whose design rows are the records' scalar covariates x.
PseudoPoissonData poisson_expand_covariates(std::span<const SurvivalRecord> records);

/// Number of expansion rows without building them.
std::size_t poisson_row_count(std::span<const SurvivalRecord> records);

/// Right-continuous step function.
struct CumulativeHazard {
  std::vector<double> times;   // increasing
  std::vector<double> jumps;
  std::vector<double> cumulative;

  double operator()(double t) const;
  /// Sum of jumps in (a, b].
  double increment(double a, double b) const { return (*this)(b) - (*this)(a); }
};

CumulativeHazard nelson_aalen(std::span<const double> eta_hat, std::span<const SurvivalRecord> records);

/// Same estimator from parallel arrays (time, event indicator, linear predictor).
CumulativeHazard nelson_aalen(std::span<const double> time, std::span<const int> event,
                              std::span<const double> eta_hat);

}  // namespace tvflcm
