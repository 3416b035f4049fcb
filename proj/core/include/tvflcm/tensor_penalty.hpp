#pragma once

// Tensor-product design columns and Kronecker penalties for gamma(u, t).
//
// Column order: u-index fastest, col(j, k) = j + K_u * k, so vec(xi) stacks
// the columns of the K_u x K_s coefficient grid.

#include "tvflcm/spline_basis.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace tvflcm {

enum class MarginKind { spline, constant, indicator };

/// A margin of the tensor product: a spline basis, a single constant column
/// (K = 1, unpenalized), or indicator coding over a fixed set of levels.
class MarginBasis {
 public:
  static MarginBasis spline(BasisSpec spec);
  static MarginBasis constant(Interval domain);
  static MarginBasis indicator(std::vector<double> levels);

  MarginKind kind() const { return kind_; }
  int dimension() const;
  Interval domain() const;
  const BasisSpec& spec() const;
  const std::vector<double>& levels() const { return levels_; }

  Eigen::MatrixXd evaluate(std::span<const double> points) const;
  MarginalPenalty penalty() const;

 private:
  MarginKind kind_ = MarginKind::constant;
  std::optional<BasisSpec> spec_;
  Interval domain_;
  std::vector<double> levels_;
};

struct TensorBlock {
  Eigen::MatrixXd design;      // n x p (p = K_u K_s, or fewer once constrained)
  Eigen::MatrixXd penalty_u;   // p x p
  Eigen::MatrixXd penalty_t;   // p x p
  int k_u = 0;
  int k_s = 0;
  Eigen::MatrixXd constraint_transform;  // empty: identity
  int constraint_rank = 0;

  int coefficient_count() const { return static_cast<int>(design.cols()); }
  bool constrained() const { return constraint_transform.size() > 0; }
};

/// Row r, column (j, k): bt(r, k) * sum_v weights(r, v) * bu(v, j).
Eigen::MatrixXd tensor_design(const Eigen::MatrixXd& bu, const Eigen::MatrixXd& bt,
                              const Eigen::MatrixXd& weights);

/// Same, from the already projected rows A = weights * bu.
Eigen::MatrixXd tensor_rows(const Eigen::MatrixXd& projected, const Eigen::MatrixXd& bt);

/// (I_{K_s} kron Pu, Pt kron I_{K_u}) in the documented column order.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> tensor_penalties(const MarginalPenalty& pu,
                                                             const MarginalPenalty& pt);

TensorBlock make_tensor_block(Eigen::MatrixXd design, const MarginalPenalty& pu, const MarginalPenalty& pt);

enum class ConstraintKind {
  none,
  /// sum_i Z_i(u_v) gamma(u_v, s_l) = 0 for every grid point and stratum.
  predictor_sum_to_zero,
  /// sum over strata of gamma(u, s_l) = 0 for every u-coefficient.
  time_margin_centering,
};

std::string_view to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(std::string_view name);

/// Constraint rows C (r x K_u K_s) with C vec(xi) = 0.
/// `stratum_z_sums` is L x J (per stratum, sum of member Z rows), `bu` is
/// J x K_u and `bt_strata` is L x K_s (time basis at each stratum time).
/// `z_scale` normalizes the predictor rows so that a numerically centred
/// predictor yields rows at round-off level.
Eigen::MatrixXd constraint_rows(ConstraintKind kind, const Eigen::MatrixXd& stratum_z_sums,
                                const Eigen::MatrixXd& bu, const Eigen::MatrixXd& bt_strata,
                                double z_scale);

/// Orthonormal null-space reparameterization: design -> design T,
/// penalties -> T' P T. Leaves the block untouched when C has rank 0.
TensorBlock apply_sum_to_zero_constraint(TensorBlock block, const Eigen::MatrixXd& constraint);

/// Orthonormal basis of {x : C x = 0}; empty matrix when rank(C) = 0.
Eigen::MatrixXd null_space_transform(const Eigen::MatrixXd& constraint, int* rank = nullptr);

}  // namespace tvflcm
