#pragma once

// Univariate spline bases used by the tensor-product surfaces:
//   - bspline_cubic:    clamped cubic B-splines on uniform breakpoints
//   - cubic_regression: natural cubic spline in value-at-knot (cardinal) form
//   - cyclic_cubic:     periodic cubic spline in value-at-knot form
// and their exact integrated squared second-derivative penalties.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tvflcm {

enum class SplineFamily { bspline_cubic, cubic_regression, cyclic_cubic };

std::string_view to_string(SplineFamily family);
SplineFamily spline_family_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

/// Immutable description of a univariate basis.
///
/// `knots` are the breakpoints. For cubic_regression they are the K
/// interpolation knots; for cyclic_cubic they are K+1 points whose first and
/// last are identified; for bspline_cubic they are the K-2 distinct
/// breakpoints of the clamped knot vector.
class BasisSpec {
 public:
  BasisSpec(SplineFamily family, Interval domain, std::vector<double> knots);

  SplineFamily family() const { return family_; }
  const Interval& domain() const { return domain_; }
  const std::vector<double>& knots() const { return knots_; }
  int dimension() const { return dim_; }

  /// Maps coefficients (values at knots) to second derivatives at knots.
  /// Empty for bspline_cubic.
  const Eigen::MatrixXd& knot_curvature() const { return curvature_map_; }

 private:
  SplineFamily family_;
  Interval domain_;
  std::vector<double> knots_;
  int dim_ = 0;
  Eigen::MatrixXd curvature_map_;
};

struct BasisMatrix {
  Eigen::MatrixXd values;       // n_points x K
  std::vector<double> points;
  int derivative = 0;
};

struct MarginalPenalty {
  Eigen::MatrixXd matrix;  // K x K, symmetric PSD
  int null_space_dim = 0;
};

/// K uniformly spaced knots over `domain`. Throws ValidationError when K < 3
/// or the domain is degenerate.
BasisSpec make_basis(SplineFamily family, Interval domain, int dimension);

/// Evaluate the basis (or its `derivative`-th derivative, 0..2) at `points`.
/// Non-cyclic families reject points outside the domain; the cyclic family
/// wraps them modulo the period.
BasisMatrix evaluate_basis(const BasisSpec& spec, std::span<const double> points,
                           int derivative = 0);

/// P with xi' P xi = integral over the domain of (f'')^2 for f = sum xi_k B_k.
MarginalPenalty roughness_penalty(const BasisSpec& spec);

}  // namespace tvflcm
