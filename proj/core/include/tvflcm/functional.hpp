#pragma once

#include "tvflcm/spline_basis.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace tvflcm {

enum class Quadrature { riemann, trapezoid };

/// Dense functional predictor: row i holds Z_i on the shared grid.
struct FunctionalPredictor {
  Eigen::MatrixXd values;        // N x J
  std::vector<double> grid;      // u_1 < ... < u_J
  std::vector<double> weights;   // quadrature multipliers, one per grid point

  int subjects() const { return static_cast<int>(values.rows()); }
  int grid_size() const { return static_cast<int>(grid.size()); }

  /// Throws ValidationError on shape mismatch, unsorted grid or non-finite values.
  void validate() const;
};

/// Riemann multipliers are forward spacings (the last point reuses the final
/// spacing); a uniform grid of spacing h therefore gets h everywhere.
std::vector<double> quadrature_weights(std::span<const double> grid, Quadrature rule = Quadrature::riemann);

/// u_v = lo + (v - 1/2) h with h = (hi - lo) / J.
std::vector<double> midpoint_grid(int J, Interval domain = {});

FunctionalPredictor make_predictor(Eigen::MatrixXd values, std::vector<double> grid,
                                   Quadrature rule = Quadrature::riemann);

}  // namespace tvflcm
