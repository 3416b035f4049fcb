#pragma once

#include "tvflcm/tensor_penalty.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

namespace tvflcm {

inline constexpr double kWaldZ95 = 1.959964;

/// gamma(u, t) = sum_{j,k} xi(j, k) B_j(u) B_k(t).
struct CoefficientSurface {
  Eigen::MatrixXd xi;            // K_u x K_s
  MarginBasis u_basis;
  MarginBasis t_basis;
  Eigen::MatrixXd covariance;    // of vec(xi), u-index fastest
};

struct SurfaceGrid {
  std::vector<double> u;
  std::vector<double> t;
  Eigen::MatrixXd value;         // |u| x |t|
  Eigen::MatrixXd se;
};

SurfaceGrid eval_surface(const CoefficientSurface& surface, std::span<const double> u_grid,
                         std::span<const double> t_grid);

/// n + 1 equally spaced points on [lo, hi], endpoints exact.
std::vector<double> uniform_points(double lo, double hi, int intervals);

/// Long format: u,t,gamma,se,ci_lo,ci_hi with ci = gamma -/+ z se; t-major order.
void write_surface(std::ostream& out, const SurfaceGrid& grid, double z = kWaldZ95);

}  // namespace tvflcm
