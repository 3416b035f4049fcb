#include "tvflcm/functional.hpp"

#include "tvflcm/error.hpp"

#include <cmath>

namespace tvflcm {

void FunctionalPredictor::validate() const {
  const auto j = static_cast<Eigen::Index>(grid.size());
  detail::require(j >= 1, "functional predictor: empty grid");
  detail::require(values.cols() == j, "functional predictor: " + std::to_string(values.cols()) +
                                          " value columns but grid has " + std::to_string(j) + " points");
  detail::require(weights.size() == grid.size(), "functional predictor: weights/grid length mismatch");
  for (std::size_t v = 1; v < grid.size(); ++v)
    detail::require(grid[v] > grid[v - 1], "functional predictor: grid must be strictly increasing");
  for (double w : weights) detail::require(std::isfinite(w) && w >= 0.0, "functional predictor: bad weight");
  detail::require(values.allFinite(), "functional predictor: non-finite value");
}

std::vector<double> quadrature_weights(std::span<const double> grid, Quadrature rule) {
  const std::size_t j = grid.size();
  detail::require(j >= 1, "quadrature_weights: empty grid");
  std::vector<double> w(j, 1.0);
  if (j == 1) return w;
  if (rule == Quadrature::riemann) {
    for (std::size_t v = 0; v + 1 < j; ++v) w[v] = grid[v + 1] - grid[v];
    w[j - 1] = grid[j - 1] - grid[j - 2];
  } else {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t v = 0; v + 1 < j; ++v) {
      const double h = grid[v + 1] - grid[v];
      w[v] += 0.5 * h;
      w[v + 1] += 0.5 * h;
    }
  }
  return w;
}

std::vector<double> midpoint_grid(int J, Interval domain) {
  detail::require(J >= 1, "midpoint_grid: J must be positive");
  std::vector<double> u(static_cast<std::size_t>(J));
  const double h = domain.length() / J;
  for (int v = 0; v < J; ++v) u[v] = domain.lo + (v + 0.5) * h;
  return u;
}

FunctionalPredictor make_predictor(Eigen::MatrixXd values, std::vector<double> grid, Quadrature rule) {
  FunctionalPredictor z;
  z.values = std::move(values);
  z.weights = quadrature_weights(grid, rule);
  z.grid = std::move(grid);
  z.validate();
  return z;
}

}  // namespace tvflcm
