#include "tvflcm/fpca.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/tensor_penalty.hpp"

#include <algorithm>
#include <cmath>

namespace tvflcm {
namespace {

// Value at offset 0 of a least-squares cubic through (h, row(v + h)) over the
// 2 * band nearest off-diagonal neighbours; the window shifts inward at the edges.
double diagonal_smooth(const Eigen::MatrixXd& g, int v, int band) {
  const int j = static_cast<int>(g.rows());
  int lo = v - band, hi = v + band;
  if (lo < 0) hi = std::min(j - 1, hi - lo), lo = 0;
  if (hi > j - 1) lo = std::max(0, lo - (hi - (j - 1))), hi = j - 1;
  const int n = hi - lo;
  if (n < 4) return g(v, v);
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (int w = lo, r = 0; w <= hi; ++w) {
    if (w == v) continue;
    const double h = w - v;
    a.row(r) << 1.0, h, h * h, h * h * h;
    b(r++) = g(v, w);
  }
  return a.colPivHouseholderQr().solve(b)(0);
}

}  // namespace

FpcaModel fit_fpca(const FunctionalPredictor& w, const FpcaOptions& opt) {
  w.validate();
  const int n = w.subjects();
  const int j = w.grid_size();
  detail::require(n >= 3, "fit_fpca: need at least 3 subjects");
  detail::require(j >= 3, "fit_fpca: need at least 3 grid points");
  if (opt.components) detail::require(*opt.components >= 1 && *opt.components <= j, "fit_fpca: K2 must be in [1, J]");
  detail::require(opt.variance_explained > 0.0 && opt.variance_explained <= 1.0,
                  "fit_fpca: variance_explained must be in (0, 1]");
  FpcaModel m;
  m.grid = w.grid;
  m.weights = w.weights;
  m.mean = opt.center ? Eigen::VectorXd(w.values.colwise().mean().transpose()) : Eigen::VectorXd::Zero(j);
  const Eigen::MatrixXd c = w.values.rowwise() - m.mean.transpose();
  Eigen::MatrixXd g = (c.transpose() * c) / double(n - 1);

  double excess = 0.0;
  for (int v = 0; v < j; ++v) excess += g(v, v) - diagonal_smooth(g, v, opt.bandwidth);
  // Homoscedastic noise: remove one common level from the diagonal.
  m.noise_variance = std::max(0.0, excess / j);
  g.diagonal().array() -= m.noise_variance;

  const Eigen::ArrayXd sw = Eigen::Map<const Eigen::VectorXd>(w.weights.data(), j).array().sqrt();
  const Eigen::MatrixXd a = sw.matrix().asDiagonal() * g * sw.matrix().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("fit_fpca: covariance eigendecomposition failed");
  Eigen::VectorXd vals = es.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  m.spectrum = vals;

  const double top = vals(0);
  int rank = 0;
  while (rank < j && vals(rank) > 1e-10 * top) ++rank;
  if (rank == 0) throw NumericalError("fit_fpca: covariance is numerically zero");
  int k2 = 0;
  if (opt.components) {
    k2 = *opt.components;
    if (k2 > rank) {
      m.warnings.push_back("requested " + std::to_string(k2) + " components but numerical rank is " +
                           std::to_string(rank) + "; truncated");
      k2 = rank;
    }
  } else {
    const double total = vals.head(rank).sum();
    double acc = 0.0;
    while (k2 < rank && acc < opt.variance_explained * total) acc += vals(k2++);
  }
  m.eigenvalues = vals.head(k2);
  m.eigenfunctions = (1.0 / sw).matrix().asDiagonal() * vecs.leftCols(k2);
  // sign convention: largest-magnitude entry positive
  for (int k = 0; k < k2; ++k) {
    Eigen::Index at;
    m.eigenfunctions.col(k).cwiseAbs().maxCoeff(&at);
    if (m.eigenfunctions(at, k) < 0) m.eigenfunctions.col(k) *= -1.0;
  }
  return m;
}

Eigen::MatrixXd project_scores(const Eigen::MatrixXd& z_rows, const FpcaModel& m) {
  const auto j = static_cast<Eigen::Index>(m.grid.size());
  detail::require(z_rows.cols() == j, "project_scores: rows have " + std::to_string(z_rows.cols()) +
                                          " grid values, model grid has " + std::to_string(j));
  const Eigen::Map<const Eigen::VectorXd> w(m.weights.data(), j);
  return (z_rows.rowwise() - m.mean.transpose()) * (w.asDiagonal() * m.eigenfunctions);
}

Eigen::MatrixXd project_scores(const FunctionalPredictor& z, const FpcaModel& m) {
  detail::require(z.grid == m.grid, "project_scores: grid differs from the fitted grid");
  return project_scores(z.values, m);
}

Eigen::MatrixXd fpca_projection(const FpcaModel& m, const Eigen::MatrixXd& bu) {
  const auto j = static_cast<Eigen::Index>(m.grid.size());
  detail::require(bu.rows() == j, "fpca_projection: basis rows do not match the grid");
  const Eigen::Map<const Eigen::VectorXd> w(m.weights.data(), j);
  return m.eigenfunctions.transpose() * w.asDiagonal() * bu;
}

Eigen::MatrixXd fpca_design(const FpcaModel& m, const Eigen::MatrixXd& scores, const Eigen::MatrixXd& bu,
                            const Eigen::MatrixXd& bt) {
  detail::require(scores.cols() == m.components(), "fpca_design: score columns do not match K2");
  detail::require(scores.rows() == bt.rows(), "fpca_design: scores and time basis have different row counts");
  return tensor_rows(scores * fpca_projection(m, bu), bt);
}

}  // namespace tvflcm
