#pragma once

// Functional principal components of a noisy dense predictor W = Z + eps.

#include "tvflcm/functional.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace tvflcm {

struct FpcaOptions {
  std::optional<int> components;     // K2; default: smallest K2 reaching `variance_explained`
  double variance_explained = 0.99;
  bool center = true;
  int bandwidth = 3;                 // diagonal smoother uses the 2 * bandwidth nearest neighbours
};

struct FpcaModel {
  std::vector<double> grid;
  std::vector<double> weights;
  Eigen::VectorXd mean;              // J (zero when uncentred)
  Eigen::MatrixXd eigenfunctions;    // J x K2, psi' W psi = I
  Eigen::VectorXd eigenvalues;       // K2, nonincreasing, >= 0
  Eigen::VectorXd spectrum;          // all J eigenvalues after noise removal, clipped at 0
  double noise_variance = 0.0;
  int components() const { return static_cast<int>(eigenvalues.size()); }
  std::vector<std::string> warnings;
};

FpcaModel fit_fpca(const FunctionalPredictor& w, const FpcaOptions& options = {});

/// c_ik = sum_v w_v (Z_i(u_v) - mean(u_v)) psi_k(u_v).
Eigen::MatrixXd project_scores(const Eigen::MatrixXd& z_rows, const FpcaModel& model);
Eigen::MatrixXd project_scores(const FunctionalPredictor& z, const FpcaModel& model);

/// J_phiB(k2, j) = sum_v w_v psi_k2(u_v) B_j(u_v).
Eigen::MatrixXd fpca_projection(const FpcaModel& model, const Eigen::MatrixXd& bu);

/// Row r, column (j, k): bt(r, k) (scores_r J_phiB)_j, in the tensor column order.
Eigen::MatrixXd fpca_design(const FpcaModel& model, const Eigen::MatrixXd& scores, const Eigen::MatrixXd& bu,
                            const Eigen::MatrixXd& bt);

}  // namespace tvflcm
