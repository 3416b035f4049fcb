#include "tvflcm/tensor_penalty.hpp"

#include "tvflcm/error.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace tvflcm {

MarginBasis MarginBasis::spline(BasisSpec spec) {
  MarginBasis m;
  m.kind_ = MarginKind::spline;
  m.domain_ = spec.domain();
  m.spec_ = std::move(spec);
  return m;
}

MarginBasis MarginBasis::constant(Interval domain) {
  MarginBasis m;
  m.kind_ = MarginKind::constant;
  m.domain_ = domain;
  return m;
}

MarginBasis MarginBasis::indicator(std::vector<double> levels) {
  detail::require(!levels.empty(), "indicator margin needs at least one level");
  for (std::size_t i = 1; i < levels.size(); ++i)
    detail::require(levels[i] > levels[i - 1], "indicator levels must be strictly increasing");
  MarginBasis m;
  m.kind_ = MarginKind::indicator;
  m.domain_ = {levels.front(), levels.back()};
  m.levels_ = std::move(levels);
  return m;
}

int MarginBasis::dimension() const {
  switch (kind_) {
    case MarginKind::spline: return spec_->dimension();
    case MarginKind::constant: return 1;
    case MarginKind::indicator: return static_cast<int>(levels_.size());
  }
  return 0;
}

Interval MarginBasis::domain() const { return domain_; }

const BasisSpec& MarginBasis::spec() const {
  if (!spec_) throw ValidationError("margin has no spline basis");
  return *spec_;
}

Eigen::MatrixXd MarginBasis::evaluate(std::span<const double> points) const {
  switch (kind_) {
    case MarginKind::spline: return evaluate_basis(*spec_, points).values;
    case MarginKind::constant: return Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(points.size()), 1);
    case MarginKind::indicator: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), dimension());
      const double tol = 1e-9 * std::max(1.0, std::abs(levels_.back()));
      for (std::size_t r = 0; r < points.size(); ++r) {
        auto it = std::lower_bound(levels_.begin(), levels_.end(), points[r] - tol);
        if (it == levels_.end() || std::abs(*it - points[r]) > tol)
          throw ValidationError("indicator margin: " + std::to_string(points[r]) + " is not a level");
        out(static_cast<Eigen::Index>(r), it - levels_.begin()) = 1.0;
      }
      return out;
    }
  }
  return {};
}

MarginalPenalty MarginBasis::penalty() const {
  if (kind_ == MarginKind::spline) return roughness_penalty(*spec_);
  MarginalPenalty p;
  p.matrix = Eigen::MatrixXd::Zero(dimension(), dimension());
  p.null_space_dim = dimension();
  return p;
}

Eigen::MatrixXd tensor_rows(const Eigen::MatrixXd& projected, const Eigen::MatrixXd& bt) {
  detail::require(projected.rows() == bt.rows(), "tensor_rows: row count mismatch between projected rows and time basis");
  const Eigen::Index ku = projected.cols();
  const Eigen::Index ks = bt.cols();
  Eigen::MatrixXd out(projected.rows(), ku * ks);
  for (Eigen::Index k = 0; k < ks; ++k)
    out.middleCols(k * ku, ku) = bt.col(k).asDiagonal() * projected;
  return out;
}

Eigen::MatrixXd tensor_design(const Eigen::MatrixXd& bu, const Eigen::MatrixXd& bt, const Eigen::MatrixXd& weights) {
  detail::require(weights.cols() == bu.rows(), "tensor_design: weights have " + std::to_string(weights.cols()) +
                                                   " columns but the functional basis has " +
                                                   std::to_string(bu.rows()) + " rows");
  return tensor_rows(weights * bu, bt);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> tensor_penalties(const MarginalPenalty& pu, const MarginalPenalty& pt) {
  const Eigen::Index ku = pu.matrix.rows();
  const Eigen::Index ks = pt.matrix.rows();
  detail::require(pu.matrix.cols() == ku && pt.matrix.cols() == ks, "tensor_penalties: marginal penalties must be square");
  const Eigen::Index p = ku * ks;
  Eigen::MatrixXd su = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd st = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < ks; ++k) su.block(k * ku, k * ku, ku, ku) = pu.matrix;
  for (Eigen::Index k = 0; k < ks; ++k)
    for (Eigen::Index m = 0; m < ks; ++m)
      st.block(k * ku, m * ku, ku, ku).diagonal().setConstant(pt.matrix(k, m));
  return {std::move(su), std::move(st)};
}

TensorBlock make_tensor_block(Eigen::MatrixXd design, const MarginalPenalty& pu, const MarginalPenalty& pt) {
  TensorBlock b;
  b.k_u = static_cast<int>(pu.matrix.rows());
  b.k_s = static_cast<int>(pt.matrix.rows());
  detail::require(design.cols() == static_cast<Eigen::Index>(b.k_u) * b.k_s,
                  "make_tensor_block: design has " + std::to_string(design.cols()) + " columns, expected " +
                      std::to_string(b.k_u * b.k_s));
  b.design = std::move(design);
  std::tie(b.penalty_u, b.penalty_t) = tensor_penalties(pu, pt);
  return b;
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::none: return "none";
    case ConstraintKind::predictor_sum_to_zero: return "predictor_sum_to_zero";
    case ConstraintKind::time_margin_centering: return "time_margin_centering";
  }
  return "unknown";
}

ConstraintKind constraint_kind_from_string(std::string_view name) {
  if (name == "none") return ConstraintKind::none;
  if (name == "predictor_sum_to_zero" || name == "sum_to_zero") return ConstraintKind::predictor_sum_to_zero;
  if (name == "time_margin_centering" || name == "time_margin") return ConstraintKind::time_margin_centering;
  throw ValidationError("unknown constraint kind '" + std::string(name) + "'");
}

Eigen::MatrixXd constraint_rows(ConstraintKind kind, const Eigen::MatrixXd& stratum_z_sums, const Eigen::MatrixXd& bu,
                                const Eigen::MatrixXd& bt_strata, double z_scale) {
  const Eigen::Index ku = bu.cols();
  const Eigen::Index ks = bt_strata.cols();
  const Eigen::Index p = ku * ks;
  switch (kind) {
    case ConstraintKind::none: return Eigen::MatrixXd(0, p);
    case ConstraintKind::time_margin_centering: {
      const Eigen::RowVectorXd c = bt_strata.colwise().sum();
      Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(ku, p);
      for (Eigen::Index j = 0; j < ku; ++j)
        for (Eigen::Index k = 0; k < ks; ++k) rows(j, j + ku * k) = c(k);
      return rows;
    }
    case ConstraintKind::predictor_sum_to_zero: {
      detail::require(stratum_z_sums.rows() == bt_strata.rows() && stratum_z_sums.cols() == bu.rows(),
                      "constraint_rows: stratum sums must be L x J");
      detail::require(z_scale > 0.0 && std::isfinite(z_scale), "constraint_rows: z_scale must be positive");
      const Eigen::Index l_count = bt_strata.rows();
      const Eigen::Index j_count = bu.rows();
      Eigen::MatrixXd rows(l_count * j_count, p);
      for (Eigen::Index l = 0; l < l_count; ++l)
        for (Eigen::Index v = 0; v < j_count; ++v) {
          const double zs = stratum_z_sums(l, v) / z_scale;
          for (Eigen::Index k = 0; k < ks; ++k)
            rows.row(l * j_count + v).segment(k * ku, ku) = zs * bt_strata(l, k) * bu.row(v);
        }
      return rows;
    }
  }
  return Eigen::MatrixXd(0, p);
}

Eigen::MatrixXd null_space_transform(const Eigen::MatrixXd& constraint, int* rank) {
  const Eigen::Index p = constraint.cols();
  if (constraint.rows() == 0) {
    if (rank) *rank = 0;
    return {};
  }
  const Eigen::MatrixXd gram = constraint.transpose() * constraint;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
  const double tol = 1e-14 * std::max(1.0, ev(p - 1));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    if (ev(i) > tol) ++r;
  if (rank) *rank = static_cast<int>(r);
  if (r == 0) return {};
  if (r >= p)
    throw ValidationError("constraint rank " + std::to_string(r) + " leaves no free coefficients out of " +
                          std::to_string(p));
  return eig.eigenvectors().leftCols(p - r);
}

TensorBlock apply_sum_to_zero_constraint(TensorBlock block, const Eigen::MatrixXd& constraint) {
  detail::require(!block.constrained(), "apply_sum_to_zero_constraint: block already constrained");
  detail::require(constraint.cols() == block.design.cols(), "apply_sum_to_zero_constraint: constraint has " +
                                                                std::to_string(constraint.cols()) +
                                                                " columns, block has " +
                                                                std::to_string(block.design.cols()));
  int r = 0;
  Eigen::MatrixXd t = null_space_transform(constraint, &r);
  block.constraint_rank = r;
  if (r == 0) return block;
  block.design = block.design * t;
  block.penalty_u = t.transpose() * block.penalty_u * t;
  block.penalty_t = t.transpose() * block.penalty_t * t;
  block.constraint_transform = std::move(t);
  return block;
}

}  // namespace tvflcm
