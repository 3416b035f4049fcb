#include "tvflcm/fitter.hpp"

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace tvflcm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd structural_spectrum(const MarginalPenalty& pen) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pen.matrix, Eigen::EigenvaluesOnly);
  Eigen::VectorXd d = eig.eigenvalues();  // ascending
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (i < pen.null_space_dim || d(i) < 0.0) d(i) = 0.0;
  return d;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigenbasis(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m);
}

std::vector<int> dense_strata(const std::vector<int>& labels, std::size_t n, int* count) {
  std::vector<int> out(n, 0);
  if (labels.empty()) {
    *count = n ? 1 : 0;
    return out;
  }
  std::map<int, int> dense;
  for (int s : labels) dense.emplace(s, 0);
  int k = 0;
  for (auto& [label, idx] : dense) idx = k++;
  for (std::size_t r = 0; r < n; ++r) out[r] = dense[labels[r]];
  *count = k;
  return out;
}

std::string describe_direction(const PenalizedProblem& problem, const Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  std::string name = static_cast<std::size_t>(idx) < problem.coefficient_names.size()
                         ? problem.coefficient_names[static_cast<std::size_t>(idx)]
                         : "theta[" + std::to_string(idx) + "]";
  return "null direction dominated by coefficient " + std::to_string(idx) + " (" + name + ", weight " +
         format_double(v(idx)) + ")";
}

void symmetrize_lower(Eigen::MatrixXd& m) {
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose().triangularView<Eigen::StrictlyUpper>();
}

std::string trace_tail(const std::vector<double>& trace) {
  std::ostringstream os;
  const std::size_t from = trace.size() > 6 ? trace.size() - 6 : 0;
  for (std::size_t i = from; i < trace.size(); ++i) os << (i > from ? ", " : "") << format_double(trace[i]);
  return os.str();
}

}  // namespace

std::string_view to_string(LikelihoodKind kind) {
  return kind == LikelihoodKind::poisson ? "poisson" : "cox_stratified";
}

PenaltyGroup single_penalty_group(std::string name, int offset, const MarginalPenalty& penalty, int lambda_index) {
  PenaltyGroup g;
  g.name = std::move(name);
  g.offset = offset;
  g.size = static_cast<int>(penalty.matrix.rows());
  const auto eig = eigenbasis(penalty.matrix);
  Eigen::VectorXd d = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (i < penalty.null_space_dim || d(i) < 0.0) d(i) = 0.0;
  g.terms.push_back({penalty.matrix, lambda_index});
  g.spectrum.push_back(d);
  return g;
}

PenaltyGroup tensor_penalty_group(std::string name, int offset, const MarginalPenalty& pu, const MarginalPenalty& pt,
                                  int lambda_u, int lambda_t) {
  const Eigen::Index ku = pu.matrix.rows();
  const Eigen::Index ks = pt.matrix.rows();
  PenaltyGroup g;
  g.name = std::move(name);
  g.offset = offset;
  g.size = static_cast<int>(ku * ks);
  const Eigen::VectorXd du = structural_spectrum(pu);
  const Eigen::VectorXd dt = structural_spectrum(pt);
  if (du.maxCoeff() > 0.0) {
    Eigen::MatrixXd su = Eigen::MatrixXd::Zero(g.size, g.size);
    Eigen::VectorXd e(g.size);
    for (Eigen::Index k = 0; k < ks; ++k) {
      su.block(k * ku, k * ku, ku, ku) = pu.matrix;
      e.segment(k * ku, ku) = du;
    }
    g.terms.push_back({std::move(su), lambda_u});
    g.spectrum.push_back(std::move(e));
  }
  if (dt.maxCoeff() > 0.0) {
    Eigen::MatrixXd st = Eigen::MatrixXd::Zero(g.size, g.size);
    Eigen::VectorXd e(g.size);
    for (Eigen::Index k = 0; k < ks; ++k) {
      for (Eigen::Index m = 0; m < ks; ++m) st.block(k * ku, m * ku, ku, ku).diagonal().setConstant(pt.matrix(k, m));
      e.segment(k * ku, ku).setConstant(dt(k));
    }
    g.terms.push_back({std::move(st), lambda_t});
    g.spectrum.push_back(std::move(e));
  }
  return g;
}

PenaltyGroup generic_penalty_group(std::string name, int offset, std::vector<PenaltyTerm> terms) {
  detail::require(!terms.empty(), "generic_penalty_group: no terms");
  PenaltyGroup g;
  g.name = std::move(name);
  g.offset = offset;
  g.size = static_cast<int>(terms.front().matrix.rows());
  g.terms = std::move(terms);
  return g;
}

int PenalizedProblem::lambda_count() const {
  int m = 0;
  for (const auto& g : penalties)
    for (const auto& t : g.terms) m = std::max(m, t.lambda_index + 1);
  return m;
}

int PenalizedProblem::stratum_count() const {
  int k = 0;
  dense_strata(stratum, rows(), &k);
  return k;
}

void PenalizedProblem::validate() const {
  const std::size_t n = rows();
  const int p = coefficients();
  detail::require(response.size() == n, "penalized problem: response length differs from design rows");
  detail::require(stratum.empty() || stratum.size() == n, "penalized problem: stratum length differs from design rows");
  if (kind == LikelihoodKind::cox_stratified)
    detail::require(time.size() == n, "penalized problem: time length differs from design rows");
  detail::require(design.allFinite(), "penalized problem: non-finite design entry");
  for (double y : response) detail::require(std::isfinite(y) && y >= 0.0, "penalized problem: bad response");
  for (const auto& g : penalties) {
    detail::require(g.offset >= 0 && g.size >= 0 && g.offset + g.size <= p,
                    "penalty group '" + g.name + "' exceeds the coefficient range");
    detail::require(g.spectrum.empty() || g.spectrum.size() == g.terms.size(),
                    "penalty group '" + g.name + "': spectrum/term count mismatch");
    for (const auto& t : g.terms) {
      detail::require(t.matrix.rows() == g.size && t.matrix.cols() == g.size,
                      "penalty group '" + g.name + "': term has wrong size");
      detail::require(t.lambda_index >= 0, "penalty group '" + g.name + "': negative lambda index");
      const double scale = std::max(1.0, t.matrix.cwiseAbs().maxCoeff());
      detail::require((t.matrix - t.matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                      "penalty group '" + g.name + "': term is not symmetric");
    }
  }
}

LikelihoodEvaluator::LikelihoodEvaluator(const PenalizedProblem& problem) : problem_(&problem) {
  problem.validate();
  const std::size_t n = problem.rows();
  stratum_ = dense_strata(problem.stratum, n, &strata_);
  if (problem.kind == LikelihoodKind::cox_stratified) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    const auto& t = problem.time;
    const auto& d = problem.response;
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) {
      if (stratum_[a] != stratum_[b]) return stratum_[a] < stratum_[b];
      if (t[a] != t[b]) return t[a] > t[b];
      return d[a] < d[b];
    });
    range_.assign(1, 0);
    for (std::size_t i = 1; i <= n; ++i)
      if (i == n || stratum_[order_[i]] != stratum_[order_[i - 1]]) range_.push_back(static_cast<int>(i));
  } else {
    stratum_total_.assign(static_cast<std::size_t>(strata_), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      stratum_total_[stratum_[r]] += problem.response[r];
      log_factorials_ += std::lgamma(problem.response[r] + 1.0);
    }
  }
}

double LikelihoodEvaluator::loglik(const Eigen::VectorXd& theta) const {
  return evaluate(theta, false).loglik;
}

LikelihoodEvaluator::Result LikelihoodEvaluator::evaluate(const Eigen::VectorXd& theta, bool with_information) const {
  const auto& pr = *problem_;
  const Eigen::MatrixXd& x = pr.design;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  detail::require(theta.size() == p, "LikelihoodEvaluator: coefficient length mismatch");
  const Eigen::VectorXd eta = x * theta;
  Result res;
  if (!eta.allFinite()) {
    res.loglik = kNegInf;
    return res;
  }
  Eigen::VectorXd w(n);  // expected counts per row
  res.loglik = 0.0;

  if (pr.kind == LikelihoodKind::cox_stratified) {
    std::vector<double> a(static_cast<std::size_t>(n));
    std::vector<double> inv_s0(static_cast<std::size_t>(n), 0.0);
    Eigen::MatrixXd ebar;
    Eigen::Index events = 0;
    if (with_information) {
      Eigen::Index total_events = 0;
      for (double d : pr.response)
        if (d > 0) ++total_events;
      ebar.resize(total_events, p);
    }
    Eigen::RowVectorXd s1(p);
    for (std::size_t s = 0; s + 1 < range_.size(); ++s) {
      const int lo = range_[s], hi = range_[s + 1];
      double m = -std::numeric_limits<double>::infinity();
      for (int q = lo; q < hi; ++q) m = std::max(m, eta(order_[q]));
      double s0 = 0.0;
      s1.setZero();
      for (int q = lo; q < hi; ++q) {
        const int r = order_[q];
        a[r] = std::exp(eta(r) - m);
        s0 += a[r];
        if (with_information) s1.noalias() += a[r] * x.row(r);
        if (pr.response[r] > 0) {
          res.loglik += pr.response[r] * (eta(r) - m - std::log(s0));
          inv_s0[r] = pr.response[r] / s0;
          if (with_information) ebar.row(events++) = std::sqrt(pr.response[r]) * s1 / s0;
        }
      }
      double acc = 0.0;
      for (int q = hi - 1; q >= lo; --q) {
        const int r = order_[q];
        acc += inv_s0[r];
        w(r) = a[r] * acc;
      }
    }
    if (!with_information) return res;
    const Eigen::Map<const Eigen::VectorXd> d(pr.response.data(), n);
    res.gradient = x.transpose() * (d - w);
    res.information = Eigen::MatrixXd::Zero(p, p);
    const Eigen::MatrixXd wx = (x.array().colwise() * w.array().sqrt()).matrix();
    res.information.selfadjointView<Eigen::Lower>().rankUpdate(wx.transpose());
    res.information.selfadjointView<Eigen::Lower>().rankUpdate(ebar.transpose(), -1.0);
    symmetrize_lower(res.information);
    return res;
  }

  // Poisson with per-stratum intercepts profiled out:
  // alpha_s = log(Y_s) - log(sum_{r in s} exp(eta_r)).
  std::vector<double> m(static_cast<std::size_t>(strata_), -std::numeric_limits<double>::infinity());
  std::vector<double> s0(static_cast<std::size_t>(strata_), 0.0);
  for (Eigen::Index r = 0; r < n; ++r) m[stratum_[r]] = std::max(m[stratum_[r]], eta(r));
  for (Eigen::Index r = 0; r < n; ++r) s0[stratum_[r]] += std::exp(eta(r) - m[stratum_[r]]);
  res.stratum_log_baseline.resize(strata_);
  for (int s = 0; s < strata_; ++s)
    res.stratum_log_baseline(s) =
        stratum_total_[s] > 0 ? std::log(stratum_total_[s]) - m[s] - std::log(s0[s]) : kNegInf;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int s = stratum_[r];
    const double y = pr.response[r];
    if (stratum_total_[s] <= 0) {
      w(r) = 0.0;
      continue;
    }
    const double log_mu = res.stratum_log_baseline(s) + eta(r);
    w(r) = std::exp(log_mu);
    res.loglik += y * log_mu - w(r);
  }
  res.loglik -= log_factorials_;
  if (!with_information) return res;
  // Row chunks keep each slice of the design in cache for all three products.
  constexpr Eigen::Index chunk = 2048;
  res.gradient = Eigen::VectorXd::Zero(p);
  res.information = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(strata_, p);
  Eigen::MatrixXd wx(chunk, p);
  for (Eigen::Index a = 0; a < n; a += chunk) {
    const Eigen::Index len = std::min(chunk, n - a);
    const auto xc = x.middleRows(a, len);
    Eigen::VectorXd resid(len);
    for (Eigen::Index r = 0; r < len; ++r) resid(r) = pr.response[a + r] - w(a + r);
    res.gradient.noalias() += xc.transpose() * resid;
    const Eigen::ArrayXd sw = w.segment(a, len).array().sqrt();
    wx.topRows(len) = xc.array().colwise() * sw;
    res.information.noalias() += wx.topRows(len).transpose() * wx.topRows(len);
    for (Eigen::Index c = 0; c < p; ++c) {
      double* hc = h.col(c).data();
      for (Eigen::Index r = 0; r < len; ++r) hc[stratum_[a + r]] += w(a + r) * xc(r, c);
    }
  }
  for (int st = 0; st < strata_; ++st) {
    if (stratum_total_[st] <= 0) continue;
    h.row(st) /= std::sqrt(stratum_total_[st]);
  }
  res.information.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose(), -1.0);
  symmetrize_lower(res.information);
  return res;
}

Eigen::MatrixXd assemble_penalty(const PenalizedProblem& problem, const std::vector<double>& lambdas) {
  const int p = problem.coefficients();
  detail::require(static_cast<int>(lambdas.size()) >= problem.lambda_count(),
                  "assemble_penalty: " + std::to_string(lambdas.size()) + " smoothing parameters for " +
                      std::to_string(problem.lambda_count()) + " penalties");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const auto& g : problem.penalties)
    for (const auto& t : g.terms) s.block(g.offset, g.offset, g.size, g.size) += lambdas[t.lambda_index] * t.matrix;
  return s;
}

double penalty_log_pdet(const PenalizedProblem& problem, const std::vector<double>& lambdas) {
  double total = 0.0;
  for (const auto& g : problem.penalties) {
    if (g.terms.empty()) continue;
    if (!g.spectrum.empty()) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(g.size);
      for (std::size_t m = 0; m < g.terms.size(); ++m) e += lambdas[g.terms[m].lambda_index] * g.spectrum[m];
      for (Eigen::Index i = 0; i < e.size(); ++i)
        if (e(i) > 0.0) total += std::log(e(i));
      continue;
    }
    // rank from the normalized sum of the active terms, then top eigenvalues
    Eigen::MatrixXd norm_sum = Eigen::MatrixXd::Zero(g.size, g.size);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(g.size, g.size);
    for (const auto& t : g.terms) {
      const double lam = lambdas[t.lambda_index];
      if (lam <= 0.0) continue;
      const double scale = t.matrix.norm();
      if (scale > 0.0) norm_sum += t.matrix / scale;
      s += lam * t.matrix;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rank_eig(norm_sum, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& re = rank_eig.eigenvalues();
    if (re.size() == 0) continue;
    const double tol = 1e-10 * std::max(re.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < re.size(); ++i)
      if (re(i) > tol) ++rank;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    for (Eigen::Index i = ev.size() - rank; i < ev.size(); ++i) total += std::log(std::max(ev(i), 1e-300));
  }
  return total;
}

FitResult newton_fit(const PenalizedProblem& problem, const std::vector<double>& lambdas, const NewtonOptions& options) {
  LikelihoodEvaluator ev(problem);
  return newton_fit(ev, lambdas, options);
}

FitResult newton_fit(const LikelihoodEvaluator& evaluator, const std::vector<double>& lambdas,
                     const NewtonOptions& options) {
  const PenalizedProblem& problem = evaluator.problem();
  const int p = problem.coefficients();
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("newton_fit: smoothing parameters must be finite and >= 0");
  const Eigen::MatrixXd s = assemble_penalty(problem, lambdas);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  if (options.start) {
    detail::require(options.start->size() == p, "newton_fit: start vector has wrong length");
    theta = *options.start;
  }
  auto objective = [&](const Eigen::VectorXd& th, double ll) { return ll - 0.5 * th.dot(s * th); };

  LikelihoodEvaluator::Result cur = evaluator.evaluate(theta);
  if (!std::isfinite(cur.loglik)) {
    theta.setZero();
    cur = evaluator.evaluate(theta);
  }
  if (!std::isfinite(cur.loglik)) throw NumericalError("newton_fit: log-likelihood not finite at the start");
  double q = objective(theta, cur.loglik);

  FitResult fit;
  fit.convergence.objective_trace.push_back(q);
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool converged = false;
  int iter = 0;
  int quiet_steps = 0;
  for (;; ++iter) {
    const Eigen::MatrixXd m = cur.information + s;
    llt.compute(m);
    const bool pd = llt.info() == Eigen::Success && llt.rcond() > 1e-15;
    if (!pd) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
      throw NumericalError("newton_fit: penalized Hessian is singular (smallest eigenvalue " +
                           format_double(eig.eigenvalues()(0)) + "); " +
                           describe_direction(problem, eig.eigenvectors().col(0)));
    }
    const Eigen::VectorXd g = cur.gradient - s * theta;
    const double gnorm = g.norm();
    fit.convergence.gradient_norm = gnorm;
    if (gnorm < options.tolerance * (1.0 + std::abs(q))) {
      converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;
    const Eigen::VectorXd delta = llt.solve(g);
    // Rounding level of the objective; mostly from theta' S theta with large lambda.
    const Eigen::VectorXd ath = theta.cwiseAbs();
    const double noise = 1e-14 * (std::abs(cur.loglik) + ath.dot(s.cwiseAbs() * ath)) + 1e-300;
    if (0.5 * delta.dot(g) <= noise) {
      // the predicted gain cannot be seen in the objective: trust the quadratic model
      theta += delta;
      cur = evaluator.evaluate(theta);
      q = objective(theta, cur.loglik);
      fit.convergence.objective_trace.push_back(q);
      if (++quiet_steps >= 2 && (cur.gradient - s * theta).norm() < 1e-6 * (1.0 + std::abs(q))) {
        llt.compute(cur.information + s);
        fit.convergence.gradient_norm = (cur.gradient - s * theta).norm();
        converged = llt.info() == Eigen::Success;
        ++iter;
        break;
      }
      continue;
    }
    quiet_steps = 0;
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double q_trial = kNegInf;
    for (int h = 0; h < 60; ++h, step *= 0.5) {
      trial = theta + step * delta;
      const double ll = evaluator.loglik(trial);
      q_trial = std::isfinite(ll) ? objective(trial, ll) : kNegInf;
      if (q_trial >= q) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // no ascent available: accept only if already at the round-off floor
      if (gnorm < 1e-6 * (1.0 + std::abs(q))) {
        converged = true;
        break;
      }
      throw NumericalError("newton_fit: line search failed at iteration " + std::to_string(iter) +
                           " (gradient norm " + format_double(gnorm) + "); objective trace: " +
                           trace_tail(fit.convergence.objective_trace));
    }
    const double change = (trial - theta).lpNorm<Eigen::Infinity>();
    theta = trial;
    cur = evaluator.evaluate(theta);
    q = objective(theta, cur.loglik);
    fit.convergence.objective_trace.push_back(q);
    if (change <= 1e-13 * (1.0 + theta.lpNorm<Eigen::Infinity>()) &&
        (cur.gradient - s * theta).norm() < 1e-6 * (1.0 + std::abs(q))) {
      // step below representable change; gradient is at its noise floor
      llt.compute(cur.information + s);
      fit.convergence.gradient_norm = (cur.gradient - s * theta).norm();
      converged = llt.info() == Eigen::Success;
      ++iter;
      break;
    }
  }
  if (!converged)
    throw NumericalError("newton_fit: no convergence after " + std::to_string(options.max_iterations) +
                         " iterations (gradient norm " + format_double(fit.convergence.gradient_norm) +
                         "); objective trace: " + trace_tail(fit.convergence.objective_trace));

  fit.coefficients = theta;
  fit.loglik = cur.loglik;
  fit.information = cur.information;
  fit.covariance = llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  fit.lambdas = lambdas;
  for (double l : lambdas) fit.log10_lambdas.push_back(l > 0 ? std::log10(l) : -std::numeric_limits<double>::infinity());
  fit.convergence.iterations = iter;
  fit.convergence.penalized_loglik = q;
  fit.linear_predictor = problem.design * theta;
  fit.stratum_log_baseline = cur.stratum_log_baseline;

  double log_det_m = 0.0;
  const auto& lm = llt.matrixLLT();
  for (int i = 0; i < p; ++i) log_det_m += 2.0 * std::log(lm(i, i));
  fit.reml.penalized_loglik = q;
  fit.reml.half_log_pdet_s = 0.5 * penalty_log_pdet(problem, lambdas);
  fit.reml.half_log_det_h = 0.5 * log_det_m;
  fit.reml.value = fit.reml.penalized_loglik + fit.reml.half_log_pdet_s - fit.reml.half_log_det_h;

  const Eigen::MatrixXd f = fit.covariance * fit.information;
  for (const auto& g : problem.penalties) fit.edf.push_back(f.diagonal().segment(g.offset, g.size).sum());
  fit.edf_total = f.trace();

  if (problem.kind == LikelihoodKind::cox_stratified) {
    int k = 0;
    const auto dense = dense_strata(problem.stratum, problem.rows(), &k);
    std::vector<std::vector<double>> t(k), e(k);
    std::vector<std::vector<int>> d(k);
    for (std::size_t r = 0; r < problem.rows(); ++r) {
      t[dense[r]].push_back(problem.time[r]);
      d[dense[r]].push_back(problem.response[r] > 0 ? 1 : 0);
      e[dense[r]].push_back(fit.linear_predictor(static_cast<Eigen::Index>(r)));
    }
    for (int sidx = 0; sidx < k; ++sidx) fit.baseline.push_back(nelson_aalen(t[sidx], d[sidx], e[sidx]));
  }
  return fit;
}

RemlTerms reml_criterion(const PenalizedProblem& problem, const FitResult& fit) {
  LikelihoodEvaluator ev(problem);
  const auto res = ev.evaluate(fit.coefficients);
  const Eigen::MatrixXd s = assemble_penalty(problem, fit.lambdas);
  RemlTerms t;
  t.penalized_loglik = res.loglik - 0.5 * fit.coefficients.dot(s * fit.coefficients);
  t.half_log_pdet_s = 0.5 * penalty_log_pdet(problem, fit.lambdas);
  Eigen::LLT<Eigen::MatrixXd> llt(res.information + s);
  if (llt.info() != Eigen::Success) throw NumericalError("reml_criterion: penalized Hessian not positive definite");
  double ld = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) ld += 2.0 * std::log(llt.matrixLLT()(i, i));
  t.half_log_det_h = 0.5 * ld;
  t.value = t.penalized_loglik + t.half_log_pdet_s - t.half_log_det_h;
  return t;
}

double block_edf(const FitResult& fit, int offset, int size) {
  const Eigen::MatrixXd f = fit.covariance * fit.information;
  return f.diagonal().segment(offset, size).sum();
}

FitResult select_smoothing(const PenalizedProblem& problem, const SmoothingOptions& options) {
  LikelihoodEvaluator ev(problem);
  const int nl = problem.lambda_count();
  if (nl == 0) return newton_fit(ev, {}, options.newton);
  detail::require(options.upper > options.lower, "select_smoothing: empty search interval");

  std::vector<double> rho = options.initial;
  if (rho.empty()) rho.assign(static_cast<std::size_t>(nl), 0.0);
  detail::require(static_cast<int>(rho.size()) == nl, "select_smoothing: initial log-lambda has wrong length");
  for (double& r : rho) r = std::clamp(r, options.lower, options.upper);

  std::optional<FitResult> best;
  std::vector<std::pair<std::vector<double>, double>> trace;
  std::string last_error;

  auto criterion = [&](const std::vector<double>& r) -> double {
    std::vector<double> lam(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) lam[i] = std::pow(10.0, r[i]);
    NewtonOptions no = options.newton;
    if (best) no.start = best->coefficients;
    double v = kNegInf;
    try {
      FitResult f = newton_fit(ev, lam, no);
      f.log10_lambdas = r;
      v = f.reml.value;
      if (std::isfinite(v) && (!best || v > best->reml.value)) best = std::move(f);
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
    trace.emplace_back(r, v);
    return std::isfinite(v) ? v : kNegInf;
  };

  auto golden = [&](std::size_t coord, double a, double b, double tol) {
    std::vector<double> r = rho;
    double best_x = rho[coord];
    double best_f = kNegInf;
    auto f = [&](double x) {
      r[coord] = x;
      const double v = criterion(r);
      if (v > best_f) {
        best_f = v;
        best_x = x;
      }
      return v;
    };
    f(a);
    f(b);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = f(d);
      }
    }
    if (std::isfinite(best_f)) rho[coord] = best_x;
  };

  for (int sweep = 0; sweep < std::max(1, options.sweeps); ++sweep) {
    for (int m = 0; m < nl; ++m) {
      if (sweep == 0) {
        golden(static_cast<std::size_t>(m), options.lower, options.upper, options.first_tolerance);
      } else {
        const double lo = std::max(options.lower, rho[m] - options.refine_halfwidth);
        const double hi = std::min(options.upper, rho[m] + options.refine_halfwidth);
        golden(static_cast<std::size_t>(m), lo, hi, options.refine_tolerance);
      }
    }
  }
  if (!best) throw NumericalError("select_smoothing: REML criterion non-finite at every probed smoothing parameter" +
                                  (last_error.empty() ? std::string() : " (last error: " + last_error + ")"));
  rho = best->log10_lambdas;

  if (options.polish) {
    // one Newton step on the criterion with central differences in log10 lambda
    const double h = 0.05;
    const double v0 = best->reml.value;
    Eigen::VectorXd grad(nl);
    Eigen::MatrixXd hess(nl, nl);
    bool ok = true;
    auto at = [&](std::vector<double> r) {
      for (int i = 0; i < nl; ++i) {
        if (r[i] < options.lower || r[i] > options.upper) ok = false;
      }
      return ok ? criterion(r) : kNegInf;
    };
    const std::vector<double> base = rho;
    for (int i = 0; i < nl && ok; ++i) {
      auto rp = base, rm = base;
      rp[i] += h;
      rm[i] -= h;
      const double fp = at(rp), fm = at(rm);
      grad(i) = (fp - fm) / (2 * h);
      hess(i, i) = (fp - 2 * v0 + fm) / (h * h);
    }
    for (int i = 0; i < nl && ok; ++i)
      for (int j = i + 1; j < nl && ok; ++j) {
        auto pp = base, pm = base, mp = base, mm = base;
        pp[i] += h, pp[j] += h;
        pm[i] += h, pm[j] -= h;
        mp[i] -= h, mp[j] += h;
        mm[i] -= h, mm[j] -= h;
        hess(i, j) = hess(j, i) = (at(pp) - at(pm) - at(mp) + at(mm)) / (4 * h * h);
      }
    if (ok && grad.allFinite() && hess.allFinite()) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
      if (eig.eigenvalues().maxCoeff() < 0.0) {
        Eigen::VectorXd step = -hess.ldlt().solve(grad);
        const double big = step.lpNorm<Eigen::Infinity>();
        if (big > 0.5) step *= 0.5 / big;
        std::vector<double> r = base;
        for (int i = 0; i < nl; ++i) r[i] = std::clamp(base[i] + step(i), options.lower, options.upper);
        criterion(r);
      }
    }
  }
  // flat criterion: near-ties go to the heaviest smoothing
  if (options.plateau_tolerance > 0.0) {
    const double floor = best->reml.value - options.plateau_tolerance * (1.0 + std::abs(best->reml.value));
    auto weight = [](const std::vector<double>& r) { return std::accumulate(r.begin(), r.end(), 0.0); };
    const std::vector<double>* pick = nullptr;
    for (const auto& [r, v] : trace)
      if (std::isfinite(v) && v >= floor && weight(r) > weight(pick ? *pick : best->log10_lambdas) + 1e-12) pick = &r;
    if (pick) {
      std::vector<double> lam(pick->size());
      for (std::size_t i = 0; i < lam.size(); ++i) lam[i] = std::pow(10.0, (*pick)[i]);
      NewtonOptions no = options.newton;
      no.start = best->coefficients;
      try {
        FitResult f = newton_fit(ev, lam, no);
        f.log10_lambdas = *pick;
        if (std::isfinite(f.reml.value) && f.reml.value >= floor) best = std::move(f);
      } catch (const NumericalError&) {
      }
    }
  }
  FitResult out = std::move(*best);
  out.smoothing_trace = std::move(trace);
  return out;
}

}  // namespace tvflcm
