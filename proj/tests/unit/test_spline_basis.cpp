#include "tvflcm/error.hpp"
#include "tvflcm/spline_basis.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace tvflcm;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) p[i] = a + (b - a) * i / (n - 1);
  return p;
}

// composite Simpson of f^2 where f is sampled on an odd number of uniform points
double simpson_sq(const Eigen::VectorXd& f, double h) {
  double s = f(0) * f(0) + f(f.size() - 1) * f(f.size() - 1);
  for (Eigen::Index i = 1; i + 1 < f.size(); ++i) s += (i % 2 ? 4.0 : 2.0) * f(i) * f(i);
  return s * h / 3.0;
}

const SplineFamily kFamilies[] = {SplineFamily::bspline_cubic, SplineFamily::cubic_regression,
                                  SplineFamily::cyclic_cubic};

}  // namespace

TEST_SUITE("spline_basis") {

TEST_CASE("uniform knot placement") {
  const BasisSpec cr = make_basis(SplineFamily::cubic_regression, {0, 1}, 5);
  REQUIRE(cr.knots().size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(cr.knots()[i] == doctest::Approx(0.25 * i).epsilon(1e-15));
  CHECK(cr.dimension() == 5);
  const BasisSpec cc = make_basis(SplineFamily::cyclic_cubic, {0, 1}, 4);
  CHECK(cc.dimension() == 4);
  CHECK(cc.knots().size() == 5);
  CHECK(make_basis(SplineFamily::bspline_cubic, {0, 1}, 10).dimension() == 10);
}

TEST_CASE("invalid specs") {
  CHECK_THROWS_AS(make_basis(SplineFamily::cubic_regression, {0, 1}, 2), ValidationError);
  CHECK_THROWS_AS(make_basis(SplineFamily::cubic_regression, {1, 1}, 5), ValidationError);
  CHECK_THROWS_AS(BasisSpec(SplineFamily::cubic_regression, {0, 1}, {0, 0.5, 0.4, 1}), ValidationError);
  const BasisSpec cr = make_basis(SplineFamily::cubic_regression, {0, 1}, 5);
  const std::vector<double> out{1.2};
  CHECK_THROWS_AS(evaluate_basis(cr, out), ValidationError);
}

TEST_CASE("b-spline partition of unity") {
  const BasisSpec bs = make_basis(SplineFamily::bspline_cubic, {0, 1}, 10);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(1000);
  for (auto& v : p) v = u(rng);
  const BasisMatrix b = evaluate_basis(bs, p);
  for (Eigen::Index i = 0; i < b.values.rows(); ++i) {
    CHECK(std::abs(b.values.row(i).sum() - 1.0) < 1e-10);
    CHECK(b.values.row(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("cardinal identity at knots") {
  for (int k : {3, 5, 10, 15}) {
    const BasisSpec cr = make_basis(SplineFamily::cubic_regression, {-1, 2}, k);
    const BasisMatrix b = evaluate_basis(cr, cr.knots());
    CHECK((b.values - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("cyclic periodicity up to the second derivative") {
  const BasisSpec cc = make_basis(SplineFamily::cyclic_cubic, {0, 1}, 6);
  const std::vector<double> ends{0.0, 1.0};
  for (int d = 0; d <= 2; ++d) {
    const BasisMatrix b = evaluate_basis(cc, ends, d);
    CHECK((b.values.row(0) - b.values.row(1)).cwiseAbs().maxCoeff() < 1e-8);
  }
  // wrap-around
  const std::vector<double> p{0.3, 1.3, -0.7};
  const BasisMatrix w = evaluate_basis(cc, p);
  CHECK((w.values.row(0) - w.values.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((w.values.row(0) - w.values.row(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("penalty symmetric psd with the documented null space") {
  for (SplineFamily f : kFamilies) {
    for (int k : {5, 8}) {
      const BasisSpec spec = make_basis(f, {0, 2}, k);
      const MarginalPenalty p = roughness_penalty(spec);
      CHECK((p.matrix - p.matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * p.matrix.cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.matrix);
      const Eigen::VectorXd ev = es.eigenvalues();
      CHECK(ev.minCoeff() >= -1e-10 * ev.maxCoeff());
      int zero = 0;
      for (double e : ev) zero += e < 1e-9 * ev.maxCoeff();
      const int expected = f == SplineFamily::cyclic_cubic ? 1 : 2;
      CHECK(zero == expected);
      CHECK(p.null_space_dim == expected);
      CHECK((p.matrix * Eigen::VectorXd::Ones(k)).norm() < 1e-9 * ev.maxCoeff());
    }
  }
  // straight line through the knots of a cardinal basis has zero curvature
  const BasisSpec cr = make_basis(SplineFamily::cubic_regression, {0, 2}, 6);
  Eigen::VectorXd lin(6);
  for (int i = 0; i < 6; ++i) lin(i) = 3.0 - 2.0 * cr.knots()[i];
  CHECK(lin.dot(roughness_penalty(cr).matrix * lin) < 1e-9);
}

TEST_CASE("second derivative agrees with differenced values") {
  for (SplineFamily f : kFamilies) {
    const BasisSpec spec = make_basis(f, {0, 1}, 7);
    const double h = 1e-4;
    std::vector<double> x{0.111, 0.37, 0.52, 0.803}, lo, hi;
    for (double v : x) {
      lo.push_back(v - h);
      hi.push_back(v + h);
    }
    const Eigen::MatrixXd fd =
        (evaluate_basis(spec, hi).values - 2 * evaluate_basis(spec, x).values + evaluate_basis(spec, lo).values) /
        (h * h);
    CHECK((fd - evaluate_basis(spec, x, 2).values).cwiseAbs().maxCoeff() < 1e-4 * (1 + fd.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("penalty equals quadrature of the squared second derivative") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  const std::vector<double> x = linspace(0.0, 1.0, 10001);
  for (SplineFamily f : kFamilies) {
    for (int k : {5, 10}) {
      const BasisSpec spec = make_basis(f, {0, 1}, k);
      const Eigen::MatrixXd d2 = evaluate_basis(spec, x, 2).values;
      const MarginalPenalty p = roughness_penalty(spec);
      for (int rep = 0; rep < 3; ++rep) {
        Eigen::VectorXd xi(k);
        for (auto& v : xi) v = g(rng);
        const double quad = simpson_sq(d2 * xi, 1e-4);
        const double exact = xi.dot(p.matrix * xi);
        CHECK(std::abs(quad - exact) <= 1e-6 * std::abs(exact));
      }
    }
  }
}

TEST_CASE("evaluation is deterministic") {
  const BasisSpec spec = make_basis(SplineFamily::cubic_regression, {0, 1}, 6);
  const std::vector<double> p = linspace(0, 1, 37);
  CHECK(evaluate_basis(spec, p).values == evaluate_basis(spec, p).values);
}

}
