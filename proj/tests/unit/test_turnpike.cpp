#include <doctest.h>

#include <sstream>

#include <Eigen/Eigenvalues>

#include "ferment/graph.hpp"
#include "ferment/turnpike.hpp"
#include "random.hpp"

using namespace ferment;

namespace {

Matrix random_substochastic(detail::Rng& rng, int n) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.uniform() < 0.4 ? rng.uniform() : 0.0;
    const double s = a.row(i).sum();
    if (s > 0.0) a.row(i) *= 0.9 * rng.uniform() / s;
  }
  return a;
}

// vec(P) from (I - Aᵀ ⊗ Aᵀ) vec(P) = vec(I).
Matrix kronecker_lyapunov(const Matrix& a) {
  const Index n = a.rows();
  Matrix k = Matrix::Identity(n * n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index p = 0; p < n; ++p)
        for (Index q = 0; q < n; ++q) k(i * n + p, j * n + q) -= a(j, i) * a(q, p);
  const Vector rhs = Matrix::Identity(n, n).reshaped();
  const Vector sol = k.fullPivLu().solve(rhs);
  return sol.reshaped(n, n);
}

}  // namespace

TEST_CASE("zero influence gives the identity storage") {
  const DissipativityCertificate cert = dissipativity_certificate(Matrix::Zero(3, 3));
  CHECK(cert.rho == 0.0);
  CHECK((cert.P - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK(cert.min_eig_gap == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("scaled identity gives the geometric series") {
  const DissipativityCertificate cert = dissipativity_certificate(0.9 * Matrix::Identity(2, 2));
  CHECK(cert.rho == doctest::Approx(0.9).epsilon(1e-14));
  CHECK((cert.P - Matrix::Identity(2, 2) / 0.19).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(cert.min_eig_gap == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("identity storage fails on a nonsymmetric matrix while the Lyapunov one holds") {
  Matrix a(2, 2);
  a << 0.45, 0.45, 0.9, 0.0;
  const Matrix plain = Matrix::Identity(2, 2) - a.transpose() * a;
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(plain).eigenvalues().minCoeff() < 0.0);

  const DissipativityCertificate cert = dissipativity_certificate(a);
  CHECK(cert.identity_gap < 0.0);
  CHECK(cert.rho < 1.0);
  CHECK(cert.min_eig_gap >= 1.0 - 1e-9);
  CHECK((cert.P - kronecker_lyapunov(a)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("certificates on random substochastic matrices") {
  detail::Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_substochastic(rng, 2 + trial % 5);
    const DissipativityCertificate cert = dissipativity_certificate(a);
    CHECK(cert.rho <= a.rowwise().sum().maxCoeff() + 1e-12);
    CHECK(cert.min_eig_gap >= 1.0 - 1e-9);
    CHECK((cert.P - kronecker_lyapunov(a)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("certificate rejects matrices outside the model class") {
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 1) = -0.1;
  CHECK_THROWS_AS(dissipativity_certificate(neg), ModelError);
  CHECK_THROWS_AS(dissipativity_certificate(Matrix::Identity(2, 2)), ModelError);
}

TEST_CASE("trajectory held at the equilibrium never leaves the turnpike") {
  Matrix a = Matrix::Zero(2, 2);
  a(1, 0) = 0.5;
  InfluenceModel model(a, Vector::Zero(2), {0});
  const EquilibriumPoint eq = tf_equilibrium(model, Vector::Constant(2, 0.7));
  const int T = 20;
  const Trajectory held = simulate(model, eq.x_e, eq.u_e.replicate(1, T));
  OcpSolution sol(held, 5);
  sol.status = OcpStatus::optimal;
  sol.cost = held.cost();

  const TurnpikeReport report = turnpike_report(sol, eq, 0.01);
  CHECK(report.exceedance_count == 0);
  CHECK(report.distances.size() == static_cast<std::size_t>(T - 5 + 1));
  for (double d : report.distances) CHECK(d <= 1e-12);
  CHECK(report.cheap_gap == doctest::Approx(0.0).epsilon(1e-9));

  std::ostringstream csv;
  write_distance_csv(csv, report);
  CHECK(csv.str().rfind("t,distance\n5,", 0) == 0);
}

TEST_CASE("turnpike report on a solved instance") {
  GraphSpec spec;
  spec.family = GraphFamily::erdos_renyi;
  spec.n = 12;
  spec.parameter = 0.4;
  spec.seed = 8;
  const Matrix a = generate(spec).influence_matrix();
  InfluenceModel model(a, Vector::Zero(12), {0, 3, 7});
  TfProblem p{model, Vector::Constant(12, 0.5), Vector::Constant(12, 0.7), 5, 40};
  const OcpSolution sol = solve_tf(p);
  const EquilibriumPoint eq = tf_equilibrium(model, p.tau);
  const TurnpikeReport report = turnpike_report(sol, eq, 0.01);
  CHECK(report.exceedance_count <= 40 - 5 + 1);
  CHECK(report.exceedance_count < 20);
  CHECK(report.cheap_gap == doctest::Approx(sol.cost - 40 * eq.cost));
  for (double d : report.distances) CHECK(d >= 0.0);

  OcpSolution failed = sol;
  failed.status = OcpStatus::iteration_limit;
  CHECK_THROWS_AS(turnpike_report(failed, eq, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(turnpike_report(sol, eq, 0.0), std::invalid_argument);
}
