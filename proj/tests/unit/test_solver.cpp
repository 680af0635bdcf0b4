#include <doctest.h>

#include <cmath>

#include "ferment/dynamics.hpp"
#include "ferment/nlp.hpp"
#include "ferment/qp.hpp"
#include "oracles/active_set.hpp"
#include "random.hpp"

using namespace ferment;

namespace {

Matrix random_matrix(detail::Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = 2.0 * rng.uniform() - 1.0;
  return m;
}

Vector random_vector(detail::Rng& rng, Index n) { return random_matrix(rng, n, 1); }

Matrix none(Index cols) { return Matrix(0, cols); }

void check_kkt(const QuadraticProgram& p, const QpSolution& s, double tol) {
  const KktResiduals r = kkt_residuals(p, s.z, s.eq_duals, s.in_duals);
  CHECK(r.primal <= tol);
  CHECK(r.dual <= tol);
  CHECK(r.complementarity <= tol);
  CHECK(r.dual_sign <= tol);
}

// Wraps a QP as a SmoothNlp.
SmoothNlp as_nlp(const Matrix& H, const Vector& f, const Matrix& Ae, const Vector& be,
                 const Matrix& Ai, const Vector& bi) {
  SmoothNlp p;
  p.num_variables = f.size();
  p.num_equalities = Ae.rows();
  p.num_inequalities = Ai.rows();
  p.objective = [=](const Vector& z, Vector& g) {
    g = H * z + f;
    return 0.5 * z.dot(H * z) + f.dot(z);
  };
  p.constraints = [=](const Vector& z) {
    Vector c(Ae.rows() + Ai.rows());
    c << Ae * z - be, Ai * z - bi;
    return c;
  };
  p.constraint_vjp = [=](const Vector&, const Vector& w) {
    return Vector(Ae.transpose() * w.head(Ae.rows()) + Ai.transpose() * w.tail(Ai.rows()));
  };
  return p;
}

}  // namespace

TEST_CASE("one-dimensional bound") {
  Matrix H(1, 1), Ai(1, 1);
  H << 2.0;
  Ai << 1.0;
  const auto p = QuadraticProgram::dense(H, Vector::Zero(1), none(1), Vector(0), Ai,
                                         Vector::Constant(1, 0.7));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(std::abs(s.z(0) - 0.7) <= 1e-8);
  CHECK(std::abs(s.in_duals(0) - 1.4) <= 1e-8);
  check_kkt(p, s, 1e-8);
}

TEST_CASE("symmetric equality") {
  Matrix Ae(1, 2);
  Ae << 1.0, 1.0;
  const auto p = QuadraticProgram::dense(2.0 * Matrix::Identity(2, 2), Vector::Zero(2), Ae,
                                         Vector::Ones(1), none(2), Vector(0));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(std::abs(s.z(0) - 0.5) <= 1e-8);
  CHECK(std::abs(s.z(1) - 0.5) <= 1e-8);
  CHECK(std::abs(s.eq_duals(0) - 1.0) <= 1e-8);
}

TEST_CASE("unconstrained quadratic") {
  detail::Rng rng(4);
  const Matrix g = random_matrix(rng, 5, 5);
  const Matrix H = g * g.transpose() + Matrix::Identity(5, 5);
  const Vector f = random_vector(rng, 5);
  const auto p = QuadraticProgram::dense(H, f, none(5), Vector(0), none(5), Vector(0));
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK((s.z + H.ldlt().solve(f)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("random QPs agree with the active-set oracle") {
  detail::Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Matrix g = random_matrix(rng, 10, 10);
    const Matrix H = g * g.transpose() + 0.1 * Matrix::Identity(10, 10);
    const Vector f = random_vector(rng, 10);
    const Index me = trial % 3;
    const Matrix Ae = random_matrix(rng, me, 10);
    const Vector be = random_vector(rng, me);
    const Matrix Ai = random_matrix(rng, 6, 10);
    const Vector bi = random_vector(rng, 6);
    const auto reference = oracle::active_set_qp(H, f, Ae, be, Ai, bi);
    const auto p = QuadraticProgram::dense(H, f, Ae, be, Ai, bi);
    const QpSolution s = solve_qp(p);
    REQUIRE(reference.has_value());
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.z - reference->z).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((s.in_duals - reference->in_duals).cwiseAbs().maxCoeff() <= 1e-6);
    check_kkt(p, s, 1e-8);
    ++compared;
  }
  CHECK(compared == 40);
}

TEST_CASE("scaling the objective leaves the minimizer unchanged") {
  detail::Rng rng(77);
  const Matrix g = random_matrix(rng, 6, 6);
  const Matrix H = g * g.transpose() + 0.5 * Matrix::Identity(6, 6);
  const Vector f = random_vector(rng, 6);
  const Matrix Ai = random_matrix(rng, 4, 6);
  const Vector bi = random_vector(rng, 4);
  const auto base = QuadraticProgram::dense(H, f, none(6), Vector(0), Ai, bi);
  const QpSolution s = solve_qp(base);
  for (double alpha : {0.01, 3.0, 250.0}) {
    const auto scaled = QuadraticProgram::dense(alpha * H, alpha * f, none(6), Vector(0), Ai, bi);
    const QpSolution t = solve_qp(scaled);
    REQUIRE(t.status == QpStatus::optimal);
    CHECK((t.z - s.z).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(t.objective(scaled) - alpha * s.objective(base)) <=
          1e-6 * std::max(1.0, std::abs(alpha * s.objective(base))));
  }
}

TEST_CASE("infeasibility is certified") {
  Matrix Ai(2, 1);
  Ai << 1.0, -1.0;
  Vector bi(2);
  bi << 1.0, 0.0;  // z >= 1 and z <= 0
  const auto p = QuadraticProgram::dense(Matrix::Identity(1, 1), Vector::Zero(1), none(1),
                                         Vector(0), Ai, bi);
  CHECK(solve_qp(p).status == QpStatus::infeasible);

  // A zero row that demands a positive value.
  Matrix Zi = Matrix::Zero(2, 2);
  Zi(0, 0) = 1.0;
  Vector zb(2);
  zb << 0.5, 0.7;
  const auto q = QuadraticProgram::dense(Matrix::Identity(2, 2), Vector::Zero(2), none(2),
                                         Vector(0), Zi, zb);
  CHECK(solve_qp(q).status == QpStatus::infeasible);
}

TEST_CASE("warm start reaches the same answer") {
  detail::Rng rng(8);
  const Matrix g = random_matrix(rng, 8, 8);
  const Matrix H = g * g.transpose() + Matrix::Identity(8, 8);
  const auto p = QuadraticProgram::dense(H, random_vector(rng, 8), none(8), Vector(0),
                                         random_matrix(rng, 5, 8), random_vector(rng, 5));
  const QpSolution cold = solve_qp(p);
  const QpSolution warm = solve_qp(p, {}, cold.z);
  REQUIRE(warm.status == QpStatus::optimal);
  CHECK((warm.z - cold.z).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("validation rejects bad programs") {
  QuadraticProgram p = QuadraticProgram::dense(Matrix::Identity(2, 2), Vector::Zero(2), none(2),
                                               Vector(0), none(2), Vector(0));
  p.H.coeffRef(0, 1) = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  QuadraticProgram q = QuadraticProgram::dense(Matrix::Identity(2, 2), Vector::Zero(3), none(2),
                                               Vector(0), none(2), Vector(0));
  CHECK_THROWS_AS(solve_qp(q), std::invalid_argument);
}

TEST_CASE("NLP reproduces QP answers") {
  detail::Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix g = random_matrix(rng, 6, 6);
    const Matrix H = g * g.transpose() + 0.5 * Matrix::Identity(6, 6);
    const Vector f = random_vector(rng, 6);
    const Matrix Ae = random_matrix(rng, 1, 6);
    const Vector be = random_vector(rng, 1);
    const Matrix Ai = random_matrix(rng, 4, 6);
    const Vector bi = random_vector(rng, 4);
    const QpSolution qp = solve_qp(QuadraticProgram::dense(H, f, Ae, be, Ai, bi));
    REQUIRE(qp.status == QpStatus::optimal);
    const NlpSolution nlp = solve_nlp(as_nlp(H, f, Ae, be, Ai, bi), Vector::Zero(6));
    REQUIRE(nlp.status == NlpStatus::optimal);
    CHECK((nlp.z - qp.z).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(nlp.stationarity_residual <= 1e-6);
    CHECK(nlp.constraint_violation <= 1e-6);
  }
}

TEST_CASE("NLP unconstrained quadratic") {
  detail::Rng rng(5);
  const Matrix g = random_matrix(rng, 7, 7);
  const Matrix H = g * g.transpose() + Matrix::Identity(7, 7);
  const Vector f = random_vector(rng, 7);
  const NlpSolution s =
      solve_nlp(as_nlp(H, f, none(7), Vector(0), none(7), Vector(0)), Vector::Zero(7));
  REQUIRE(s.status == NlpStatus::optimal);
  CHECK((s.z + H.ldlt().solve(f)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("NLP sigmoid constraint at its midpoint") {
  const SigmoidAggregate psi{0.7, 1.0};
  SmoothNlp p;
  p.num_variables = 1;
  p.num_inequalities = 1;
  p.objective = [](const Vector& z, Vector& g) {
    g = 2.0 * z;
    return z.squaredNorm();
  };
  p.constraints = [&](const Vector& z) { return Vector::Constant(1, psi.value(z) - 0.5); };
  p.constraint_vjp = [&](const Vector& z, const Vector& w) {
    return Vector(psi.gradient(z) * w(0));
  };
  const NlpSolution s = solve_nlp(p, Vector::Zero(1));
  REQUIRE(s.status == NlpStatus::optimal);
  CHECK(std::abs(s.z(0) - 0.7) <= 1e-6);
  CHECK(check_gradients(p, Vector::Constant(1, 0.3), 1).max() <= 1e-5);
}

TEST_CASE("gradient check catches a wrong gradient") {
  SmoothNlp p = as_nlp(Matrix::Identity(3, 3), Vector::Ones(3), none(3), Vector(0),
                       Matrix::Identity(1, 3), Vector::Zero(1));
  CHECK(check_gradients(p, Vector::Constant(3, 0.2), 1).max() <= 1e-5);
  p.objective = [](const Vector& z, Vector& g) {
    g = 3.0 * z;
    return 0.5 * z.squaredNorm();
  };
  CHECK(check_gradients(p, Vector::Constant(3, 0.2), 1).objective_error > 1e-3);
}
