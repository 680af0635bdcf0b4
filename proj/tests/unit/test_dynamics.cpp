#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ferment/dynamics.hpp"
#include "ferment/graph.hpp"
#include "random.hpp"

using namespace ferment;

namespace {

Matrix random_substochastic(detail::Rng& rng, Index n, double row_sum) {
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) a(i, j) = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
    a(i, i) += 1e-3;
    a.row(i) *= row_sum / a.row(i).sum();
  }
  return a;
}

Vector random_vector(detail::Rng& rng, Index n, double lo, double hi) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * rng.uniform();
  return v;
}

Matrix karate_matrix() {
  GraphSpec spec;
  spec.family = GraphFamily::karate;
  spec.n = 34;
  return generate(spec).influence_matrix();
}

}  // namespace

TEST_CASE("step collapses for trivial models") {
  const InfluenceModel bare(Matrix::Zero(3, 3), Vector::Zero(3), {0, 2});
  Vector u(2);
  u << 0.3, -1.2;
  const Vector x = Vector::Constant(3, 5.0);
  const Vector next = step(bare, x, u);
  CHECK(next(0) == 0.3);
  CHECK(next(1) == 0.0);
  CHECK(next(2) == -1.2);

  Vector q(3);
  q << 0.1, 0.2, 0.3;
  const InfluenceModel quiet(Matrix::Zero(3, 3), q, {1});
  CHECK((step(quiet, x, Vector::Zero(1)) - q).norm() == 0.0);
}

TEST_CASE("karate step matches a naive multiply") {
  detail::Rng rng(3);
  const Matrix a = karate_matrix();
  const Vector q = random_vector(rng, 34, 0.0, 1.0);
  const InfluenceModel model(a, q, {0, 33});
  const Vector x = random_vector(rng, 34, -1.0, 1.0);
  const Vector next = step(model, x, Vector::Zero(2));
  for (Index i = 0; i < 34; ++i) {
    double expected = q(i);
    for (Index j = 0; j < 34; ++j) expected += a(i, j) * (x(j) - q(j));
    CHECK(std::abs(next(i) - expected) <= 1e-12);
  }
}

TEST_CASE("free evolution") {
  const Matrix a = karate_matrix();
  const InfluenceModel model(a, Vector::Zero(34), {});
  const Trajectory run = simulate_free(model, Vector::Constant(34, 0.5), 100);
  CHECK(run.states().col(100).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(run.cost() == 0.0);

  detail::Rng rng(11);
  const Vector q = random_vector(rng, 34, 0.0, 1.0);
  const InfluenceModel fixed(a, q, {3});
  const Trajectory still = simulate_free(fixed, q, 50);
  CHECK((still.states().colwise() - q).cwiseAbs().maxCoeff() <= 1e-15);

  const Vector x0 = random_vector(rng, 34, -2.0, 2.0);
  const Trajectory decay = simulate_free(fixed, x0, 200);
  const double start = (x0 - q).cwiseAbs().maxCoeff();
  for (Index t = 0; t <= 200; ++t) {
    CHECK((decay.state(t) - q).cwiseAbs().maxCoeff() <=
          std::pow(0.9, static_cast<double>(t)) * start * (1 + 1e-12) + 1e-15);
  }
}

TEST_CASE("trajectories satisfy their own recursion and superposition") {
  detail::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_substochastic(rng, 6, 0.9);
    const InfluenceModel model(a, random_vector(rng, 6, 0.0, 1.0), {1, 4});
    const Vector x0 = random_vector(rng, 6, 0.0, 1.0);
    Matrix u(2, 15), v(2, 15);
    for (Index t = 0; t < 15; ++t) {
      u.col(t) = random_vector(rng, 2, -1.0, 1.0);
      v.col(t) = random_vector(rng, 2, -1.0, 1.0);
    }
    const Trajectory base = simulate(model, x0, u);
    CHECK(base.max_step_defect(model) <= 1e-10);
    const Trajectory shifted = simulate(model, x0, u + v);
    const Trajectory from_zero = simulate(model, x0, v);
    const Trajectory free = simulate_free(model, x0, 15);
    const Matrix lhs = shifted.states() - base.states();
    const Matrix rhs = from_zero.states() - free.states();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("model validation") {
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = 1.0;
  CHECK_THROWS_AS(InfluenceModel(bad, Vector::Zero(2), {0}), ModelError);
  CHECK_THROWS_AS(InfluenceModel(Matrix::Zero(2, 2), -Vector::Ones(2), {0}), ModelError);
  CHECK_THROWS_AS(InfluenceModel(Matrix::Zero(2, 2), Vector::Zero(2), {0, 0}), ModelError);
  CHECK_THROWS_AS(InfluenceModel(Matrix::Zero(2, 2), Vector::Zero(2), {2}), ModelError);
  Matrix indefinite(1, 1);
  indefinite << -1.0;
  CHECK_THROWS_AS(InfluenceModel(Matrix::Zero(2, 2), Vector::Zero(2), {0}, indefinite),
                  ModelError);
  const InfluenceModel ok(Matrix::Zero(2, 2), Vector::Zero(2), {1});
  CHECK_THROWS_AS(step(ok, Vector::Zero(3), Vector::Zero(1)), ModelError);
  CHECK(ok.placement()(1, 0) == 1.0);
  CHECK(ok.placement()(0, 0) == 0.0);
}

TEST_CASE("spectral radius") {
  CHECK(spectral_radius(0.5 * Matrix::Identity(3, 3)) == doctest::Approx(0.5).epsilon(1e-12));
  detail::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_substochastic(rng, 5, 0.9);
    const double rho = spectral_radius(a);
    CHECK(rho <= 0.9 + 1e-12);
    const double oracle = Eigen::EigenSolver<Matrix>(a).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(std::abs(rho - oracle) <= 1e-8);
  }
  CHECK(spectral_radius(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("sigmoid aggregate") {
  const SigmoidAggregate psi{0.7, 3.0};
  CHECK(psi.value(Vector::Constant(8, 0.7)) == 4.0);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) == 0.0);
  detail::Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector y = random_vector(rng, 4, -1.0, 2.0);
    const Vector g = psi.gradient(y);
    for (Index i = 0; i < 4; ++i) {
      const double h = 1e-5;
      Vector up = y, down = y;
      up(i) += h;
      down(i) -= h;
      const double fd = (psi.value(up) - psi.value(down)) / (2 * h);
      CHECK(std::abs(fd - g(i)) <= 1e-6 * std::max(1.0, std::abs(g(i))));
    }
  }
}

TEST_CASE("trajectory csv") {
  const InfluenceModel model(Matrix::Zero(2, 2), Vector::Zero(2), {0});
  Matrix u(1, 2);
  u << 0.1, 0.2;
  const Trajectory run = simulate(model, Vector::Zero(2), u);
  std::ostringstream xs, us;
  write_state_csv(xs, run);
  write_control_csv(us, run);
  CHECK(xs.str().rfind("t,x0,x1\n0,0,0\n", 0) == 0);
  CHECK(us.str() == "t,u0\n0,0.10000000000000001\n1,0.20000000000000001\n");
}
