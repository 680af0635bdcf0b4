#include <doctest.h>

#include <cmath>
#include <functional>

#include "ferment/graph.hpp"
#include "ferment/ocp.hpp"
#include "oracles/active_set.hpp"
#include "random.hpp"

using namespace ferment;

namespace {

Matrix chain() {
  Matrix a = Matrix::Zero(2, 2);
  a(1, 0) = 0.5;
  return a;
}

std::vector<int> all_nodes(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

Matrix er_matrix(std::uint64_t seed, int n, double p) {
  GraphSpec spec;
  spec.family = GraphFamily::erdos_renyi;
  spec.n = n;
  spec.parameter = p;
  spec.seed = seed;
  return generate(spec).influence_matrix();
}

// Condensed reference: states eliminated, QP in the stacked controls.
double condensed_oracle_cost(const TfProblem& p) {
  const InfluenceModel& model = p.model;
  const Index n = model.num_nodes(), m = model.num_controls(), T = p.T;
  const Matrix b = model.placement();
  Matrix H = Matrix::Zero(m * T, m * T);
  for (Index t = 0; t < T; ++t) H.block(t * m, t * m, m, m) = 2.0 * model.cost_matrix();
  std::vector<Matrix> gains;
  Matrix rows(0, m * T);
  Vector rhs(0);
  Matrix g = Matrix::Zero(n, m * T);
  Vector drift = p.x0;
  for (Index t = 1; t <= T; ++t) {
    g = model.influence() * g;
    g.block(0, (t - 1) * m, n, m) = b;
    drift = model.influence() * drift + model.forcing();
    if (t >= p.T0) {
      Matrix r2(rows.rows() + n, m * T);
      r2 << rows, g;
      rows = r2;
      Vector v2(rhs.size() + n);
      v2 << rhs, p.tau - drift;
      rhs = v2;
    }
  }
  const auto res = oracle::active_set_qp(H, Vector::Zero(m * T), Matrix(0, m * T), Vector(0), rows, rhs);
  REQUIRE(res.has_value());
  return res->objective;
}

}  // namespace

TEST_CASE("memoryless total ferment") {
  for (int n : {1, 4, 9}) {
    TfProblem p{InfluenceModel(Matrix::Zero(n, n), Vector::Zero(n), all_nodes(n)), Vector::Zero(n),
                Vector::Constant(n, 0.7), 1, 3};
    const OcpSolution s = solve_tf(p);
    REQUIRE(s.status == OcpStatus::optimal);
    CHECK(std::abs(s.cost - 3 * 0.49 * n) <= 1e-8);
    CHECK((s.trajectory.controls().array() - 0.7).abs().maxCoeff() <= 1e-8);
    CHECK(certify_first_order(p, s).max() <= 1e-6);
    CHECK(s.stationarity_residual <= 1e-6);
  }
}

TEST_CASE("free dynamics already feasible") {
  const Vector tau = Vector::Constant(3, 0.7);
  TfProblem p{InfluenceModel(Matrix::Zero(3, 3), tau, {1}), Vector::Zero(3), tau, 1, 4};
  const OcpSolution s = solve_tf(p);
  REQUIRE(s.status == OcpStatus::optimal);
  CHECK(std::abs(s.cost) <= 1e-12);
  CHECK(s.trajectory.controls().cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("chain against the condensed active-set oracle") {
  for (const auto& controlled : {std::vector<int>{0}, std::vector<int>{0, 1}}) {
    TfProblem p{InfluenceModel(chain(), Vector::Zero(2), controlled), Vector::Constant(2, 0.5),
                Vector::Constant(2, 0.7), 2, 4};
    const OcpSolution s = solve_tf(p);
    REQUIRE(s.status == OcpStatus::optimal);
    CHECK(std::abs(s.cost - condensed_oracle_cost(p)) <= 1e-6);
    CHECK(certify_first_order(p, s).max() <= 1e-6);
  }
}

TEST_CASE("infeasible setups") {
  TfProblem sink{InfluenceModel(chain(), Vector::Zero(2), {1}), Vector::Zero(2), Vector::Constant(2, 0.7), 1, 3};
  CHECK_THROWS_AS(solve_tf(sink), InfeasibleProblem);
  // Node 0 reaches node 1 only after one hop, so x1(1) >= 0.7 is impossible.
  TfProblem early{InfluenceModel(chain(), Vector::Zero(2), {0}), Vector::Zero(2), Vector::Constant(2, 0.7), 1, 3};
  CHECK_THROWS_AS(solve_tf(early), InfeasibleProblem);
  TfProblem bad{InfluenceModel(chain(), Vector::Zero(2), {0}), Vector::Zero(2), Vector::Constant(2, 0.7), 0, 3};
  CHECK_THROWS_AS(solve_tf(bad), ModelError);
}

TEST_CASE("first-order certificate") {
  // Stationary instance: x0 = x_e, hold u_e; multipliers 2 u_e each step.
  const int n = 3;
  TfProblem p{InfluenceModel(Matrix::Zero(n, n), Vector::Zero(n), all_nodes(n)), Vector::Constant(n, 0.7),
              Vector::Constant(n, 0.7), 1, 5};
  Matrix controls = Matrix::Constant(n, 5, 0.7);
  OcpSolution held(simulate(p.model, p.x0, controls), 1);
  held.constraint_duals = Matrix::Constant(n, 5, 1.4);
  CHECK(certify_first_order(p, held).max() <= 1e-12);

  OcpSolution idle(simulate_free(p.model, Vector::Zero(n), 5), 1);
  idle.constraint_duals = Matrix::Zero(n, 5);
  CHECK(certify_first_order(p, idle).max() >= 0.5);

  held.constraint_duals(1, 2) = 0.0;
  CHECK(certify_first_order(p, held).stationarity >= 1.0);
}

TEST_CASE("random instances: certificate, bound, time shift") {
  detail::Rng rng(17);
  for (int trial = 0; trial < 4; ++trial) {
    const int n = 8;
    const Matrix a = er_matrix(50 + trial, n, 0.4);
    Vector q(n);
    for (Index i = 0; i < n; ++i) q(i) = 0.3 * rng.uniform();
    const InfluenceModel model(a, q, {0, 1, 2, 3, 4, 5, 6, 7});
    const Vector tau = Vector::Constant(n, 0.7);
    const EquilibriumPoint eq = tf_equilibrium(model, tau);

    TfProblem p{model, Vector::Constant(n, 0.5), tau, 3, 40};
    const OcpSolution s = solve_tf(p);
    REQUIRE(s.status == OcpStatus::optimal);
    CHECK(certify_first_order(p, s).max() <= 1e-6);
    CHECK(s.primal_residual <= 1e-6);
    CHECK(s.trajectory.max_step_defect(model) <= 1e-10);

    const CheapReachability bound = cheap_reachability(p, s, eq);
    REQUIRE(bound.checked);
    CHECK(bound.holds);
    CHECK(s.cost <= bound.tight_bound + 1e-6);

    TfProblem longer = p;
    longer.T = 41;
    const OcpSolution s2 = solve_tf(longer);
    CHECK(std::abs((s2.cost - s.cost) - eq.cost) <= 1e-5);

    const auto summary = summary_json(s, eq);
    CHECK(summary.at("status") == "optimal");
    CHECK(summary.at("cheap_reachability_gap").get<double>() == doctest::Approx(s.cost - 40 * eq.cost));
  }
}

TEST_CASE("steering cost") {
  const InfluenceModel model(Matrix::Zero(2, 2), Vector::Zero(2), {0, 1});
  const auto one = steering_cost(model, Vector::Zero(2), Vector::Constant(2, 0.5), 1);
  REQUIRE(one.has_value());
  CHECK(*one == doctest::Approx(0.5));
  // Two steps: only the last control matters for A = 0.
  CHECK(*steering_cost(model, Vector::Zero(2), Vector::Constant(2, 0.5), 2) == doctest::Approx(0.5));
  const InfluenceModel half(Matrix::Zero(2, 2), Vector::Zero(2), {0});
  CHECK_FALSE(steering_cost(half, Vector::Zero(2), Vector::Constant(2, 0.5), 3).has_value());
  // Chain: node 1 is reached through node 0 after two steps.
  const InfluenceModel c(chain(), Vector::Zero(2), {0});
  CHECK_FALSE(steering_cost(c, Vector::Zero(2), Vector::Constant(2, 0.5), 1).has_value());
  CHECK(steering_cost(c, Vector::Zero(2), Vector::Constant(2, 0.5), 2).has_value());
}

TEST_CASE("group ferment against total ferment") {
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 6;
    const Matrix a = er_matrix(200 + trial, n, 0.5);
    const InfluenceModel model(a, Vector::Zero(n), {0, 2, 4});
    const Vector tau = Vector::Constant(n, 0.7);
    if (!feasibility_check(model, tau).feasible) continue;
    TfProblem tf{model, Vector::Constant(n, 0.5), tau, 3, 12};
    GfProblem gf{model, Vector::Constant(n, 0.5), SigmoidAggregate{0.7, 2.0}, 0.5, 3, 12};
    const OcpSolution st = solve_tf(tf);
    const OcpSolution sg = solve_gf(gf);
    REQUIRE(sg.status == OcpStatus::optimal);
    CHECK(sg.cost <= st.cost + 1e-6);
    const FirstOrderReport cert = certify_first_order(gf, sg);
    CHECK(cert.primal <= 1e-6);
    CHECK(cert.stationarity <= 1e-5);
  }
}

TEST_CASE("group ferment against a zooming grid") {
  const SigmoidAggregate psi{0.7, 2.0};
  const InfluenceModel model(chain(), Vector::Zero(2), {0});
  GfProblem p{model, Vector::Zero(2), psi, 0.5, 1, 3};
  const OcpSolution s = solve_gf(p);
  REQUIRE(s.status == OcpStatus::optimal);

  auto feasible_cost = [&](const Vector& u) {
    Matrix controls(1, 3);
    controls << u(0), u(1), u(2);
    const Trajectory run = simulate(model, p.x0, controls);
    for (Index t = 1; t <= 3; ++t)
      if (psi.value(run.state(t)) < 1.0) return 1e300;
    return run.cost();
  };
  Vector center = Vector::Constant(3, 1.5);
  double half = 1.5, best = 1e300;
  Vector best_u = center;
  for (int round = 0; round < 6; ++round) {
    const int points = round == 0 ? 50 : 21;
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j)
        for (int k = 0; k < points; ++k) {
          Vector u(3);
          u << center(0) - half + 2 * half * i / (points - 1), center(1) - half + 2 * half * j / (points - 1),
              center(2) - half + 2 * half * k / (points - 1);
          const double c = feasible_cost(u);
          if (c < best) {
            best = c;
            best_u = u;
          }
        }
    center = best_u;
    half *= 0.2;
  }
  CHECK(s.cost <= best + 1e-6);
  CHECK(std::abs(s.cost - best) <= 1e-2);
}

TEST_CASE("gf gradient self-test") {
  // The adjoint vector-Jacobian product of the condensed program against
  // finite differences, through the public solve path's building blocks.
  const SigmoidAggregate psi{0.7, 3.0};
  const Matrix a = er_matrix(5, 5, 0.6);
  const InfluenceModel model(a, Vector::Zero(5), {0, 3});
  const Index T = 6, T0 = 2, m = 2;
  SmoothNlp nlp;
  nlp.num_variables = m * T;
  nlp.num_inequalities = T - T0 + 1;
  auto states = [&](const Vector& z) {
    Matrix controls = Eigen::Map<const Matrix>(z.data(), m, T);
    return simulate(model, Vector::Constant(5, 0.5), controls).states();
  };
  nlp.objective = [](const Vector& z, Vector& g) {
    g = 2.0 * z;
    return z.squaredNorm();
  };
  nlp.constraints = [&](const Vector& z) {
    const Matrix x = states(z);
    Vector c(T - T0 + 1);
    for (Index t = T0; t <= T; ++t) c(t - T0) = psi.value(x.col(t)) - 2.5;
    return c;
  };
  // Brute-force Jacobian-transpose product, one column at a time.
  nlp.constraint_vjp = [&](const Vector& z, const Vector& w) {
    const Matrix x = states(z);
    Vector grad = Vector::Zero(z.size());
    for (Index s = T0; s <= T; ++s) {
      Vector sens = w(s - T0) * psi.gradient(x.col(s));
      for (Index t = s; t >= 1; --t) {
        grad.segment((t - 1) * m, m) += model.restrict(sens);
        sens = a.transpose() * sens;
      }
    }
    return grad;
  };
  Vector z(m * T);
  for (Index i = 0; i < z.size(); ++i) z(i) = 0.1 * static_cast<double>(i % 5);
  CHECK(check_gradients(nlp, z, 3, 16).max() <= 1e-6);
}
