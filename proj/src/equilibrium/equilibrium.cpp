#include "ferment/equilibrium.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace ferment {

namespace {

Matrix controlled_columns(const Matrix& m, const std::vector<int>& controlled) {
  Matrix out(m.rows(), static_cast<Index>(controlled.size()));
  for (std::size_t k = 0; k < controlled.size(); ++k) out.col(static_cast<Index>(k)) = m.col(controlled[k]);
  return out;
}

std::string describe_rows(const std::vector<int>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size() && i < 10; ++i) out << (i ? ", " : "") << rows[i];
  if (rows.size() > 10) out << ", ...";
  return out.str();
}

}  // namespace

nlohmann::json to_json(const EquilibriumPoint& eq) {
  return {{"x_e", std::vector<double>(eq.x_e.data(), eq.x_e.data() + eq.x_e.size())},
          {"u_e", std::vector<double>(eq.u_e.data(), eq.u_e.data() + eq.u_e.size())},
          {"cost", eq.cost},
          {"controlled", eq.controlled}};
}

Matrix substochastic_inverse(const Matrix& influence) {
  const Index n = influence.rows();
  return (Matrix::Identity(n, n) - influence).partialPivLu().inverse();
}

FeasibilityReport feasibility_check(const Matrix& influence, const std::vector<int>& controlled,
                                    const Vector& quiescent, const Vector& tau) {
  const Index n = influence.rows();
  std::vector<char> reached(static_cast<std::size_t>(n), 0);
  std::deque<Index> frontier;
  for (int k : controlled) {
    if (!reached[k]) {
      reached[k] = 1;
      frontier.push_back(k);
    }
  }
  while (!frontier.empty()) {
    const Index j = frontier.front();
    frontier.pop_front();
    for (Index i = 0; i < n; ++i) {
      if (!reached[i] && influence(i, j) > 0.0) {
        reached[i] = 1;
        frontier.push_back(i);
      }
    }
  }
  FeasibilityReport report;
  for (Index i = 0; i < n; ++i) {
    if (tau(i) > quiescent(i) && !reached[i]) report.unreachable_rows.push_back(static_cast<int>(i));
  }
  report.feasible = report.unreachable_rows.empty();
  return report;
}

FeasibilityReport feasibility_check(const InfluenceModel& model, const Vector& tau) {
  return feasibility_check(model.influence(), model.controlled(), model.quiescent(), tau);
}

EquilibriumPoint tf_equilibrium(const InfluenceModel& model, const Vector& tau,
                                const QpSettings& settings, const std::optional<Vector>& warm_start) {
  const Index n = model.num_nodes();
  if (tau.size() != n) throw ModelError("threshold vector has the wrong length");
  const FeasibilityReport report = feasibility_check(model, tau);
  if (!report.feasible) {
    throw InfeasibleProblem("no controlled node reaches rows " + describe_rows(report.unreachable_rows),
                            report.unreachable_rows);
  }
  const Matrix gain = controlled_columns(substochastic_inverse(model.influence()), model.controlled());
  const Index m = model.num_controls();

  EquilibriumPoint eq;
  eq.controlled = model.controlled();
  if (m == 0) {
    eq.u_e = Vector(0);
    eq.x_e = model.quiescent();
    return eq;
  }
  const QuadraticProgram qp = QuadraticProgram::dense(2.0 * model.cost_matrix(), Vector::Zero(m),
                                                      Matrix(0, m), Vector(0), gain,
                                                      tau - model.quiescent());
  const QpSolution sol = solve_qp(qp, settings, warm_start);
  if (sol.status == QpStatus::infeasible) throw InfeasibleProblem("equilibrium QP certified infeasible");
  if (sol.status != QpStatus::optimal) {
    throw SolverFailure("equilibrium QP stopped at " + to_string(sol.status) + " (primal " +
                        std::to_string(sol.primal_residual) + ", dual " +
                        std::to_string(sol.dual_residual) + ")");
  }
  eq.u_e = sol.z;
  eq.x_e = gain * sol.z + model.quiescent();
  eq.cost = model.control_cost(eq.u_e);
  return eq;
}

EquilibriumPoint gf_equilibrium(const InfluenceModel& model, const SigmoidAggregate& psi, double k,
                                const NlpSettings& settings) {
  if (!(k > 0.0 && k < 1.0)) throw ModelError("group fraction k must lie in (0, 1)");
  if (!(psi.slope > 0.0)) throw ModelError("sigmoid slope must be positive");
  const Index n = model.num_nodes();
  const Index m = model.num_controls();
  const double level = k * static_cast<double>(n);
  const Matrix gain = controlled_columns(substochastic_inverse(model.influence()), model.controlled());
  const Vector q = model.quiescent();
  const Matrix r2 = 2.0 * model.cost_matrix();

  EquilibriumPoint eq;
  eq.controlled = model.controlled();
  if (psi.value(q) >= level) {
    eq.u_e = Vector::Zero(m);
    eq.x_e = q;
    return eq;
  }
  if (m == 0) throw InfeasibleProblem("no controlled nodes and the group level is not met freely");

  SmoothNlp p;
  p.num_variables = m;
  p.num_inequalities = 1;
  p.objective = [&](const Vector& u, Vector& g) {
    g = r2 * u;
    return 0.5 * u.dot(g);
  };
  p.constraints = [&](const Vector& u) { return Vector::Constant(1, psi.value(gain * u + q) - level); };
  p.constraint_vjp = [&](const Vector& u, const Vector& w) {
    return Vector(gain.transpose() * psi.gradient(gain * u + q) * w(0));
  };
  const NlpSolution sol = solve_nlp(p, Vector::Zero(m), settings);
  if (sol.status != NlpStatus::optimal) {
    throw SolverFailure("group equilibrium NLP stopped at " + to_string(sol.status) +
                        " (stationarity " + std::to_string(sol.stationarity_residual) +
                        ", violation " + std::to_string(sol.constraint_violation) + ")");
  }

  Vector u = sol.z;
  auto margin = [&](const Vector& v) { return psi.value(gain * v + q) - level; };
  if (margin(u) < 0.0) {
    const Vector d = gain.transpose() * psi.gradient(gain * u + q);
    double lo = 0.0, hi = 1e-12;
    while (margin(u + hi * d) < 0.0 && hi < 1e6) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
      const double mid = 0.5 * (lo + hi);
      (margin(u + mid * d) < 0.0 ? lo : hi) = mid;
    }
    u += hi * d;
  }
  eq.u_e = u;
  eq.x_e = gain * u + q;
  eq.cost = model.control_cost(u);
  return eq;
}

RelaxationResult convex_relaxation(const Matrix& influence, const Vector& quiescent,
                                   const Vector& tau, double mu, const QpSettings& settings) {
  if (!(mu >= 0.0)) throw ModelError("relaxation weight must be nonnegative");
  const Index n = influence.rows();
  if (quiescent.size() != n || tau.size() != n) throw ModelError("relaxation vectors have the wrong length");
  const Matrix gain = substochastic_inverse(influence);
  // (I - A)⁻¹ is entrywise nonnegative, so clipping negative entries of a
  // feasible u keeps it feasible and lowers both cost terms: the optimum is
  // nonnegative and |u|₁ = 1ᵀu there.
  Matrix constraints(2 * n, n);
  constraints << gain, Matrix::Identity(n, n);
  Vector bounds(2 * n);
  bounds << tau - quiescent, Vector::Zero(n);
  const QuadraticProgram qp = QuadraticProgram::dense(2.0 * Matrix::Identity(n, n),
                                                      Vector::Constant(n, mu), Matrix(0, n),
                                                      Vector(0), constraints, bounds);
  const QpSolution sol = solve_qp(qp, settings);
  if (sol.status == QpStatus::infeasible) throw InfeasibleProblem("relaxation QP certified infeasible");
  if (sol.status != QpStatus::optimal) {
    throw SolverFailure("relaxation QP stopped at " + to_string(sol.status));
  }
  RelaxationResult result;
  result.mu = mu;
  result.u_tilde = sol.z;
  result.x_e = gain * sol.z + quiescent;
  const double scale = sol.z.cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i) {
    if (scale > 0.0 && std::abs(sol.z(i)) > 1e-6 * scale) result.support.push_back(static_cast<int>(i));
  }
  return result;
}

}  // namespace ferment
