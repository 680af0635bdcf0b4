#include "ferment/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ferment {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void check_horizon(int T0, int T) {
  if (T < 1) throw ModelError("horizon T must be at least 1");
  if (T0 < 1 || T0 > T) throw ModelError("setup time must satisfy 0 < T0 <= T");
}

double positive_part_max(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseMax(0.0).maxCoeff(); }

}  // namespace

void TfProblem::validate() const {
  check_horizon(T0, T);
  if (x0.size() != model.num_nodes()) throw ModelError("initial state has the wrong length");
  if (tau.size() != model.num_nodes()) throw ModelError("threshold vector has the wrong length");
}

void GfProblem::validate() const {
  check_horizon(T0, T);
  if (x0.size() != model.num_nodes()) throw ModelError("initial state has the wrong length");
  if (!(k > 0.0 && k < 1.0)) throw ModelError("group fraction k must lie in (0, 1)");
  if (!(psi.slope > 0.0)) throw ModelError("sigmoid slope must be positive");
}

std::string to_string(OcpStatus status) {
  switch (status) {
    case OcpStatus::optimal: return "optimal";
    case OcpStatus::infeasible: return "infeasible";
    case OcpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

double FirstOrderReport::max() const {
  return std::max({stationarity, primal, complementarity, dual_sign});
}

OcpSolution solve_tf(const TfProblem& p, const QpSettings& settings,
                     const std::optional<Vector>& warm_start) {
  p.validate();
  const FeasibilityReport reach = feasibility_check(p.model, p.tau);
  if (!reach.feasible) {
    throw InfeasibleProblem("some thresholded rows are not reachable from the controlled nodes",
                            reach.unreachable_rows);
  }
  const InfluenceModel& model = p.model;
  const Index n = model.num_nodes();
  const Index m = model.num_controls();
  const Index T = p.T;
  const Index block = m + n;
  const Index nv = T * block;
  const Index constrained = T - p.T0 + 1;
  auto u_at = [&](Index t) { return t * block; };
  auto x_at = [&](Index t) { return (t - 1) * block + m; };

  const Matrix& a = model.influence();
  const Matrix& r = model.cost_matrix();
  Triplets h, eq, in;
  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j)
        if (r(i, j) != 0.0) h.emplace_back(u_at(t) + i, u_at(t) + j, 2.0 * r(i, j));
  }
  Vector b_eq(T * n);
  for (Index t = 0; t < T; ++t) {
    const Index row = t * n;
    for (Index i = 0; i < n; ++i) eq.emplace_back(row + i, x_at(t + 1) + i, 1.0);
    if (t > 0) {
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          if (a(i, j) != 0.0) eq.emplace_back(row + i, x_at(t) + j, -a(i, j));
    }
    for (Index k = 0; k < m; ++k) eq.emplace_back(row + model.controlled()[k], u_at(t) + k, -1.0);
    b_eq.segment(row, n) = model.forcing();
  }
  b_eq.head(n) += a * p.x0;
  Vector b_in(constrained * n);
  for (Index s = 0; s < constrained; ++s) {
    for (Index i = 0; i < n; ++i) in.emplace_back(s * n + i, x_at(p.T0 + s) + i, 1.0);
    b_in.segment(s * n, n) = p.tau;
  }

  QuadraticProgram qp;
  qp.H.resize(nv, nv);
  qp.H.setFromTriplets(h.begin(), h.end());
  qp.f = Vector::Zero(nv);
  qp.A_eq.resize(T * n, nv);
  qp.A_eq.setFromTriplets(eq.begin(), eq.end());
  qp.b_eq = b_eq;
  qp.A_in.resize(constrained * n, nv);
  qp.A_in.setFromTriplets(in.begin(), in.end());
  qp.b_in = b_in;

  const QpSolution sol = solve_qp(qp, settings, warm_start);
  if (sol.status == QpStatus::infeasible) {
    throw InfeasibleProblem("the transcribed program is infeasible; the setup time T0 may be "
                            "too short for the controlled nodes to reach every row");
  }
  Matrix controls(m, T);
  for (Index t = 0; t < T; ++t) controls.col(t) = sol.z.segment(u_at(t), m);

  OcpSolution out(simulate(model, p.x0, controls), p.T0);
  out.cost = out.trajectory.cost();
  out.constraint_duals = Eigen::Map<const Matrix>(sol.in_duals.data(), n, constrained);
  out.stationarity_residual = sol.dual_residual;
  out.complementarity_residual = sol.complementarity_residual;
  double violation = sol.primal_residual;
  for (Index t = p.T0; t <= T; ++t) {
    violation = std::max(violation, positive_part_max(p.tau - out.trajectory.states().col(t)));
  }
  out.primal_residual = violation;
  out.iterations = sol.iterations;
  out.status = sol.status == QpStatus::optimal ? OcpStatus::optimal : OcpStatus::iteration_limit;
  return out;
}

OcpSolution solve_gf(const GfProblem& p, const NlpSettings& settings,
                     const std::optional<Matrix>& initial_controls) {
  p.validate();
  const InfluenceModel& model = p.model;
  const Index n = model.num_nodes();
  const Index m = model.num_controls();
  const Index T = p.T;
  const Index constrained = T - p.T0 + 1;
  const double level = p.k * static_cast<double>(n);
  const Matrix a_t = model.influence().transpose();

  auto states_of = [&](const Vector& z) {
    Matrix x(n, T + 1);
    x.col(0) = p.x0;
    for (Index t = 0; t < T; ++t) {
      x.col(t + 1) = model.influence() * x.col(t) + model.actuate(z.segment(t * m, m)) + model.forcing();
    }
    return x;
  };

  Matrix start;
  if (initial_controls) {
    if (initial_controls->rows() != m || initial_controls->cols() != T) {
      throw ModelError("initial controls must be m x T");
    }
    start = *initial_controls;
  } else {
    const EquilibriumPoint eq = gf_equilibrium(model, p.psi, p.k, settings);
    start = eq.u_e.replicate(1, T);
  }

  SmoothNlp nlp;
  nlp.num_variables = m * T;
  nlp.num_inequalities = constrained;
  nlp.objective = [&](const Vector& z, Vector& g) {
    g.resize(z.size());
    double cost = 0.0;
    for (Index t = 0; t < T; ++t) {
      const Vector ru = model.cost_matrix() * z.segment(t * m, m);
      g.segment(t * m, m) = 2.0 * ru;
      cost += z.segment(t * m, m).dot(ru);
    }
    return cost;
  };
  nlp.constraints = [&](const Vector& z) {
    const Matrix x = states_of(z);
    Vector c(constrained);
    for (Index s = 0; s < constrained; ++s) c(s) = p.psi.value(x.col(p.T0 + s)) - level;
    return c;
  };
  nlp.constraint_vjp = [&](const Vector& z, const Vector& w) {
    const Matrix x = states_of(z);
    Vector grad(z.size());
    Vector adjoint = Vector::Zero(n);
    for (Index t = T; t >= 1; --t) {
      adjoint = a_t * adjoint;
      if (t >= p.T0) adjoint += w(t - p.T0) * p.psi.gradient(x.col(t));
      grad.segment((t - 1) * m, m) = model.restrict(adjoint);
    }
    return grad;
  };

  const Vector z0 = Eigen::Map<const Vector>(start.data(), m * T);
  const NlpSolution sol = solve_nlp(nlp, z0, settings);
  const Matrix controls = Eigen::Map<const Matrix>(sol.z.data(), m, T);
  OcpSolution out(simulate(model, p.x0, controls), p.T0);
  out.cost = out.trajectory.cost();
  out.constraint_duals = sol.in_duals.transpose();
  out.stationarity_residual = sol.stationarity_residual;
  out.primal_residual = sol.constraint_violation;
  out.complementarity_residual = sol.complementarity_residual;
  out.iterations = sol.outer_iterations;
  out.status = sol.status == NlpStatus::optimal ? OcpStatus::optimal : OcpStatus::iteration_limit;
  return out;
}

namespace {

// g(t) is the multiplier-weighted constraint gradient at time t >= T0.
template <typename Gradient>
double adjoint_stationarity(const InfluenceModel& model, const Trajectory& run, int T0,
                            Gradient&& g) {
  const Index T = run.horizon();
  const Matrix a_t = model.influence().transpose();
  Vector adjoint = Vector::Zero(model.num_nodes());
  double worst = 0.0;
  for (Index t = T; t >= 1; --t) {
    adjoint = a_t * adjoint;
    if (t >= T0) adjoint += g(t);
    const Vector u = run.control(t - 1);
    const Vector gap = 2.0 * (model.cost_matrix() * u) - model.restrict(adjoint);
    if (gap.size() > 0) worst = std::max(worst, gap.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

FirstOrderReport certify_first_order(const TfProblem& p, const OcpSolution& sol) {
  const Trajectory& run = sol.trajectory;
  const Matrix& lam = sol.constraint_duals;
  FirstOrderReport report;
  report.stationarity = adjoint_stationarity(p.model, run, p.T0, [&](Index t) {
    return Vector(lam.col(t - p.T0));
  });
  for (Index t = p.T0; t <= run.horizon(); ++t) {
    const Vector slack = run.states().col(t) - p.tau;
    const Vector l = lam.col(t - p.T0);
    report.primal = std::max(report.primal, positive_part_max(-slack));
    report.complementarity = std::max(report.complementarity, l.cwiseProduct(slack).cwiseAbs().maxCoeff());
    report.dual_sign = std::max(report.dual_sign, positive_part_max(-l));
  }
  return report;
}

FirstOrderReport certify_first_order(const GfProblem& p, const OcpSolution& sol) {
  const Trajectory& run = sol.trajectory;
  const Matrix& lam = sol.constraint_duals;
  const double level = p.k * static_cast<double>(p.model.num_nodes());
  FirstOrderReport report;
  report.stationarity = adjoint_stationarity(p.model, run, p.T0, [&](Index t) {
    return Vector(lam(0, t - p.T0) * p.psi.gradient(run.states().col(t)));
  });
  for (Index t = p.T0; t <= run.horizon(); ++t) {
    const double slack = p.psi.value(run.states().col(t)) - level;
    const double l = lam(0, t - p.T0);
    report.primal = std::max(report.primal, -slack);
    report.complementarity = std::max(report.complementarity, std::abs(l * slack));
    report.dual_sign = std::max(report.dual_sign, -l);
  }
  return report;
}

std::optional<double> steering_cost(const InfluenceModel& model, const Vector& x0,
                                    const Vector& target, int steps) {
  if (steps < 1) throw ModelError("steering needs at least one step");
  const Index n = model.num_nodes();
  const Index m = model.num_controls();
  if (m == 0) return std::nullopt;
  // x(steps) = A^steps x0 + Σ_t A^(steps-1-t) (B u(t) + f); with R = L Lᵀ and
  // v(t) = Lᵀ u(t) the cost is |v|², so the answer is a least-norm solve.
  const Eigen::LLT<Matrix> chol(model.cost_matrix());
  const Matrix b_scaled = chol.matrixU().solve(model.placement().transpose()).transpose();
  Matrix gain(n, m * steps);
  Vector drift = x0;
  Matrix power = Matrix::Identity(n, n);
  for (int t = steps - 1; t >= 0; --t) {
    gain.middleCols(t * m, m) = power * b_scaled;
    power = model.influence() * power;
  }
  for (int t = 0; t < steps; ++t) drift = model.influence() * drift + model.forcing();
  const Vector rhs = target - drift;
  const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gain);
  const Vector v = cod.solve(rhs);
  const double miss = (gain * v - rhs).cwiseAbs().maxCoeff();
  if (!(miss <= 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()))) return std::nullopt;
  return v.squaredNorm();
}

CheapReachability cheap_reachability(const TfProblem& p, const OcpSolution& sol,
                                     const EquilibriumPoint& eq, double tol) {
  CheapReachability out;
  out.optimal_cost = sol.cost;
  out.equilibrium_cost = eq.cost;
  out.steering_cost = steering_cost(p.model, p.x0, eq.x_e, p.T0);
  if (!out.steering_cost) return out;
  out.checked = true;
  out.bound = p.T * eq.cost + *out.steering_cost;
  out.tight_bound = (p.T - p.T0) * eq.cost + *out.steering_cost;
  out.holds = sol.cost <= out.bound + tol * std::max(1.0, out.bound);
  return out;
}

nlohmann::json summary_json(const OcpSolution& sol, const EquilibriumPoint& eq) {
  const double horizon = static_cast<double>(sol.trajectory.horizon());
  return {{"cost", sol.cost},
          {"status", to_string(sol.status)},
          {"stationarity_residual", sol.stationarity_residual},
          {"equilibrium_cost", eq.cost},
          {"cheap_reachability_gap", sol.cost - horizon * eq.cost}};
}

}  // namespace ferment
