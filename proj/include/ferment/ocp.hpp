#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "ferment/dynamics.hpp"
#include "ferment/equilibrium.hpp"
#include "ferment/nlp.hpp"
#include "ferment/qp.hpp"

namespace ferment {

/// Total ferment: minimize Σ_{t<T} u(t)ᵀ R u(t) subject to the dynamics from
/// x0 and x(t) >= tau for T0 <= t <= T.
struct TfProblem {
  InfluenceModel model;
  Vector x0;
  Vector tau;
  int T0 = 1;
  int T = 1;

  void validate() const;
};

/// Group ferment: as TfProblem with psi(x(t)) >= k n for T0 <= t <= T.
struct GfProblem {
  InfluenceModel model;
  Vector x0;
  SigmoidAggregate psi;
  double k = 0.5;
  int T0 = 1;
  int T = 1;

  void validate() const;
};

enum class OcpStatus { optimal, infeasible, iteration_limit };

std::string to_string(OcpStatus status);

struct OcpSolution {
  Trajectory trajectory;
  double cost = 0.0;
  /// Multipliers of the state constraints, one column per t = T0..T
  /// (n rows for TF, one row for GF).
  Matrix constraint_duals;
  int T0 = 1;
  double stationarity_residual = 0.0;
  double primal_residual = 0.0;
  double complementarity_residual = 0.0;
  OcpStatus status = OcpStatus::iteration_limit;
  int iterations = 0;

  OcpSolution(Trajectory trajectory_, int first_constrained)
      : trajectory(std::move(trajectory_)), T0(first_constrained) {}
};

/// Direct transcription over (u(0), x(1), ..., u(T-1), x(T)) solved as one
/// sparse QP. Throws InfeasibleProblem when the reachability test fails or
/// the QP certifies infeasibility; other failures come back in `status`.
OcpSolution solve_tf(const TfProblem& p, const QpSettings& settings = {},
                     const std::optional<Vector>& warm_start = std::nullopt);

/// Single shooting over the controls with the states eliminated; constraint
/// gradients come from one adjoint pass. Starts from the held group
/// equilibrium control (or `initial_controls` when given, m x T).
OcpSolution solve_gf(const GfProblem& p, const NlpSettings& settings = {},
                     const std::optional<Matrix>& initial_controls = std::nullopt);

struct FirstOrderReport {
  /// max_t |2 R u(t) - Bᵀ p(t+1)| with p rebuilt from the state multipliers.
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double dual_sign = 0.0;

  double max() const;
};

/// Rebuilds the adjoint p(T) = g(T), p(t) = Aᵀ p(t+1) + g(t), where g(t) is
/// the multiplier-weighted constraint gradient at time t (zero for t < T0),
/// and checks the stationarity 2 R u(t) = Bᵀ p(t+1) together with primal
/// feasibility, complementarity and multiplier signs.
FirstOrderReport certify_first_order(const TfProblem& p, const OcpSolution& sol);
FirstOrderReport certify_first_order(const GfProblem& p, const OcpSolution& sol);

/// Minimum cost of steering x0 exactly to `target` in `steps` steps, or
/// nothing when the target is not reachable in that many steps.
std::optional<double> steering_cost(const InfluenceModel& model, const Vector& x0,
                                    const Vector& target, int steps);

struct CheapReachability {
  double optimal_cost = 0.0;
  double equilibrium_cost = 0.0;
  /// Empty when x_e cannot be reached from x0 in T0 steps.
  std::optional<double> steering_cost;
  /// T c(u_e) + D*.
  double bound = 0.0;
  /// (T - T0) c(u_e) + D*, the cost of the steer-then-hold trajectory.
  double tight_bound = 0.0;
  bool checked = false;
  bool holds = true;
};

/// J* <= T c(u_e) + D* with D* the exact steering cost to x_e in T0 steps.
/// The check is skipped (checked = false) when x_e is out of reach.
CheapReachability cheap_reachability(const TfProblem& p, const OcpSolution& sol,
                                     const EquilibriumPoint& eq, double tol = 1e-6);

/// {cost, status, stationarity_residual, equilibrium_cost, cheap_reachability_gap}.
nlohmann::json summary_json(const OcpSolution& sol, const EquilibriumPoint& eq);

}  // namespace ferment
