#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "ferment/dynamics.hpp"
#include "ferment/errors.hpp"
#include "ferment/nlp.hpp"
#include "ferment/qp.hpp"

namespace ferment {

/// A fixed point x_e = A x_e + B u_e + (I - A) q of the controlled dynamics.
struct EquilibriumPoint {
  Vector x_e;
  Vector u_e;
  double cost = 0.0;
  std::vector<int> controlled;
};

nlohmann::json to_json(const EquilibriumPoint& eq);

/// (I - A)⁻¹ by dense LU.
Matrix substochastic_inverse(const Matrix& influence);

struct FeasibilityReport {
  bool feasible = true;
  /// Rows with tau_i > q_i that no controlled node reaches.
  std::vector<int> unreachable_rows;
};

/// Graph reachability on the support of A: node k reaches node i when a
/// directed influence path leads from k to i (every node reaches itself).
/// Rows with tau_i <= q_i are satisfied without control and never count.
FeasibilityReport feasibility_check(const Matrix& influence, const std::vector<int>& controlled,
                                    const Vector& quiescent, const Vector& tau);
FeasibilityReport feasibility_check(const InfluenceModel& model, const Vector& tau);

/// Minimum-cost equilibrium with x_e >= tau. x_e is eliminated through
/// (I - A)⁻¹, leaving a QP in u_e alone.
/// Throws InfeasibleProblem (with witness rows) or SolverFailure.
EquilibriumPoint tf_equilibrium(const InfluenceModel& model, const Vector& tau,
                                const QpSettings& settings = {},
                                const std::optional<Vector>& warm_start = std::nullopt);

/// Minimum-cost equilibrium with psi(x_e) >= k n. The NLP answer is pushed
/// back onto the feasible side along the constraint gradient when it ends
/// marginally short. Throws SolverFailure when the NLP does not converge.
EquilibriumPoint gf_equilibrium(const InfluenceModel& model, const SigmoidAggregate& psi, double k,
                                const NlpSettings& settings = {});

struct RelaxationResult {
  Vector u_tilde;
  Vector x_e;
  std::vector<int> support;
  double mu = 0.0;
};

/// minimize |u|² + mu |u|₁  s.t.  x_e = A x_e + u + (I - A) q,  x_e >= tau,
/// with every node actuated. Support threshold 1e-6 |u|_inf.
RelaxationResult convex_relaxation(const Matrix& influence, const Vector& quiescent,
                                   const Vector& tau, double mu, const QpSettings& settings = {});

}  // namespace ferment
