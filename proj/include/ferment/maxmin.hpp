#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ferment/dynamics.hpp"

namespace ferment {

/// States of the max-min problem along a horizon T: opinions x(0..T), the
/// record r(t) = min(psi(x(0)), ..., psi(x(t-1))) with r(0) = psi(x(0)), and
/// the running control cost y(t).
struct MaxminPath {
  Matrix x;
  Vector r;
  Vector y;

  Index horizon() const { return r.size() - 1; }
  double attained() const { return r(r.size() - 1); }
  double expenditure() const { return y(y.size() - 1); }
};

/// Propagates x, r and y from x0 under the controls (m x T).
MaxminPath forward_sweep(const InfluenceModel& model, const SigmoidAggregate& psi, const Vector& x0,
                         const Matrix& controls);

enum class AdjointCase { slack, binding, split };

struct BackwardSweep {
  /// lambda_x(tau) for tau = 0..T as columns; lambda_x(tau) prices x(tau+1).
  Matrix lambda_x;
  Vector lambda_r;
  /// phi(tau): 0 for slack steps, 1 for binding ones.
  Vector phi;
  std::vector<AdjointCase> cases;
  /// Candidate controls R⁻¹ Bᵀ lambda_x(tau) / (2 lambda_y), m x T.
  Matrix controls;
  /// Steps where g(phi) kept one sign on the search bracket.
  int fallbacks = 0;
};

/// Backward pass from lambda_x(T) = 0, lambda_r(T) = 1. At each tau < T-1
/// phi solves psi(A x(tau) + B u~(tau; phi) + (I - A) q) = psi(x(tau)) by
/// Newton's method safeguarded with bisection on [-2, 3]; a root above 1 takes the binding update, below 0 the
/// slack one, otherwise the split update with that phi. The last step is
/// always slack because x(T) does not enter the record.
BackwardSweep backward_sweep(const InfluenceModel& model, const SigmoidAggregate& psi,
                             const MaxminPath& path, double lambda_y);

/// H = lambda_xᵀ (A x + B u + (I - A) q) + lambda_r min(r, psi(x)) + lambda_y (y + uᵀ R u).
double maxmin_hamiltonian(const InfluenceModel& model, const SigmoidAggregate& psi,
                          const Vector& lambda_x, double lambda_r, double lambda_y, const Vector& x,
                          double r, double y, const Vector& u);

/// One-sided derivative of H in (x, r) along (v_x, v_r) at a point with
/// r = psi(x): lambda_xᵀ A v_x + lambda_r min(<grad psi(x), v_x>, v_r).
double hamiltonian_directional_derivative(const InfluenceModel& model, const SigmoidAggregate& psi,
                                          const Vector& lambda_x, double lambda_r, const Vector& x,
                                          const Vector& v_x, double v_r);

struct MfSettings {
  double eps1 = 1e-6;
  double eps2 = 1e-6;
  /// Weight w on the previous iterate in u <- w u + (1 - w) u~.
  double relaxation = 0.9;
  /// Shooting step; 0 selects 1e-3 C.
  double step = 0.0;
  int max_inner = 5000;
  /// Inner sweeps without a new smallest |u(j) - u(j-1)| before 1 - w halves.
  int stall_window = 50;
  int max_outer = 500;
  /// Step factor while E - C keeps its sign.
  double step_growth = 1.5;
  /// The run fails once the step falls below its start value times 2^-max_halvings.
  int max_halvings = 10;
};

enum class MfStatus { converged, iteration_limit, oscillation, abnormal };

std::string to_string(MfStatus status);

struct MfSolution {
  Trajectory trajectory;
  MaxminPath path;
  double attained = 0.0;
  double expenditure = 0.0;
  double budget = 0.0;
  double lambda_y = 0.0;
  /// |lambda_y (y(T) - C)|.
  double complementarity_residual = 0.0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  int fallbacks = 0;
  /// The shooting update ran with the opposite sign to the printed rule.
  bool sign_corrected = false;
  MfStatus status = MfStatus::iteration_limit;
};

/// Maximize min_{t<T} psi(x(t)) subject to Σ uᵀ R u <= budget.
///
/// Forward-backward sweeps with relaxation inside, shooting on lambda_y
/// outside: lambda_y <- lambda_y - step (E - C) from lambda_y = 1. When the
/// first update moves the expenditure away from the budget the sign of the
/// update is reversed for the rest of the run. The step halves whenever
/// E - C changes sign and grows by step_growth otherwise; a step below
/// 2^-max_halvings of its start value ends the run with status oscillation.
/// Controls are scaled onto the budget when the final expenditure overshoots
/// it.
MfSolution solve_mf(const InfluenceModel& model, const SigmoidAggregate& psi, const Vector& x0,
                    double budget, int horizon, const MfSettings& settings = {});

/// {attained, expenditure, budget, lambda_y_T, complementarity_residual,
///  iterations: {inner, outer}, status}.
nlohmann::json to_json(const MfSolution& sol);

}  // namespace ferment
