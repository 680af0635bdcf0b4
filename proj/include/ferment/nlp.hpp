#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ferment/linalg.hpp"

namespace ferment {

/// minimize f(z)  subject to  c_eq(z) = 0,  c_in(z) >= 0.
///
/// `constraints` returns the stacked vector [c_eq; c_in] and
/// `constraint_vjp(z, w)` returns Jᵀw for the stacked Jacobian J, so that
/// problems whose Jacobian is only available through an adjoint pass never
/// form it.
struct SmoothNlp {
  Index num_variables = 0;
  Index num_equalities = 0;
  Index num_inequalities = 0;
  /// Returns f(z) and writes ∇f(z) into `gradient`.
  std::function<double(const Vector& z, Vector& gradient)> objective;
  std::function<Vector(const Vector& z)> constraints;
  std::function<Vector(const Vector& z, const Vector& w)> constraint_vjp;

  Index num_constraints() const { return num_equalities + num_inequalities; }
  void validate() const;
};

struct NlpSettings {
  /// Bound on stationarity, constraint violation and complementarity.
  double tol = 1e-6;
  int max_outer = 5000;
  int max_inner = 20000;
  int lbfgs_memory = 10;
  double initial_penalty = 10.0;
  double max_penalty = 1e10;
};

enum class NlpStatus { optimal, iteration_limit, constraint_violation };

std::string to_string(NlpStatus status);

/// Multiplier convention: ∇f - J_eqᵀ ν - J_inᵀ λ = 0 with λ >= 0.
struct NlpSolution {
  Vector z;
  Vector eq_duals;
  Vector in_duals;
  double objective = 0.0;
  double stationarity_residual = 0.0;
  double constraint_violation = 0.0;
  double complementarity_residual = 0.0;
  NlpStatus status = NlpStatus::iteration_limit;
  int outer_iterations = 0;
  int inner_iterations = 0;
};

/// Augmented-Lagrangian (PHR) outer loop around an L-BFGS inner solve.
NlpSolution solve_nlp(const SmoothNlp& p, const Vector& z0, const NlpSettings& settings = {});

struct GradientCheck {
  double objective_error = 0.0;
  double constraint_error = 0.0;
  double max() const { return objective_error > constraint_error ? objective_error : constraint_error; }
};

/// Compares the analytic objective gradient and constraint vector-Jacobian
/// products with central differences along `probes` random directions.
/// Errors are relative: |analytic - fd| / max(1, |analytic|, |fd|).
GradientCheck check_gradients(const SmoothNlp& p, const Vector& z, std::uint64_t seed,
                              int probes = 8, double step = 1e-6);

}  // namespace ferment
