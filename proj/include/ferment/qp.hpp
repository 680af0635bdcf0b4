#pragma once

#include <optional>
#include <string>

#include "ferment/linalg.hpp"

namespace ferment {

/// minimize ½ zᵀ H z + fᵀ z   subject to  A_eq z = b_eq,  A_in z >= b_in.
///
/// H must be symmetric positive semidefinite. Empty constraint blocks are
/// allowed (zero rows with the right number of columns).
struct QuadraticProgram {
  SparseMatrix H;
  Vector f;
  SparseMatrix A_eq;
  Vector b_eq;
  SparseMatrix A_in;
  Vector b_in;

  Index num_variables() const { return f.size(); }

  /// Throws std::invalid_argument on inconsistent dimensions or an
  /// asymmetric H (tolerance 1e-12).
  void validate() const;

  /// Convenience constructor from dense blocks.
  static QuadraticProgram dense(const Matrix& H, const Vector& f, const Matrix& A_eq,
                                const Vector& b_eq, const Matrix& A_in, const Vector& b_in);
};

enum class QpStatus { optimal, infeasible, iteration_limit };

std::string to_string(QpStatus status);

struct QpSettings {
  /// Absolute tolerance on the primal and dual residuals.
  double tol = 1e-8;
  int max_iter = 200000;
  double rho = 0.1;
  double sigma = 1e-6;
  /// Over-relaxation of the splitting iteration.
  double alpha = 1.6;
  bool adaptive_rho = true;
  /// Active-set refinement of the splitting iterate.
  bool polish = true;
  /// Tolerance of the primal infeasibility certificate.
  double infeasibility_tol = 1e-6;
};

/// Multiplier convention: H z + f - A_eqᵀ ν - A_inᵀ λ = 0 with λ >= 0.
struct QpSolution {
  Vector z;
  Vector eq_duals;
  Vector in_duals;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity_residual = 0.0;
  QpStatus status = QpStatus::iteration_limit;
  int iterations = 0;
  bool polished = false;

  double objective(const QuadraticProgram& p) const;
};

struct KktResiduals {
  /// max(|A_eq z - b_eq|, max(b_in - A_in z, 0)), infinity norm.
  double primal = 0.0;
  /// |H z + f - A_eqᵀ ν - A_inᵀ λ|, infinity norm.
  double dual = 0.0;
  /// max_i |λ_i (A_in z - b_in)_i|.
  double complementarity = 0.0;
  /// max(-λ, 0), infinity norm.
  double dual_sign = 0.0;

  double max() const;
};

KktResiduals kkt_residuals(const QuadraticProgram& p, const Vector& z, const Vector& eq_duals,
                           const Vector& in_duals);

/// Operator-splitting (ADMM) solve with over-relaxation, adaptive step size,
/// a primal infeasibility certificate, and active-set polishing.
/// `warm_start` seeds the primal iterate.
QpSolution solve_qp(const QuadraticProgram& p, const QpSettings& settings = {},
                    const std::optional<Vector>& warm_start = std::nullopt);

}  // namespace ferment
