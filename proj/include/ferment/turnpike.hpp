#pragma once

#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "ferment/equilibrium.hpp"
#include "ferment/ocp.hpp"

namespace ferment {

struct TurnpikeReport {
  double epsilon = 0.0;
  int T0 = 1;
  /// |x(t) - x_e|₂ / |x_e|₂ for t = T0..T.
  std::vector<double> distances;
  /// Number of t in T0..T with distance above epsilon.
  int exceedance_count = 0;
  /// J* - T c(u_e).
  double cheap_gap = 0.0;
};

/// Throws std::invalid_argument unless `sol` is optimal and epsilon > 0.
TurnpikeReport turnpike_report(const OcpSolution& sol, const EquilibriumPoint& eq, double epsilon);

nlohmann::json to_json(const TurnpikeReport& report);

/// `t,distance` rows for t = T0..T.
void write_distance_csv(std::ostream& out, const TurnpikeReport& report);

struct DissipativityCertificate {
  double rho = 0.0;
  /// Solution of P - AᵀPA = I.
  Matrix P;
  /// Smallest eigenvalue of P - AᵀPA.
  double min_eig_gap = 0.0;
  /// Smallest eigenvalue of I - AᵀA, i.e. the gap with the identity as
  /// storage matrix. Negative values mean P = I does not certify A.
  double identity_gap = 0.0;
  int series_terms = 0;
};

/// Sums P = Σ_k (Aᵀ)^k A^k until an added term is below 1e-12 in max norm.
/// Throws ModelError when A is not nonnegative and substochastic, or when
/// its spectral radius is not below 1.
DissipativityCertificate dissipativity_certificate(const Matrix& influence);

/// {rho, min_eig_gap, identity_gap, series_terms}.
nlohmann::json to_json(const DissipativityCertificate& cert);

}  // namespace ferment
