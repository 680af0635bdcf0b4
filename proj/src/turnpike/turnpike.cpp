#include "ferment/turnpike.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ferment {

TurnpikeReport turnpike_report(const OcpSolution& sol, const EquilibriumPoint& eq, double epsilon) {
  if (sol.status != OcpStatus::optimal) throw std::invalid_argument("turnpike report needs an optimal solution");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const Matrix& states = sol.trajectory.states();
  if (eq.x_e.size() != states.rows()) throw std::invalid_argument("equilibrium has the wrong dimension");
  const double scale = eq.x_e.norm();
  if (!(scale > 0.0)) throw std::invalid_argument("equilibrium state is zero");

  TurnpikeReport report;
  report.epsilon = epsilon;
  report.T0 = sol.T0;
  const Index T = sol.trajectory.horizon();
  for (Index t = sol.T0; t <= T; ++t) {
    const double d = (states.col(t) - eq.x_e).norm() / scale;
    report.distances.push_back(d);
    if (d > epsilon) ++report.exceedance_count;
  }
  report.cheap_gap = sol.cost - static_cast<double>(T) * eq.cost;
  return report;
}

nlohmann::json to_json(const TurnpikeReport& report) {
  return {{"epsilon", report.epsilon},
          {"T0", report.T0},
          {"exceedance_count", report.exceedance_count},
          {"cheap_gap", report.cheap_gap},
          {"distances", report.distances}};
}

void write_distance_csv(std::ostream& out, const TurnpikeReport& report) {
  const auto precision = out.precision(17);
  out << "t,distance\n";
  for (std::size_t i = 0; i < report.distances.size(); ++i) {
    out << report.T0 + static_cast<int>(i) << ',' << report.distances[i] << '\n';
  }
  out.precision(precision);
}

DissipativityCertificate dissipativity_certificate(const Matrix& influence) {
  const Index n = influence.rows();
  if (influence.cols() != n) throw ModelError("influence matrix must be square");
  if ((influence.array() < 0.0).any()) throw ModelError("influence matrix must be nonnegative");
  if (n > 0 && influence.rowwise().sum().maxCoeff() >= 1.0) {
    throw ModelError("influence matrix must be substochastic");
  }

  DissipativityCertificate cert;
  cert.rho = n == 0 ? 0.0 : influence.eigenvalues().cwiseAbs().maxCoeff();
  if (!(cert.rho < 1.0)) throw ModelError("spectral radius is not below 1");

  // P = Σ (Aᵀ)^k A^k, accumulated as term <- Aᵀ term A.
  Matrix term = Matrix::Identity(n, n);
  cert.P = term;
  for (cert.series_terms = 1; cert.series_terms < 1000000; ++cert.series_terms) {
    term = influence.transpose() * term * influence;
    cert.P += term;
    if (n == 0 || term.cwiseAbs().maxCoeff() <= 1e-12) break;
  }

  const Matrix gap = cert.P - influence.transpose() * cert.P * influence;
  const Matrix plain = Matrix::Identity(n, n) - influence.transpose() * influence;
  if (n > 0) {
    cert.min_eig_gap = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (gap + gap.transpose()))
                           .eigenvalues()
                           .minCoeff();
    cert.identity_gap = Eigen::SelfAdjointEigenSolver<Matrix>(plain).eigenvalues().minCoeff();
  }
  return cert;
}

nlohmann::json to_json(const DissipativityCertificate& cert) {
  return {{"rho", cert.rho},
          {"min_eig_gap", cert.min_eig_gap},
          {"identity_gap", cert.identity_gap},
          {"series_terms", cert.series_terms}};
}

}  // namespace ferment
