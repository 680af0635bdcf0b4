#pragma once

// Exhaustive active-set reference solver for small strictly convex QPs.

#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace oracle {

struct ActiveSetResult {
  Eigen::VectorXd z;
  Eigen::VectorXd in_duals;
  double objective = std::numeric_limits<double>::infinity();
};

// min ½zᵀHz + fᵀz  s.t.  Ae z = be, Ai z >= bi.  Empty optional when no
// active set yields a KKT point (infeasible problem).
inline std::optional<ActiveSetResult> active_set_qp(const Eigen::MatrixXd& H,
                                                    const Eigen::VectorXd& f,
                                                    const Eigen::MatrixXd& Ae,
                                                    const Eigen::VectorXd& be,
                                                    const Eigen::MatrixXd& Ai,
                                                    const Eigen::VectorXd& bi) {
  const Eigen::Index n = f.size(), me = Ae.rows(), mi = Ai.rows();
  std::optional<ActiveSetResult> best;
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const Eigen::Index k = me + static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    K.topLeftCorner(n, n) = H;
    rhs.head(n) = -f;
    for (Eigen::Index r = 0; r < k; ++r) {
      const Eigen::VectorXd row = r < me ? Eigen::VectorXd(Ae.row(r).transpose())
                                         : Eigen::VectorXd(Ai.row(act[r - me]).transpose());
      K.block(0, n + r, n, 1) = -row;
      K.block(n + r, 0, 1, n) = row.transpose();
      rhs(n + r) = r < me ? be(r) : bi(act[r - me]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd z = sol.head(n);
    if (mi > 0 && ((Ai * z - bi).array() < -1e-9).any()) continue;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(mi);
    bool ok = true;
    for (std::size_t r = 0; r < act.size(); ++r) {
      lam(act[r]) = sol(n + me + static_cast<Eigen::Index>(r));
      if (lam(act[r]) < -1e-9) ok = false;
    }
    if (!ok) continue;
    const double obj = 0.5 * z.dot(H * z) + f.dot(z);
    if (!best || obj < best->objective) best = ActiveSetResult{z, lam, obj};
  }
  return best;
}

}  // namespace oracle
