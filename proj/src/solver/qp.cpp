#include "ferment/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCholesky>

namespace ferment {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SparseMatrix from_dense(const Matrix& m) { return m.sparseView(0.0, 0.0); }

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

SparseMatrix stack_rows(const SparseMatrix& top, const SparseMatrix& bottom, Index cols) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(top.nonZeros() + bottom.nonZeros()));
  for (int k = 0; k < top.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(top, k); it; ++it) {
      triplets.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < bottom.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(bottom, k); it; ++it) {
      triplets.emplace_back(top.rows() + it.row(), it.col(), it.value());
    }
  }
  SparseMatrix out(top.rows() + bottom.rows(), cols);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

SparseMatrix identity(Index n, double scale) {
  SparseMatrix eye(n, n);
  eye.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Index i = 0; i < n; ++i) eye.insert(i, i) = scale;
  eye.makeCompressed();
  return eye;
}

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

// ADMM state for  min ½xᵀHx + fᵀx  s.t.  l <= Cx <= u  with C = [A_eq; A_in].
class Splitting {
 public:
  Splitting(const QuadraticProgram& p, const QpSettings& s)
      : p_(p), s_(s), n_(p.num_variables()), me_(p.A_eq.rows()), mi_(p.A_in.rows()) {
    c_ = stack_rows(p.A_eq, p.A_in, n_);
    ct_ = c_.transpose();
    const Index mc = me_ + mi_;
    lower_.resize(mc);
    upper_.resize(mc);
    lower_ << p.b_eq, p.b_in;
    upper_ << p.b_eq, Vector::Constant(mi_, kInf);
    rho_ = s.rho;
    set_rho_vector();
    factorize(true);
  }

  void set_rho_vector() {
    rho_vec_.resize(me_ + mi_);
    for (Index i = 0; i < me_; ++i) rho_vec_(i) = 1e3 * rho_;
    for (Index i = me_; i < me_ + mi_; ++i) rho_vec_(i) = rho_;
  }

  void factorize(bool analyze) {
    SparseMatrix k = p_.H + identity(n_, s_.sigma);
    if (me_ + mi_ > 0) k += SparseMatrix(ct_ * rho_vec_.asDiagonal() * c_);
    if (analyze) ldlt_.analyzePattern(k);
    ldlt_.factorize(k);
    if (ldlt_.info() != Eigen::Success) {
      throw std::runtime_error("QP splitting system could not be factorized");
    }
  }

  QpSolution run(const std::optional<Vector>& warm_start) {
    x_ = warm_start && warm_start->size() == n_ ? *warm_start : Vector::Zero(n_);
    z_ = (c_ * x_).cwiseMax(lower_).cwiseMin(upper_);
    y_ = Vector::Zero(me_ + mi_);

    double polish_threshold = 1e-3;
    int last_polish_iter = -1000;
    constexpr int kCheckInterval = 5;
    constexpr int kAdaptInterval = 50;

    for (int iter = 1; iter <= s_.max_iter; ++iter) {
      const Vector rhs = s_.sigma * x_ - p_.f + ct_ * (rho_vec_.cwiseProduct(z_) - y_);
      const Vector x_tilde = ldlt_.solve(rhs);
      const Vector z_tilde = c_ * x_tilde;
      const Vector x_next = s_.alpha * x_tilde + (1.0 - s_.alpha) * x_;
      const Vector z_relaxed = s_.alpha * z_tilde + (1.0 - s_.alpha) * z_;
      const Vector z_next =
          (z_relaxed + y_.cwiseQuotient(rho_vec_)).cwiseMax(lower_).cwiseMin(upper_);
      const Vector y_next = y_ + rho_vec_.cwiseProduct(z_relaxed - z_next);
      const Vector dy = y_next - y_;
      x_ = x_next;
      z_ = z_next;
      y_ = y_next;

      if (iter % kCheckInterval != 0 && iter != 1) continue;

      const Vector cx = c_ * x_;
      const Vector hx = p_.H * x_;
      const Vector cty = ct_ * y_;
      const double r_prim = inf_norm(cx - z_);
      const double r_dual = inf_norm(hx + p_.f + cty);

      if (r_prim <= s_.tol && r_dual <= s_.tol) {
        QpSolution sol = current(iter);
        if (sol.status == QpStatus::optimal) return sol;
        if (s_.polish) {
          QpSolution polished = polish(iter);
          if (polished.status == QpStatus::optimal) return polished;
        }
      }

      if (r_prim > s_.tol && certifies_infeasibility(dy)) {
        QpSolution sol = current(iter);
        sol.status = QpStatus::infeasible;
        return sol;
      }

      const double scale = 1.0 + std::max({inf_norm(p_.f), inf_norm(cx), inf_norm(hx)});
      if (s_.polish && std::max(r_prim, r_dual) <= polish_threshold * scale &&
          iter - last_polish_iter >= 25) {
        last_polish_iter = iter;
        QpSolution polished = polish(iter);
        if (polished.status == QpStatus::optimal) return polished;
        polish_threshold = std::max(polish_threshold * 0.1, 1e-14);
      }

      if (s_.adaptive_rho && iter % kAdaptInterval == 0 && me_ + mi_ > 0) {
        const double prim_scale = std::max({inf_norm(cx), inf_norm(z_), 1e-30});
        const double dual_scale = std::max({inf_norm(hx), inf_norm(cty), inf_norm(p_.f), 1e-30});
        const double ratio = (r_prim / prim_scale) / std::max(r_dual / dual_scale, 1e-30);
        const double step = std::clamp(std::sqrt(ratio), 0.1, 10.0);
        const double rho_new = std::clamp(rho_ * step, 1e-6, 1e6);
        if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
          rho_ = rho_new;
          set_rho_vector();
          factorize(false);
        }
      }
    }
    QpSolution sol = current(s_.max_iter);
    if (sol.status != QpStatus::optimal && s_.polish) {
      QpSolution polished = polish(s_.max_iter);
      if (polished.status == QpStatus::optimal) return polished;
    }
    if (sol.status != QpStatus::optimal) sol.status = QpStatus::iteration_limit;
    return sol;
  }

 private:
  bool certifies_infeasibility(const Vector& dy) const {
    const double norm = inf_norm(dy);
    if (norm < 1e-14) return false;
    const Vector d = dy / norm;
    if (inf_norm(ct_ * d) > s_.infeasibility_tol) return false;
    double support = 0.0;
    for (Index i = 0; i < d.size(); ++i) {
      if (d(i) > 0.0) {
        if (std::isinf(upper_(i))) {
          if (d(i) > s_.infeasibility_tol) return false;
        } else {
          support += upper_(i) * d(i);
        }
      } else if (d(i) < 0.0) {
        support += lower_(i) * d(i);
      }
    }
    return support < -s_.infeasibility_tol;
  }

  QpSolution finish(const Vector& x, const Vector& y, int iter, bool polished) const {
    QpSolution sol;
    sol.z = x;
    sol.eq_duals = -y.head(me_);
    sol.in_duals = -y.tail(mi_);
    const KktResiduals r = kkt_residuals(p_, sol.z, sol.eq_duals, sol.in_duals);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
    sol.complementarity_residual = r.complementarity;
    sol.iterations = iter;
    sol.polished = polished;
    const bool ok = r.primal <= s_.tol && r.dual <= s_.tol && r.complementarity <= s_.tol &&
                    r.dual_sign <= s_.tol;
    sol.status = ok ? QpStatus::optimal : QpStatus::iteration_limit;
    return sol;
  }

  QpSolution current(int iter) const { return finish(x_, y_, iter, false); }

  // Guess the active set from the splitting iterate and solve the
  // equality-constrained KKT system on it, with iterative refinement.
  QpSolution polish(int iter) const {
    std::vector<Index> active;
    for (Index i = 0; i < me_; ++i) active.push_back(i);
    for (Index i = me_; i < me_ + mi_; ++i) {
      if (z_(i) - lower_(i) < -y_(i)) active.push_back(i);
    }
    const auto na = static_cast<Index>(active.size());
    std::vector<Eigen::Triplet<double>> reduced;
    {
      const SparseMatrix crow = c_;  // column-major; pick rows through triplets
      std::vector<Index> slot(me_ + mi_, -1);
      for (Index k = 0; k < na; ++k) slot[active[k]] = k;
      for (int col = 0; col < crow.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(crow, col); it; ++it) {
          if (slot[it.row()] >= 0) reduced.emplace_back(slot[it.row()], it.col(), it.value());
        }
      }
    }
    SparseMatrix ca(na, n_);
    ca.setFromTriplets(reduced.begin(), reduced.end());

    constexpr double kDelta = 1e-9;
    std::vector<Eigen::Triplet<double>> kkt;
    std::vector<Eigen::Triplet<double>> kkt_exact;
    for (int col = 0; col < p_.H.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(p_.H, col); it; ++it) {
        kkt.emplace_back(it.row(), it.col(), it.value());
        kkt_exact.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (Index i = 0; i < n_; ++i) kkt.emplace_back(i, i, kDelta);
    for (int col = 0; col < ca.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(ca, col); it; ++it) {
        for (auto* list : {&kkt, &kkt_exact}) {
          list->emplace_back(n_ + it.row(), it.col(), it.value());
          list->emplace_back(it.col(), n_ + it.row(), it.value());
        }
      }
    }
    for (Index i = 0; i < na; ++i) kkt.emplace_back(n_ + i, n_ + i, -kDelta);
    SparseMatrix k(n_ + na, n_ + na), k0(n_ + na, n_ + na);
    k.setFromTriplets(kkt.begin(), kkt.end());
    k0.setFromTriplets(kkt_exact.begin(), kkt_exact.end());

    Ldlt solver(k);
    if (solver.info() != Eigen::Success) return current(iter);
    Vector rhs(n_ + na);
    rhs.head(n_) = -p_.f;
    for (Index i = 0; i < na; ++i) rhs(n_ + i) = lower_(active[i]);
    Vector sol = solver.solve(rhs);
    for (int refine = 0; refine < 25; ++refine) {
      const Vector residual = rhs - k0 * sol;
      if (inf_norm(residual) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
      sol += solver.solve(residual);
    }
    if (!sol.allFinite()) return current(iter);

    Vector y = Vector::Zero(me_ + mi_);
    for (Index i = 0; i < na; ++i) y(active[i]) = sol(n_ + i);
    return finish(sol.head(n_), y, iter, true);
  }

  const QuadraticProgram& p_;
  const QpSettings& s_;
  Index n_, me_, mi_;
  SparseMatrix c_, ct_;
  Vector lower_, upper_, rho_vec_;
  double rho_ = 0.1;
  Ldlt ldlt_;
  Vector x_, z_, y_;
};

}  // namespace

void QuadraticProgram::validate() const {
  const Index n = f.size();
  if (H.rows() != n || H.cols() != n) throw std::invalid_argument("QP: H must be n x n");
  if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) {
    throw std::invalid_argument("QP: equality block has inconsistent dimensions");
  }
  if (A_in.cols() != n || A_in.rows() != b_in.size()) {
    throw std::invalid_argument("QP: inequality block has inconsistent dimensions");
  }
  const SparseMatrix asym = H - SparseMatrix(H.transpose());
  for (int k = 0; k < asym.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(asym, k); it; ++it) {
      if (std::abs(it.value()) > 1e-12) throw std::invalid_argument("QP: H must be symmetric");
    }
  }
}

QuadraticProgram QuadraticProgram::dense(const Matrix& H, const Vector& f, const Matrix& A_eq,
                                         const Vector& b_eq, const Matrix& A_in,
                                         const Vector& b_in) {
  QuadraticProgram p;
  p.H = from_dense(H);
  p.f = f;
  p.A_eq = A_eq.size() == 0 ? SparseMatrix(0, f.size()) : from_dense(A_eq);
  p.b_eq = b_eq;
  p.A_in = A_in.size() == 0 ? SparseMatrix(0, f.size()) : from_dense(A_in);
  p.b_in = b_in;
  return p;
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

double QpSolution::objective(const QuadraticProgram& p) const {
  return 0.5 * z.dot(p.H * z) + p.f.dot(z);
}

double KktResiduals::max() const { return std::max({primal, dual, complementarity, dual_sign}); }

KktResiduals kkt_residuals(const QuadraticProgram& p, const Vector& z, const Vector& eq_duals,
                           const Vector& in_duals) {
  KktResiduals r;
  const Vector eq_gap = p.A_eq * z - p.b_eq;
  const Vector slack = p.A_in * z - p.b_in;
  r.primal = std::max(inf_norm(eq_gap), inf_norm((-slack).cwiseMax(0.0)));
  r.dual = inf_norm(p.H * z + p.f - p.A_eq.transpose() * eq_duals - p.A_in.transpose() * in_duals);
  r.complementarity = inf_norm(in_duals.cwiseProduct(slack));
  r.dual_sign = inf_norm((-in_duals).cwiseMax(0.0));
  return r;
}

QpSolution solve_qp(const QuadraticProgram& p, const QpSettings& settings,
                    const std::optional<Vector>& warm_start) {
  p.validate();
  if (!(settings.tol > 0.0)) throw std::invalid_argument("QP tolerance must be positive");
  Splitting splitting(p, settings);
  return splitting.run(warm_start);
}

}  // namespace ferment
