#include "ferment/dynamics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

namespace ferment {

namespace {

void check_influence(const Matrix& a) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    throw ModelError("influence matrix must be square and nonempty");
  }
  if ((a.array() < 0.0).any() || !a.allFinite()) {
    throw ModelError("influence matrix must be finite and nonnegative");
  }
  const Vector sums = a.rowwise().sum();
  for (Index i = 0; i < sums.size(); ++i) {
    if (!(sums(i) < 1.0)) {
      throw ModelError("row " + std::to_string(i) + " of the influence matrix sums to " +
                       std::to_string(sums(i)) + "; it must be substochastic");
    }
  }
}

}  // namespace

InfluenceModel::InfluenceModel(Matrix influence, Vector quiescent, std::vector<int> controlled,
                               Matrix cost)
    : a_(std::move(influence)),
      q_(std::move(quiescent)),
      controlled_(std::move(controlled)),
      r_(std::move(cost)) {
  check_influence(a_);
  const Index n = a_.rows();
  if (q_.size() != n) throw ModelError("quiescent vector has the wrong length");
  if ((q_.array() < 0.0).any()) throw ModelError("quiescent opinions must be nonnegative");

  std::set<int> seen;
  for (int node : controlled_) {
    if (node < 0 || node >= n) throw ModelError("controlled node out of range");
    if (!seen.insert(node).second) {
      throw ModelError("controlled node " + std::to_string(node) + " listed twice");
    }
  }
  const auto m = static_cast<Index>(controlled_.size());
  if (r_.rows() != m || r_.cols() != m) throw ModelError("cost matrix must be m x m");
  if (m > 0) {
    if (!r_.isApprox(r_.transpose(), 1e-12) && (r_ - r_.transpose()).norm() > 1e-12) {
      throw ModelError("cost matrix must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(r_, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw ModelError("cost matrix must be positive definite");
    }
    r_factor_.compute(r_);
  }
  forcing_ = q_ - a_ * q_;
}

InfluenceModel::InfluenceModel(Matrix influence, Vector quiescent, std::vector<int> controlled)
    : InfluenceModel(std::move(influence), std::move(quiescent), controlled,
                     Matrix::Identity(static_cast<Index>(controlled.size()),
                                      static_cast<Index>(controlled.size()))) {}

Matrix InfluenceModel::placement() const {
  Matrix b = Matrix::Zero(num_nodes(), num_controls());
  for (Index k = 0; k < num_controls(); ++k) b(controlled_[k], k) = 1.0;
  return b;
}

Vector InfluenceModel::actuate(const Vector& u) const {
  if (u.size() != num_controls()) throw ModelError("control vector has the wrong length");
  Vector out = Vector::Zero(num_nodes());
  for (Index k = 0; k < num_controls(); ++k) out(controlled_[k]) += u(k);
  return out;
}

Vector InfluenceModel::restrict(const Vector& v) const {
  Vector out(num_controls());
  for (Index k = 0; k < num_controls(); ++k) out(k) = v(controlled_[k]);
  return out;
}

Vector InfluenceModel::cost_inverse_times(const Vector& v) const {
  if (num_controls() == 0) return Vector(0);
  return r_factor_.solve(v);
}

InfluenceModel model_with_node_costs(const Matrix& influence, const Vector& quiescent,
                                     std::vector<int> controlled, const Vector& node_costs) {
  const auto m = static_cast<Index>(controlled.size());
  Matrix cost = Matrix::Zero(m, m);
  for (Index k = 0; k < m; ++k) cost(k, k) = node_costs(controlled[k]);
  return InfluenceModel(influence, quiescent, std::move(controlled), std::move(cost));
}

Trajectory::Trajectory(Matrix states, Matrix controls, double cost)
    : states_(std::move(states)), controls_(std::move(controls)), cost_(cost) {
  if (states_.cols() != controls_.cols() + 1) {
    throw ModelError("a trajectory has one more state than controls");
  }
}

double Trajectory::max_step_defect(const InfluenceModel& model) const {
  double worst = 0.0;
  for (Index t = 0; t < horizon(); ++t) {
    const Vector predicted = step(model, states_.col(t), controls_.col(t));
    worst = std::max(worst, (predicted - states_.col(t + 1)).cwiseAbs().maxCoeff());
  }
  return worst;
}

Vector step(const InfluenceModel& model, const Vector& x, const Vector& u) {
  if (x.size() != model.num_nodes()) throw ModelError("state vector has the wrong length");
  return model.influence() * x + model.actuate(u) + model.forcing();
}

Trajectory simulate(const InfluenceModel& model, const Vector& x0, const Matrix& controls) {
  const Index horizon = controls.cols();
  const bool free = controls.rows() == 0;
  if (!free && controls.rows() != model.num_controls()) {
    throw ModelError("control sequence has the wrong number of rows");
  }
  if (x0.size() != model.num_nodes()) throw ModelError("initial state has the wrong length");
  Matrix u = free ? Matrix::Zero(model.num_controls(), horizon) : controls;
  Matrix x(model.num_nodes(), horizon + 1);
  x.col(0) = x0;
  double cost = 0.0;
  for (Index t = 0; t < horizon; ++t) {
    x.col(t + 1) = step(model, x.col(t), u.col(t));
    cost += model.control_cost(u.col(t));
  }
  return Trajectory(std::move(x), std::move(u), cost);
}

Trajectory simulate_free(const InfluenceModel& model, const Vector& x0, Index horizon) {
  return simulate(model, x0, Matrix(0, horizon));
}

double spectral_radius(const Matrix& a, double tol, int max_iter) {
  if (a.rows() != a.cols()) throw ModelError("spectral radius needs a square matrix");
  if (a.rows() == 0) return 0.0;
  // Normalised power iteration on |A|-style growth: the ratio of successive
  // infinity norms converges to the dominant modulus.
  Vector v = Vector::Ones(a.rows());
  double estimate = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    Vector w = a * v;
    const double norm = w.cwiseAbs().maxCoeff();
    if (norm == 0.0) return 0.0;
    const double next = norm / v.cwiseAbs().maxCoeff();
    v = w / norm;
    if (iter > 0 && std::abs(next - estimate) <= tol * std::max(1.0, next)) return next;
    estimate = next;
  }
  throw ConvergenceError("power iteration did not converge in " + std::to_string(max_iter) +
                         " iterations");
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double SigmoidAggregate::value(const Vector& y) const {
  double sum = 0.0;
  for (Index i = 0; i < y.size(); ++i) sum += logistic(slope * (y(i) - center));
  return sum;
}

Vector SigmoidAggregate::gradient(const Vector& y) const {
  Vector g(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double s = logistic(slope * (y(i) - center));
    g(i) = slope * s * (1.0 - s);
  }
  return g;
}

namespace {

void write_columns(std::ostream& out, const Matrix& columns, char prefix) {
  out << 't';
  for (Index i = 0; i < columns.rows(); ++i) out << ',' << prefix << i;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (Index t = 0; t < columns.cols(); ++t) {
    out << t;
    for (Index i = 0; i < columns.rows(); ++i) out << ',' << columns(i, t);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace

void write_state_csv(std::ostream& out, const Trajectory& trajectory) {
  write_columns(out, trajectory.states(), 'x');
}

void write_control_csv(std::ostream& out, const Trajectory& trajectory) {
  write_columns(out, trajectory.controls(), 'u');
}

}  // namespace ferment
