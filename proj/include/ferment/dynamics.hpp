#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ferment/linalg.hpp"

namespace ferment {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Controlled opinion dynamics  x(t+1) = A x(t) + B u(t) + (I - A) q.
///
/// B is stored implicitly as the list of controlled nodes: control k drives
/// node controlled()[k]. The cost of a control vector is uᵀ R u.
class InfluenceModel {
 public:
  /// Validates: A square, nonnegative and substochastic; q >= 0; controlled
  /// nodes distinct and in range; R symmetric positive definite.
  InfluenceModel(Matrix influence, Vector quiescent, std::vector<int> controlled, Matrix cost);

  /// Model with R = I.
  InfluenceModel(Matrix influence, Vector quiescent, std::vector<int> controlled);

  Index num_nodes() const { return a_.rows(); }
  Index num_controls() const { return static_cast<Index>(controlled_.size()); }

  const Matrix& influence() const { return a_; }
  const Vector& quiescent() const { return q_; }
  const std::vector<int>& controlled() const { return controlled_; }
  const Matrix& cost_matrix() const { return r_; }

  /// The n x m placement matrix B.
  Matrix placement() const;
  /// (I - A) q, the constant forcing term.
  const Vector& forcing() const { return forcing_; }
  /// B u without forming B.
  Vector actuate(const Vector& u) const;
  /// Bᵀ v without forming B.
  Vector restrict(const Vector& v) const;
  /// R⁻¹ v.
  Vector cost_inverse_times(const Vector& v) const;

  double control_cost(const Vector& u) const { return u.dot(r_ * u); }

 private:
  Matrix a_;
  Vector q_;
  std::vector<int> controlled_;
  Matrix r_;
  Vector forcing_;
  Eigen::LLT<Matrix> r_factor_;
};

/// Model whose diagonal cost R(k,k) is the per-node weight of the node that
/// control k drives.
InfluenceModel model_with_node_costs(const Matrix& influence, const Vector& quiescent,
                                     std::vector<int> controlled, const Vector& node_costs);

/// State sequence x(0..T) as columns of an n x (T+1) matrix and controls
/// u(0..T-1) as columns of an m x T matrix. The cost is cached.
class Trajectory {
 public:
  Trajectory(Matrix states, Matrix controls, double cost);

  Index horizon() const { return controls_.cols(); }
  const Matrix& states() const { return states_; }
  const Matrix& controls() const { return controls_; }
  Vector state(Index t) const { return states_.col(t); }
  Vector control(Index t) const { return controls_.col(t); }
  double cost() const { return cost_; }

  /// Largest entrywise violation of the step recursion under `model`.
  double max_step_defect(const InfluenceModel& model) const;

 private:
  Matrix states_;
  Matrix controls_;
  double cost_;
};

/// One step of the controlled dynamics.
Vector step(const InfluenceModel& model, const Vector& x, const Vector& u);

/// Rolls the dynamics forward from x0 with controls given column-wise
/// (m x T). `controls` may have zero rows for free evolution.
Trajectory simulate(const InfluenceModel& model, const Vector& x0, const Matrix& controls);

/// Free evolution for T steps.
Trajectory simulate_free(const InfluenceModel& model, const Vector& x0, Index horizon);

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest eigenvalue modulus by power iteration from the all-ones vector.
/// Throws ConvergenceError when the estimate has not settled to `tol` after
/// `max_iter` iterations.
double spectral_radius(const Matrix& a, double tol = 1e-10, int max_iter = 100000);

/// ψ(y) = Σ 1 / (1 + exp(-slope (y_i - center))), the smooth count of nodes
/// above `center`.
struct SigmoidAggregate {
  double center = 0.7;
  double slope = 1.0;

  double value(const Vector& y) const;
  Vector gradient(const Vector& y) const;
};

/// Logistic function evaluated without overflow.
double logistic(double z);

/// Writes `t,x0,...,x{n-1}` rows; 17 significant digits.
void write_state_csv(std::ostream& out, const Trajectory& trajectory);
/// Writes `t,u0,...,u{m-1}` rows; 17 significant digits.
void write_control_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace ferment
