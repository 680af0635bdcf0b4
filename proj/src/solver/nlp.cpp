#include "ferment/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "random.hpp"

namespace ferment {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

using Function = std::function<double(const Vector&, Vector&)>;

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;
  Vector z;
  Vector g;
};

// Strong Wolfe line search (Nocedal & Wright, Alg. 3.5/3.6).
class LineSearch {
 public:
  LineSearch(const Function& fun, const Vector& z, double f0, const Vector& d, double slope0)
      : fun_(fun), z_(z), f0_(f0), d_(d), slope0_(slope0) {}

  bool run(double alpha0, Point& out) {
    Point prev{0.0, f0_, slope0_, {}, {}};
    double alpha = alpha0;
    for (int i = 0; i < 50; ++i) {
      Point cur = eval(alpha);
      if (!std::isfinite(cur.f)) {
        alpha *= 0.1;
        continue;
      }
      if (!decrease_ok(cur) || (i > 0 && cur.f >= prev.f && cur.f > f0_ + 1e-12 * std::abs(f0_))) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -kC2 * slope0_ ||
          (decrease_ok(cur) && cur.f > f0_ + kC1 * alpha * slope0_)) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

 private:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;

  // Sufficient decrease, or (approximate Wolfe, Hager & Zhang) a value
  // change lost in roundoff together with a slope that has flattened.
  bool decrease_ok(const Point& p) const {
    if (p.f <= f0_ + kC1 * p.alpha * slope0_) return true;
    return p.f <= f0_ + 1e-12 * std::abs(f0_) && p.slope >= kC2 * slope0_ &&
           p.slope <= (2.0 * kC1 - 1.0) * slope0_;
  }

  Point eval(double alpha) const {
    Point p;
    p.alpha = alpha;
    p.z = z_ + alpha * d_;
    p.f = fun_(p.z, p.g);
    p.slope = p.g.dot(d_);
    return p;
  }

  bool zoom(Point lo, Point hi, Point& out) const {
    for (int j = 0; j < 60; ++j) {
      const double width = hi.alpha - lo.alpha;
      double alpha = lo.alpha + 0.5 * width;
      const double denom = 2.0 * (hi.f - lo.f - lo.slope * width);
      if (denom > 0.0) {
        const double trial = lo.alpha - lo.slope * width * width / denom;
        const double a = std::min(lo.alpha, hi.alpha);
        const double b = std::max(lo.alpha, hi.alpha);
        const double margin = 0.1 * (b - a);
        if (trial > a + margin && trial < b - margin) alpha = trial;
      }
      if (std::abs(width) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
      Point cur = eval(alpha);
      if (!decrease_ok(cur) || (cur.f >= lo.f && cur.f > f0_ + 1e-12 * std::abs(f0_))) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kC2 * slope0_ ||
            (decrease_ok(cur) && cur.f > f0_ + kC1 * alpha * slope0_)) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    // Settle for sufficient decrease if curvature could not be met.
    if (lo.alpha > 0.0 && lo.f < f0_) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const Function& fun_;
  const Vector& z_;
  double f0_;
  const Vector& d_;
  double slope0_;
};

struct LbfgsResult {
  double f = 0.0;
  Vector g;
  int iterations = 0;
  bool converged = false;
};

LbfgsResult minimize_lbfgs(const Function& fun, Vector& z, double tol, int max_iter, int memory) {
  LbfgsResult r;
  r.f = fun(z, r.g);
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  while (r.iterations < max_iter) {
    if (inf_norm(r.g) <= tol) {
      r.converged = true;
      return r;
    }
    // Two-loop recursion.
    Vector d = -r.g;
    std::vector<double> a(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      a[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(d);
      d += (a[i] - b) * s_hist[i];
    }
    double slope = r.g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -r.g;
      slope = r.g.dot(d);
    }
    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / inf_norm(r.g)) : 1.0;
    Point next;
    LineSearch search(fun, z, r.f, d, slope);
    if (!search.run(alpha0, next)) {
      if (s_hist.empty()) return r;  // stalled on steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      ++r.iterations;
      continue;
    }
    Vector s = next.z - z;
    Vector y = next.g - r.g;
    const double sy = s.dot(y);
    z = std::move(next.z);
    r.f = next.f;
    r.g = std::move(next.g);
    ++r.iterations;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  r.converged = inf_norm(r.g) <= tol;
  return r;
}

}  // namespace

void SmoothNlp::validate() const {
  if (num_variables <= 0) throw std::invalid_argument("NLP needs at least one variable");
  if (num_equalities < 0 || num_inequalities < 0) {
    throw std::invalid_argument("NLP constraint counts must be nonnegative");
  }
  if (!objective) throw std::invalid_argument("NLP objective callback missing");
  if (num_constraints() > 0 && (!constraints || !constraint_vjp)) {
    throw std::invalid_argument("NLP constraint callbacks missing");
  }
}

std::string to_string(NlpStatus status) {
  switch (status) {
    case NlpStatus::optimal: return "optimal";
    case NlpStatus::iteration_limit: return "iteration-limit";
    case NlpStatus::constraint_violation: return "constraint-violation";
  }
  return "unknown";
}

NlpSolution solve_nlp(const SmoothNlp& p, const Vector& z0, const NlpSettings& settings) {
  p.validate();
  if (z0.size() != p.num_variables) throw std::invalid_argument("NLP start has the wrong length");
  if (!(settings.tol > 0.0)) throw std::invalid_argument("NLP tolerance must be positive");

  const Index me = p.num_equalities;
  const Index mi = p.num_inequalities;
  const Index mc = me + mi;
  Vector nu = Vector::Zero(me);
  Vector lambda = Vector::Zero(mi);
  double penalty = settings.initial_penalty;

  auto constraint_values = [&](const Vector& z) {
    if (mc == 0) return Vector(0);
    Vector c = p.constraints(z);
    if (c.size() != mc) throw std::invalid_argument("NLP constraint callback has the wrong length");
    return c;
  };

  const Function augmented = [&](const Vector& z, Vector& grad) {
    const double f = p.objective(z, grad);
    if (mc == 0) return f;
    const Vector c = constraint_values(z);
    const Vector ce = c.head(me);
    const Vector shifted = (lambda - penalty * c.tail(mi)).cwiseMax(0.0);
    const double value = f - nu.dot(ce) + 0.5 * penalty * ce.squaredNorm() +
                         (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * penalty);
    Vector w(mc);
    w << -(nu - penalty * ce), -shifted;
    grad += p.constraint_vjp(z, w);
    return value;
  };

  NlpSolution sol;
  sol.z = z0;
  double inner_tol = mc == 0 ? settings.tol : std::max(1e-2, settings.tol);
  double previous_violation = std::numeric_limits<double>::infinity();

  for (int outer = 1; outer <= settings.max_outer; ++outer) {
    const LbfgsResult inner = minimize_lbfgs(augmented, sol.z, inner_tol, settings.max_inner,
                                             settings.lbfgs_memory);
    sol.inner_iterations += inner.iterations;
    sol.outer_iterations = outer;

    const Vector c = constraint_values(sol.z);
    const Vector ce = c.head(me);
    const Vector ci = c.tail(mi);
    nu -= penalty * ce;
    lambda = (lambda - penalty * ci).cwiseMax(0.0);

    // With the updated multipliers the Lagrangian gradient equals the
    // augmented-Lagrangian gradient at the inner solution.
    sol.stationarity_residual = inf_norm(inner.g);
    sol.constraint_violation = std::max(inf_norm(ce), inf_norm((-ci).cwiseMax(0.0)));
    sol.complementarity_residual = inf_norm(lambda.cwiseProduct(ci));

    if (sol.constraint_violation <= settings.tol && sol.stationarity_residual <= settings.tol &&
        sol.complementarity_residual <= settings.tol) {
      sol.status = NlpStatus::optimal;
      break;
    }
    if (sol.constraint_violation > settings.tol &&
        sol.constraint_violation > 0.25 * previous_violation) {
      penalty = std::min(10.0 * penalty, settings.max_penalty);
    }
    previous_violation = sol.constraint_violation;
    inner_tol = std::max(0.5 * settings.tol, 0.1 * inner_tol);
  }
  if (sol.status != NlpStatus::optimal && sol.constraint_violation > settings.tol) {
    sol.status = NlpStatus::constraint_violation;
  }
  Vector grad(p.num_variables);
  sol.objective = p.objective(sol.z, grad);
  sol.eq_duals = nu;
  sol.in_duals = lambda;
  return sol;
}

GradientCheck check_gradients(const SmoothNlp& p, const Vector& z, std::uint64_t seed, int probes,
                              double step) {
  p.validate();
  detail::Rng rng(seed);
  auto random_vector = [&](Index size) {
    Vector v(size);
    for (Index i = 0; i < size; ++i) v(i) = 2.0 * rng.uniform() - 1.0;
    return v;
  };
  auto relative = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };
  GradientCheck check;
  Vector grad(p.num_variables), scratch(p.num_variables);
  p.objective(z, grad);
  for (int k = 0; k < probes; ++k) {
    const Vector v = random_vector(p.num_variables);
    const double fd =
        (p.objective(z + step * v, scratch) - p.objective(z - step * v, scratch)) / (2.0 * step);
    check.objective_error = std::max(check.objective_error, relative(grad.dot(v), fd));
    if (p.num_constraints() > 0) {
      const Vector w = random_vector(p.num_constraints());
      const double analytic = p.constraint_vjp(z, w).dot(v);
      const double cfd =
          (w.dot(p.constraints(z + step * v)) - w.dot(p.constraints(z - step * v))) / (2.0 * step);
      check.constraint_error = std::max(check.constraint_error, relative(analytic, cfd));
    }
  }
  return check;
}

}  // namespace ferment
