#include "ferment/maxmin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ferment {

MaxminPath forward_sweep(const InfluenceModel& model, const SigmoidAggregate& psi, const Vector& x0,
                         const Matrix& controls) {
  const Index n = model.num_nodes();
  const Index T = controls.cols();
  if (x0.size() != n) throw ModelError("initial state has the wrong length");
  if (controls.rows() != model.num_controls()) throw ModelError("control matrix has the wrong row count");

  MaxminPath path{Matrix(n, T + 1), Vector(T + 1), Vector(T + 1)};
  path.x.col(0) = x0;
  path.r(0) = psi.value(x0);
  path.y(0) = 0.0;
  for (Index t = 0; t < T; ++t) {
    const Vector u = controls.col(t);
    path.x.col(t + 1) = step(model, path.x.col(t), u);
    path.r(t + 1) = std::min(path.r(t), psi.value(path.x.col(t)));
    path.y(t + 1) = path.y(t) + model.control_cost(u);
  }
  return path;
}

BackwardSweep backward_sweep(const InfluenceModel& model, const SigmoidAggregate& psi,
                             const MaxminPath& path, double lambda_y) {
  if (lambda_y == 0.0) throw std::invalid_argument("lambda_y must be nonzero");
  const Matrix& A = model.influence();
  const Index n = model.num_nodes();
  const Index m = model.num_controls();
  const Index T = path.horizon();

  BackwardSweep out;
  out.lambda_x = Matrix::Zero(n, T + 1);
  out.lambda_r = Vector::Zero(T + 1);
  out.phi = Vector::Zero(T);
  out.cases.assign(static_cast<std::size_t>(T), AdjointCase::slack);
  out.controls = Matrix::Zero(m, T);
  out.lambda_r(T) = 1.0;

  const double scale = 1.0 / (2.0 * lambda_y);
  // x(tau+1) as a function of the candidate control built from lambda.
  auto response = [&](const Vector& lambda) {
    return Vector(model.actuate(model.cost_inverse_times(model.restrict(lambda))) * scale);
  };

  for (Index tau = T - 1; tau >= 0; --tau) {
    const Vector base = A.transpose() * out.lambda_x.col(tau + 1);
    const double lr = out.lambda_r(tau + 1);
    double phi = 0.0;
    AdjointCase kind = AdjointCase::slack;

    if (tau < T - 1 && lr != 0.0) {
      const Vector grad = lr * psi.gradient(path.x.col(tau + 1));
      const Vector origin = A * path.x.col(tau) + model.forcing() + response(base);
      const Vector dir = response(grad);
      const double target = psi.value(path.x.col(tau));
      auto g = [&](double f) { return psi.value(origin + f * dir) - target; };
      auto slope_at = [&](double f) { return psi.gradient(origin + f * dir).dot(dir); };

      double lo = -2.0;
      double hi = 3.0;
      const double g_lo = g(lo);
      const double g_hi = g(hi);
      if ((g_lo <= 0.0) != (g_hi <= 0.0)) {
        // Newton inside the bracket, bisecting whenever it would leave it.
        const bool rising = g_lo <= 0.0;
        double f = 0.5 * (lo + hi);
        for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
          const double value = g(f);
          if (value == 0.0) {
            lo = hi = f;
            break;
          }
          if ((value < 0.0) == rising) {
            lo = f;
          } else {
            hi = f;
          }
          const double d = slope_at(f);
          double next = d != 0.0 ? f - value / d : lo - 1.0;
          if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
          if (std::abs(next - f) < 1e-15 * std::max(1.0, std::abs(f))) {
            lo = hi = next;
            break;
          }
          f = next;
        }
        const double root = 0.5 * (lo + hi);
        if (root > 1.0) {
          kind = AdjointCase::binding;
        } else if (root >= 0.0) {
          kind = AdjointCase::split;
          phi = root;
        }
      } else {
        ++out.fallbacks;
        if (g_lo < 0.0) kind = AdjointCase::binding;
      }

      if (kind == AdjointCase::binding) phi = 1.0;
      out.lambda_x.col(tau) = base + phi * grad;
      out.lambda_r(tau) = (1.0 - phi) * lr;
    } else {
      out.lambda_x.col(tau) = base;
      out.lambda_r(tau) = lr;
    }
    out.phi(tau) = phi;
    out.cases[static_cast<std::size_t>(tau)] = kind;
    out.controls.col(tau) = model.cost_inverse_times(model.restrict(out.lambda_x.col(tau))) * scale;
  }
  return out;
}

double maxmin_hamiltonian(const InfluenceModel& model, const SigmoidAggregate& psi,
                          const Vector& lambda_x, double lambda_r, double lambda_y, const Vector& x,
                          double r, double y, const Vector& u) {
  return lambda_x.dot(step(model, x, u)) + lambda_r * std::min(r, psi.value(x)) +
         lambda_y * (y + model.control_cost(u));
}

double hamiltonian_directional_derivative(const InfluenceModel& model, const SigmoidAggregate& psi,
                                          const Vector& lambda_x, double lambda_r, const Vector& x,
                                          const Vector& v_x, double v_r) {
  const double along_psi = psi.gradient(x).dot(v_x);
  return lambda_x.dot(model.influence() * v_x) + lambda_r * std::min(along_psi, v_r);
}

std::string to_string(MfStatus status) {
  switch (status) {
    case MfStatus::converged: return "converged";
    case MfStatus::iteration_limit: return "iteration-limit";
    case MfStatus::oscillation: return "oscillation";
    case MfStatus::abnormal: return "abnormal";
  }
  return "unknown";
}

namespace {

struct InnerResult {
  Matrix controls;
  int iterations = 0;
  int fallbacks = 0;
  bool converged = false;
};

InnerResult relax_sweeps(const InfluenceModel& model, const SigmoidAggregate& psi, const Vector& x0,
                         int horizon, double lambda_y, const MfSettings& settings) {
  InnerResult res;
  res.controls = Matrix::Zero(model.num_controls(), horizon);
  double gain = 1.0 - settings.relaxation;
  double best = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int j = 0; j < settings.max_inner; ++j) {
    const MaxminPath path = forward_sweep(model, psi, x0, res.controls);
    const BackwardSweep sweep = backward_sweep(model, psi, path, lambda_y);
    res.fallbacks += sweep.fallbacks;
    const Matrix next = (1.0 - gain) * res.controls + gain * sweep.controls;
    const double change = (next - res.controls).norm();
    res.controls = next;
    res.iterations = j + 1;
    if (change < settings.eps1) {
      res.converged = true;
      break;
    }
    // Case switches can leave the sweep chattering around a fixed point;
    // damp harder once the step size stops setting new lows.
    if (change < best) {
      best = change;
      stalled = 0;
    } else if (++stalled >= settings.stall_window) {
      gain *= 0.5;
      stalled = 0;
    }
  }
  return res;
}

double total_cost(const InfluenceModel& model, const Matrix& controls) {
  double sum = 0.0;
  for (Index t = 0; t < controls.cols(); ++t) sum += model.control_cost(controls.col(t));
  return sum;
}

}  // namespace

MfSolution solve_mf(const InfluenceModel& model, const SigmoidAggregate& psi, const Vector& x0,
                    double budget, int horizon, const MfSettings& settings) {
  if (!(budget >= 0.0)) throw ModelError("budget must be nonnegative");
  if (horizon < 1) throw ModelError("horizon T must be at least 1");
  if (x0.size() != model.num_nodes()) throw ModelError("initial state has the wrong length");
  if (!(settings.relaxation > 0.0 && settings.relaxation < 1.0)) {
    throw ModelError("relaxation weight must lie in (0, 1)");
  }
  if (!(settings.eps1 > 0.0 && settings.eps2 > 0.0)) throw ModelError("tolerances must be positive");

  Matrix controls = Matrix::Zero(model.num_controls(), horizon);
  MfStatus status = MfStatus::converged;
  double lambda_used = 0.0;
  int inner_total = 0;
  int outer = 0;
  int fallbacks = 0;
  bool corrected = false;

  if (budget > 0.0) {
    double lambda_y = 1.0;
    double step = settings.step > 0.0 ? settings.step : 1e-3 * budget;
    double sign = 1.0;
    double prev_gap = 0.0;
    const double min_step = std::ldexp(step, -settings.max_halvings);
    status = MfStatus::iteration_limit;
    bool inner_ok = false;

    for (outer = 1; outer <= settings.max_outer; ++outer) {
      const InnerResult inner = relax_sweeps(model, psi, x0, horizon, lambda_y, settings);
      inner_total += inner.iterations;
      fallbacks += inner.fallbacks;
      controls = inner.controls;
      lambda_used = lambda_y;
      inner_ok = inner.converged;

      const double gap = total_cost(model, controls) - budget;
      if (outer == 2 && (gap > 0.0) == (prev_gap > 0.0) && std::abs(gap) > std::abs(prev_gap)) {
        sign = -sign;
        corrected = true;
      } else if (outer > 1 && (gap > 0.0) != (prev_gap > 0.0)) {
        step *= 0.5;
        if (step < min_step) {
          status = MfStatus::oscillation;
          break;
        }
      } else if (outer > 1) {
        step *= settings.step_growth;
      }
      prev_gap = gap;

      // E scales roughly like lambda_y^-2, so one update may at most halve
      // or double the multiplier.
      const double next = std::clamp(lambda_y - sign * step * gap, 0.5 * lambda_y, 2.0 * lambda_y);
      const double delta = next - lambda_y;
      lambda_y = next;
      if (std::abs(lambda_y) < 1e-12) {
        status = MfStatus::abnormal;
        break;
      }
      if (std::abs(delta) < settings.eps2) {
        status = inner_ok ? MfStatus::converged : MfStatus::iteration_limit;
        break;
      }
    }
    if (outer > settings.max_outer) outer = settings.max_outer;

    const double spent = total_cost(model, controls);
    if (spent > budget) controls *= std::sqrt(budget / spent);
  }

  MfSolution sol{simulate(model, x0, controls), forward_sweep(model, psi, x0, controls)};
  sol.attained = sol.path.attained();
  sol.expenditure = sol.path.expenditure();
  sol.budget = budget;
  sol.lambda_y = lambda_used;
  sol.complementarity_residual = std::abs(lambda_used * (sol.expenditure - budget));
  sol.inner_iterations = inner_total;
  sol.outer_iterations = outer;
  sol.fallbacks = fallbacks;
  sol.sign_corrected = corrected;
  sol.status = status;
  return sol;
}

nlohmann::json to_json(const MfSolution& sol) {
  return {{"attained", sol.attained},
          {"expenditure", sol.expenditure},
          {"budget", sol.budget},
          {"lambda_y_T", sol.lambda_y},
          {"complementarity_residual", sol.complementarity_residual},
          {"iterations", {{"inner", sol.inner_iterations}, {"outer", sol.outer_iterations}}},
          {"fallbacks", sol.fallbacks},
          {"sign_corrected", sol.sign_corrected},
          {"status", to_string(sol.status)}};
}

}  // namespace ferment
