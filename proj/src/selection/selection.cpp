#include "ferment/selection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "parallel.hpp"

namespace ferment {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

void check_sizes(const InfluenceGraph& g, const Vector& quiescent, const Vector* tau, int m) {
  if (quiescent.size() != g.size()) throw ModelError("quiescent vector has the wrong length");
  if (tau && tau->size() != g.size()) throw ModelError("threshold vector has the wrong length");
  if (m < 1 || m > g.size()) throw ModelError("m must lie in [1, n]");
}

std::vector<char> reach_from(const Matrix& influence, Index source) {
  const Index n = influence.rows();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::deque<Index> frontier{source};
  seen[source] = 1;
  while (!frontier.empty()) {
    const Index j = frontier.front();
    frontier.pop_front();
    for (Index i = 0; i < n; ++i) {
      if (!seen[i] && influence(i, j) > 0.0) {
        seen[i] = 1;
        frontier.push_back(i);
      }
    }
  }
  return seen;
}

std::vector<int> with_node(const std::vector<int>& nodes, int extra) {
  std::vector<int> out = nodes;
  out.push_back(extra);
  return out;
}

std::vector<int> candidates_outside(int n, const std::vector<int>& chosen) {
  std::vector<int> out;
  for (int j = 0; j < n; ++j) {
    if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) out.push_back(j);
  }
  return out;
}

// Score of one candidate set: infinite cost when infeasible, nothing when the
// solver failed.
struct Scored {
  double cost = kInfinity;
  std::optional<Vector> controls;
};

// Grows `chosen` to `limit` nodes by repeated argmin of `score`.
template <typename Score>
void greedy_fill(SelectionResult& res, int n, std::size_t limit, int workers, std::optional<Vector> warm,
                 Score&& score) {
  while (res.nodes.size() < limit) {
    const std::vector<int> pool = candidates_outside(n, res.nodes);
    std::vector<std::optional<Scored>> scores(pool.size());
    detail::parallel_for(pool.size(), workers, [&](std::size_t i) {
      std::optional<Vector> start;
      if (warm) {
        start = Vector::Zero(warm->size() + 1);
        start->head(warm->size()) = *warm;
      }
      scores[i] = score(with_node(res.nodes, pool[i]), start);
    });

    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!scores[i]) {
        ++res.skipped_candidates;
        continue;
      }
      if (best == pool.size() || scores[i]->cost < scores[best]->cost) best = i;
    }
    if (best == pool.size()) throw SolverFailure("no candidate could be scored in a greedy step");
    if (!std::isfinite(scores[best]->cost)) throw InfeasibleProblem("no candidate completes a feasible set");
    res.nodes.push_back(pool[best]);
    res.per_step_costs.push_back(scores[best]->cost);
    warm = scores[best]->controls;
  }
  res.final_cost = res.per_step_costs.back();
}

std::size_t target_size(std::size_t cover, int m, int n, bool counts) {
  if (counts) {
    if (cover > static_cast<std::size_t>(m)) {
      throw InfeasibleProblem("reachability cover needs " + std::to_string(cover) + " nodes, more than m = " +
                              std::to_string(m));
    }
    return static_cast<std::size_t>(m);
  }
  return std::min(cover + static_cast<std::size_t>(m), static_cast<std::size_t>(n));
}

}  // namespace

nlohmann::json to_json(const SelectionResult& result) {
  nlohmann::json costs = nlohmann::json::array();
  for (double c : result.per_step_costs) costs.push_back(std::isfinite(c) ? nlohmann::json(c) : nlohmann::json());
  return {{"method", result.method},
          {"nodes", result.nodes},
          {"per_step_costs", costs},
          {"final_cost", std::isfinite(result.final_cost) ? nlohmann::json(result.final_cost) : nlohmann::json()},
          {"feasible", result.feasible}};
}

std::vector<int> reachability_cover(const Matrix& influence, const Vector& quiescent, const Vector& tau) {
  const Index n = influence.rows();
  std::vector<char> need(static_cast<std::size_t>(n), 0);
  Index remaining = 0;
  for (Index i = 0; i < n; ++i) {
    if (tau(i) > quiescent(i)) {
      need[i] = 1;
      ++remaining;
    }
  }
  std::vector<std::vector<char>> reach;
  reach.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) reach.push_back(reach_from(influence, k));

  std::vector<int> cover;
  while (remaining > 0) {
    Index best = -1;
    Index best_gain = 0;
    for (Index k = 0; k < n; ++k) {
      Index gain = 0;
      for (Index i = 0; i < n; ++i) gain += need[i] && reach[k][i];
      if (gain > best_gain) {
        best = k;
        best_gain = gain;
      }
    }
    cover.push_back(static_cast<int>(best));
    for (Index i = 0; i < n; ++i) {
      if (reach[best][i]) need[i] = 0;
    }
    remaining -= best_gain;
  }
  return cover;
}

std::optional<double> equilibrium_cost(const Matrix& influence, const Vector& quiescent,
                                       const Vector& tau, const std::vector<int>& nodes,
                                       const QpSettings& settings) {
  if (!feasibility_check(influence, nodes, quiescent, tau).feasible) return std::nullopt;
  return tf_equilibrium(InfluenceModel(influence, quiescent, nodes), tau, settings).cost;
}

SelectionResult greedy_select_tf(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau,
                                 int m, const SelectionOptions& options) {
  check_sizes(g, quiescent, &tau, m);
  const Matrix a = g.influence_matrix();
  SelectionResult res;
  res.method = "greedy";
  res.nodes = reachability_cover(a, quiescent, tau);
  const std::size_t limit = target_size(res.nodes.size(), m, g.size(), options.cover_counts_toward_m);
  // The last cover pick is reopened: the first greedy step takes the
  // cheapest node that completes the cover.
  if (!res.nodes.empty()) res.nodes.pop_back();
  greedy_fill(res, g.size(), limit, options.workers, std::nullopt,
              [&](const std::vector<int>& nodes, const std::optional<Vector>& start) -> std::optional<Scored> {
                if (!feasibility_check(a, nodes, quiescent, tau).feasible) return Scored{};
                try {
                  const std::optional<Vector> guess =
                      start && start->size() == static_cast<Index>(nodes.size()) ? start : std::nullopt;
                  const EquilibriumPoint eq =
                      tf_equilibrium(InfluenceModel(a, quiescent, nodes), tau, options.qp, guess);
                  return Scored{eq.cost, eq.u_e};
                } catch (const SolverFailure&) {
                  return std::nullopt;
                }
              });
  return res;
}

SelectionResult greedy_select_gf(const InfluenceGraph& g, const GfSelectionProblem& p, int m,
                                 const SelectionOptions& options) {
  check_sizes(g, p.quiescent, nullptr, m);
  const Matrix a = g.influence_matrix();
  const Vector centers = Vector::Constant(g.size(), p.psi.center);
  auto solve = [&](const std::vector<int>& nodes) -> std::optional<Scored> {
    try {
      const GfProblem problem{InfluenceModel(a, p.quiescent, nodes), p.x0, p.psi, p.k, p.T0, p.T};
      const OcpSolution sol = solve_gf(problem, options.nlp);
      if (sol.status != OcpStatus::optimal) return std::nullopt;
      return Scored{sol.cost, std::nullopt};
    } catch (const SolverFailure&) {
      return std::nullopt;
    }
  };

  SelectionResult res;
  res.method = "greedy-gf";
  res.nodes = reachability_cover(a, p.quiescent, centers);
  const std::size_t limit = target_size(res.nodes.size(), m, g.size(), options.cover_counts_toward_m);
  if (!res.nodes.empty()) res.nodes.pop_back();
  greedy_fill(res, g.size(), limit, options.workers, std::nullopt,
              [&](const std::vector<int>& nodes, const std::optional<Vector>&) -> std::optional<Scored> {
                if (!feasibility_check(a, nodes, p.quiescent, centers).feasible) return Scored{};
                return solve(nodes);
              });
  return res;
}

SelectionResult lasso_select(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau, int m,
                             const std::vector<double>& mu_grid, const QpSettings& settings) {
  check_sizes(g, quiescent, &tau, m);
  if (mu_grid.empty()) throw ModelError("mu grid must not be empty");
  if (!std::is_sorted(mu_grid.begin(), mu_grid.end())) throw ModelError("mu grid must be ascending");
  const Matrix a = g.influence_matrix();

  RelaxationResult pick;
  for (double mu : mu_grid) {
    pick = convex_relaxation(a, quiescent, tau, mu, settings);
    if (pick.support.size() <= static_cast<std::size_t>(m)) break;
  }
  std::vector<int> order(static_cast<std::size_t>(g.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(pick.u_tilde(i)) > std::abs(pick.u_tilde(j));
  });
  order.resize(static_cast<std::size_t>(m));

  SelectionResult res;
  res.method = "lasso";
  res.nodes = order;
  const std::optional<double> cost = equilibrium_cost(a, quiescent, tau, res.nodes, settings);
  res.feasible = cost.has_value();
  res.final_cost = cost.value_or(kInfinity);
  res.per_step_costs = {res.final_cost};
  return res;
}

Baseline parse_baseline(const std::string& name) {
  if (name == "degree") return Baseline::degree;
  if (name == "distance") return Baseline::distance;
  throw std::invalid_argument("unknown baseline method '" + name + "'");
}

std::string to_string(Baseline method) {
  return method == Baseline::degree ? "degree" : "distance";
}

SelectionResult baseline_select(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau, int m,
                                Baseline method, const QpSettings& settings) {
  check_sizes(g, quiescent, &tau, m);
  SelectionResult res;
  res.method = to_string(method);
  res.nodes = method == Baseline::degree ? degree_centers(g, m) : distance_centers(g, m);
  const std::optional<double> cost = equilibrium_cost(g.influence_matrix(), quiescent, tau, res.nodes, settings);
  res.feasible = cost.has_value();
  res.final_cost = cost.value_or(kInfinity);
  res.per_step_costs = {res.final_cost};
  return res;
}

}  // namespace ferment
