#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ferment/equilibrium.hpp"
#include "ferment/graph.hpp"
#include "ferment/ocp.hpp"

namespace ferment {

struct SelectionResult {
  std::vector<int> nodes;
  std::string method;
  /// Cost after each greedy addition; a single entry for the other methods.
  std::vector<double> per_step_costs;
  /// +infinity when the set cannot meet the thresholds.
  double final_cost = 0.0;
  bool feasible = true;
  /// Greedy candidates whose score could not be computed.
  int skipped_candidates = 0;
};

/// {method, nodes, per_step_costs, final_cost}; infinite costs become null.
nlohmann::json to_json(const SelectionResult& result);

struct SelectionOptions {
  /// Nodes forced in by the reachability cover use up part of m.
  bool cover_counts_toward_m = true;
  /// Threads for candidate evaluation within one greedy step (0 = hardware).
  int workers = 1;
  QpSettings qp;
  NlpSettings nlp;
};

/// Greedy set cover of the rows with tau_i > q_i by forward-reachable sets:
/// repeatedly takes the node reaching the most uncovered rows (smaller index
/// on ties) until all are covered. Nodes are returned in pick order.
std::vector<int> reachability_cover(const Matrix& influence, const Vector& quiescent, const Vector& tau);

/// Minimum equilibrium cost with the given controlled nodes, or nothing when
/// some thresholded row is unreachable.
std::optional<double> equilibrium_cost(const Matrix& influence, const Vector& quiescent,
                                       const Vector& tau, const std::vector<int>& nodes,
                                       const QpSettings& settings = {});

/// Starts from the reachability cover and adds, one node at a time, the
/// candidate with the smallest equilibrium cost (smaller index on ties).
/// The last cover node is not fixed: the first step picks the cheapest node
/// that completes the cover, so in a strongly connected graph no node is
/// forced in. Throws InfeasibleProblem when the cover alone needs more than
/// m nodes.
SelectionResult greedy_select_tf(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau,
                                 int m, const SelectionOptions& options = {});

struct GfSelectionProblem {
  Vector quiescent;
  Vector x0;
  /// Sigmoid center and slope.
  SigmoidAggregate psi;
  double k = 0.5;
  int T0 = 1;
  int T = 1;
};

/// As greedy_select_tf with each candidate scored by the GF optimal cost.
/// The cover is taken over rows with psi.center > q_i. Candidates whose
/// solve fails are skipped; SolverFailure if a whole step fails.
SelectionResult greedy_select_gf(const InfluenceGraph& g, const GfSelectionProblem& p, int m,
                                 const SelectionOptions& options = {});

/// Solves the l1 relaxation for each mu in the ascending grid and keeps the
/// first whose support has at most m nodes (the largest mu if none does);
/// returns the m largest |u~| entries there (smaller index on ties).
SelectionResult lasso_select(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau, int m,
                             const std::vector<double>& mu_grid, const QpSettings& settings = {});

enum class Baseline { degree, distance };

Baseline parse_baseline(const std::string& name);
std::string to_string(Baseline method);

/// Degree or distance centers scored by their equilibrium cost.
SelectionResult baseline_select(const InfluenceGraph& g, const Vector& quiescent, const Vector& tau, int m,
                                Baseline method, const QpSettings& settings = {});

}  // namespace ferment
