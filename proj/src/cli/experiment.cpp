#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include "cli/pipeline.hpp"
#include "ferment/turnpike.hpp"
#include "parallel.hpp"

namespace ferment::cli {

namespace detail {

Instance build_instance(const ExperimentConfig& config, std::uint64_t seed) {
  GraphSpec spec = config.graph;
  spec.seed = seed;
  InfluenceGraph graph = generate(spec);
  const Index n = graph.size();
  return Instance{std::move(graph), config.quiescent.expand(n, "model/q"), config.tau.expand(n, "model/tau"),
                  config.x0.expand(n, "model/x0"), seed};
}

SigmoidAggregate make_psi(const ExperimentConfig& config) {
  return SigmoidAggregate{config.tau.values.front(), config.slope};
}

SelectionResult select_nodes(const ExperimentConfig& config, const Instance& instance, const std::string& method,
                             int workers) {
  const InfluenceGraph& g = instance.graph;
  if (method == "nodes") {
    SelectionResult res;
    res.method = "nodes";
    res.nodes = config.nodes;
    for (int v : res.nodes) {
      if (v < 0 || v >= g.size()) throw ConfigError("config /selection/nodes lists a node outside the graph");
    }
    const auto cost = equilibrium_cost(g.influence_matrix(), instance.quiescent, instance.tau, res.nodes, config.qp);
    res.feasible = cost.has_value();
    res.final_cost = cost.value_or(INFINITY);
    res.per_step_costs = {res.final_cost};
    return res;
  }
  if (method == "degree" || method == "distance") {
    return baseline_select(g, instance.quiescent, instance.tau, config.m, parse_baseline(method), config.qp);
  }
  if (method == "lasso") return lasso_select(g, instance.quiescent, instance.tau, config.m, config.mu_grid, config.qp);

  SelectionOptions options;
  options.cover_counts_toward_m = config.cover_counts_toward_m;
  options.workers = workers;
  options.qp = config.qp;
  options.nlp = config.nlp;
  if (config.problem == ProblemType::gf) {
    const GfSelectionProblem p{instance.quiescent, instance.x0, make_psi(config), config.k, config.T0, config.T};
    return greedy_select_gf(g, p, config.m, options);
  }
  return greedy_select_tf(g, instance.quiescent, instance.tau, config.m, options);
}

InfluenceModel make_model(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes) {
  const Vector weights = config.r_diagonal.expand(instance.graph.size(), "model/r_diagonal");
  return model_with_node_costs(instance.graph.influence_matrix(), instance.quiescent, nodes, weights);
}

TfProblem make_tf(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes) {
  return TfProblem{make_model(config, instance, nodes), instance.x0, instance.tau, config.T0, config.T};
}

GfProblem make_gf(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes) {
  return GfProblem{make_model(config, instance, nodes), instance.x0, make_psi(config), config.k, config.T0, config.T};
}

ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& name, double value) {
  ExperimentConfig c = config;
  if (name == "m") {
    c.m = static_cast<int>(std::lround(value));
  } else if (name == "tau") {
    c.tau = Broadcast{{value}};
  } else if (name == "k") {
    c.k = value;
  } else if (name == "a") {
    c.slope = value;
  } else if (name == "budget") {
    c.budget = value;
  } else if (name == "T") {
    c.T = static_cast<int>(std::lround(value));
    if (c.T0 > c.T) throw ConfigError("config /experiment/values has T below T0");
  } else {
    throw ConfigError("unknown sweep parameter " + name);
  }
  return c;
}

RunRecord evaluate(const ExperimentConfig& config, const Instance& instance, const std::string& method,
                   double parameter) {
  RunRecord rec;
  rec.seed = instance.seed;
  rec.method = method;
  rec.parameter = parameter;

  SelectionResult sel;
  try {
    sel = select_nodes(config, instance, method, 1);
  } catch (const InfeasibleProblem& e) {
    rec.feasible = false;
    rec.value = INFINITY;
    rec.detail = {{"error", e.what()}};
    return rec;
  }
  rec.detail["selection"] = to_json(sel);
  // The cost depends on the set, not the pick order; a fixed order makes
  // two methods that pick the same set report bit-identical values.
  std::sort(sel.nodes.begin(), sel.nodes.end());
  // Baselines that miss a threshold row are infeasible for tf; gf and mf
  // have no per-row thresholds.
  if (!sel.feasible && config.problem == ProblemType::tf) {
    rec.feasible = false;
    rec.value = INFINITY;
    return rec;
  }

  switch (config.problem) {
    case ProblemType::tf: {
      const TfProblem p = make_tf(config, instance, sel.nodes);
      std::optional<OcpSolution> solved;
      try {
        solved.emplace(solve_tf(p, config.qp));
      } catch (const InfeasibleProblem& e) {
        rec.feasible = false;
        rec.value = INFINITY;
        rec.detail["error"] = e.what();
        return rec;
      }
      const OcpSolution& sol = *solved;
      if (sol.status != OcpStatus::optimal) {
        throw SolverFailure("tf solve ended with status " + to_string(sol.status) + " (seed " +
                            std::to_string(instance.seed) + ", method " + method + ")");
      }
      const EquilibriumPoint eq = tf_equilibrium(p.model, p.tau, config.qp);
      const TurnpikeReport tp = turnpike_report(sol, eq, config.epsilon);
      const CheapReachability cheap = cheap_reachability(p, sol, eq);
      rec.value = sol.cost;
      rec.detail["solution"] = summary_json(sol, eq);
      rec.detail["turnpike"] = {{"exceedance_count", tp.exceedance_count},
                                {"cheap_gap", tp.cheap_gap},
                                {"max_distance", *std::max_element(tp.distances.begin(), tp.distances.end())}};
      rec.detail["cheap_reachability"] = {{"checked", cheap.checked},
                                          {"holds", cheap.holds},
                                          {"bound", cheap.bound},
                                          {"steering_cost", cheap.steering_cost ? nlohmann::json(*cheap.steering_cost)
                                                                                : nlohmann::json()}};
      break;
    }
    case ProblemType::gf: {
      const OcpSolution sol = solve_gf(make_gf(config, instance, sel.nodes), config.nlp);
      if (sol.status != OcpStatus::optimal) {
        throw SolverFailure("gf solve ended with status " + to_string(sol.status) + " (seed " +
                            std::to_string(instance.seed) + ", method " + method + ")");
      }
      rec.value = sol.cost;
      rec.detail["solution"] = {{"cost", sol.cost},
                                {"status", to_string(sol.status)},
                                {"stationarity_residual", sol.stationarity_residual}};
      break;
    }
    case ProblemType::mf: {
      const MfSolution sol = solve_mf(make_model(config, instance, sel.nodes), make_psi(config), instance.x0,
                                      config.budget, config.T, config.mf);
      if (sol.status == MfStatus::abnormal) {
        throw SolverFailure("mf solve ended abnormally (seed " + std::to_string(instance.seed) + ", method " +
                            method + ")");
      }
      rec.value = sol.attained;
      rec.detail["solution"] = to_json(sol);
      break;
    }
  }
  return rec;
}

}  // namespace detail

ResultBundle aggregate(std::vector<RunRecord> records) {
  if (records.empty()) throw std::invalid_argument("aggregate needs at least one record");
  ResultBundle bundle;
  std::map<std::pair<std::string, double>, std::size_t> index;
  // Welford accumulators, one per cell.
  std::vector<double> m2;
  for (const RunRecord& r : records) {
    const auto key = std::make_pair(r.method, r.parameter);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, bundle.cells.size()).first;
      bundle.cells.push_back(CellStats{r.method, r.parameter});
      m2.push_back(0.0);
    }
    CellStats& cell = bundle.cells[it->second];
    ++cell.count;
    if (!r.feasible || !std::isfinite(r.value)) {
      ++cell.infeasible;
      continue;
    }
    const int k = cell.count - cell.infeasible;
    const double delta = r.value - cell.mean;
    cell.mean += delta / k;
    m2[it->second] += delta * (r.value - cell.mean);
  }
  for (std::size_t i = 0; i < bundle.cells.size(); ++i) {
    CellStats& cell = bundle.cells[i];
    const int k = cell.count - cell.infeasible;
    cell.all_infeasible = k == 0;
    if (cell.all_infeasible) cell.mean = INFINITY;
    cell.stddev = k > 1 ? std::sqrt(m2[i] / (k - 1)) : 0.0;
  }
  bundle.records = std::move(records);
  return bundle;
}

void write_table_csv(std::ostream& out, const ResultBundle& bundle, const std::string& parameter_name,
                     const std::string& provenance) {
  std::vector<std::string> methods;
  std::vector<double> params;
  for (const CellStats& c : bundle.cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    if (std::find(params.begin(), params.end(), c.parameter) == params.end()) params.push_back(c.parameter);
  }
  char buf[96];
  out << "# " << provenance << "\n";
  out << "method";
  for (double p : params) {
    std::snprintf(buf, sizeof buf, "%.10g", p);
    out << "," << parameter_name << "=" << buf;
  }
  out << "\n";
  for (const std::string& method : methods) {
    out << method;
    for (double p : params) {
      out << ",";
      const auto it = std::find_if(bundle.cells.begin(), bundle.cells.end(),
                                   [&](const CellStats& c) { return c.method == method && c.parameter == p; });
      if (it == bundle.cells.end()) continue;
      if (it->all_infeasible) {
        out << "infeasible";
      } else {
        std::snprintf(buf, sizeof buf, "%.10g±%.10g", it->mean, it->stddev);
        out << buf;
      }
    }
    out << "\n";
  }
}

ResultBundle run_experiment(const ExperimentConfig& config) {
  const auto count = static_cast<std::size_t>(config.realizations);
  std::vector<std::vector<RunRecord>> per_realization(count);
  ::ferment::detail::parallel_for(count, config.workers, [&](std::size_t i) {
    const detail::Instance instance = detail::build_instance(config, config.base_seed + i);
    for (double value : config.sweep_values) {
      const ExperimentConfig cell = detail::with_parameter(config, config.sweep_parameter, value);
      for (const std::string& method : config.methods) {
        per_realization[i].push_back(detail::evaluate(cell, instance, method, value));
      }
    }
  });
  std::vector<RunRecord> records;
  for (auto& batch : per_realization) {
    for (auto& r : batch) records.push_back(std::move(r));
  }
  return aggregate(std::move(records));
}

}  // namespace ferment::cli
