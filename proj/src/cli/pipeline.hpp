#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ferment/cli.hpp"
#include "ferment/ocp.hpp"
#include "ferment/selection.hpp"

namespace ferment::cli::detail {

// One realization: the graph and the broadcast vectors sized to it.
struct Instance {
  InfluenceGraph graph;
  Vector quiescent;
  Vector tau;
  Vector x0;
  std::uint64_t seed = 0;
};

Instance build_instance(const ExperimentConfig& config, std::uint64_t seed);

// Sigmoid aggregate for gf and mf; the center is the scalar tau.
SigmoidAggregate make_psi(const ExperimentConfig& config);

// Runs `method` with the config's m and solver settings.
SelectionResult select_nodes(const ExperimentConfig& config, const Instance& instance, const std::string& method,
                             int workers);

InfluenceModel make_model(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes);

TfProblem make_tf(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes);
GfProblem make_gf(const ExperimentConfig& config, const Instance& instance, const std::vector<int>& nodes);

// Copy of `config` with the sweep parameter set to `value`.
ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& name, double value);

// Selection plus the solve for the configured problem type. Infeasibility
// becomes a record with feasible = false; solver failures throw.
RunRecord evaluate(const ExperimentConfig& config, const Instance& instance, const std::string& method,
                   double parameter);

}  // namespace ferment::cli::detail
