#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ferment/graph.hpp"
#include "ferment/maxmin.hpp"
#include "ferment/nlp.hpp"
#include "ferment/qp.hpp"

namespace ferment::cli {

/// Schema violation; the message names the offending key path and, when it
/// can be found in the source text, its line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProblemType { tf, gf, mf };

/// A scalar broadcast to every entry or an explicit per-entry list.
struct Broadcast {
  std::vector<double> values;

  Vector expand(Index size, const char* what) const;
};

struct ExperimentConfig {
  GraphSpec graph;

  Broadcast quiescent{{0.0}};
  Broadcast tau{{0.7}};
  Broadcast x0{{0.5}};
  Broadcast r_diagonal{{1.0}};

  ProblemType problem = ProblemType::tf;
  int T = 100;
  int T0 = 10;
  double k = 0.5;
  double slope = 1.0;
  double budget = 10.0;
  double epsilon = 0.01;

  std::string method = "greedy";
  int m = 5;
  std::vector<double> mu_grid{0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<int> nodes;
  bool cover_counts_toward_m = true;

  QpSettings qp;
  NlpSettings nlp;
  MfSettings mf;

  int realizations = 1;
  std::uint64_t base_seed = 1;
  int workers = 1;

  /// Grid for `experiment`: one of m, tau, k, a, budget, T.
  std::string sweep_parameter = "m";
  std::vector<double> sweep_values{2, 4, 6, 8, 10};
  std::vector<std::string> methods{"greedy", "degree", "distance"};

  std::filesystem::path output = "out";

  /// Effective configuration with every default filled in.
  nlohmann::json to_json() const;
};

std::string to_string(ProblemType type);

/// Parses and validates a JSON configuration. Unknown keys are rejected.
/// Defaults that depend on the problem type (x0 = 2 and slope 0.5 and
/// degree centers for mf) apply only when the key is absent.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical effective configuration, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// One realization of one method at one grid value. `value` is the TF or GF
/// optimal cost, or the attained level for mf.
struct RunRecord {
  std::uint64_t seed = 0;
  std::string method;
  double parameter = 0.0;
  bool feasible = true;
  double value = 0.0;
  nlohmann::json detail;
};

struct CellStats {
  std::string method;
  double parameter = 0.0;
  int count = 0;
  int infeasible = 0;
  double mean = 0.0;
  /// Sample standard deviation (0 for a single record).
  double stddev = 0.0;
  bool all_infeasible = false;
};

struct ResultBundle {
  std::vector<RunRecord> records;
  /// Cells in first-appearance order of (method, parameter).
  std::vector<CellStats> cells;
};

/// Groups records by (method, parameter); infeasible records are counted
/// but excluded from the moments. Throws std::invalid_argument when empty.
ResultBundle aggregate(std::vector<RunRecord> records);

/// Rows are methods, columns grid values, cells `mean±std` (or `infeasible`).
void write_table_csv(std::ostream& out, const ResultBundle& bundle, const std::string& parameter_name,
                     const std::string& provenance);

/// Runs every (realization, grid value, method) combination with
/// realization i on seed base_seed + i.
ResultBundle run_experiment(const ExperimentConfig& config);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Small derived-oracle checks of every module.
std::vector<CheckResult> selfcheck();

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInfeasible = 2;

struct Invocation {
  std::string subcommand;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

/// Runs a subcommand, writing results under the output directory. Returns
/// the exit code; messages go to `log`.
int run(const Invocation& invocation, std::ostream& log);

}  // namespace ferment::cli
