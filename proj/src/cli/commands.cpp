#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "cli/pipeline.hpp"
#include "ferment/turnpike.hpp"

namespace ferment::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Output directory plus the provenance stamp every file carries.
class Output {
 public:
  Output(const ExperimentConfig& config, std::uint64_t seed)
      : dir_(config.output), hash_(config_hash(config)), seed_(seed) {
    fs::create_directories(dir_);
  }

  std::string stamp() const { return "config_hash=" + hash_ + " seed=" + std::to_string(seed_); }

  std::ofstream open(const std::string& name) const {
    std::ofstream out(dir_ / name);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    return out;
  }

  // CSV with a leading `# config_hash=... seed=...` comment.
  template <typename Writer>
  void csv(const std::string& name, Writer&& write) const {
    std::ofstream out = open(name);
    out << "# " << stamp() << "\n";
    write(out);
  }

  void summary(json body, const ExperimentConfig& config) const {
    body["config_hash"] = hash_;
    body["seed"] = seed_;
    body["config"] = config.to_json();
    open("summary.json") << body.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  std::string hash_;
  std::uint64_t seed_;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

json first_order_json(const FirstOrderReport& r) {
  return {{"stationarity", r.stationarity},
          {"primal", r.primal},
          {"complementarity", r.complementarity},
          {"dual_sign", r.dual_sign}};
}

json cheap_json(const CheapReachability& c) {
  return {{"checked", c.checked},
          {"holds", c.holds},
          {"optimal_cost", c.optimal_cost},
          {"bound", c.bound},
          {"tight_bound", c.tight_bound},
          {"steering_cost", c.steering_cost ? json(*c.steering_cost) : json()}};
}

int exit_for(bool ok) { return ok ? kExitOk : kExitError; }

int cmd_simulate(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const InfluenceModel free_model(inst.graph.influence_matrix(), inst.quiescent, {});
  const Trajectory free_run = simulate_free(free_model, inst.x0, config.T);
  out.csv("states_free.csv", [&](std::ostream& s) { write_state_csv(s, free_run); });

  json body{{"subcommand", "simulate"}};
  body["free"] = {{"final_mean", free_run.state(config.T).mean()},
                  {"final_min", free_run.state(config.T).minCoeff()}};
  const SelectionResult sel = detail::select_nodes(config, inst, config.method, config.workers);
  body["selection"] = to_json(sel);
  if (!sel.feasible) {
    out.summary(body, config);
    log << "selected nodes cannot meet the thresholds\n";
    return kExitInfeasible;
  }
  // Controlled run: the equilibrium control held over the horizon.
  const InfluenceModel model = detail::make_model(config, inst, sel.nodes);
  const EquilibriumPoint eq = tf_equilibrium(model, inst.tau, config.qp);
  const Matrix held = eq.u_e.replicate(1, config.T);
  const Trajectory controlled = simulate(model, inst.x0, held);
  out.csv("states_controlled.csv", [&](std::ostream& s) { write_state_csv(s, controlled); });
  out.csv("controls_controlled.csv", [&](std::ostream& s) { write_control_csv(s, controlled); });
  body["equilibrium"] = to_json(eq);
  body["controlled"] = {{"cost", controlled.cost()}, {"final_min", controlled.state(config.T).minCoeff()}};
  out.summary(body, config);
  log << "simulated " << config.T << " steps; held equilibrium cost " << controlled.cost() << "\n";
  return kExitOk;
}

int cmd_select(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const SelectionResult sel = detail::select_nodes(config, inst, config.method, config.workers);
  out.summary({{"subcommand", "select-nodes"}, {"selection", to_json(sel)}}, config);
  log << sel.method << " selected " << sel.nodes.size() << " nodes, cost " << sel.final_cost << "\n";
  return sel.feasible ? kExitOk : kExitInfeasible;
}

// Shared by solve-tf and turnpike-report.
struct TfRun {
  SelectionResult selection;
  TfProblem problem;
  OcpSolution solution;
  EquilibriumPoint equilibrium;
};

TfRun run_tf(const ExperimentConfig& config, const detail::Instance& inst) {
  SelectionResult sel = detail::select_nodes(config, inst, config.method, config.workers);
  if (!sel.feasible) throw InfeasibleProblem("selected nodes cannot meet the thresholds");
  TfProblem p = detail::make_tf(config, inst, sel.nodes);
  OcpSolution sol = solve_tf(p, config.qp);
  EquilibriumPoint eq = tf_equilibrium(p.model, p.tau, config.qp);
  return TfRun{std::move(sel), std::move(p), std::move(sol), std::move(eq)};
}

void write_trajectory(const Output& out, const Trajectory& tr) {
  out.csv("states.csv", [&](std::ostream& s) { write_state_csv(s, tr); });
  out.csv("controls.csv", [&](std::ostream& s) { write_control_csv(s, tr); });
}

int cmd_solve_tf(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const TfRun run = run_tf(config, inst);
  write_trajectory(out, run.solution.trajectory);
  json body{{"subcommand", "solve-tf"}, {"selection", to_json(run.selection)}};
  body["solution"] = summary_json(run.solution, run.equilibrium);
  body["first_order"] = first_order_json(certify_first_order(run.problem, run.solution));
  body["cheap_reachability"] = cheap_json(cheap_reachability(run.problem, run.solution, run.equilibrium));
  out.summary(body, config);
  log << "tf " << to_string(run.solution.status) << ", cost " << run.solution.cost << "\n";
  return exit_for(run.solution.status == OcpStatus::optimal);
}

int cmd_solve_gf(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const SelectionResult sel = detail::select_nodes(config, inst, config.method, config.workers);
  const GfProblem p = detail::make_gf(config, inst, sel.nodes);
  const OcpSolution sol = solve_gf(p, config.nlp);
  write_trajectory(out, sol.trajectory);
  json body{{"subcommand", "solve-gf"}, {"selection", to_json(sel)}};
  try {
    body["solution"] = summary_json(sol, gf_equilibrium(p.model, p.psi, p.k, config.nlp));
  } catch (const SolverFailure&) {
    body["solution"] = {{"cost", sol.cost},
                        {"status", to_string(sol.status)},
                        {"stationarity_residual", sol.stationarity_residual},
                        {"equilibrium_cost", nullptr},
                        {"cheap_reachability_gap", nullptr}};
  }
  body["first_order"] = first_order_json(certify_first_order(p, sol));
  out.summary(body, config);
  log << "gf " << to_string(sol.status) << ", cost " << sol.cost << "\n";
  return exit_for(sol.status == OcpStatus::optimal);
}

int cmd_solve_mf(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const SelectionResult sel = detail::select_nodes(config, inst, config.method, config.workers);
  const MfSolution sol = solve_mf(detail::make_model(config, inst, sel.nodes), detail::make_psi(config), inst.x0,
                                  config.budget, config.T, config.mf);
  write_trajectory(out, sol.trajectory);
  out.csv("record.csv", [&](std::ostream& s) {
    s << "t,r,y\n";
    char buf[96];
    for (Index t = 0; t < sol.path.r.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%td,%.17g,%.17g\n", static_cast<std::ptrdiff_t>(t), sol.path.r(t),
                    sol.path.y(t));
      s << buf;
    }
  });
  out.summary({{"subcommand", "solve-mf"}, {"selection", to_json(sel)}, {"solution", to_json(sol)}}, config);
  log << "mf " << to_string(sol.status) << ", attained " << sol.attained << ", expenditure " << sol.expenditure
      << "\n";
  return exit_for(sol.status == MfStatus::converged);
}

int cmd_turnpike(const ExperimentConfig& config, const detail::Instance& inst, const Output& out, std::ostream& log) {
  const TfRun run = run_tf(config, inst);
  if (run.solution.status != OcpStatus::optimal) {
    throw SolverFailure("tf solve ended with status " + to_string(run.solution.status));
  }
  const TurnpikeReport report = turnpike_report(run.solution, run.equilibrium, config.epsilon);
  write_trajectory(out, run.solution.trajectory);
  out.csv("distances.csv", [&](std::ostream& s) { write_distance_csv(s, report); });
  json body{{"subcommand", "turnpike-report"}, {"selection", to_json(run.selection)}};
  body["solution"] = summary_json(run.solution, run.equilibrium);
  body["turnpike"] = to_json(report);
  body["dissipativity"] = to_json(dissipativity_certificate(inst.graph.influence_matrix()));
  body["cheap_reachability"] = cheap_json(cheap_reachability(run.problem, run.solution, run.equilibrium));
  out.summary(body, config);
  log << "turnpike: " << report.exceedance_count << " of " << report.distances.size() << " steps beyond epsilon\n";
  return kExitOk;
}

int cmd_experiment(const ExperimentConfig& config, std::ostream& log) {
  const ResultBundle bundle = run_experiment(config);
  const std::string hash = config_hash(config);
  fs::create_directories(config.output);
  const std::string provenance = "config_hash=" + hash + " base_seed=" + std::to_string(config.base_seed) +
                                 " realizations=" + std::to_string(config.realizations);
  {
    std::ofstream table(config.output / "table.csv");
    write_table_csv(table, bundle, config.sweep_parameter, provenance);
  }
  json records = json::array();
  for (const RunRecord& r : bundle.records) {
    records.push_back({{"seed", r.seed},
                       {"method", r.method},
                       {"parameter", r.parameter},
                       {"feasible", r.feasible},
                       {"value", finite_or_null(r.value)},
                       {"detail", r.detail}});
  }
  json cells = json::array();
  for (const CellStats& c : bundle.cells) {
    cells.push_back({{"method", c.method},
                     {"parameter", c.parameter},
                     {"count", c.count},
                     {"infeasible", c.infeasible},
                     {"mean", finite_or_null(c.mean)},
                     {"stddev", c.stddev},
                     {"all_infeasible", c.all_infeasible}});
  }
  json seeds = json::array();
  for (int i = 0; i < config.realizations; ++i) seeds.push_back(config.base_seed + static_cast<std::uint64_t>(i));
  const json body{{"subcommand", "experiment"}, {"config_hash", hash}, {"base_seed", config.base_seed},
                  {"seeds", seeds},            {"config", config.to_json()}, {"aggregate", cells},
                  {"records", records}};
  std::ofstream(config.output / "summary.json") << body.dump(2) << "\n";
  log << "experiment: " << bundle.records.size() << " runs in " << bundle.cells.size() << " cells\n";
  return kExitOk;
}

CheckResult check(std::string name, bool passed, std::string detail) {
  return CheckResult{std::move(name), passed, std::move(detail)};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Best worst level of a one-node max-min instance over controls on a disc,
// by lattice plus boundary ring.
double scalar_grid_maxmin(double a, double x0, double budget, const SigmoidAggregate& psi) {
  const auto level = [&](double u0, double u1) {
    double x = x0;
    double worst = psi.value(Vector::Constant(1, x));
    for (double u : {u0, u1}) {
      x = a * x + u;
      worst = std::min(worst, psi.value(Vector::Constant(1, x)));
    }
    return worst;
  };
  const double radius = std::sqrt(budget);
  double best = -INFINITY;
  const int lattice = 101;
  for (int i = 0; i < lattice; ++i) {
    for (int j = 0; j < lattice; ++j) {
      const double u0 = -radius + 2.0 * radius * i / (lattice - 1);
      const double u1 = -radius + 2.0 * radius * j / (lattice - 1);
      if (u0 * u0 + u1 * u1 <= budget) best = std::max(best, level(u0, u1));
    }
  }
  for (int k = 0; k < 4000; ++k) {
    const double theta = 2.0 * M_PI * k / 4000;
    best = std::max(best, level(radius * std::cos(theta), radius * std::sin(theta)));
  }
  return best;
}

}  // namespace

std::vector<CheckResult> selfcheck() {
  std::vector<CheckResult> out;

  {
    // Chain 0 -> 1 with weight 0.5 and node 0 actuated: u_e = 0.7 / 0.5.
    const Matrix a = (Matrix(2, 2) << 0.0, 0.0, 0.5, 0.0).finished();
    const EquilibriumPoint eq = tf_equilibrium(InfluenceModel(a, Vector::Zero(2), {0}), Vector::Constant(2, 0.7));
    out.push_back(check("equilibrium chain", std::abs(eq.u_e(0) - 1.4) <= 1e-6 && std::abs(eq.cost - 1.96) <= 1e-6,
                        "u_e " + fmt(eq.u_e(0)) + ", cost " + fmt(eq.cost)));
  }
  {
    const int n = 6;
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    const InfluenceModel model(Matrix::Zero(n, n), Vector::Zero(n), all);
    const EquilibriumPoint eq = tf_equilibrium(model, Vector::Constant(n, 0.7));
    out.push_back(check("full actuation equilibrium", std::abs(eq.cost - 0.49 * n) <= 1e-9, "cost " + fmt(eq.cost)));
    const OcpSolution sol = solve_tf(TfProblem{model, Vector::Zero(n), Vector::Constant(n, 0.7), 1, 3});
    out.push_back(check("tf without coupling", std::abs(sol.cost - 3 * 0.49 * n) <= 1e-8 &&
                                                   sol.status == OcpStatus::optimal,
                        "cost " + fmt(sol.cost) + ", expected " + fmt(3 * 0.49 * n)));
  }
  {
    const SigmoidAggregate psi{0.7, 3.0};
    const double v = psi.value(Vector::Constant(8, 0.7));
    out.push_back(check("aggregate at the center", v == 4.0, "psi " + fmt(v)));
  }
  {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = 5;
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) a(i, j) = unit(rng);
      a.row(i) *= 0.9 / a.row(i).sum();
    }
    Vector q(n), x0(n);
    for (Index i = 0; i < n; ++i) {
      q(i) = unit(rng);
      x0(i) = 3.0 * unit(rng);
    }
    const Trajectory tr = simulate_free(InfluenceModel(a, q, {}), x0, 60);
    bool ok = true;
    const double d0 = (x0 - q).cwiseAbs().maxCoeff();
    for (Index t = 0; t <= 60; ++t) ok = ok && (tr.state(t) - q).cwiseAbs().maxCoeff() <= std::pow(0.9, t) * d0;
    out.push_back(check("free decay", ok, "60 steps, row sum 0.9"));

    const Vector tau = Vector::Constant(n, 0.7);
    const InfluenceModel model(a, Vector::Zero(n), {1, 3});
    const double c1 = tf_equilibrium(model, tau).cost;
    const double c2 = tf_equilibrium(model, 2.0 * tau).cost;
    out.push_back(check("threshold scaling", std::abs(c2 / c1 - 4.0) <= 1e-6, "ratio " + fmt(c2 / c1)));

    const DissipativityCertificate cert = dissipativity_certificate(a);
    out.push_back(check("dissipativity", cert.rho < 0.9 + 1e-12 && cert.min_eig_gap >= 1.0 - 1e-9,
                        "rho " + fmt(cert.rho) + ", gap " + fmt(cert.min_eig_gap)));
  }
  {
    const Matrix a = (Matrix(2, 2) << 0.45, 0.45, 0.9, 0.0).finished();
    const DissipativityCertificate cert = dissipativity_certificate(a);
    out.push_back(check("identity storage counterexample", cert.identity_gap < 0.0 && cert.min_eig_gap >= 1.0 - 1e-9,
                        "identity gap " + fmt(cert.identity_gap)));
  }
  {
    const SigmoidAggregate psi{0.7, 2.0};
    const InfluenceModel model((Matrix(1, 1) << 0.5).finished(), Vector::Zero(1), {0});
    const double budget = 0.5;
    const MfSolution sol = solve_mf(model, psi, Vector::Constant(1, 2.0), budget, 3);
    const double grid = scalar_grid_maxmin(0.5, 2.0, budget, psi);
    out.push_back(check("max-min against a grid",
                        sol.attained >= 0.99 * grid && sol.expenditure <= budget * (1.0 + 1e-6),
                        "attained " + fmt(sol.attained) + ", grid " + fmt(grid)));
  }
  {
    std::vector<RunRecord> records(2);
    records[0].value = 1.0;
    records[1].value = 3.0;
    const ResultBundle b = aggregate(records);
    out.push_back(check("sample statistics", b.cells.size() == 1 && b.cells[0].mean == 2.0 &&
                                                 std::abs(b.cells[0].stddev - std::sqrt(2.0)) <= 1e-15,
                        "mean " + fmt(b.cells[0].mean) + ", std " + fmt(b.cells[0].stddev)));
  }
  return out;
}

int run(const Invocation& inv, std::ostream& log) {
  try {
    if (inv.subcommand == "selfcheck") {
      int failed = 0;
      for (const CheckResult& c : selfcheck()) {
        log << (c.passed ? "ok   " : "FAIL ") << c.name << ": " << c.detail << "\n";
        failed += !c.passed;
      }
      return failed == 0 ? kExitOk : kExitError;
    }
    if (!inv.config) throw ConfigError("--config is required for " + inv.subcommand);
    ExperimentConfig config = load_config(*inv.config);
    if (inv.out) config.output = *inv.out;
    if (inv.workers) config.workers = *inv.workers;
    if (inv.seed) config.base_seed = *inv.seed;
    if (inv.subcommand == "experiment") return cmd_experiment(config, log);

    const detail::Instance inst = detail::build_instance(config, config.base_seed);
    const Output out(config, config.base_seed);
    if (inv.subcommand == "simulate") return cmd_simulate(config, inst, out, log);
    if (inv.subcommand == "select-nodes") return cmd_select(config, inst, out, log);
    if (inv.subcommand == "solve-tf") return cmd_solve_tf(config, inst, out, log);
    if (inv.subcommand == "solve-gf") return cmd_solve_gf(config, inst, out, log);
    if (inv.subcommand == "solve-mf") return cmd_solve_mf(config, inst, out, log);
    if (inv.subcommand == "turnpike-report") return cmd_turnpike(config, inst, out, log);
    log << "error: unknown subcommand " << inv.subcommand << "\n";
    return kExitError;
  } catch (const InfeasibleProblem& e) {
    log << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace ferment::cli
