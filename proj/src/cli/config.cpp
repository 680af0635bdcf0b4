#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ferment/cli.hpp"

namespace ferment::cli {

namespace {

using nlohmann::json;

const std::set<std::string> kMethods{"greedy", "degree", "distance", "lasso", "nodes"};
const std::set<std::string> kSweepParameters{"m", "tau", "k", "a", "budget", "T"};

// Walks one JSON object, remembering which keys were read so that the rest
// can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path, const std::string& source)
      : node_(node), path_(std::move(path)), source_(source) {
    if (!node_.is_object()) fail(path_.empty() ? "/" : path_, "must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(node_.contains(key) ? node_.at(key) : empty, path_ + "/" + key, source_);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) fail(path_ + "/" + key, "must be a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer()) fail(path_ + "/" + key, "must be an integer");
    return v.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_unsigned()) fail(path_ + "/" + key, "must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) fail(path_ + "/" + key, "must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) fail(path_ + "/" + key, "must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_array()) fail(path_ + "/" + key, "must be an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) fail(path_ + "/" + key, "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Broadcast broadcast(const std::string& key, Broadcast fallback) {
    if (!has(key)) return fallback;
    if (node_.at(key).is_number()) return Broadcast{{node_.at(key).get<double>()}};
    Broadcast b{numbers(key, {})};
    if (b.values.empty()) fail(path_ + "/" + key, "must not be empty");
    return b;
  }

  // Rejects keys that were never asked for.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) fail(path_ + "/" + key, "is not a recognized key");
    }
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    std::string msg = "config " + where + " " + what;
    const std::string leaf = where.substr(where.find_last_of('/') + 1);
    const auto pos = source_.find("\"" + leaf + "\"");
    if (!leaf.empty() && pos != std::string::npos) {
      msg += " (line " + std::to_string(1 + std::count(source_.begin(), source_.begin() + pos, '\n')) + ")";
    }
    throw ConfigError(msg);
  }

  const std::string& path() const { return path_; }

 private:
  const json& node_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

json broadcast_json(const Broadcast& b) {
  if (b.values.size() == 1) return b.values.front();
  return b.values;
}

json stubbornness_json(const StubbornnessPolicy& s) {
  if (std::holds_alternative<double>(s)) return std::get<double>(s);
  if (std::holds_alternative<std::vector<double>>(s)) return std::get<std::vector<double>>(s);
  return nullptr;
}

ProblemType parse_problem(const std::string& name, const Section& where) {
  if (name == "tf") return ProblemType::tf;
  if (name == "gf") return ProblemType::gf;
  if (name == "mf") return ProblemType::mf;
  where.fail(where.path() + "/type", "must be one of tf, gf, mf");
}

}  // namespace

Vector Broadcast::expand(Index size, const char* what) const {
  if (values.size() == 1) return Vector::Constant(size, values.front());
  if (static_cast<Index>(values.size()) != size) {
    throw ConfigError(std::string("config ") + what + " has " + std::to_string(values.size()) +
                      " entries, expected " + std::to_string(size));
  }
  return Eigen::Map<const Vector>(values.data(), size);
}

std::string to_string(ProblemType type) {
  switch (type) {
    case ProblemType::tf: return "tf";
    case ProblemType::gf: return "gf";
    case ProblemType::mf: return "mf";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section root(doc, "", text);

  Section problem = root.child("problem");
  c.problem = parse_problem(problem.text("type", "tf"), problem);
  const bool mf = c.problem == ProblemType::mf;
  c.T = problem.integer("T", c.T);
  c.T0 = problem.integer("T0", c.T0);
  c.k = problem.number("k", c.k);
  c.slope = problem.number("a", mf ? 0.5 : c.slope);
  c.budget = problem.number("budget", c.budget);
  c.epsilon = problem.number("epsilon", c.epsilon);
  problem.finish();
  if (c.T < 1) problem.fail("/problem/T", "must be at least 1");
  if (c.T0 < 1 || c.T0 > c.T) problem.fail("/problem/T0", "must satisfy 1 <= T0 <= T");
  if (!(c.k > 0.0 && c.k < 1.0)) problem.fail("/problem/k", "must lie in (0, 1)");
  if (!(c.slope > 0.0)) problem.fail("/problem/a", "must be positive");
  if (!(c.budget >= 0.0)) problem.fail("/problem/budget", "must be nonnegative");
  if (!(c.epsilon > 0.0)) problem.fail("/problem/epsilon", "must be positive");

  Section graph = root.child("graph");
  try {
    c.graph.family = parse_graph_family(graph.text("family", "erdos-renyi"));
  } catch (const GraphError& e) {
    graph.fail("/graph/family", e.what());
  }
  c.graph.n = graph.integer("n", c.graph.family == GraphFamily::karate ? 34 : 50);
  c.graph.parameter = graph.number("parameter", c.graph.family == GraphFamily::barabasi_albert ? 3.0 : 0.12);
  c.graph.row_sum = graph.number("row_sum", c.graph.row_sum);
  if (graph.has("stubbornness")) {
    const json& s = graph.raw("stubbornness");
    if (s.is_number()) {
      c.graph.stubbornness = s.get<double>();
    } else {
      c.graph.stubbornness = graph.numbers("stubbornness", {});
    }
  }
  c.graph.edge_file = graph.text("edge_file", "");
  graph.finish();
  if (c.graph.family != GraphFamily::edge_file) {
    try {
      c.graph.validate();
    } catch (const GraphError& e) {
      graph.fail("/graph", e.what());
    }
  }

  Section model = root.child("model");
  c.quiescent = model.broadcast("q", c.quiescent);
  c.tau = model.broadcast("tau", c.tau);
  c.x0 = model.broadcast("x0", mf ? Broadcast{{2.0}} : c.x0);
  c.r_diagonal = model.broadcast("r_diagonal", c.r_diagonal);
  model.finish();
  if (c.problem != ProblemType::tf && c.tau.values.size() != 1) {
    model.fail("/model/tau", "must be a single number for gf and mf (it is the sigmoid center)");
  }

  Section selection = root.child("selection");
  c.method = selection.text("method", mf ? "degree" : "greedy");
  c.m = selection.integer("m", c.m);
  c.mu_grid = selection.numbers("mu_grid", c.mu_grid);
  for (double v : selection.numbers("nodes", {})) c.nodes.push_back(static_cast<int>(v));
  c.cover_counts_toward_m = selection.boolean("cover_counts_toward_m", c.cover_counts_toward_m);
  selection.finish();
  if (!kMethods.count(c.method)) selection.fail("/selection/method", "must be greedy, degree, distance, lasso or nodes");
  if (c.m < 1) selection.fail("/selection/m", "must be at least 1");
  if (c.method == "nodes" && c.nodes.empty()) selection.fail("/selection/nodes", "must list the controlled nodes");
  if (c.mu_grid.empty() || !std::is_sorted(c.mu_grid.begin(), c.mu_grid.end())) {
    selection.fail("/selection/mu_grid", "must be a nonempty ascending list");
  }

  Section solver = root.child("solver");
  c.qp.tol = solver.number("qp_tol", c.qp.tol);
  c.qp.max_iter = solver.integer("qp_max_iter", c.qp.max_iter);
  c.nlp.tol = solver.number("nlp_tol", c.nlp.tol);
  c.nlp.max_outer = solver.integer("nlp_max_outer", c.nlp.max_outer);
  c.nlp.max_inner = solver.integer("nlp_max_inner", c.nlp.max_inner);
  c.mf.eps1 = solver.number("mf_eps1", c.mf.eps1);
  c.mf.eps2 = solver.number("mf_eps2", c.mf.eps2);
  c.mf.relaxation = solver.number("mf_relaxation", c.mf.relaxation);
  c.mf.step = solver.number("mf_step", c.mf.step);
  c.mf.max_inner = solver.integer("mf_max_inner", c.mf.max_inner);
  c.mf.max_outer = solver.integer("mf_max_outer", c.mf.max_outer);
  solver.finish();
  if (!(c.qp.tol > 0.0) || !(c.nlp.tol > 0.0) || !(c.mf.eps1 > 0.0) || !(c.mf.eps2 > 0.0)) {
    solver.fail("/solver", "tolerances must be positive");
  }
  if (!(c.mf.relaxation > 0.0 && c.mf.relaxation < 1.0)) solver.fail("/solver/mf_relaxation", "must lie in (0, 1)");

  Section ensemble = root.child("ensemble");
  c.realizations = ensemble.integer("realizations", c.realizations);
  c.base_seed = ensemble.unsigned_integer("base_seed", c.base_seed);
  c.workers = ensemble.integer("parallel_workers", c.workers);
  ensemble.finish();
  if (c.realizations < 1) ensemble.fail("/ensemble/realizations", "must be at least 1");
  if (c.workers < 0) ensemble.fail("/ensemble/parallel_workers", "must be nonnegative (0 = all cores)");

  Section experiment = root.child("experiment");
  c.sweep_parameter = experiment.text("parameter", c.sweep_parameter);
  c.sweep_values = experiment.numbers("values", c.sweep_values);
  if (experiment.has("methods")) {
    c.methods.clear();
    const json& v = experiment.raw("methods");
    if (!v.is_array()) experiment.fail("/experiment/methods", "must be an array of method names");
    for (const json& e : v) {
      if (!e.is_string() || !kMethods.count(e.get<std::string>()) || e.get<std::string>() == "nodes") {
        experiment.fail("/experiment/methods", "entries must be greedy, degree, distance or lasso");
      }
      c.methods.push_back(e.get<std::string>());
    }
  }
  experiment.finish();
  if (!kSweepParameters.count(c.sweep_parameter)) {
    experiment.fail("/experiment/parameter", "must be one of m, tau, k, a, budget, T");
  }
  if (c.sweep_values.empty()) experiment.fail("/experiment/values", "must not be empty");
  if (c.methods.empty()) experiment.fail("/experiment/methods", "must not be empty");

  Section output = root.child("output");
  c.output = output.text("directory", c.output.string());
  output.finish();

  root.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  ExperimentConfig c = parse_config(buffer.str());
  if (!c.graph.edge_file.empty() && c.graph.edge_file.is_relative()) {
    c.graph.edge_file = path.parent_path() / c.graph.edge_file;
  }
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"graph",
       {{"family", ferment::to_string(graph.family)},
        {"n", graph.n},
        {"parameter", graph.parameter},
        {"row_sum", graph.row_sum},
        {"stubbornness", stubbornness_json(graph.stubbornness)},
        {"edge_file", graph.edge_file.string()}}},
      {"model",
       {{"q", broadcast_json(quiescent)},
        {"tau", broadcast_json(tau)},
        {"x0", broadcast_json(x0)},
        {"r_diagonal", broadcast_json(r_diagonal)}}},
      {"problem",
       {{"type", cli::to_string(problem)},
        {"T", T},
        {"T0", T0},
        {"k", k},
        {"a", slope},
        {"budget", budget},
        {"epsilon", epsilon}}},
      {"selection",
       {{"method", method},
        {"m", m},
        {"mu_grid", mu_grid},
        {"nodes", nodes},
        {"cover_counts_toward_m", cover_counts_toward_m}}},
      {"solver",
       {{"qp_tol", qp.tol},
        {"qp_max_iter", qp.max_iter},
        {"nlp_tol", nlp.tol},
        {"nlp_max_outer", nlp.max_outer},
        {"nlp_max_inner", nlp.max_inner},
        {"mf_eps1", mf.eps1},
        {"mf_eps2", mf.eps2},
        {"mf_relaxation", mf.relaxation},
        {"mf_step", mf.step},
        {"mf_max_inner", mf.max_inner},
        {"mf_max_outer", mf.max_outer}}},
      {"ensemble", {{"realizations", realizations}, {"base_seed", base_seed}, {"parallel_workers", workers}}},
      {"experiment", {{"parameter", sweep_parameter}, {"values", sweep_values}, {"methods", methods}}},
      {"output", {{"directory", output.string()}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  json canonical = config.to_json();
  // Where results go and how many threads made them do not change them.
  canonical.erase("output");
  canonical["ensemble"].erase("parallel_workers");
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ferment::cli
