#include "ferment/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>

#include "random.hpp"

namespace ferment {

InfluenceGraph::InfluenceGraph(int n, std::vector<InfluenceEdge> edges,
                               std::vector<double> stubbornness)
    : n_(n), edges_(std::move(edges)), stubbornness_(std::move(stubbornness)) {
  if (n_ <= 0) throw GraphError("graph must have at least one node");
  if (static_cast<int>(stubbornness_.size()) != n_) {
    throw GraphError("stubbornness list has " + std::to_string(stubbornness_.size()) +
                     " entries, expected " + std::to_string(n_));
  }
  std::sort(edges_.begin(), edges_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.target, a.source) < std::tie(b.target, b.source);
  });

  std::vector<double> sums(stubbornness_);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (edge.target < 0 || edge.target >= n_ || edge.source < 0 || edge.source >= n_) {
      throw GraphError("edge (" + std::to_string(edge.target) + "," +
                       std::to_string(edge.source) + ") out of range");
    }
    if (edge.target == edge.source) {
      throw GraphError("self edge on node " + std::to_string(edge.target) +
                       "; self weight belongs in stubbornness");
    }
    if (e > 0 && edges_[e - 1].target == edge.target && edges_[e - 1].source == edge.source) {
      throw GraphError("duplicate edge (" + std::to_string(edge.target) + "," +
                       std::to_string(edge.source) + ")");
    }
    if (!(edge.weight >= 0.0 && edge.weight < 1.0)) {
      throw GraphError("edge weight must lie in [0,1)");
    }
    sums[edge.target] += edge.weight;
  }
  for (int i = 0; i < n_; ++i) {
    if (!(stubbornness_[i] >= 0.0 && stubbornness_[i] < 1.0)) {
      throw GraphError("stubbornness of node " + std::to_string(i) + " must lie in [0,1)");
    }
    if (!(sums[i] < 1.0)) {
      throw GraphError("row " + std::to_string(i) + " sums to " + std::to_string(sums[i]) +
                       "; the influence matrix must be substochastic");
    }
  }

  out_.assign(n_, {});
  for (const auto& edge : edges_) {
    if (edge.weight > 0.0) out_[edge.source].push_back(edge.target);
  }
  for (auto& list : out_) std::sort(list.begin(), list.end());
}

Matrix InfluenceGraph::influence_matrix() const {
  Matrix a = Matrix::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) a(i, i) = stubbornness_[i];
  for (const auto& edge : edges_) a(edge.target, edge.source) = edge.weight;
  return a;
}

int InfluenceGraph::out_degree(int node) const {
  return static_cast<int>(out_.at(node).size());
}

std::vector<double> InfluenceGraph::row_sums() const {
  std::vector<double> sums(stubbornness_);
  for (const auto& edge : edges_) sums[edge.target] += edge.weight;
  return sums;
}

GraphFamily parse_graph_family(const std::string& name) {
  if (name == "erdos-renyi") return GraphFamily::erdos_renyi;
  if (name == "barabasi-albert") return GraphFamily::barabasi_albert;
  if (name == "k-regular") return GraphFamily::k_regular;
  if (name == "karate") return GraphFamily::karate;
  if (name == "edge-file") return GraphFamily::edge_file;
  throw GraphError("unknown graph family '" + name + "'");
}

std::string to_string(GraphFamily family) {
  switch (family) {
    case GraphFamily::erdos_renyi: return "erdos-renyi";
    case GraphFamily::barabasi_albert: return "barabasi-albert";
    case GraphFamily::k_regular: return "k-regular";
    case GraphFamily::karate: return "karate";
    case GraphFamily::edge_file: return "edge-file";
  }
  return "unknown";
}

namespace {

double stubbornness_of(const StubbornnessPolicy& policy, int node, double fallback) {
  if (const auto* uniform = std::get_if<double>(&policy)) return *uniform;
  if (const auto* list = std::get_if<std::vector<double>>(&policy)) return list->at(node);
  return fallback;
}

void validate_stubbornness(const StubbornnessPolicy& policy, int n, double row_sum) {
  auto check = [&](double value) {
    if (!(value >= 0.0 && value < row_sum)) {
      throw GraphError("stubbornness must lie in [0, row_sum)");
    }
  };
  if (const auto* uniform = std::get_if<double>(&policy)) check(*uniform);
  if (const auto* list = std::get_if<std::vector<double>>(&policy)) {
    if (static_cast<int>(list->size()) != n) {
      throw GraphError("per-node stubbornness list must have n entries");
    }
    for (double value : *list) check(value);
  }
}

UndirectedEdges canonical(std::set<std::pair<int, int>> edges) {
  return UndirectedEdges(edges.begin(), edges.end());
}

}  // namespace

void GraphSpec::validate() const {
  if (family != GraphFamily::karate && family != GraphFamily::edge_file && n <= 0) {
    throw GraphError("node count must be positive");
  }
  if (!(row_sum > 0.0 && row_sum < 1.0)) throw GraphError("row_sum must lie in (0,1)");
  switch (family) {
    case GraphFamily::erdos_renyi:
      if (!(parameter >= 0.0 && parameter <= 1.0)) {
        throw GraphError("Erdos-Renyi edge probability must lie in [0,1]");
      }
      break;
    case GraphFamily::barabasi_albert:
      if (parameter < 1.0 || parameter != std::floor(parameter) || parameter >= n) {
        throw GraphError("Barabasi-Albert attachment count must be an integer in [1, n)");
      }
      break;
    case GraphFamily::k_regular: {
      const auto k = static_cast<long>(parameter);
      if (parameter < 0.0 || parameter != std::floor(parameter) || k >= n || (k * n) % 2 != 0) {
        throw GraphError("k-regular degree must be an integer with k < n and k*n even");
      }
      break;
    }
    case GraphFamily::karate:
      if (n != 0 && n != 34) throw GraphError("the karate club graph has 34 nodes");
      break;
    case GraphFamily::edge_file:
      if (edge_file.empty()) throw GraphError("edge-file family needs a path");
      break;
  }
  const int nodes = family == GraphFamily::karate ? 34 : n;
  if (family != GraphFamily::edge_file) validate_stubbornness(stubbornness, nodes, row_sum);
}

UndirectedEdges erdos_renyi_topology(int n, double p, std::uint64_t seed) {
  detail::Rng rng(seed);
  UndirectedEdges edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

UndirectedEdges barabasi_albert_topology(int n, int attachment, std::uint64_t seed) {
  if (attachment < 1 || attachment >= n) {
    throw GraphError("Barabasi-Albert attachment count must lie in [1, n)");
  }
  detail::Rng rng(seed);
  std::set<std::pair<int, int>> edges;
  std::vector<int> endpoints;  // each node repeated once per incident edge
  for (int i = 0; i < attachment; ++i) {
    for (int j = i + 1; j < attachment; ++j) {
      edges.emplace(i, j);
      endpoints.push_back(i);
      endpoints.push_back(j);
    }
  }
  for (int v = attachment; v < n; ++v) {
    std::set<int> targets;
    while (static_cast<int>(targets.size()) < attachment) {
      const int pick = endpoints.empty()
                           ? static_cast<int>(rng.below(static_cast<std::uint64_t>(v)))
                           : endpoints[rng.below(endpoints.size())];
      targets.insert(pick);
    }
    for (int t : targets) {
      edges.emplace(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return canonical(std::move(edges));
}

UndirectedEdges k_regular_topology(int n, int k, std::uint64_t seed, int max_attempts) {
  if (k < 0 || k >= n || (static_cast<long>(k) * n) % 2 != 0) {
    throw GraphError("k-regular graph needs k < n and k*n even");
  }
  detail::Rng rng(seed);
  if (k == 0) return {};

  // Pair random stubs; stubs that would form a loop or a repeated edge are
  // re-paired in the next round, and the attempt restarts once no suitable
  // pair remains.
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::set<std::pair<int, int>> edges;
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(n) * k);
    for (int node = 0; node < n; ++node) {
      for (int s = 0; s < k; ++s) stubs.push_back(node);
    }
    bool failed = false;
    while (!stubs.empty()) {
      std::map<int, int> leftover;
      rng.shuffle(stubs);
      for (std::size_t s = 0; s + 1 < stubs.size(); s += 2) {
        int a = stubs[s], b = stubs[s + 1];
        if (a > b) std::swap(a, b);
        if (a != b && !edges.contains({a, b})) {
          edges.emplace(a, b);
        } else {
          ++leftover[a];
          ++leftover[b];
        }
      }
      bool suitable = leftover.empty();
      for (auto it = leftover.begin(); !suitable && it != leftover.end(); ++it) {
        for (auto jt = std::next(it); jt != leftover.end(); ++jt) {
          if (!edges.contains({it->first, jt->first})) {
            suitable = true;
            break;
          }
        }
      }
      if (!suitable) {
        failed = true;
        break;
      }
      stubs.clear();
      for (const auto& [node, count] : leftover) {
        for (int c = 0; c < count; ++c) stubs.push_back(node);
      }
    }
    if (!failed) return canonical(std::move(edges));
  }
  throw GraphError("k-regular generation failed after " + std::to_string(max_attempts) +
                   " attempts");
}

InfluenceGraph weighted_from_topology(int n, const UndirectedEdges& topology, double row_sum,
                                      const StubbornnessPolicy& stubbornness) {
  std::vector<std::vector<int>> neighbours(n);
  for (const auto& [u, v] : topology) {
    if (u == v) throw GraphError("topology contains a self loop");
    neighbours.at(u).push_back(v);
    neighbours.at(v).push_back(u);
  }
  std::vector<InfluenceEdge> edges;
  std::vector<double> self(n);
  for (int i = 0; i < n; ++i) {
    const auto degree = static_cast<double>(neighbours[i].size());
    const double equal_share = row_sum / (degree + 1.0);
    self[i] = stubbornness_of(stubbornness, i, equal_share);
    if (neighbours[i].empty()) continue;
    const double share = std::holds_alternative<std::monostate>(stubbornness)
                             ? equal_share
                             : (row_sum - self[i]) / degree;
    for (int j : neighbours[i]) edges.push_back({i, j, share});
  }
  return InfluenceGraph(n, std::move(edges), std::move(self));
}

InfluenceGraph generate(const GraphSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case GraphFamily::erdos_renyi:
      return weighted_from_topology(spec.n, erdos_renyi_topology(spec.n, spec.parameter, spec.seed),
                                    spec.row_sum, spec.stubbornness);
    case GraphFamily::barabasi_albert:
      return weighted_from_topology(
          spec.n,
          barabasi_albert_topology(spec.n, static_cast<int>(spec.parameter), spec.seed),
          spec.row_sum, spec.stubbornness);
    case GraphFamily::k_regular:
      return weighted_from_topology(
          spec.n, k_regular_topology(spec.n, static_cast<int>(spec.parameter), spec.seed),
          spec.row_sum, spec.stubbornness);
    case GraphFamily::karate:
      return weighted_from_topology(34, karate_club_topology(), spec.row_sum, spec.stubbornness);
    case GraphFamily::edge_file:
      return read_edge_file(spec.edge_file, spec.stubbornness);
  }
  throw GraphError("unhandled graph family");
}

InfluenceGraph read_edge_file(std::istream& in, const StubbornnessPolicy& stubbornness) {
  std::string line;
  int line_number = 0;
  int n = -1;
  std::vector<InfluenceEdge> edges;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    auto fail = [&](const std::string& why) {
      throw GraphError("edge file line " + std::to_string(line_number) + ": " + why);
    };
    if (n < 0) {
      if (first != "n" || !(fields >> n) || n <= 0) fail("expected header `n <count>`");
      continue;
    }
    InfluenceEdge edge;
    try {
      std::size_t used = 0;
      edge.target = std::stoi(first, &used);
      if (used != first.size()) fail("malformed node index");
    } catch (const std::logic_error&) {
      fail("malformed node index");
    }
    if (!(fields >> edge.source >> edge.weight)) fail("expected `i j w`");
    std::string extra;
    if (fields >> extra) fail("trailing content");
    edges.push_back(edge);
  }
  if (n < 0) throw GraphError("edge file is empty");
  validate_stubbornness(stubbornness, n, 1.0);
  std::vector<double> self(n, 0.0);
  for (int i = 0; i < n; ++i) self[i] = stubbornness_of(stubbornness, i, 0.0);
  return InfluenceGraph(n, std::move(edges), std::move(self));
}

InfluenceGraph read_edge_file(const std::filesystem::path& path,
                              const StubbornnessPolicy& stubbornness) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open edge file " + path.string());
  return read_edge_file(in, stubbornness);
}

void write_edge_file(std::ostream& out, const InfluenceGraph& graph) {
  out << "n " << graph.size() << '\n';
  out << std::setprecision(17);
  for (const auto& edge : graph.edges()) {
    out << edge.target << ' ' << edge.source << ' ' << edge.weight << '\n';
  }
}

std::vector<int> degree_centers(const InfluenceGraph& g, int m) {
  if (m < 0 || m > g.size()) throw GraphError("center count must lie in [0, n]");
  std::vector<int> order(g.size());
  for (int i = 0; i < g.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return g.out_degree(a) > g.out_degree(b); });
  order.resize(m);
  return order;
}

std::vector<int> influence_distances(const InfluenceGraph& g, int source) {
  std::vector<int> dist(g.size(), -1);
  std::queue<int> frontier;
  dist.at(source) = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    for (int next : g.influenced_by(node)) {
      if (dist[next] < 0) {
        dist[next] = dist[node] + 1;
        frontier.push(next);
      }
    }
  }
  return dist;
}

std::vector<int> distance_centers(const InfluenceGraph& g, int m) {
  if (m < 0 || m > g.size()) throw GraphError("center count must lie in [0, n]");
  std::vector<int> centers;
  if (m == 0) return centers;
  constexpr int kUnreachable = std::numeric_limits<int>::max();
  centers.push_back(degree_centers(g, 1).front());
  std::vector<int> gap(g.size(), kUnreachable);  // hop distance to the nearest center
  std::vector<bool> chosen(g.size(), false);
  auto absorb = [&](int center) {
    chosen[center] = true;
    const auto dist = influence_distances(g, center);
    for (int i = 0; i < g.size(); ++i) {
      if (dist[i] >= 0) gap[i] = std::min(gap[i], dist[i]);
    }
  };
  absorb(centers.front());
  while (static_cast<int>(centers.size()) < m) {
    int best = -1;
    for (int i = 0; i < g.size(); ++i) {
      if (chosen[i]) continue;
      if (best < 0 || gap[i] > gap[best]) best = i;
    }
    centers.push_back(best);
    absorb(best);
  }
  return centers;
}

}  // namespace ferment
