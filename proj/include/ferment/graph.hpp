#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ferment/linalg.hpp"

namespace ferment {

/// A weighted influence edge: node `source` influences node `target` with
/// weight `weight`, i.e. the entry a(target, source) of the influence matrix.
struct InfluenceEdge {
  int target = 0;
  int source = 0;
  double weight = 0.0;

  friend bool operator==(const InfluenceEdge&, const InfluenceEdge&) = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed weighted influence graph with per-node stubbornness.
///
/// Invariants (checked on construction):
///  - every weight lies in [0, 1);
///  - for every node the stubbornness plus the incoming weights sum to < 1;
///  - no duplicate (target, source) pairs and no self edges (self weight is
///    the stubbornness).
///
/// Immutable after construction.
class InfluenceGraph {
 public:
  InfluenceGraph(int n, std::vector<InfluenceEdge> edges,
                 std::vector<double> stubbornness);

  int size() const { return n_; }
  const std::vector<InfluenceEdge>& edges() const { return edges_; }
  const std::vector<double>& stubbornness() const { return stubbornness_; }

  /// Dense n x n influence matrix A with a(i,i) = stubbornness.
  Matrix influence_matrix() const;

  /// Number of nodes influenced by `node`.
  int out_degree(int node) const;

  /// Row sums of the influence matrix.
  std::vector<double> row_sums() const;

  /// Nodes influenced by `node` in one hop (ascending).
  const std::vector<int>& influenced_by(int node) const { return out_[node]; }

 private:
  int n_;
  std::vector<InfluenceEdge> edges_;
  std::vector<double> stubbornness_;
  std::vector<std::vector<int>> out_;
};

enum class GraphFamily { erdos_renyi, barabasi_albert, k_regular, karate, edge_file };

GraphFamily parse_graph_family(const std::string& name);
std::string to_string(GraphFamily family);

/// Uniform stubbornness (one value for every node) or a per-node list.
/// `std::monostate` means the equal-split rule decides the self weight.
using StubbornnessPolicy = std::variant<std::monostate, double, std::vector<double>>;

struct GraphSpec {
  GraphFamily family = GraphFamily::erdos_renyi;
  int n = 0;
  /// ER edge probability, BA attachment count, or k-regular degree.
  double parameter = 0.0;
  std::uint64_t seed = 0;
  double row_sum = 0.9;
  StubbornnessPolicy stubbornness;
  /// Only used by GraphFamily::edge_file.
  std::filesystem::path edge_file;

  void validate() const;
};

/// Builds a graph from the spec. Undirected topologies become bidirectional
/// influence edges; each node splits `row_sum` equally over itself and its
/// in-neighbours unless the stubbornness policy fixes the self weight, in
/// which case the remainder is split over the in-neighbours.
/// Pure function of the spec: the same seed gives a bit-identical graph.
InfluenceGraph generate(const GraphSpec& spec);

/// Undirected topology generators (pure in the seed). Edges are (u, v) with
/// u < v, sorted.
using UndirectedEdges = std::vector<std::pair<int, int>>;
UndirectedEdges erdos_renyi_topology(int n, double p, std::uint64_t seed);
UndirectedEdges barabasi_albert_topology(int n, int attachment, std::uint64_t seed);
UndirectedEdges k_regular_topology(int n, int k, std::uint64_t seed, int max_attempts = 1000);
UndirectedEdges karate_club_topology();

/// Applies the equal-split weighting rule to an undirected topology.
InfluenceGraph weighted_from_topology(int n, const UndirectedEdges& topology,
                                      double row_sum,
                                      const StubbornnessPolicy& stubbornness);

/// Edge-file format: first line `n <count>`, then one `i j w` triple per line
/// meaning a(i, j) = w (0-indexed). Self edges and duplicates are rejected.
/// The file carries no self weights; `stubbornness` supplies them.
InfluenceGraph read_edge_file(std::istream& in, const StubbornnessPolicy& stubbornness = {});
InfluenceGraph read_edge_file(const std::filesystem::path& path,
                              const StubbornnessPolicy& stubbornness = {});
void write_edge_file(std::ostream& out, const InfluenceGraph& graph);

/// The m nodes of largest out-degree, ties broken by smaller index.
std::vector<int> degree_centers(const InfluenceGraph& g, int m);

/// Hop distances along the influence direction from `source`:
/// result[i] = least t with (A^t)(i, source) > 0, -1 when unreachable.
std::vector<int> influence_distances(const InfluenceGraph& g, int source);

/// Farthest-first k-center heuristic: the first center is the max-out-degree
/// node, each next center the node farthest (in influence hops) from the
/// current set. Unreachable nodes count as infinitely far; ties go to the
/// smaller index.
std::vector<int> distance_centers(const InfluenceGraph& g, int m);

}  // namespace ferment
