#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace treeseg {

struct GraphEdge
{
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 1.0;

  bool operator==(const GraphEdge&) const = default;
};

/// Undirected weighted graph whose nodes carry a value vector of fixed
/// dimension (row-major in `values`) and a positive weight.
struct PointGraph
{
  std::size_t dim = 3;
  std::vector<double> values;
  std::vector<double> node_weight;
  /// a < b, no duplicates, no self-loops.
  std::vector<GraphEdge> edges;

  std::size_t node_count() const { return node_weight.size(); }
  const double* value(std::size_t i) const { return values.data() + i * dim; }
  void validate() const;
};

/// Symmetrised K-nearest-neighbour graph over xyz points with unit weights.
PointGraph build_knn_graph(const std::vector<std::array<double, 3>>& points, int K);

/// Same over 2D points with the given node weights.
PointGraph build_knn_graph_2d(const std::vector<std::array<double, 2>>& points, int K,
                              std::vector<double> node_weight);

struct CutPursuitResult
{
  /// Cluster of every node, 0..cluster_count-1, numbered by first node.
  std::vector<int> cluster;
  std::size_t cluster_count = 0;
  /// Objective recomputed from the returned partition.
  double objective = 0.0;
  /// Objective before any move and after every accepted move.
  std::vector<double> history;
};

/// sum_i w_i |x_i - g_i|^2 + lambda * sum over cut edges of w_ij, where g_i
/// is the weighted mean of i's cluster.
double cut_pursuit_objective(const PointGraph& graph, const std::vector<int>& cluster, double lambda);

/// Greedy l0 cut pursuit.  Starts from the connected components and
/// alternates three kinds of strictly improving moves until none applies:
/// binary splits proposed by weighted 2-means, merges of adjacent clusters
/// (best first), and single-node moves to a neighbouring cluster or a new
/// singleton.
CutPursuitResult cut_pursuit_l0(const PointGraph& graph, double lambda);

/// Connected components (component id per node, numbered by first node).
std::vector<int> connected_components(std::size_t n, const std::vector<GraphEdge>& edges);

} // namespace treeseg
