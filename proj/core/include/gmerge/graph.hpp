#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmerge/tensor.hpp"

namespace gmerge {

/// Undirected simple graph: symmetric 0/1 adjacency with zero diagonal,
/// per-node feature rows, optional class label (-1 = unlabeled).
struct Graph {
  int num_nodes = 0;
  int feature_dim = 0;
  std::vector<std::uint8_t> adjacency;  // num_nodes * num_nodes, row-major
  std::vector<double> features;         // num_nodes * feature_dim, row-major
  int label = -1;

  Graph() = default;
  Graph(int nodes, int fdim);

  bool has_edge(int u, int v) const {
    return adjacency[static_cast<std::size_t>(u) * num_nodes + v] != 0;
  }
  void add_edge(int u, int v);
  int degree(int u) const;
  /// Number of undirected edges.
  int num_edges() const;
  double edge_node_ratio() const {
    return static_cast<double>(num_edges()) / num_nodes;
  }
  double& feature(int node, int k) {
    return features[static_cast<std::size_t>(node) * feature_dim + k];
  }
  double feature(int node, int k) const {
    return features[static_cast<std::size_t>(node) * feature_dim + k];
  }

  Tensor feature_tensor() const;
  Tensor adjacency_tensor() const;

  /// Throws std::invalid_argument on any structural invariant violation.
  void validate() const;
};

struct GraphDataset {
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;
  std::string name;

  std::size_t size() const { return graphs.size(); }
  bool empty() const { return graphs.empty(); }
  double mean_edge_node_ratio() const;
  void validate() const;
};

/// Ordered density split of one dataset into disjoint tagged domains.
struct DomainSplit {
  std::vector<std::pair<std::string, GraphDataset>> domains;
  /// Edge/node-ratio boundaries between consecutive domains.
  std::vector<double> thresholds;

  const GraphDataset& domain(const std::string& tag) const;
};

/// Sort graphs ascending by edge/node ratio (ties keep original order) and
/// cut into |fractions| domains tagged A, B, ..., with the last tagged T.
/// Sizes are floor(fraction * N) except the last domain, which takes the
/// remainder.
DomainSplit split_by_edge_density(const GraphDataset& ds,
                                  const std::vector<double>& fractions);

/// D^{-1/2} (A + I) D^{-1/2} as a constant tensor.
Tensor normalize_adjacency(const Graph& g);

}  // namespace gmerge
