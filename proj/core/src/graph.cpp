#include "gmerge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gmerge/tape.hpp"

namespace gmerge {

Graph::Graph(int nodes, int fdim)
    : num_nodes(nodes),
      feature_dim(fdim),
      adjacency(static_cast<std::size_t>(nodes) * nodes, 0),
      features(static_cast<std::size_t>(nodes) * fdim, 0.0) {
  if (nodes < 1) throw std::invalid_argument("Graph: need at least one node");
  if (fdim < 1) throw std::invalid_argument("Graph: need feature_dim >= 1");
}

void Graph::add_edge(int u, int v) {
  if (u == v) throw std::invalid_argument("Graph::add_edge: self-loop");
  if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
    throw std::invalid_argument("Graph::add_edge: node out of range");
  adjacency[static_cast<std::size_t>(u) * num_nodes + v] = 1;
  adjacency[static_cast<std::size_t>(v) * num_nodes + u] = 1;
}

int Graph::degree(int u) const {
  int d = 0;
  for (int v = 0; v < num_nodes; ++v) d += has_edge(u, v) ? 1 : 0;
  return d;
}

int Graph::num_edges() const {
  int doubled = 0;
  for (std::uint8_t a : adjacency) doubled += a;
  return doubled / 2;
}

Tensor Graph::feature_tensor() const {
  return Tensor::from_values(num_nodes, feature_dim, features);
}

Tensor Graph::adjacency_tensor() const {
  Tensor t(num_nodes, num_nodes);
  for (std::size_t i = 0; i < adjacency.size(); ++i)
    t.values()[i] = adjacency[i];
  return t;
}

void Graph::validate() const {
  if (num_nodes < 1)
    throw std::invalid_argument("Graph: need at least one node");
  if (adjacency.size() != static_cast<std::size_t>(num_nodes) * num_nodes)
    throw std::invalid_argument("Graph: adjacency size mismatch");
  if (features.size() != static_cast<std::size_t>(num_nodes) * feature_dim)
    throw std::invalid_argument("Graph: feature size mismatch");
  for (int i = 0; i < num_nodes; ++i) {
    if (has_edge(i, i)) throw std::invalid_argument("Graph: nonzero diagonal");
    for (int j = 0; j < num_nodes; ++j) {
      std::uint8_t a = adjacency[static_cast<std::size_t>(i) * num_nodes + j];
      if (a != 0 && a != 1)
        throw std::invalid_argument("Graph: adjacency entry not in {0,1}");
      if (a != adjacency[static_cast<std::size_t>(j) * num_nodes + i])
        throw std::invalid_argument("Graph: adjacency not symmetric");
    }
  }
}

double GraphDataset::mean_edge_node_ratio() const {
  if (graphs.empty()) return 0.0;
  double s = 0.0;
  for (const Graph& g : graphs) s += g.edge_node_ratio();
  return s / graphs.size();
}

void GraphDataset::validate() const {
  for (const Graph& g : graphs) {
    g.validate();
    if (g.feature_dim != feature_dim)
      throw std::invalid_argument("GraphDataset: feature_dim mismatch");
    if (g.label >= num_classes)
      throw std::invalid_argument("GraphDataset: label out of range");
  }
}

const GraphDataset& DomainSplit::domain(const std::string& tag) const {
  for (const auto& [t, ds] : domains)
    if (t == tag) return ds;
  throw std::invalid_argument("DomainSplit: no domain tagged " + tag);
}

DomainSplit split_by_edge_density(const GraphDataset& ds,
                                  const std::vector<double>& fractions) {
  if (ds.graphs.size() < 3)
    throw std::invalid_argument("split_by_edge_density: need >= 3 graphs, got " +
                                std::to_string(ds.graphs.size()));
  double total = 0.0;
  for (double f : fractions) {
    if (f <= 0.0)
      throw std::invalid_argument("split_by_edge_density: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split_by_edge_density: fractions sum to " +
                                std::to_string(total) + ", expected 1");

  std::vector<int> order(ds.graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ds.graphs[a].edge_node_ratio() < ds.graphs[b].edge_node_ratio();
  });

  std::size_t n = ds.graphs.size();
  std::size_t k = fractions.size();
  std::vector<std::size_t> sizes(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    sizes[i] = static_cast<std::size_t>(fractions[i] * n);
    assigned += sizes[i];
  }
  sizes[k - 1] = n - assigned;

  DomainSplit split;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::string tag =
        i + 1 == k ? "T" : std::string(1, static_cast<char>('A' + i));
    GraphDataset part;
    part.num_classes = ds.num_classes;
    part.feature_dim = ds.feature_dim;
    part.name = ds.name + "-" + tag;
    for (std::size_t j = 0; j < sizes[i]; ++j)
      part.graphs.push_back(ds.graphs[order[pos + j]]);
    pos += sizes[i];
    if (i + 1 < k && pos < n)
      split.thresholds.push_back(ds.graphs[order[pos]].edge_node_ratio());
    split.domains.emplace_back(std::move(tag), std::move(part));
  }
  return split;
}

Tensor normalize_adjacency(const Graph& g) {
  Tape tape(false);
  return tape.normalized_adjacency(g.adjacency_tensor());
}

}  // namespace gmerge
