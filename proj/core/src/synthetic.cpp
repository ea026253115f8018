#include "gmerge/synthetic.hpp"

#include <algorithm>
#include <stdexcept>

#include "gmerge/rng.hpp"

namespace gmerge {

namespace {

void plant_triangle_pendant(Graph& g, Rng& rng) {
  if (g.num_nodes < 4)
    throw std::invalid_argument(
        "synth_domain_dataset: motif infeasible for n < 4");
  // four distinct nodes: triangle on a,b,c plus pendant d attached to c
  std::vector<int> nodes(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) nodes[i] = i;
  rng.shuffle(nodes);
  int a = nodes[0], b = nodes[1], c = nodes[2], d = nodes[3];
  g.add_edge(a, b);
  g.add_edge(b, c);
  g.add_edge(a, c);
  g.add_edge(c, d);
}

void fill_degree_features(Graph& g, int buckets) {
  for (int u = 0; u < g.num_nodes; ++u) {
    int bucket = std::min(g.degree(u), buckets - 1);
    g.feature(u, bucket) = 1.0;
  }
}

}  // namespace

GraphDataset synth_domain_dataset(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.edge_prob <= 0.0 || cfg.edge_prob >= 1.0)
    throw std::invalid_argument("synth_domain_dataset: edge_prob must be in (0,1)");
  if (cfg.nodes_min < 6 || cfg.nodes_max > 64 || cfg.nodes_min > cfg.nodes_max)
    throw std::invalid_argument(
        "synth_domain_dataset: nodes_range must lie within [6, 64]");
  Rng rng(seed);
  GraphDataset ds;
  ds.num_classes = 2;
  ds.feature_dim = cfg.feature_buckets;
  ds.name = "synthetic";
  ds.graphs.reserve(cfg.num_graphs);
  for (int i = 0; i < cfg.num_graphs; ++i) {
    int n = rng.uniform_int(cfg.nodes_min, cfg.nodes_max);
    Graph g(n, cfg.feature_buckets);
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.bernoulli(cfg.edge_prob)) g.add_edge(u, v);
    g.label = i % 2;  // exact 50/50 balance
    if (g.label == 1) plant_triangle_pendant(g, rng);
    fill_degree_features(g, cfg.feature_buckets);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace gmerge
