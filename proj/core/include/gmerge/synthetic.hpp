#pragma once

#include <cstdint>

#include "gmerge/graph.hpp"

namespace gmerge {

enum class MotifRule { TrianglePendant };

struct SynthConfig {
  int num_graphs = 200;
  int nodes_min = 10;
  int nodes_max = 20;
  double edge_prob = 0.1;
  int feature_buckets = 8;  // degree one-hot, clipped at buckets-1
  MotifRule motif = MotifRule::TrianglePendant;
};

/// Erdos-Renyi graphs with a planted triangle-plus-pendant motif in exactly
/// half of them (label 1 = planted). Node features are degree one-hot
/// buckets, so the edge probability doubles as the domain variable.
GraphDataset synth_domain_dataset(std::uint64_t seed, const SynthConfig& cfg);

}  // namespace gmerge
