#pragma once

#include <cstdint>
#include <vector>

#include "gmerge/generator.hpp"
#include "gmerge/gnn.hpp"
#include "gmerge/moe.hpp"

namespace gmerge {

/// Arithmetic mean of the experts' softmax outputs.
std::vector<double> ens_prob(std::vector<GnnModel>& experts, const Graph& g);

/// Output of the expert with the lowest output entropy (ties to the lower
/// expert index).
std::vector<double> ens_highconf(std::vector<GnnModel>& experts,
                                 const Graph& g);

/// Element-wise mean of parameters and BN moments. Heterogeneous
/// architectures are rejected outright.
GnnModel uniform_soup(std::vector<GnnModel>& models);

/// Sort by descending validation accuracy, then greedily keep each
/// checkpoint only if the running average's validation accuracy does not
/// decrease.
GnnModel greedy_soup(std::vector<GnnModel>& models,
                     const GraphDataset& validation);

struct InverseXResult {
  MergedModel model;
  GraphDataset synthetic;
};

/// Structure-free inversion baseline: same two-stage pipeline, but the
/// adjacencies stay fixed Erdos-Renyi draws and only node features are
/// learned before the standard merge training.
InverseXResult inverse_x_baseline(std::vector<GnnModel>& experts,
                                  GeneratorConfig gen_cfg,
                                  const MergeConfig& merge_cfg,
                                  std::uint64_t seed);

}  // namespace gmerge
