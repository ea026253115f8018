#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gmerge/gnn.hpp"

namespace gmerge {

/// Plug-in estimate of the function-space divergence between two domains:
/// 2 * | E_{G~ds_i}[delta(G)] - E_{G~ds_j}[delta(G)] | with delta(G) the mean
/// absolute difference of the two experts' probability outputs. The formal
/// quantity takes a supremum over hypothesis pairs, so this is a lower-bound
/// estimate for the given trained pair.
double hdh_divergence(GnnModel& f_i, GnnModel& f_j, const GraphDataset& ds_i,
                      const GraphDataset& ds_j);

/// entry (i, j) = 1 - accuracy of expert i on domain j. Needs tagged source
/// data, so it is a diagnostic only, not part of the source-free pipeline.
struct CrossErrorMatrix {
  std::vector<std::string> expert_tags;
  std::vector<std::string> domain_tags;
  std::vector<double> entries;  // row-major experts x domains

  double at(int expert, int domain) const {
    return entries[static_cast<std::size_t>(expert) * domain_tags.size() +
                   domain];
  }
};

CrossErrorMatrix cross_error_matrix(
    std::vector<GnnModel>& experts, const std::vector<std::string>& expert_tags,
    const std::vector<std::pair<std::string, const GraphDataset*>>& domains);

}  // namespace gmerge
