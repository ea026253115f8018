#include "gmerge/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

namespace gmerge {

namespace {

double mean_disagreement(GnnModel& f_i, GnnModel& f_j, const GraphDataset& ds) {
  double total = 0.0;
  for (const Graph& g : ds.graphs) {
    std::vector<double> a = predict_probs(f_i, g);
    std::vector<double> b = predict_probs(f_j, g);
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
    total += d / a.size();
  }
  return total / ds.graphs.size();
}

}  // namespace

double hdh_divergence(GnnModel& f_i, GnnModel& f_j, const GraphDataset& ds_i,
                      const GraphDataset& ds_j) {
  if (ds_i.empty() || ds_j.empty())
    throw std::invalid_argument("hdh_divergence: empty dataset");
  if (f_i.descriptor().num_classes != f_j.descriptor().num_classes)
    throw std::invalid_argument("hdh_divergence: output dimensions differ");
  return 2.0 * std::abs(mean_disagreement(f_i, f_j, ds_i) -
                        mean_disagreement(f_i, f_j, ds_j));
}

CrossErrorMatrix cross_error_matrix(
    std::vector<GnnModel>& experts, const std::vector<std::string>& expert_tags,
    const std::vector<std::pair<std::string, const GraphDataset*>>& domains) {
  if (experts.size() != expert_tags.size())
    throw std::invalid_argument("cross_error_matrix: tag count mismatch");
  CrossErrorMatrix m;
  m.expert_tags = expert_tags;
  for (const auto& [tag, ds] : domains) {
    if (ds == nullptr || ds->empty())
      throw std::invalid_argument("cross_error_matrix: empty domain " + tag);
    m.domain_tags.push_back(tag);
  }
  for (GnnModel& e : experts)
    for (const auto& [tag, ds] : domains)
      m.entries.push_back(1.0 - evaluate(e, *ds).accuracy);
  return m;
}

}  // namespace gmerge
