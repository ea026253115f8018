#include "gmerge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gmerge {

std::vector<double> ens_prob(std::vector<GnnModel>& experts, const Graph& g) {
  if (experts.empty()) throw std::invalid_argument("ens_prob: no experts");
  std::vector<double> out(experts.front().descriptor().num_classes, 0.0);
  for (GnnModel& e : experts) {
    std::vector<double> p = predict_probs(e, g);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += p[k] / experts.size();
  }
  return out;
}

namespace {

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace

std::vector<double> ens_highconf(std::vector<GnnModel>& experts,
                                 const Graph& g) {
  if (experts.empty()) throw std::invalid_argument("ens_highconf: no experts");
  std::vector<double> best;
  double best_entropy = 0.0;
  for (std::size_t j = 0; j < experts.size(); ++j) {
    std::vector<double> p = predict_probs(experts[j], g);
    double h = entropy(p);
    if (j == 0 || h < best_entropy) {
      best_entropy = h;
      best = std::move(p);
    }
  }
  return best;
}

GnnModel uniform_soup(std::vector<GnnModel>& models) {
  if (models.empty()) throw std::invalid_argument("uniform_soup: no models");
  const ArchitectureDescriptor& ref = models.front().descriptor();
  for (GnnModel& m : models)
    if (!(m.descriptor() == ref))
      throw std::invalid_argument(
          "uniform_soup: incompatible architectures (" +
          to_string(ref.kind) + " vs " + to_string(m.descriptor().kind) +
          "); parameter averaging needs identical descriptors");
  GnnModel soup = models.front().clone();
  double inv = 1.0 / models.size();
  auto average = [&](std::vector<NamedTensor> dst,
                     std::vector<std::vector<NamedTensor>> srcs) {
    for (std::size_t t = 0; t < dst.size(); ++t) {
      auto& out = dst[t].tensor.values();
      std::fill(out.begin(), out.end(), 0.0);
      for (auto& src : srcs)
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] += inv * src[t].tensor.values()[i];
    }
  };
  std::vector<std::vector<NamedTensor>> param_srcs, buffer_srcs;
  for (GnnModel& m : models) {
    param_srcs.push_back(m.all_params());
    buffer_srcs.push_back(m.bn_buffers());
  }
  average(soup.all_params(), param_srcs);
  average(soup.bn_buffers(), buffer_srcs);
  return soup;
}

GnnModel greedy_soup(std::vector<GnnModel>& models,
                     const GraphDataset& validation) {
  if (models.empty()) throw std::invalid_argument("greedy_soup: no models");
  if (validation.empty())
    throw std::invalid_argument("greedy_soup: empty validation set");
  std::vector<double> accuracy(models.size());
  for (std::size_t i = 0; i < models.size(); ++i)
    accuracy[i] = evaluate(models[i], validation).accuracy;
  std::vector<int> order(models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return accuracy[a] > accuracy[b]; });

  std::vector<GnnModel> kept;
  kept.push_back(models[order[0]].clone());
  GnnModel current = uniform_soup(kept);
  double current_acc = evaluate(current, validation).accuracy;
  for (std::size_t i = 1; i < order.size(); ++i) {
    kept.push_back(models[order[i]].clone());
    GnnModel trial = uniform_soup(kept);
    double trial_acc = evaluate(trial, validation).accuracy;
    if (trial_acc >= current_acc) {
      current = std::move(trial);
      current_acc = trial_acc;
    } else {
      kept.pop_back();
    }
  }
  return current;
}

InverseXResult inverse_x_baseline(std::vector<GnnModel>& experts,
                                  GeneratorConfig gen_cfg,
                                  const MergeConfig& merge_cfg,
                                  std::uint64_t seed) {
  if (experts.empty())
    throw std::invalid_argument("inverse_x_baseline: no experts");
  gen_cfg.learn_structure = false;
  InverseXResult result;
  result.synthetic.num_classes = experts.front().descriptor().num_classes;
  result.synthetic.feature_dim = experts.front().descriptor().input_dim;
  result.synthetic.name = "inverse-x";
  for (std::size_t j = 0; j < experts.size(); ++j) {
    SyntheticSet set = run_generation(experts[j], gen_cfg,
                                      derive_seed(seed, j),
                                      static_cast<int>(j));
    for (Graph& g : set.data.graphs)
      result.synthetic.graphs.push_back(std::move(g));
  }
  std::vector<GnnModel> clones;
  clones.reserve(experts.size());
  for (GnnModel& e : experts) clones.push_back(e.clone());
  result.model = MergedModel::build(std::move(clones), merge_cfg.top_k,
                                    merge_cfg.hyper, merge_cfg.position);
  merge_train(result.model, result.synthetic, merge_cfg,
              derive_seed(seed, 1000));
  return result;
}

}  // namespace gmerge
