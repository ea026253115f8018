#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gmerge/adamw.hpp"
#include "gmerge/gnn.hpp"
#include "gmerge/rng.hpp"

namespace gmerge {

struct GeneratorConfig {
  int count = 64;  // graphs per expert
  int nodes_min = 10;
  int nodes_max = 20;
  double tau = 1.0;
  bool anneal_tau = false;
  double tau_final = 0.5;
  int epochs = 200;
  double lr_inputs = 1e-1;   // learnable node features
  double lr_encoder = 1e-2;  // edge-encoder MLP
  double weight_decay = 1e-4;
  int encoder_hidden = 64;
  /// Initial edge-encoder output bias; logit(0.2) biases the first relaxed
  /// adjacencies toward sparse graphs.
  double edge_bias_init = -1.3862943611198906;
  /// Scaled-tanh bound on the pair logits (keeps relaxation gradients alive).
  double score_bound = 4.0;
  /// Center the pair logits per graph before the relaxation. Uncentered
  /// scores drift to a uniform sign under AdamW and harden into complete or
  /// empty graphs.
  bool center_pair_scores = true;
  bool gumbel_noise = true;
  /// When false, adjacencies are fixed Erdos-Renyi draws and only the node
  /// features are optimized (the structure-free inversion baseline).
  bool learn_structure = true;
  double fixed_edge_prob = 0.2;
};

/// Hardened label-conditional graphs distilled from one frozen expert.
struct SyntheticSet {
  GraphDataset data;
  int expert_id = -1;
  std::uint64_t seed = 0;
  std::string config_echo;
};

struct GenLossParts {
  double posterior = 0.0;
  double bn = 0.0;
  double conf = 0.0;
  double total = 0.0;
};

struct GenLossTensors {
  Tensor posterior;
  Tensor bn;
  Tensor conf;
  Tensor total;
};

/// Moment-matching penalty against the expert's stored BN statistics:
/// sum over BN layers of ||mu_batch - mu_running||_2 + ||var_batch -
/// var_running||_2, with batch moments taken over all nodes of all graphs.
Tensor bn_regularizer(Tape& tape, GnnModel& expert,
                      const std::vector<Tensor>& xs,
                      const std::vector<Tensor>& as);

/// Mean output entropy of the expert over the batch.
Tensor confidence_regularizer(Tape& tape, GnnModel& expert,
                              const std::vector<Tensor>& xs,
                              const std::vector<Tensor>& as);

/// Posterior cross-entropy + BN moment matching + confidence, from a single
/// eval-mode batched forward of the frozen expert.
GenLossTensors generation_loss_terms(Tape& tape, GnnModel& expert,
                                     const std::vector<Tensor>& xs,
                                     const std::vector<Tensor>& as,
                                     const std::vector<int>& labels);

/// Two-logit Bernoulli relaxation of an edge-probability matrix: per
/// unordered pair the logits are (log p, log(1-p)), optionally perturbed by
/// independent Gumbel(0,1) noise, then softmaxed at temperature tau; the
/// edge-on component is returned, symmetrized, zero diagonal. With noise off
/// this reduces to sigmoid(logit(p)/tau).
Tensor gumbel_adjacency(Tape& tape, const Tensor& probabilities, double tau,
                        Rng* noise_rng);

/// Per-expert graph generator: learnable per-graph feature matrices, an edge
/// encoder (three-layer MLP over pair concatenations, symmetrized), sampled
/// conditional labels, and a relaxation temperature. Freezes the expert's
/// parameters on construction.
class GraphGenerator {
 public:
  GraphGenerator(GnnModel& expert, const GeneratorConfig& cfg,
                 std::uint64_t seed);

  int count() const { return static_cast<int>(features_.size()); }
  const std::vector<int>& labels() const { return labels_; }
  Tensor features(int graph_index) const { return features_.at(graph_index); }
  double tau() const { return tau_; }

  /// Symmetric (0,1) edge-probability matrix for one graph (zero diagonal).
  Tensor edge_probabilities(Tape& tape, int graph_index);

  /// Relaxed adjacency for one graph at the current temperature; noise
  /// defaults to the configured setting.
  Tensor relaxed_adjacency(Tape& tape, int graph_index,
                           std::optional<bool> with_noise = std::nullopt);

  /// One full-batch update of features and encoder (AdamW).
  GenLossParts step();

  /// Full optimization followed by hardening at 0.5.
  SyntheticSet run(int expert_id);

  std::vector<Tensor> trainable_params();

 private:
  /// Pre-sigmoid pair score column (P x 1) for one graph; its sigmoid is the
  /// edge probability, and it doubles as the Bernoulli logit.
  Tensor pair_scores(Tape& tape, int graph_index);

  GnnModel* expert_;
  GeneratorConfig cfg_;
  Rng rng_;
  double tau_;
  std::vector<Tensor> features_;      // learnable X^i
  std::vector<int> labels_;           // frozen conditional labels
  std::vector<Tensor> fixed_adj_;     // structure-free variant only
  std::map<std::string, Tensor> encoder_;
  std::vector<std::unique_ptr<AdamW>> opts_;
};

/// Stage-1 entry point: optimize a generator against one frozen expert and
/// emit the hardened synthetic set.
SyntheticSet run_generation(GnnModel& expert, const GeneratorConfig& cfg,
                            std::uint64_t seed, int expert_id = 0);

/// Dataset file plus ".prov" sidecar (expert id, seed, config echo).
void save_synthetic_set(const std::string& path, const SyntheticSet& set);
SyntheticSet load_synthetic_set(const std::string& path);

std::string generator_config_echo(const GeneratorConfig& cfg);

}  // namespace gmerge
