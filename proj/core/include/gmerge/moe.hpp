#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmerge/gnn.hpp"
#include "gmerge/rng.hpp"

namespace gmerge {

enum class MaskPosition { Classifier, Encoder };

std::string to_string(MaskPosition p);
MaskPosition mask_position_from_string(const std::string& s);

/// A frozen pre-trained model plus a learnable elementwise mask over one of
/// its parameter groups. With an all-ones mask the masked forward is the
/// original forward.
struct MaskedExpert {
  GnnModel model;
  GnnModel::MaskMap masks;
  MaskPosition position = MaskPosition::Classifier;

  std::size_t masked_param_count() const;
  std::size_t total_param_count();
};

struct GateParams {
  Tensor w_gate;   // gate_input_dim x M, zero-init
  Tensor w_noise;  // gate_input_dim x M, zero-init
  int top_k = 2;
};

struct MergeHyper {
  double lambda_gate = 0.1;
  double lambda_mask = 0.1;
  double gamma_p = 0.9;
  double gamma_v = 0.1;
};

/// Fixed (non-learned) per-graph gate input: mean-pooled node features
/// concatenated with [mean degree, degree std, edge density, log n].
std::vector<double> gate_features(const Graph& g);

/// Q = x W_g + eps . softplus(x W_n); eps ~ N(0,1) per expert in train mode,
/// exactly zero in eval mode.
Tensor gate_scores(Tape& tape, const GateParams& gate, const Tensor& features,
                   Mode mode, Rng* noise_rng);

/// softmax over the k largest scores; non-selected weights are exactly zero.
Tensor sparse_gate(Tape& tape, const Tensor& scores, int k);

/// Load-balancing penalty: squared coefficient of variation of the
/// per-expert weight totals over a batch; 0 when all totals are equal.
Tensor importance_loss(Tape& tape, const std::vector<Tensor>& batch_weights);

/// Sparse mixture of masked experts: softmaxed expert outputs combined by
/// the gate in probability space.
class MergedModel {
 public:
  MergedModel() = default;

  /// Takes ownership of the experts and freezes their parameters; masks are
  /// all-ones, gate weights zero (uniform initial routing).
  static MergedModel build(std::vector<GnnModel> experts, int top_k,
                           MergeHyper hyper = {},
                           MaskPosition position = MaskPosition::Classifier);

  int num_experts() const { return static_cast<int>(experts_.size()); }
  int num_classes() const { return experts_.front().model.descriptor().num_classes; }
  int gate_input_dim() const { return gate_.w_gate.rows(); }
  std::vector<MaskedExpert>& experts() { return experts_; }
  GateParams& gate() { return gate_; }
  const MergeHyper& hyper() const { return hyper_; }
  MaskPosition mask_position() const { return experts_.front().position; }

  /// Gate weights for one graph (1 x M).
  Tensor gate_weights(Tape& tape, const Graph& g, Mode mode, Rng* noise_rng);

  /// Convex combination of the selected experts' probability outputs;
  /// experts with zero gate weight are not evaluated.
  Tensor merged_forward(Tape& tape, const Graph& g, Mode mode,
                        Rng* noise_rng = nullptr);

  /// Argmax class (ties to the lower index) plus the probability vector.
  std::pair<int, std::vector<double>> predict(const Graph& g);

  /// All gradient-enabled tensors: every mask plus W_g and W_n.
  std::vector<Tensor> trainable_params();

 private:
  std::vector<MaskedExpert> experts_;
  GateParams gate_;
  MergeHyper hyper_;
};

/// Mask regularizer: every masked expert is fine-tuned on the batch by
/// cross-entropy, and each mask is anchored near one through its mean and a
/// smooth near-one fraction (Gaussian bump of width gamma_v).
Tensor mask_loss(Tape& tape, MergedModel& model,
                 const std::vector<const Graph*>& batch,
                 const std::vector<int>& labels);

struct MergeConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  int top_k = 2;
  MergeHyper hyper;
  MaskPosition position = MaskPosition::Classifier;
};

/// Stage-2 training: AdamW on masks and gate weights only, minimizing the
/// merged cross-entropy plus weighted gate and mask regularizers over the
/// synthetic mixture.
TrainHistory merge_train(MergedModel& model, const GraphDataset& synthetic,
                         const MergeConfig& cfg, std::uint64_t seed);

/// Merged-model file: expert checkpoint reference paths, mask and gate
/// tensors, and the config echo, in the checkpoint text format.
void save_merged_model(const std::string& path, MergedModel& model,
                       const std::vector<std::string>& expert_paths);
MergedModel load_merged_model(const std::string& path);

}  // namespace gmerge
