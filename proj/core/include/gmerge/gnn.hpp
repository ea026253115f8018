#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gmerge/graph.hpp"
#include "gmerge/tape.hpp"

namespace gmerge {

class Rng;

enum class GnnKind { GCN, GIN, GAT };

std::string to_string(GnnKind kind);
GnnKind gnn_kind_from_string(const std::string& s);

struct ArchitectureDescriptor {
  GnnKind kind = GnnKind::GCN;
  int layers = 2;
  int hidden_dim = 32;
  int num_classes = 0;
  int input_dim = 0;

  int bn_layer_count() const { return kind == GnnKind::GIN ? 2 : 1; }
  bool operator==(const ArchitectureDescriptor&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Two-layer message-passing backbone with a linear classifier head. The
/// encoder parameters (message passing weights plus BN affine pairs) and the
/// classifier parameters form disjoint, individually addressable groups.
class GnnModel {
 public:
  /// Per BN layer, the activations feeding that layer (for moment matching).
  struct Trace {
    std::vector<Tensor> pre_bn;
  };
  /// Parameter name -> elementwise mask applied before use.
  using MaskMap = std::map<std::string, Tensor>;

  GnnModel() = default;
  GnnModel(const ArchitectureDescriptor& desc, Rng& init_rng);

  const ArchitectureDescriptor& descriptor() const { return desc_; }

  /// Graph-level logits (1 x num_classes). Train mode updates BN running
  /// moments; eval mode is a pure function of the inputs.
  Tensor forward(Tape& tape, const Tensor& features, const Tensor& adjacency,
                 Mode mode, const MaskMap* masks = nullptr,
                 Trace* trace = nullptr);
  Tensor forward(Tape& tape, const Graph& g, Mode mode,
                 const MaskMap* masks = nullptr, Trace* trace = nullptr);

  /// Batched forward: BN statistics are taken over the concatenated node
  /// activations of the whole batch (one running-moment update per batch).
  /// A Trace then holds, per BN layer, that concatenated pre-BN matrix.
  std::vector<Tensor> forward_batch(Tape& tape, const std::vector<Tensor>& xs,
                                    const std::vector<Tensor>& as, Mode mode,
                                    const MaskMap* masks = nullptr,
                                    Trace* trace = nullptr);

  std::vector<NamedTensor> encoder_params();
  std::vector<NamedTensor> classifier_params();
  std::vector<NamedTensor> all_params();
  /// BN running moments (buffers, not parameters).
  std::vector<NamedTensor> bn_buffers();
  std::vector<BnState>& bn_states() { return bn_; }

  /// Deep copy with fresh parameter storage (plain copies alias it).
  GnnModel clone();

  void set_params_trainable(bool trainable);

 private:
  Tensor masked(Tape& tape, const std::string& name, const Tensor& param,
                const MaskMap* masks) const;
  /// Concat the per-graph activations, batch-norm once, slice back.
  std::vector<Tensor> bn_over_batch(Tape&, int bn_index,
                                    const std::vector<Tensor>& parts, Mode,
                                    Trace*);
  std::vector<Tensor> batch_gcn(Tape&, const std::vector<Tensor>& xs,
                                const std::vector<Tensor>& as, Mode,
                                const MaskMap*, Trace*);
  std::vector<Tensor> batch_gin(Tape&, const std::vector<Tensor>& xs,
                                const std::vector<Tensor>& as, Mode,
                                const MaskMap*, Trace*);
  std::vector<Tensor> batch_gat(Tape&, const std::vector<Tensor>& xs,
                                const std::vector<Tensor>& as, Mode,
                                const MaskMap*, Trace*);
  Tensor gat_layer(Tape&, const Tensor& h, const Tensor& a, int layer,
                   const MaskMap*);
  Tensor classify(Tape&, const Tensor& pooled, const MaskMap*);

  ArchitectureDescriptor desc_;
  std::map<std::string, Tensor> params_;
  std::vector<BnState> bn_;
  std::vector<std::string> param_order_;
};

struct PretrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-2;
  double weight_decay = 1e-4;
};

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> accuracy;
};

/// Shuffled mini-batch AdamW training on cross-entropy; deterministic per
/// seed.
TrainHistory pretrain(GnnModel& model, const GraphDataset& ds,
                      const PretrainConfig& cfg, std::uint64_t seed);

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
};

/// Accuracy plus unweighted mean over classes of TP/(TP+FP); classes that
/// are never predicted contribute 0.
EvalMetrics evaluate(GnnModel& model, const GraphDataset& ds);

EvalMetrics metrics_from_predictions(const std::vector<int>& predictions,
                                     const std::vector<int>& labels,
                                     int num_classes);

/// Eval-mode class probabilities for one graph.
std::vector<double> predict_probs(GnnModel& model, const Graph& g);

}  // namespace gmerge
