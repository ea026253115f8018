#pragma once

#include <functional>
#include <vector>

#include "gmerge/tensor.hpp"

namespace gmerge {

enum class Mode { Train, Eval };
enum class Axis { Rows, Cols };

/// Per-feature batch-norm state: an affine pair (learnable) plus running
/// moments updated by exponential moving average in train mode.
struct BnState {
  Tensor gamma;         // 1 x features
  Tensor beta;          // 1 x features
  Tensor running_mean;  // 1 x features, buffer
  Tensor running_var;   // 1 x features, buffer
  double momentum = 0.1;
  double eps = 1e-5;

  BnState() = default;
  explicit BnState(int features);
};

/// Reverse-mode tape over Tensor primitives. One tape per computation;
/// backward() replays recorded ops in reverse execution order and
/// accumulates adjoints into grad buffers (repeated backward calls add the
/// same contributions again).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- primitives ------------------------------------------------------
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor hadamard(const Tensor& a, const Tensor& b);
  Tensor scalar_mul(const Tensor& a, double c);
  Tensor sigmoid(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor leaky_relu(const Tensor& a, double slope = 0.2);
  Tensor log(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor softplus(const Tensor& a);
  Tensor sqrt(const Tensor& a);
  Tensor abs(const Tensor& a);
  Tensor reciprocal(const Tensor& a);
  Tensor transpose(const Tensor& a);
  Tensor sum(const Tensor& a);  // 1x1
  Tensor concat_rows(const std::vector<Tensor>& parts);
  /// Rows [start, start+rows) as a new tensor.
  Tensor slice_rows(const Tensor& a, int start, int rows);
  Tensor softmax(const Tensor& a, Axis axis = Axis::Rows);
  /// Mean negative log-softmax of the true class, one label per row.
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
  Tensor batch_norm(const Tensor& x, BnState& bn, Mode mode);
  /// Strict upper triangle of a square matrix as a P x 1 column,
  /// P = n(n-1)/2, pairs ordered (0,1), (0,2), ..., (n-2,n-1).
  Tensor upper_triangle(const Tensor& square);
  /// Inverse of upper_triangle: symmetric n x n matrix with zero diagonal.
  Tensor symmetric_from_upper(const Tensor& upper, int n);
  /// Keep the k largest of M scores (ties to the lower index), softmax over
  /// the kept set, exact zeros elsewhere.
  Tensor topk_softmax(const Tensor& scores, int k);

  // --- composites ------------------------------------------------------
  Tensor mean_all(const Tensor& a);
  /// Column means as 1 x d.
  Tensor col_mean(const Tensor& a);
  /// Biased per-column variance as 1 x d, given precomputed means.
  Tensor col_var(const Tensor& a, const Tensor& mean);
  /// sqrt(sum of squares); subgradient 0 at the origin.
  Tensor l2_norm(const Tensor& a);
  /// X*W + bias, bias broadcast over rows via a ones-column matmul.
  Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
  /// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
  Tensor normalized_adjacency(const Tensor& adjacency);
  /// -log p[label] of a 1 x c probability row.
  Tensor nll_from_probs(const Tensor& probs, int label);

  // --- control ---------------------------------------------------------
  /// Seed the scalar output's adjoint with 1 and replay the tape in exact
  /// reverse order, then add adjoints into grad buffers.
  void backward(const Tensor& scalar_output);
  void clear();
  bool recording() const { return recording_; }
  std::size_t num_ops() const { return ops_.size(); }

 private:
  void record(const Tensor& out, std::vector<Tensor> inputs,
              std::function<void()> backward_fn);
  void touch(const Tensor& t);

  std::vector<std::function<void()>> ops_;
  std::vector<Tensor> touched_;
  bool recording_;
};

}  // namespace gmerge
