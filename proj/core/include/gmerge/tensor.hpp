#pragma once

#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace gmerge {

class Rng;

/// Dense row-major 2-D tensor of doubles with an attached gradient buffer.
/// Copies are shallow: two Tensor handles may alias the same storage, which
/// is how optimizers and the tape share parameters.
class Tensor {
 public:
  Tensor() : Tensor(0, 0, false) {}
  Tensor(int rows, int cols, bool requires_grad = false);

  static Tensor zeros(int rows, int cols);
  static Tensor ones(int rows, int cols);
  static Tensor full(int rows, int cols, double value);
  static Tensor identity(int n);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_values(int rows, int cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor row(std::initializer_list<double> values);
  static Tensor randn(Rng& rng, int rows, int cols, double stddev = 1.0,
                      bool requires_grad = false);
  /// Xavier-uniform init over [-limit, limit], limit = sqrt(6/(fan_in+fan_out)).
  static Tensor xavier_uniform(Rng& rng, int fan_in, int fan_out,
                               bool requires_grad = true);
  /// One-hot column vector (c x 1).
  static Tensor onehot_col(int index, int size);

  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  int size() const { return d_->rows * d_->cols; }
  std::string shape_str() const;

  double& at(int r, int c) { return d_->val[static_cast<std::size_t>(r) * d_->cols + c]; }
  double at(int r, int c) const { return d_->val[static_cast<std::size_t>(r) * d_->cols + c]; }
  double& grad_at(int r, int c) { return d_->grad[static_cast<std::size_t>(r) * d_->cols + c]; }
  double grad_at(int r, int c) const { return d_->grad[static_cast<std::size_t>(r) * d_->cols + c]; }

  /// Value of a 1x1 tensor.
  double value() const;

  std::vector<double>& values() { return d_->val; }
  const std::vector<double>& values() const { return d_->val; }
  std::vector<double>& grad() { return d_->grad; }
  const std::vector<double>& grad() const { return d_->grad; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool enable);
  /// True when this tensor lies on some gradient path (a leaf with
  /// requires_grad, or an op output depending on one).
  bool needs_grad() const { return d_->needs_grad; }

  void zero_grad();

  /// Deep copy with fresh storage (gradients reset to zero).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  friend class Tape;
  struct Data {
    int rows = 0;
    int cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    std::vector<double> adj;  // backward scratch, managed by Tape
    bool requires_grad = false;
    bool needs_grad = false;
  };
  std::shared_ptr<Data> d_;
};

}  // namespace gmerge
