#include "gmerge/tensor.hpp"

#include <cmath>
#include <stdexcept>

#include "gmerge/rng.hpp"

namespace gmerge {

Tensor::Tensor(int rows, int cols, bool requires_grad)
    : d_(std::make_shared<Data>()) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative shape");
  d_->rows = rows;
  d_->cols = cols;
  d_->val.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  d_->grad.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  d_->requires_grad = requires_grad;
  d_->needs_grad = requires_grad;
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(rows, cols); }

Tensor Tensor::ones(int rows, int cols) { return full(rows, cols, 1.0); }

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = value;
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t(1, 1, requires_grad);
  t.at(0, 0) = value;
  return t;
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values,
                           bool requires_grad) {
  if (static_cast<std::size_t>(rows) * cols != values.size())
    throw std::invalid_argument("Tensor::from_values: size mismatch");
  Tensor t(rows, cols, requires_grad);
  t.values() = std::move(values);
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return from_values(1, static_cast<int>(values.size()),
                     std::vector<double>(values));
}

Tensor Tensor::randn(Rng& rng, int rows, int cols, double stddev,
                     bool requires_grad) {
  Tensor t(rows, cols, requires_grad);
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::xavier_uniform(Rng& rng, int fan_in, int fan_out,
                              bool requires_grad) {
  Tensor t(fan_in, fan_out, requires_grad);
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor Tensor::onehot_col(int index, int size) {
  if (index < 0 || index >= size)
    throw std::invalid_argument("Tensor::onehot_col: index out of range");
  Tensor t(size, 1);
  t.at(index, 0) = 1.0;
  return t;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows()) + "x" + std::to_string(cols());
}

double Tensor::value() const {
  if (rows() != 1 || cols() != 1)
    throw std::invalid_argument("Tensor::value: tensor is " + shape_str() +
                                ", expected 1x1");
  return d_->val[0];
}

void Tensor::set_requires_grad(bool enable) {
  d_->requires_grad = enable;
  d_->needs_grad = enable;
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(rows(), cols(), requires_grad());
  t.values() = values();
  return t;
}

}  // namespace gmerge
