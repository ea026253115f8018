#pragma once

#include <vector>

#include "gmerge/tensor.hpp"

namespace gmerge {

struct AdamWConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled weight-decay Adam. Moment buffers share shapes with their
/// parameters; the step counter is monotone.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config = {});

  /// One update from the parameters' current grad buffers.
  void step();
  void zero_grad();

  long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWConfig cfg_;
  long t_ = 0;
};

}  // namespace gmerge
