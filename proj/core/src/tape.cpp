#include "gmerge/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace gmerge {

namespace {

// C (n x m) = A (n x k) * B (k x m)
void gemm(const double* a, const double* b, double* c, int n, int k, int m) {
  std::fill(c, c + static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// dA (n x k) += G (n x m) * B^T
void gemm_nt_acc(const double* g, const double* b, double* da, int n, int k,
                 int m) {
  for (int i = 0; i < n; ++i) {
    const double* gi = g + static_cast<std::size_t>(i) * m;
    double* dai = da + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * m;
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += gi[j] * bp[j];
      dai[p] += s;
    }
  }
}

// dB (k x m) += A^T * G (n x m)
void gemm_tn_acc(const double* a, const double* g, double* db, int n, int k,
                 int m) {
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* gi = g + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* dbp = db + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) dbp[j] += av * gi[j];
    }
  }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch: " +
                                a.shape_str() + " vs " + b.shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

BnState::BnState(int features)
    : gamma(Tensor::ones(1, features)),
      beta(Tensor::zeros(1, features)),
      running_mean(Tensor::zeros(1, features)),
      running_var(Tensor::ones(1, features)) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

void Tape::touch(const Tensor& t) { touched_.push_back(t); }

void Tape::record(const Tensor& out, std::vector<Tensor> inputs,
                  std::function<void()> backward_fn) {
  for (const Tensor& t : inputs) touch(t);
  touch(out);
  ops_.push_back(std::move(backward_fn));
}

void Tape::clear() {
  ops_.clear();
  touched_.clear();
}

void Tape::backward(const Tensor& scalar_output) {
  if (scalar_output.rows() != 1 || scalar_output.cols() != 1)
    throw std::invalid_argument("backward: output is " +
                                scalar_output.shape_str() + ", expected 1x1");
  std::unordered_set<Tensor::Data*> seen;
  std::vector<Tensor::Data*> uniq;
  uniq.reserve(touched_.size() + 1);
  for (const Tensor& t : touched_) {
    if (seen.insert(t.d_.get()).second) {
      t.d_->adj.assign(t.d_->val.size(), 0.0);
      uniq.push_back(t.d_.get());
    }
  }
  if (seen.insert(scalar_output.d_.get()).second) {
    scalar_output.d_->adj.assign(1, 0.0);
    uniq.push_back(scalar_output.d_.get());
  }
  scalar_output.d_->adj[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  for (Tensor::Data* d : uniq) {
    if (!d->needs_grad) continue;
    for (std::size_t i = 0; i < d->grad.size(); ++i) d->grad[i] += d->adj[i];
  }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ: " +
                                a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.rows(), b.cols());
  gemm(a.values().data(), b.values().data(), out.values().data(), a.rows(),
       a.cols(), b.cols());
  bool ng = a.needs_grad() || b.needs_grad();
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    Tensor ac = a, bc = b, oc = out;
    record(out, {a, b}, [ac, bc, oc]() {
      const double* g = oc.d_->adj.data();
      if (ac.d_->needs_grad)
        gemm_nt_acc(g, bc.values().data(), ac.d_->adj.data(), ac.rows(),
                    ac.cols(), bc.cols());
      if (bc.d_->needs_grad)
        gemm_tn_acc(ac.values().data(), g, bc.d_->adj.data(), ac.rows(),
                    ac.cols(), bc.cols());
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  bool ng = a.needs_grad() || b.needs_grad();
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    Tensor ac = a, bc = b, oc = out;
    record(out, {a, b}, [ac, bc, oc]() {
      const auto& g = oc.d_->adj;
      if (ac.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) ac.d_->adj[i] += g[i];
      if (bc.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bc.d_->adj[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  bool ng = a.needs_grad() || b.needs_grad();
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    Tensor ac = a, bc = b, oc = out;
    record(out, {a, b}, [ac, bc, oc]() {
      const auto& g = oc.d_->adj;
      if (ac.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) ac.d_->adj[i] += g[i];
      if (bc.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bc.d_->adj[i] -= g[i];
    });
  }
  return out;
}

Tensor Tape::hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape("hadamard", a, b);
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  bool ng = a.needs_grad() || b.needs_grad();
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    Tensor ac = a, bc = b, oc = out;
    record(out, {a, b}, [ac, bc, oc]() {
      const auto& g = oc.d_->adj;
      if (ac.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          ac.d_->adj[i] += g[i] * bc.values()[i];
      if (bc.d_->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          bc.d_->adj[i] += g[i] * ac.values()[i];
    });
  }
  return out;
}

Tensor Tape::scalar_mul(const Tensor& a, double c) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.values()[i] = c * a.values()[i];
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc, c]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i) ac.d_->adj[i] += c * g[i];
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = stable_sigmoid(a.values()[i]);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = oc.values()[i];
        ac.d_->adj[i] += g[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (ac.values()[i] > 0.0) ac.d_->adj[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::leaky_relu(const Tensor& a, double slope) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) {
    double x = a.values()[i];
    out.values()[i] = x > 0.0 ? x : slope * x;
  }
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc, slope]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i)
        ac.d_->adj[i] += g[i] * (ac.values()[i] > 0.0 ? 1.0 : slope);
    });
  }
  return out;
}

Tensor Tape::log(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) {
    double x = a.values()[i];
    if (!(x > 0.0))
      throw std::domain_error("log: non-positive input " + std::to_string(x));
    out.values()[i] = std::log(x);
  }
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i)
        ac.d_->adj[i] += g[i] / ac.values()[i];
    });
  }
  return out;
}

Tensor Tape::exp(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.values()[i] = std::exp(a.values()[i]);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i)
        ac.d_->adj[i] += g[i] * oc.values()[i];
    });
  }
  return out;
}

Tensor Tape::softplus(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i)
    out.values()[i] = stable_softplus(a.values()[i]);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i)
        ac.d_->adj[i] += g[i] * stable_sigmoid(ac.values()[i]);
    });
  }
  return out;
}

Tensor Tape::sqrt(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) {
    double x = a.values()[i];
    if (x < 0.0)
      throw std::domain_error("sqrt: negative input " + std::to_string(x));
    out.values()[i] = std::sqrt(x);
  }
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = oc.values()[i];
        if (y > 0.0) ac.d_->adj[i] += g[i] * 0.5 / y;
      }
    });
  }
  return out;
}

Tensor Tape::reciprocal(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) {
    double x = a.values()[i];
    if (x == 0.0) throw std::domain_error("reciprocal: zero input");
    out.values()[i] = 1.0 / x;
  }
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = oc.values()[i];
        ac.d_->adj[i] -= g[i] * y * y;
      }
    });
  }
  return out;
}

Tensor Tape::abs(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.values()[i] = std::abs(a.values()[i]);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      const auto& g = oc.d_->adj;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = ac.values()[i];
        if (x > 0.0)
          ac.d_->adj[i] += g[i];
        else if (x < 0.0)
          ac.d_->adj[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      for (int i = 0; i < ac.rows(); ++i)
        for (int j = 0; j < ac.cols(); ++j)
          ac.d_->adj[static_cast<std::size_t>(i) * ac.cols() + j] +=
              oc.d_->adj[static_cast<std::size_t>(j) * ac.rows() + i];
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out(1, 1);
  out.values()[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc]() {
      double g = oc.d_->adj[0];
      for (std::size_t i = 0; i < ac.d_->adj.size(); ++i) ac.d_->adj[i] += g;
    });
  }
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_rows: no parts given");
  int cols = parts.front().cols();
  int rows = 0;
  bool ng = false;
  for (const Tensor& p : parts) {
    if (p.cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch: " +
                                  parts.front().shape_str() + " vs " +
                                  p.shape_str());
    rows += p.rows();
    ng = ng || p.needs_grad();
  }
  Tensor out(rows, cols);
  int r = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              out.values().begin() + static_cast<std::size_t>(r) * cols);
    r += p.rows();
  }
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    record(out, parts, [pc, oc, cols]() {
      int r0 = 0;
      for (const Tensor& p : pc) {
        if (p.d_->needs_grad) {
          const double* g =
              oc.d_->adj.data() + static_cast<std::size_t>(r0) * cols;
          for (std::size_t i = 0; i < p.d_->adj.size(); ++i)
            p.d_->adj[i] += g[i];
        }
        r0 += p.rows();
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, int start, int rows) {
  if (start < 0 || rows < 0 || start + rows > a.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) +
                                ", " + std::to_string(start + rows) +
                                ") outside " + a.shape_str());
  int cols = a.cols();
  Tensor out(rows, cols);
  std::copy(a.values().begin() + static_cast<std::size_t>(start) * cols,
            a.values().begin() + static_cast<std::size_t>(start + rows) * cols,
            out.values().begin());
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc, start, cols]() {
      double* dst = ac.d_->adj.data() + static_cast<std::size_t>(start) * cols;
      for (std::size_t i = 0; i < oc.d_->adj.size(); ++i)
        dst[i] += oc.d_->adj[i];
    });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& a, Axis axis) {
  for (double v : a.values())
    if (!std::isfinite(v))
      throw std::domain_error("softmax: non-finite input");
  Tensor out(a.rows(), a.cols());
  int outer = axis == Axis::Rows ? a.rows() : a.cols();
  int inner = axis == Axis::Rows ? a.cols() : a.rows();
  int ld = a.cols();
  auto idx = [ld, axis](int o, int i) {
    return axis == Axis::Rows ? static_cast<std::size_t>(o) * ld + i
                              : static_cast<std::size_t>(i) * ld + o;
  };
  for (int o = 0; o < outer; ++o) {
    double m = a.values()[idx(o, 0)];
    for (int i = 1; i < inner; ++i) m = std::max(m, a.values()[idx(o, i)]);
    double s = 0.0;
    for (int i = 0; i < inner; ++i) {
      double e = std::exp(a.values()[idx(o, i)] - m);
      out.values()[idx(o, i)] = e;
      s += e;
    }
    for (int i = 0; i < inner; ++i) out.values()[idx(o, i)] /= s;
  }
  out.d_->needs_grad = a.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor ac = a, oc = out;
    record(out, {a}, [ac, oc, axis, outer, inner, idx]() {
      for (int o = 0; o < outer; ++o) {
        double dot = 0.0;
        for (int i = 0; i < inner; ++i)
          dot += oc.d_->adj[idx(o, i)] * oc.values()[idx(o, i)];
        for (int i = 0; i < inner; ++i) {
          std::size_t p = idx(o, i);
          ac.d_->adj[p] += oc.values()[p] * (oc.d_->adj[p] - dot);
        }
      }
    });
  }
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits,
                           const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows())
    throw std::invalid_argument(
        "cross_entropy: need one label per row, got " +
        std::to_string(labels.size()) + " labels for " + logits.shape_str());
  int c = logits.cols();
  for (int y : labels)
    if (y < 0 || y >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(c) +
                                  ")");
  int b = logits.rows();
  // softmax rows kept for the backward pass
  std::vector<double> probs(static_cast<std::size_t>(b) * c);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * c;
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      double e = std::exp(row[j] - m);
      probs[static_cast<std::size_t>(i) * c + j] = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) probs[static_cast<std::size_t>(i) * c + j] /= s;
    loss += m + std::log(s) - row[labels[i]];
  }
  Tensor out(1, 1);
  out.values()[0] = loss / b;
  out.d_->needs_grad = logits.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor lc = logits, oc = out;
    std::vector<int> yc = labels;
    record(out, {logits}, [lc, oc, yc, probs, b, c]() {
      double g = oc.d_->adj[0] / b;
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) {
          double p = probs[static_cast<std::size_t>(i) * c + j];
          lc.d_->adj[static_cast<std::size_t>(i) * c + j] +=
              g * (p - (j == yc[i] ? 1.0 : 0.0));
        }
    });
  }
  return out;
}

Tensor Tape::batch_norm(const Tensor& x, BnState& bn, Mode mode) {
  int n = x.rows(), d = x.cols();
  if (bn.gamma.cols() != d)
    throw std::invalid_argument("batch_norm: feature-dimension mismatch: " +
                                x.shape_str() + " vs gamma " +
                                bn.gamma.shape_str());
  Tensor out(n, d);
  std::vector<double> mu(d), var(d), inv_std(d);
  if (mode == Mode::Train) {
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += x.at(i, j);
      mu[j] = s / n;
    }
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        double dv = x.at(i, j) - mu[j];
        s += dv * dv;
      }
      var[j] = s / n;
    }
    // EMA with unbiased variance in the running buffer, biased in the
    // normalization (conventional)
    for (int j = 0; j < d; ++j) {
      double unbiased = n > 1 ? var[j] * n / (n - 1) : var[j];
      bn.running_mean.at(0, j) =
          (1.0 - bn.momentum) * bn.running_mean.at(0, j) + bn.momentum * mu[j];
      bn.running_var.at(0, j) =
          (1.0 - bn.momentum) * bn.running_var.at(0, j) + bn.momentum * unbiased;
    }
  } else {
    for (int j = 0; j < d; ++j) {
      mu[j] = bn.running_mean.at(0, j);
      var[j] = bn.running_var.at(0, j);
    }
  }
  for (int j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + bn.eps);
  std::vector<double> xhat(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double h = (x.at(i, j) - mu[j]) * inv_std[j];
      xhat[static_cast<std::size_t>(i) * d + j] = h;
      out.at(i, j) = bn.gamma.at(0, j) * h + bn.beta.at(0, j);
    }
  bool ng = x.needs_grad() || bn.gamma.needs_grad() || bn.beta.needs_grad();
  out.d_->needs_grad = ng;
  if (recording_ && ng) {
    Tensor xc = x, oc = out, gammac = bn.gamma, betac = bn.beta;
    record(out, {x, bn.gamma, bn.beta},
           [xc, oc, gammac, betac, mu, inv_std, xhat, n, d, mode]() {
             const auto& g = oc.d_->adj;
             for (int j = 0; j < d; ++j) {
               double dgamma = 0.0, dbeta = 0.0;
               for (int i = 0; i < n; ++i) {
                 std::size_t p = static_cast<std::size_t>(i) * d + j;
                 dgamma += g[p] * xhat[p];
                 dbeta += g[p];
               }
               if (gammac.d_->needs_grad) gammac.d_->adj[j] += dgamma;
               if (betac.d_->needs_grad) betac.d_->adj[j] += dbeta;
               if (!xc.d_->needs_grad) continue;
               double gam = gammac.values()[j];
               if (mode == Mode::Eval) {
                 for (int i = 0; i < n; ++i) {
                   std::size_t p = static_cast<std::size_t>(i) * d + j;
                   xc.d_->adj[p] += g[p] * gam * inv_std[j];
                 }
               } else {
                 // full backward through the batch statistics
                 double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                 for (int i = 0; i < n; ++i) {
                   std::size_t p = static_cast<std::size_t>(i) * d + j;
                   double dxhat = g[p] * gam;
                   sum_dxhat += dxhat;
                   sum_dxhat_xhat += dxhat * xhat[p];
                 }
                 for (int i = 0; i < n; ++i) {
                   std::size_t p = static_cast<std::size_t>(i) * d + j;
                   double dxhat = g[p] * gam;
                   xc.d_->adj[p] += inv_std[j] / n *
                                    (n * dxhat - sum_dxhat -
                                     xhat[p] * sum_dxhat_xhat);
                 }
               }
             }
           });
  }
  return out;
}

Tensor Tape::upper_triangle(const Tensor& square) {
  int n = square.rows();
  if (square.cols() != n)
    throw std::invalid_argument("upper_triangle: matrix is " +
                                square.shape_str() + ", expected square");
  int pairs = n * (n - 1) / 2;
  Tensor out(pairs, 1);
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.values()[p++] = square.at(i, j);
  out.d_->needs_grad = square.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor sc = square, oc = out;
    record(out, {square}, [sc, oc, n]() {
      int p = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          sc.d_->adj[static_cast<std::size_t>(i) * n + j] += oc.d_->adj[p++];
    });
  }
  return out;
}

Tensor Tape::symmetric_from_upper(const Tensor& upper, int n) {
  int pairs = n * (n - 1) / 2;
  if (upper.rows() != pairs || upper.cols() != 1)
    throw std::invalid_argument("symmetric_from_upper: input is " +
                                upper.shape_str() + ", expected " +
                                std::to_string(pairs) + "x1 for n=" +
                                std::to_string(n));
  Tensor out(n, n);
  int p = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double v = upper.values()[p++];
      out.at(i, j) = v;
      out.at(j, i) = v;
    }
  out.d_->needs_grad = upper.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor uc = upper, oc = out;
    record(out, {upper}, [uc, oc, n]() {
      int p = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          uc.d_->adj[p++] += oc.d_->adj[static_cast<std::size_t>(i) * n + j] +
                             oc.d_->adj[static_cast<std::size_t>(j) * n + i];
        }
    });
  }
  return out;
}

Tensor Tape::topk_softmax(const Tensor& scores, int k) {
  if (scores.rows() != 1)
    throw std::invalid_argument("topk_softmax: scores are " +
                                scores.shape_str() + ", expected one row");
  int m = scores.cols();
  if (k < 1 || k > m)
    throw std::invalid_argument("topk_softmax: k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(m) + "]");
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores.values()[a] > scores.values()[b];
  });
  std::vector<int> selected(order.begin(), order.begin() + k);
  Tensor out(1, m);
  double mx = scores.values()[selected[0]];
  for (int i : selected) mx = std::max(mx, scores.values()[i]);
  double s = 0.0;
  for (int i : selected) s += std::exp(scores.values()[i] - mx);
  for (int i : selected) out.values()[i] = std::exp(scores.values()[i] - mx) / s;
  out.d_->needs_grad = scores.needs_grad();
  if (recording_ && out.d_->needs_grad) {
    Tensor sc = scores, oc = out;
    record(out, {scores}, [sc, oc, selected]() {
      double dot = 0.0;
      for (int i : selected) dot += oc.d_->adj[i] * oc.values()[i];
      for (int i : selected)
        sc.d_->adj[i] += oc.values()[i] * (oc.d_->adj[i] - dot);
    });
  }
  return out;
}

Tensor Tape::mean_all(const Tensor& a) {
  return scalar_mul(sum(a), 1.0 / a.size());
}

Tensor Tape::col_mean(const Tensor& a) {
  return matmul(Tensor::full(1, a.rows(), 1.0 / a.rows()), a);
}

Tensor Tape::col_var(const Tensor& a, const Tensor& mean) {
  Tensor diff = sub(a, matmul(Tensor::ones(a.rows(), 1), mean));
  return scalar_mul(matmul(Tensor::ones(1, a.rows()), hadamard(diff, diff)),
                    1.0 / a.rows());
}

Tensor Tape::l2_norm(const Tensor& a) { return sqrt(sum(hadamard(a, a))); }

Tensor Tape::affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul(x, w);
  if (out.rows() == 1) return add(out, b);
  return add(out, matmul(Tensor::ones(out.rows(), 1), b));
}

Tensor Tape::normalized_adjacency(const Tensor& adjacency) {
  int n = adjacency.rows();
  Tensor with_loops = add(adjacency, Tensor::identity(n));
  Tensor degree = matmul(with_loops, Tensor::ones(n, 1));
  Tensor dinv = reciprocal(sqrt(degree));
  return hadamard(with_loops, matmul(dinv, transpose(dinv)));
}

Tensor Tape::nll_from_probs(const Tensor& probs, int label) {
  if (probs.rows() != 1)
    throw std::invalid_argument("nll_from_probs: probs are " +
                                probs.shape_str() + ", expected one row");
  // tiny floor keeps the loss finite when a convex combination of saturated
  // softmax outputs underflows to exactly zero
  Tensor floored = add(probs, Tensor::full(1, probs.cols(), 1e-12));
  return scalar_mul(matmul(log(floored), Tensor::onehot_col(label, probs.cols())),
                    -1.0);
}

}  // namespace gmerge
