#include "gmerge/gnn.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "gmerge/adamw.hpp"
#include "gmerge/rng.hpp"

namespace gmerge {

std::string to_string(GnnKind kind) {
  switch (kind) {
    case GnnKind::GCN: return "GCN";
    case GnnKind::GIN: return "GIN";
    case GnnKind::GAT: return "GAT";
  }
  return "?";
}

GnnKind gnn_kind_from_string(const std::string& s) {
  if (s == "GCN") return GnnKind::GCN;
  if (s == "GIN") return GnnKind::GIN;
  if (s == "GAT") return GnnKind::GAT;
  throw std::invalid_argument("unknown GNN kind: " + s);
}

GnnModel::GnnModel(const ArchitectureDescriptor& desc, Rng& rng) : desc_(desc) {
  if (desc.layers != 2)
    throw std::invalid_argument("GnnModel: only 2-layer backbones supported");
  if (desc.input_dim < 1 || desc.num_classes < 1 || desc.hidden_dim < 1)
    throw std::invalid_argument("GnnModel: incomplete descriptor");
  int d = desc.input_dim, h = desc.hidden_dim, c = desc.num_classes;

  auto put = [&](const std::string& name, Tensor t) {
    params_[name] = t;
    param_order_.push_back(name);
  };

  switch (desc.kind) {
    case GnnKind::GCN:
      put("enc.l1.w", Tensor::xavier_uniform(rng, d, h));
      put("enc.l2.w", Tensor::xavier_uniform(rng, h, h));
      bn_.emplace_back(h);
      put("enc.bn1.gamma", bn_[0].gamma);
      put("enc.bn1.beta", bn_[0].beta);
      break;
    case GnnKind::GIN: {
      for (int layer = 1; layer <= 2; ++layer) {
        std::string p = "enc.l" + std::to_string(layer) + ".";
        int in = layer == 1 ? d : h;
        Tensor eps = Tensor::scalar(0.0, true);
        put(p + "eps", eps);
        put(p + "mlp.w1", Tensor::xavier_uniform(rng, in, h));
        Tensor b1 = Tensor::zeros(1, h);
        b1.set_requires_grad(true);
        put(p + "mlp.b1", b1);
        bn_.emplace_back(h);
        put(p + "bn.gamma", bn_.back().gamma);
        put(p + "bn.beta", bn_.back().beta);
        put(p + "mlp.w2", Tensor::xavier_uniform(rng, h, h));
        Tensor b2 = Tensor::zeros(1, h);
        b2.set_requires_grad(true);
        put(p + "mlp.b2", b2);
      }
      break;
    }
    case GnnKind::GAT:
      for (int layer = 1; layer <= 2; ++layer) {
        std::string p = "enc.l" + std::to_string(layer) + ".";
        int in = layer == 1 ? d : h;
        put(p + "w", Tensor::xavier_uniform(rng, in, h));
        put(p + "att_src", Tensor::xavier_uniform(rng, h, 1));
        put(p + "att_dst", Tensor::xavier_uniform(rng, h, 1));
      }
      bn_.emplace_back(h);
      put("enc.bn1.gamma", bn_[0].gamma);
      put("enc.bn1.beta", bn_[0].beta);
      break;
  }
  put("clf.w", Tensor::xavier_uniform(rng, h, c));
  Tensor cb = Tensor::zeros(1, c);
  cb.set_requires_grad(true);
  put("clf.b", cb);
}

Tensor GnnModel::masked(Tape& tape, const std::string& name,
                        const Tensor& param, const MaskMap* masks) const {
  if (masks == nullptr) return param;
  auto it = masks->find(name);
  if (it == masks->end()) return param;
  return tape.hadamard(param, it->second);
}

Tensor GnnModel::classify(Tape& tape, const Tensor& pooled,
                          const MaskMap* masks) {
  Tensor w = masked(tape, "clf.w", params_.at("clf.w"), masks);
  Tensor b = masked(tape, "clf.b", params_.at("clf.b"), masks);
  return tape.add(tape.matmul(pooled, w), b);
}

Tensor GnnModel::forward(Tape& tape, const Graph& g, Mode mode,
                         const MaskMap* masks, Trace* trace) {
  return forward(tape, g.feature_tensor(), g.adjacency_tensor(), mode, masks,
                 trace);
}

Tensor GnnModel::forward(Tape& tape, const Tensor& x, const Tensor& a,
                         Mode mode, const MaskMap* masks, Trace* trace) {
  return forward_batch(tape, {x}, {a}, mode, masks, trace)[0];
}

std::vector<Tensor> GnnModel::forward_batch(Tape& tape,
                                            const std::vector<Tensor>& xs,
                                            const std::vector<Tensor>& as,
                                            Mode mode, const MaskMap* masks,
                                            Trace* trace) {
  if (xs.empty() || xs.size() != as.size())
    throw std::invalid_argument("forward_batch: need matching nonempty inputs");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].cols() != desc_.input_dim)
      throw std::invalid_argument("forward: features are " +
                                  xs[i].shape_str() + " but input_dim is " +
                                  std::to_string(desc_.input_dim));
    if (as[i].rows() != xs[i].rows() || as[i].cols() != xs[i].rows())
      throw std::invalid_argument("forward: adjacency " + as[i].shape_str() +
                                  " does not match " +
                                  std::to_string(xs[i].rows()) + " nodes");
  }
  switch (desc_.kind) {
    case GnnKind::GCN: return batch_gcn(tape, xs, as, mode, masks, trace);
    case GnnKind::GIN: return batch_gin(tape, xs, as, mode, masks, trace);
    case GnnKind::GAT: return batch_gat(tape, xs, as, mode, masks, trace);
  }
  throw std::logic_error("unreachable");
}

std::vector<Tensor> GnnModel::bn_over_batch(Tape& tape, int bn_index,
                                            const std::vector<Tensor>& parts,
                                            Mode mode, Trace* trace) {
  Tensor all = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
  if (trace) trace->pre_bn.push_back(all);
  Tensor normed = tape.batch_norm(all, bn_[bn_index], mode);
  if (parts.size() == 1) return {normed};
  std::vector<Tensor> out;
  out.reserve(parts.size());
  int offset = 0;
  for (const Tensor& p : parts) {
    out.push_back(tape.slice_rows(normed, offset, p.rows()));
    offset += p.rows();
  }
  return out;
}

std::vector<Tensor> GnnModel::batch_gcn(Tape& tape,
                                        const std::vector<Tensor>& xs,
                                        const std::vector<Tensor>& as,
                                        Mode mode, const MaskMap* masks,
                                        Trace* trace) {
  std::size_t b = xs.size();
  Tensor w1 = masked(tape, "enc.l1.w", params_.at("enc.l1.w"), masks);
  Tensor w2 = masked(tape, "enc.l2.w", params_.at("enc.l2.w"), masks);
  std::vector<Tensor> norm(b), pre(b);
  for (std::size_t i = 0; i < b; ++i) {
    norm[i] = tape.normalized_adjacency(as[i]);
    pre[i] = tape.relu(tape.matmul(tape.matmul(norm[i], xs[i]), w1));
  }
  std::vector<Tensor> z = bn_over_batch(tape, 0, pre, mode, trace);
  std::vector<Tensor> logits(b);
  for (std::size_t i = 0; i < b; ++i) {
    int n = xs[i].rows();
    Tensor h2 = tape.relu(tape.matmul(tape.matmul(norm[i], z[i]), w2));
    Tensor pooled = tape.matmul(Tensor::full(1, n, 1.0 / n), h2);
    logits[i] = classify(tape, pooled, masks);
  }
  return logits;
}

std::vector<Tensor> GnnModel::batch_gin(Tape& tape,
                                        const std::vector<Tensor>& xs,
                                        const std::vector<Tensor>& as,
                                        Mode mode, const MaskMap* masks,
                                        Trace* trace) {
  std::size_t b = xs.size();
  std::vector<Tensor> h = xs;
  for (int layer = 1; layer <= 2; ++layer) {
    std::string p = "enc.l" + std::to_string(layer) + ".";
    Tensor eps = masked(tape, p + "eps", params_.at(p + "eps"), masks);
    Tensor w1 = masked(tape, p + "mlp.w1", params_.at(p + "mlp.w1"), masks);
    Tensor b1 = masked(tape, p + "mlp.b1", params_.at(p + "mlp.b1"), masks);
    Tensor w2 = masked(tape, p + "mlp.w2", params_.at(p + "mlp.w2"), masks);
    Tensor b2 = masked(tape, p + "mlp.b2", params_.at(p + "mlp.b2"), masks);
    std::vector<Tensor> lin(b);
    for (std::size_t i = 0; i < b; ++i) {
      int n = h[i].rows();
      // (1 + eps) * H + A H, eps broadcast through ones matmuls
      Tensor eps_row = tape.matmul(eps, Tensor::ones(1, h[i].cols()));
      Tensor eps_mat = tape.matmul(Tensor::ones(n, 1), eps_row);
      Tensor agg = tape.add(tape.add(h[i], tape.hadamard(eps_mat, h[i])),
                            tape.matmul(as[i], h[i]));
      lin[i] = tape.affine(agg, w1, b1);
    }
    std::vector<Tensor> bn = bn_over_batch(tape, layer - 1, lin, mode, trace);
    for (std::size_t i = 0; i < b; ++i)
      h[i] = tape.affine(tape.relu(bn[i]), w2, b2);
  }
  std::vector<Tensor> logits(b);
  for (std::size_t i = 0; i < b; ++i) {
    int n = h[i].rows();
    Tensor pooled = tape.matmul(Tensor::full(1, n, 1.0 / n), h[i]);
    logits[i] = classify(tape, pooled, masks);
  }
  return logits;
}

Tensor GnnModel::gat_layer(Tape& tape, const Tensor& h, const Tensor& a,
                           int layer, const MaskMap* masks) {
  int n = h.rows();
  std::string p = "enc.l" + std::to_string(layer) + ".";
  Tensor w = masked(tape, p + "w", params_.at(p + "w"), masks);
  Tensor asrc = masked(tape, p + "att_src", params_.at(p + "att_src"), masks);
  Tensor adst = masked(tape, p + "att_dst", params_.at(p + "att_dst"), masks);
  Tensor s = tape.matmul(h, w);
  Tensor fsrc = tape.matmul(s, asrc);  // n x 1
  Tensor fdst = tape.matmul(s, adst);  // n x 1
  Tensor scores = tape.leaky_relu(
      tape.add(tape.matmul(fsrc, Tensor::ones(1, n)),
               tape.matmul(Tensor::ones(n, 1), tape.transpose(fdst))));
  // attention over edges plus self-loops; a relaxed adjacency weights the
  // neighbors smoothly
  Tensor mask = tape.add(a, Tensor::identity(n));
  Tensor weights = tape.hadamard(tape.exp(scores), mask);
  Tensor rowsum = tape.matmul(weights, Tensor::ones(n, 1));
  Tensor inv = tape.reciprocal(rowsum);
  Tensor att = tape.hadamard(weights, tape.matmul(inv, Tensor::ones(1, n)));
  return tape.relu(tape.matmul(att, s));
}

std::vector<Tensor> GnnModel::batch_gat(Tape& tape,
                                        const std::vector<Tensor>& xs,
                                        const std::vector<Tensor>& as,
                                        Mode mode, const MaskMap* masks,
                                        Trace* trace) {
  std::size_t b = xs.size();
  std::vector<Tensor> first(b);
  for (std::size_t i = 0; i < b; ++i)
    first[i] = gat_layer(tape, xs[i], as[i], 1, masks);
  std::vector<Tensor> z = bn_over_batch(tape, 0, first, mode, trace);
  std::vector<Tensor> logits(b);
  for (std::size_t i = 0; i < b; ++i) {
    Tensor h = gat_layer(tape, z[i], as[i], 2, masks);
    int n = h.rows();
    Tensor pooled = tape.matmul(Tensor::full(1, n, 1.0 / n), h);
    logits[i] = classify(tape, pooled, masks);
  }
  return logits;
}

std::vector<NamedTensor> GnnModel::encoder_params() {
  std::vector<NamedTensor> out;
  for (const std::string& name : param_order_)
    if (name.rfind("enc.", 0) == 0) out.push_back({name, params_.at(name)});
  return out;
}

std::vector<NamedTensor> GnnModel::classifier_params() {
  std::vector<NamedTensor> out;
  for (const std::string& name : param_order_)
    if (name.rfind("clf.", 0) == 0) out.push_back({name, params_.at(name)});
  return out;
}

std::vector<NamedTensor> GnnModel::all_params() {
  std::vector<NamedTensor> out;
  for (const std::string& name : param_order_)
    out.push_back({name, params_.at(name)});
  return out;
}

std::vector<NamedTensor> GnnModel::bn_buffers() {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    out.push_back({"bn" + std::to_string(i) + ".running_mean",
                   bn_[i].running_mean});
    out.push_back({"bn" + std::to_string(i) + ".running_var",
                   bn_[i].running_var});
  }
  return out;
}

void GnnModel::set_params_trainable(bool trainable) {
  for (auto& [name, t] : params_) t.set_requires_grad(trainable);
}

GnnModel GnnModel::clone() {
  Rng rng(0);
  GnnModel copy(desc_, rng);
  for (auto& [name, t] : copy.params_)
    t.values() = params_.at(name).values();
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    copy.bn_[i].running_mean.values() = bn_[i].running_mean.values();
    copy.bn_[i].running_var.values() = bn_[i].running_var.values();
    copy.bn_[i].momentum = bn_[i].momentum;
    copy.bn_[i].eps = bn_[i].eps;
  }
  return copy;
}

TrainHistory pretrain(GnnModel& model, const GraphDataset& ds,
                      const PretrainConfig& cfg, std::uint64_t seed) {
  if (ds.empty()) throw std::invalid_argument("pretrain: empty dataset");
  Rng rng(seed);
  std::vector<Tensor> params;
  for (auto& [name, t] : model.all_params()) params.push_back(t);
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(params, opt_cfg);

  TrainHistory history;
  std::vector<int> order(ds.graphs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int correct = 0, batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> xs, as;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const Graph& g = ds.graphs[order[i]];
        xs.push_back(g.feature_tensor());
        as.push_back(g.adjacency_tensor());
        labels.push_back(g.label);
      }
      std::vector<Tensor> logit_rows =
          model.forward_batch(tape, xs, as, Mode::Train);
      for (std::size_t i = 0; i < logit_rows.size(); ++i) {
        const Tensor& logits = logit_rows[i];
        int pred = 0;
        for (int k = 1; k < logits.cols(); ++k)
          if (logits.at(0, k) > logits.at(0, pred)) pred = k;
        if (pred == labels[i]) ++correct;
      }
      Tensor batch_logits = tape.concat_rows(logit_rows);
      Tensor loss = tape.cross_entropy(batch_logits, labels);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      epoch_loss += loss.value();
      ++batches;
    }
    history.loss.push_back(epoch_loss / std::max(batches, 1));
    history.accuracy.push_back(static_cast<double>(correct) / order.size());
  }
  return history;
}

EvalMetrics metrics_from_predictions(const std::vector<int>& predictions,
                                     const std::vector<int>& labels,
                                     int num_classes) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("metrics_from_predictions: size mismatch");
  std::vector<int> tp(num_classes, 0), fp(num_classes, 0);
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) {
      ++correct;
      ++tp[predictions[i]];
    } else {
      ++fp[predictions[i]];
    }
  }
  EvalMetrics m;
  m.accuracy = static_cast<double>(correct) / predictions.size();
  double prec = 0.0;
  for (int k = 0; k < num_classes; ++k)
    if (tp[k] + fp[k] > 0)
      prec += static_cast<double>(tp[k]) / (tp[k] + fp[k]);
  m.macro_precision = prec / num_classes;
  return m;
}

EvalMetrics evaluate(GnnModel& model, const GraphDataset& ds) {
  if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
  int c = model.descriptor().num_classes;
  std::vector<int> predictions, labels;
  predictions.reserve(ds.graphs.size());
  for (const Graph& g : ds.graphs) {
    Tape tape(false);
    Tensor logits = model.forward(tape, g, Mode::Eval);
    int pred = 0;
    for (int k = 1; k < c; ++k)
      if (logits.at(0, k) > logits.at(0, pred)) pred = k;
    predictions.push_back(pred);
    labels.push_back(g.label);
  }
  return metrics_from_predictions(predictions, labels, c);
}

std::vector<double> predict_probs(GnnModel& model, const Graph& g) {
  Tape tape(false);
  Tensor probs = tape.softmax(model.forward(tape, g, Mode::Eval));
  return probs.values();
}

}  // namespace gmerge
