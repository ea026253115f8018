#include "gmerge/moe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gmerge/adamw.hpp"
#include "gmerge/checkpoint.hpp"

namespace fs = std::filesystem;

namespace gmerge {

std::string to_string(MaskPosition p) {
  return p == MaskPosition::Classifier ? "classifier" : "encoder";
}

MaskPosition mask_position_from_string(const std::string& s) {
  if (s == "classifier") return MaskPosition::Classifier;
  if (s == "encoder") return MaskPosition::Encoder;
  throw std::invalid_argument("unknown mask position: " + s);
}

std::size_t MaskedExpert::masked_param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : masks) n += t.size();
  return n;
}

std::size_t MaskedExpert::total_param_count() {
  std::size_t n = 0;
  for (auto& [name, t] : model.all_params()) n += t.size();
  return n;
}

std::vector<double> gate_features(const Graph& g) {
  std::vector<double> out(g.feature_dim + 4, 0.0);
  for (int u = 0; u < g.num_nodes; ++u)
    for (int k = 0; k < g.feature_dim; ++k)
      out[k] += g.feature(u, k) / g.num_nodes;
  double mean_deg = 0.0;
  for (int u = 0; u < g.num_nodes; ++u) mean_deg += g.degree(u);
  mean_deg /= g.num_nodes;
  double var_deg = 0.0;
  for (int u = 0; u < g.num_nodes; ++u) {
    double d = g.degree(u) - mean_deg;
    var_deg += d * d;
  }
  var_deg /= g.num_nodes;
  double density =
      g.num_nodes > 1
          ? 2.0 * g.num_edges() / (static_cast<double>(g.num_nodes) *
                                   (g.num_nodes - 1))
          : 0.0;
  out[g.feature_dim + 0] = mean_deg;
  out[g.feature_dim + 1] = std::sqrt(var_deg);
  out[g.feature_dim + 2] = density;
  out[g.feature_dim + 3] = std::log(static_cast<double>(g.num_nodes));
  return out;
}

Tensor gate_scores(Tape& tape, const GateParams& gate, const Tensor& features,
                   Mode mode, Rng* noise_rng) {
  if (features.rows() != 1 || features.cols() != gate.w_gate.rows())
    throw std::invalid_argument("gate_scores: features are " +
                                features.shape_str() + ", gate expects 1x" +
                                std::to_string(gate.w_gate.rows()));
  Tensor base = tape.matmul(features, gate.w_gate);
  if (mode == Mode::Eval) return base;
  if (noise_rng == nullptr)
    throw std::invalid_argument("gate_scores: train mode needs a noise rng");
  int m = gate.w_gate.cols();
  Tensor eps(1, m);
  for (double& v : eps.values()) v = noise_rng->normal();
  Tensor spread = tape.softplus(tape.matmul(features, gate.w_noise));
  return tape.add(base, tape.hadamard(eps, spread));
}

Tensor sparse_gate(Tape& tape, const Tensor& scores, int k) {
  return tape.topk_softmax(scores, k);
}

Tensor importance_loss(Tape& tape, const std::vector<Tensor>& batch_weights) {
  if (batch_weights.empty())
    throw std::invalid_argument("importance_loss: empty batch");
  Tensor totals = batch_weights.front();
  for (std::size_t i = 1; i < batch_weights.size(); ++i)
    totals = tape.add(totals, batch_weights[i]);
  bool all_zero = true;
  for (double v : totals.values())
    if (v != 0.0) all_zero = false;
  if (all_zero) return Tensor::zeros(1, 1);
  int m = totals.cols();
  Tensor mean = tape.scalar_mul(tape.matmul(totals, Tensor::ones(m, 1)),
                                1.0 / m);
  Tensor centered = tape.sub(totals, tape.matmul(mean, Tensor::ones(1, m)));
  Tensor variance = tape.scalar_mul(
      tape.matmul(tape.hadamard(centered, centered), Tensor::ones(m, 1)),
      1.0 / m);
  return tape.hadamard(variance, tape.reciprocal(tape.hadamard(mean, mean)));
}

MergedModel MergedModel::build(std::vector<GnnModel> experts, int top_k,
                               MergeHyper hyper, MaskPosition position) {
  if (experts.empty())
    throw std::invalid_argument("MergedModel: need at least one expert");
  if (top_k < 1 || top_k > static_cast<int>(experts.size()))
    throw std::invalid_argument("MergedModel: top_k outside [1, M]");
  if (hyper.gamma_p < 0.0 || hyper.gamma_p > 1.0 || hyper.gamma_v <= 0.0 ||
      hyper.gamma_v > 1.0)
    throw std::invalid_argument("MergedModel: gamma thresholds outside range");
  int classes = experts.front().descriptor().num_classes;
  int input_dim = experts.front().descriptor().input_dim;
  for (const GnnModel& e : experts) {
    if (e.descriptor().num_classes != classes)
      throw std::invalid_argument("MergedModel: experts disagree on classes");
    if (e.descriptor().input_dim != input_dim)
      throw std::invalid_argument("MergedModel: experts disagree on input dim");
  }
  MergedModel merged;
  merged.hyper_ = hyper;
  for (GnnModel& e : experts) {
    MaskedExpert me;
    me.model = std::move(e);
    me.model.set_params_trainable(false);
    for (auto& [name, t] : me.model.all_params()) t.zero_grad();
    me.position = position;
    auto group = position == MaskPosition::Classifier
                     ? me.model.classifier_params()
                     : me.model.encoder_params();
    for (auto& [name, t] : group) {
      Tensor mask = Tensor::ones(t.rows(), t.cols());
      mask.set_requires_grad(true);
      me.masks[name] = mask;
    }
    merged.experts_.push_back(std::move(me));
  }
  int f = input_dim + 4;
  int m = static_cast<int>(merged.experts_.size());
  merged.gate_.w_gate = Tensor::zeros(f, m);
  merged.gate_.w_noise = Tensor::zeros(f, m);
  merged.gate_.w_gate.set_requires_grad(true);
  merged.gate_.w_noise.set_requires_grad(true);
  merged.gate_.top_k = top_k;
  return merged;
}

Tensor MergedModel::gate_weights(Tape& tape, const Graph& g, Mode mode,
                                 Rng* noise_rng) {
  Tensor feats = Tensor::from_values(1, gate_input_dim(), gate_features(g));
  Tensor scores = gate_scores(tape, gate_, feats, mode, noise_rng);
  return sparse_gate(tape, scores, gate_.top_k);
}

Tensor MergedModel::merged_forward(Tape& tape, const Graph& g, Mode mode,
                                   Rng* noise_rng) {
  Tensor weights = gate_weights(tape, g, mode, noise_rng);
  int c = num_classes();
  std::vector<Tensor> prob_rows(experts_.size());
  for (std::size_t j = 0; j < experts_.size(); ++j) {
    if (weights.at(0, static_cast<int>(j)) == 0.0) {
      prob_rows[j] = Tensor::zeros(1, c);  // never evaluated
      continue;
    }
    Tensor logits = experts_[j].model.forward(tape, g, Mode::Eval,
                                              &experts_[j].masks);
    prob_rows[j] = tape.softmax(logits);
  }
  return tape.matmul(weights, tape.concat_rows(prob_rows));
}

std::pair<int, std::vector<double>> MergedModel::predict(const Graph& g) {
  Tape tape(false);
  Tensor probs = merged_forward(tape, g, Mode::Eval, nullptr);
  int best = 0;
  for (int k = 1; k < probs.cols(); ++k)
    if (probs.at(0, k) > probs.at(0, best)) best = k;
  return {best, probs.values()};
}

std::vector<Tensor> MergedModel::trainable_params() {
  std::vector<Tensor> out;
  for (MaskedExpert& e : experts_)
    for (auto& [name, t] : e.masks) out.push_back(t);
  out.push_back(gate_.w_gate);
  out.push_back(gate_.w_noise);
  return out;
}

namespace {

/// Mean and smooth near-one fraction anchors for one expert's mask group.
Tensor mask_anchor_terms(Tape& tape, MaskedExpert& expert, double gamma_p,
                         double gamma_v) {
  Tensor entry_sum = Tensor::zeros(1, 1);
  Tensor bump_sum = Tensor::zeros(1, 1);
  std::size_t count = 0;
  for (auto& [name, mask] : expert.masks) {
    entry_sum = tape.add(entry_sum, tape.sum(mask));
    Tensor centered = tape.sub(mask, Tensor::ones(mask.rows(), mask.cols()));
    Tensor bump = tape.exp(tape.scalar_mul(tape.hadamard(centered, centered),
                                           -1.0 / (2.0 * gamma_v * gamma_v)));
    bump_sum = tape.add(bump_sum, tape.sum(bump));
    count += mask.size();
  }
  Tensor gp = Tensor::scalar(gamma_p);
  Tensor mean_term =
      tape.abs(tape.sub(tape.scalar_mul(entry_sum, 1.0 / count), gp));
  Tensor frac_term =
      tape.abs(tape.sub(tape.scalar_mul(bump_sum, 1.0 / count), gp));
  return tape.add(mean_term, frac_term);
}

}  // namespace

Tensor mask_loss(Tape& tape, MergedModel& model,
                 const std::vector<const Graph*>& batch,
                 const std::vector<int>& labels) {
  if (batch.empty()) throw std::invalid_argument("mask_loss: empty batch");
  std::vector<Tensor> xs, as;
  xs.reserve(batch.size());
  as.reserve(batch.size());
  for (const Graph* g : batch) {
    xs.push_back(g->feature_tensor());
    as.push_back(g->adjacency_tensor());
  }
  Tensor total = Tensor::zeros(1, 1);
  for (MaskedExpert& e : model.experts()) {
    std::vector<Tensor> logits =
        e.model.forward_batch(tape, xs, as, Mode::Eval, &e.masks);
    total = tape.add(
        total, tape.cross_entropy(tape.concat_rows(logits), labels));
    total = tape.add(total, mask_anchor_terms(tape, e, model.hyper().gamma_p,
                                              model.hyper().gamma_v));
  }
  return total;
}

TrainHistory merge_train(MergedModel& model, const GraphDataset& synthetic,
                         const MergeConfig& cfg, std::uint64_t seed) {
  if (synthetic.empty())
    throw std::invalid_argument("merge_train: empty synthetic set");
  // frozen contract: only masks and gate weights may carry gradients
  for (MaskedExpert& e : model.experts())
    for (auto& [name, t] : e.model.all_params())
      if (t.requires_grad())
        throw std::logic_error("merge_train: expert parameter " + name +
                               " is gradient-enabled");
  for (Tensor& t : model.trainable_params())
    if (!t.requires_grad())
      throw std::logic_error("merge_train: mask/gate tensor lost its gradient");

  Rng rng(seed);
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(model.trainable_params(), opt_cfg);

  int m = model.num_experts();
  int c = model.num_classes();
  TrainHistory history;
  std::vector<int> order(synthetic.graphs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> xs, as;
      std::vector<int> labels;
      std::vector<const Graph*> batch;
      for (std::size_t i = start; i < end; ++i) {
        const Graph& g = synthetic.graphs[order[i]];
        batch.push_back(&g);
        xs.push_back(g.feature_tensor());
        as.push_back(g.adjacency_tensor());
        labels.push_back(g.label);
      }
      std::size_t b = batch.size();

      // every masked expert runs on the whole batch once; the rows feed both
      // the merged prediction and the mask fine-tuning term
      std::vector<std::vector<Tensor>> expert_logits(m);
      for (int j = 0; j < m; ++j) {
        MaskedExpert& e = model.experts()[j];
        expert_logits[j] =
            e.model.forward_batch(tape, xs, as, Mode::Eval, &e.masks);
      }

      std::vector<Tensor> batch_weights;
      Tensor nll_sum = Tensor::zeros(1, 1);
      for (std::size_t i = 0; i < b; ++i) {
        Tensor feats = Tensor::from_values(1, model.gate_input_dim(),
                                           gate_features(*batch[i]));
        Tensor scores = gate_scores(tape, model.gate(), feats, Mode::Train,
                                    &rng);
        Tensor weights = sparse_gate(tape, scores, model.gate().top_k);
        batch_weights.push_back(weights);
        std::vector<Tensor> prob_rows(m);
        for (int j = 0; j < m; ++j)
          prob_rows[j] = tape.softmax(expert_logits[j][i]);
        Tensor merged = tape.matmul(weights, tape.concat_rows(prob_rows));
        nll_sum = tape.add(nll_sum, tape.nll_from_probs(merged, labels[i]));
      }
      Tensor ce_merged = tape.scalar_mul(nll_sum, 1.0 / b);

      Tensor r_gate = importance_loss(tape, batch_weights);

      // mask regularizer, reusing the expert logits computed above
      Tensor r_mask = Tensor::zeros(1, 1);
      for (int j = 0; j < m; ++j) {
        r_mask = tape.add(r_mask,
                          tape.cross_entropy(
                              tape.concat_rows(expert_logits[j]), labels));
        r_mask = tape.add(r_mask, mask_anchor_terms(tape, model.experts()[j],
                                                    model.hyper().gamma_p,
                                                    model.hyper().gamma_v));
      }

      Tensor loss = tape.add(
          ce_merged,
          tape.add(tape.scalar_mul(r_gate, model.hyper().lambda_gate),
                   tape.scalar_mul(r_mask, model.hyper().lambda_mask)));
      (void)c;
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      epoch_loss += loss.value();
      ++batches;
    }
    history.loss.push_back(epoch_loss / std::max(batches, 1));
  }
  return history;
}

void save_merged_model(const std::string& path, MergedModel& model,
                       const std::vector<std::string>& expert_paths) {
  if (static_cast<int>(expert_paths.size()) != model.num_experts())
    throw std::invalid_argument("save_merged_model: need one path per expert");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write merged model " + path);
  out << "mergedmodel v1\n";
  out << "experts " << model.num_experts() << "\n";
  for (int j = 0; j < model.num_experts(); ++j)
    out << "expert " << j << " " << expert_paths[j] << "\n";
  out << "k " << model.gate().top_k << "\n";
  const MergeHyper& h = model.hyper();
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "lambda_gate %.17g\nlambda_mask %.17g\ngamma_p %.17g\n"
                "gamma_v %.17g\n",
                h.lambda_gate, h.lambda_mask, h.gamma_p, h.gamma_v);
  out << buf;
  out << "mask_position " << to_string(model.mask_position()) << "\n";
  out << "gate_input_dim " << model.gate_input_dim() << "\n";

  auto write_tensor = [&out](const std::string& name, const Tensor& t) {
    out << "T " << name << " " << t.rows() << " " << t.cols() << "\n";
    char num[32];
    for (int i = 0; i < t.rows(); ++i) {
      for (int j = 0; j < t.cols(); ++j) {
        std::snprintf(num, sizeof(num), "%.17g", t.at(i, j));
        out << (j ? " " : "") << num;
      }
      out << "\n";
    }
  };
  std::size_t count = 2;
  for (MaskedExpert& e : model.experts()) count += e.masks.size();
  out << "tensors " << count << "\n";
  write_tensor("gate.w_gate", model.gate().w_gate);
  write_tensor("gate.w_noise", model.gate().w_noise);
  for (int j = 0; j < model.num_experts(); ++j)
    for (auto& [name, t] : model.experts()[j].masks)
      write_tensor("mask" + std::to_string(j) + "." + name, t);
  if (!out) throw std::runtime_error("write failed for merged model " + path);
}

MergedModel load_merged_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read merged model " + path);
  auto corrupt = [&path](const std::string& what) -> void {
    throw std::runtime_error("corrupt merged model " + path + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "mergedmodel v1")
    corrupt("bad magic");
  auto read_kv = [&](const std::string& expect) -> std::string {
    if (!std::getline(in, line)) corrupt("truncated header");
    std::istringstream kv(line);
    std::string key, value;
    if (!(kv >> key >> value) || key != expect)
      corrupt("expected " + expect + ", got '" + line + "'");
    return value;
  };
  int m = std::stoi(read_kv("experts"));
  std::vector<std::string> expert_paths(m);
  for (int j = 0; j < m; ++j) {
    if (!std::getline(in, line)) corrupt("truncated expert list");
    std::istringstream es(line);
    std::string key, idx, p;
    if (!(es >> key >> idx >> p) || key != "expert")
      corrupt("bad expert line '" + line + "'");
    expert_paths[std::stoi(idx)] = p;
  }
  int k = std::stoi(read_kv("k"));
  MergeHyper hyper;
  hyper.lambda_gate = std::stod(read_kv("lambda_gate"));
  hyper.lambda_mask = std::stod(read_kv("lambda_mask"));
  hyper.gamma_p = std::stod(read_kv("gamma_p"));
  hyper.gamma_v = std::stod(read_kv("gamma_v"));
  MaskPosition position = mask_position_from_string(read_kv("mask_position"));
  int gate_dim = std::stoi(read_kv("gate_input_dim"));
  std::size_t tensor_count = std::stoul(read_kv("tensors"));

  std::vector<GnnModel> experts;
  for (const std::string& p : expert_paths) {
    std::string resolved = p;
    if (!fs::exists(resolved))
      resolved = (fs::path(path).parent_path() / p).string();
    experts.push_back(load_checkpoint(resolved));
  }
  MergedModel model = MergedModel::build(std::move(experts), k, hyper, position);
  if (model.gate_input_dim() != gate_dim)
    corrupt("gate input dim mismatch");

  auto read_tensor_into = [&](const std::string& expect_name, Tensor t) {
    if (!std::getline(in, line)) corrupt("truncated before " + expect_name);
    std::istringstream hs(line);
    std::string tag, name;
    int rows = 0, cols = 0;
    if (!(hs >> tag >> name >> rows >> cols) || tag != "T")
      corrupt("bad tensor header '" + line + "'");
    if (name != expect_name || rows != t.rows() || cols != t.cols())
      corrupt("unexpected tensor " + name);
    for (int i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) corrupt("truncated in " + name);
      std::istringstream vs(line);
      for (int j = 0; j < cols; ++j)
        if (!(vs >> t.at(i, j))) corrupt("short row in " + name);
    }
  };
  std::size_t expected = 2;
  for (MaskedExpert& e : model.experts()) expected += e.masks.size();
  if (tensor_count != expected) corrupt("tensor count mismatch");
  read_tensor_into("gate.w_gate", model.gate().w_gate);
  read_tensor_into("gate.w_noise", model.gate().w_noise);
  for (int j = 0; j < model.num_experts(); ++j)
    for (auto& [name, t] : model.experts()[j].masks)
      read_tensor_into("mask" + std::to_string(j) + "." + name, t);
  return model;
}

}  // namespace gmerge
