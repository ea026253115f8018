#include "gmerge/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gmerge/dataset_io.hpp"

namespace gmerge {

namespace {

bool running_moments_populated(GnnModel& expert) {
  for (BnState& bn : expert.bn_states()) {
    for (double v : bn.running_mean.values())
      if (v != 0.0) return true;
    for (double v : bn.running_var.values())
      if (v != 1.0) return true;
  }
  return false;
}

void require_moments(GnnModel& expert, const char* who) {
  if (expert.bn_states().empty())
    throw std::invalid_argument(std::string(who) + ": expert has no BN layers");
  if (!running_moments_populated(expert))
    throw std::invalid_argument(std::string(who) +
                                ": expert BN running moments are uninitialized");
}

/// sum_L ||mu - mu_hat||_2 + ||var - var_hat||_2 from a forward trace.
Tensor bn_term_from_trace(Tape& tape, GnnModel& expert,
                          const GnnModel::Trace& trace) {
  Tensor total = Tensor::zeros(1, 1);
  auto& bns = expert.bn_states();
  for (std::size_t layer = 0; layer < bns.size(); ++layer) {
    const Tensor& acts = trace.pre_bn.at(layer);
    Tensor mu = tape.col_mean(acts);
    Tensor var = tape.col_var(acts, mu);
    Tensor mean_gap = tape.l2_norm(tape.sub(mu, bns[layer].running_mean));
    Tensor var_gap = tape.l2_norm(tape.sub(var, bns[layer].running_var));
    total = tape.add(total, tape.add(mean_gap, var_gap));
  }
  return total;
}

/// Mean output entropy from logit rows, computed in log-space for stability.
Tensor entropy_term(Tape& tape, const std::vector<Tensor>& logit_rows) {
  Tensor total = Tensor::zeros(1, 1);
  for (const Tensor& logits : logit_rows) {
    double mx = *std::max_element(logits.values().begin(),
                                  logits.values().end());
    Tensor shifted = tape.sub(logits, Tensor::full(1, logits.cols(), mx));
    Tensor lse = tape.add(tape.log(tape.sum(tape.exp(shifted))),
                          Tensor::scalar(mx));
    Tensor probs = tape.softmax(logits);
    Tensor dot = tape.sum(tape.hadamard(probs, logits));
    total = tape.add(total, tape.sub(lse, dot));
  }
  return tape.scalar_mul(total, 1.0 / logit_rows.size());
}

}  // namespace

Tensor bn_regularizer(Tape& tape, GnnModel& expert,
                      const std::vector<Tensor>& xs,
                      const std::vector<Tensor>& as) {
  require_moments(expert, "bn_regularizer");
  GnnModel::Trace trace;
  expert.forward_batch(tape, xs, as, Mode::Eval, nullptr, &trace);
  return bn_term_from_trace(tape, expert, trace);
}

Tensor confidence_regularizer(Tape& tape, GnnModel& expert,
                              const std::vector<Tensor>& xs,
                              const std::vector<Tensor>& as) {
  if (xs.empty())
    throw std::invalid_argument("confidence_regularizer: empty batch");
  std::vector<Tensor> logits = expert.forward_batch(tape, xs, as, Mode::Eval);
  return entropy_term(tape, logits);
}

GenLossTensors generation_loss_terms(Tape& tape, GnnModel& expert,
                                     const std::vector<Tensor>& xs,
                                     const std::vector<Tensor>& as,
                                     const std::vector<int>& labels) {
  require_moments(expert, "generation_loss_terms");
  GnnModel::Trace trace;
  std::vector<Tensor> logit_rows =
      expert.forward_batch(tape, xs, as, Mode::Eval, nullptr, &trace);
  GenLossTensors out;
  out.posterior = tape.scalar_mul(
      tape.cross_entropy(tape.concat_rows(logit_rows), labels),
      static_cast<double>(labels.size()));
  out.bn = bn_term_from_trace(tape, expert, trace);
  out.conf = entropy_term(tape, logit_rows);
  out.total = tape.add(tape.add(out.posterior, out.bn), out.conf);
  return out;
}

Tensor gumbel_adjacency(Tape& tape, const Tensor& probabilities, double tau,
                        Rng* noise_rng) {
  if (tau <= 0.0)
    throw std::invalid_argument("gumbel_adjacency: tau must be positive");
  int n = probabilities.rows();
  if (probabilities.cols() != n)
    throw std::invalid_argument("gumbel_adjacency: matrix is " +
                                probabilities.shape_str() +
                                ", expected square");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double p = probabilities.at(i, j);
      if (i == j) continue;
      if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("gumbel_adjacency: probability " +
                                std::to_string(p) + " outside (0,1)");
    }
  Tensor upper = tape.upper_triangle(probabilities);
  int pairs = upper.rows();
  Tensor logit = tape.sub(tape.log(upper),
                          tape.log(tape.sub(Tensor::ones(pairs, 1), upper)));
  if (noise_rng != nullptr) {
    Tensor noise(pairs, 1);
    for (double& v : noise.values())
      v = noise_rng->gumbel() - noise_rng->gumbel();
    logit = tape.add(logit, noise);
  }
  Tensor relaxed = tape.sigmoid(tape.scalar_mul(logit, 1.0 / tau));
  return tape.symmetric_from_upper(relaxed, n);
}

GraphGenerator::GraphGenerator(GnnModel& expert, const GeneratorConfig& cfg,
                               std::uint64_t seed)
    : expert_(&expert), cfg_(cfg), rng_(seed), tau_(cfg.tau) {
  if (cfg.count < 1)
    throw std::invalid_argument("GraphGenerator: count must be >= 1");
  if (cfg.nodes_min < 2 || cfg.nodes_min > cfg.nodes_max)
    throw std::invalid_argument("GraphGenerator: bad nodes range");
  if (cfg.tau <= 0.0)
    throw std::invalid_argument("GraphGenerator: tau must be positive");
  require_moments(expert, "GraphGenerator");
  expert.set_params_trainable(false);
  for (auto& [name, t] : expert.all_params()) t.zero_grad();

  int d = expert.descriptor().input_dim;
  int c = expert.descriptor().num_classes;
  labels_.resize(cfg.count);
  for (int i = 0; i < cfg.count; ++i) labels_[i] = i % c;
  rng_.shuffle(labels_);

  for (int i = 0; i < cfg.count; ++i) {
    int n = rng_.uniform_int(cfg.nodes_min, cfg.nodes_max);
    features_.push_back(Tensor::randn(rng_, n, d, 1.0, true));
    if (!cfg.learn_structure) {
      Tensor adj(n, n);
      for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
          if (rng_.bernoulli(cfg.fixed_edge_prob)) {
            adj.at(u, v) = 1.0;
            adj.at(v, u) = 1.0;
          }
      fixed_adj_.push_back(adj);
    }
  }

  if (cfg.learn_structure) {
    int h = cfg.encoder_hidden;
    encoder_["w1"] = Tensor::xavier_uniform(rng_, 2 * d, h);
    encoder_["b1"] = Tensor::zeros(1, h);
    encoder_["w2"] = Tensor::xavier_uniform(rng_, h, h);
    encoder_["b2"] = Tensor::zeros(1, h);
    encoder_["w3"] = Tensor::xavier_uniform(rng_, h, 1);
    // sparse prior on the output bias: real graphs start near edge
    // probability 0.2 instead of 0.5, which keeps the first BN moments in a
    // plausible range
    encoder_["b3"] = Tensor::full(1, 1, cfg.edge_bias_init);
    for (auto& [name, t] : encoder_) t.set_requires_grad(true);
  }

  AdamWConfig feat_cfg;
  feat_cfg.lr = cfg.lr_inputs;
  feat_cfg.weight_decay = cfg.weight_decay;
  opts_.push_back(std::make_unique<AdamW>(features_, feat_cfg));
  if (cfg.learn_structure) {
    AdamWConfig enc_cfg;
    enc_cfg.lr = cfg.lr_encoder;
    enc_cfg.weight_decay = cfg.weight_decay;
    std::vector<Tensor> enc_params;
    for (auto& [name, t] : encoder_) enc_params.push_back(t);
    opts_.push_back(std::make_unique<AdamW>(enc_params, enc_cfg));
  }
}

std::vector<Tensor> GraphGenerator::trainable_params() {
  std::vector<Tensor> out = features_;
  for (auto& [name, t] : encoder_) out.push_back(t);
  return out;
}

Tensor GraphGenerator::pair_scores(Tape& tape, int graph_index) {
  const Tensor& x = features_.at(graph_index);
  int n = x.rows(), d = x.cols();
  int pairs = n * (n - 1) / 2;
  // constant row selectors: pair p = (u, v) reads X_u and X_v
  Tensor sel_u(pairs, n), sel_v(pairs, n);
  {
    int p = 0;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v, ++p) {
        sel_u.at(p, u) = 1.0;
        sel_v.at(p, v) = 1.0;
      }
  }
  // [I 0] and [0 I] place each endpoint into its half of the concatenation
  Tensor left(d, 2 * d), right(d, 2 * d);
  for (int k = 0; k < d; ++k) {
    left.at(k, k) = 1.0;
    right.at(k, d + k) = 1.0;
  }
  Tensor xu = tape.matmul(tape.matmul(sel_u, x), left);
  Tensor xv = tape.matmul(tape.matmul(sel_v, x), right);
  Tensor uv = tape.add(xu, xv);  // rows [X_u; X_v]
  Tensor xu2 = tape.matmul(tape.matmul(sel_v, x), left);
  Tensor xv2 = tape.matmul(tape.matmul(sel_u, x), right);
  Tensor vu = tape.add(xu2, xv2);  // rows [X_v; X_u]

  auto mlp = [&](const Tensor& input) {
    Tensor h1 = tape.relu(tape.affine(input, encoder_.at("w1"),
                                      encoder_.at("b1")));
    Tensor h2 = tape.relu(tape.affine(h1, encoder_.at("w2"),
                                      encoder_.at("b2")));
    return tape.affine(h2, encoder_.at("w3"), encoder_.at("b3"));
  };
  // average of both concatenation orders keeps the matrix symmetric
  Tensor raw = tape.scalar_mul(tape.add(mlp(uv), mlp(vu)), 0.5);
  if (cfg_.center_pair_scores && raw.rows() > 1) {
    // per-graph centering: under AdamW the uncentered scores acquire a
    // uniform sign drift that hardens into all-on or all-off graphs; the
    // centered logits keep the learned pairwise preferences instead
    int p = raw.rows();
    Tensor centering(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        centering.at(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / p;
    raw = tape.matmul(centering, raw);
  }
  // bounded output activation: c * tanh(z / c) composed from sigmoids keeps
  // every pair logit inside [-c, c], so no edge probability can saturate
  // into a zero-gradient dead zone
  const double c = cfg_.score_bound;
  Tensor squashed = tape.sigmoid(tape.scalar_mul(raw, 2.0 / c));
  return tape.scalar_mul(
      tape.sub(squashed, Tensor::full(raw.rows(), 1, 0.5)), 2.0 * c);
}

Tensor GraphGenerator::edge_probabilities(Tape& tape, int graph_index) {
  if (!cfg_.learn_structure)
    throw std::logic_error(
        "edge_probabilities: structure learning is disabled");
  Tensor probs = tape.sigmoid(pair_scores(tape, graph_index));
  return tape.symmetric_from_upper(probs,
                                   features_.at(graph_index).rows());
}

Tensor GraphGenerator::relaxed_adjacency(Tape& tape, int graph_index,
                                         std::optional<bool> with_noise) {
  if (!cfg_.learn_structure) return fixed_adj_.at(graph_index);
  bool noise = with_noise.value_or(cfg_.gumbel_noise);
  // the pair score is already the Bernoulli logit, so the relaxation works
  // on it directly instead of round-tripping through probabilities
  Tensor logit = pair_scores(tape, graph_index);
  if (noise) {
    Tensor gn(logit.rows(), 1);
    for (double& v : gn.values()) v = rng_.gumbel() - rng_.gumbel();
    logit = tape.add(logit, gn);
  }
  Tensor relaxed = tape.sigmoid(tape.scalar_mul(logit, 1.0 / tau_));
  return tape.symmetric_from_upper(relaxed, features_.at(graph_index).rows());
}

GenLossParts GraphGenerator::step() {
  Tape tape;
  std::vector<Tensor> adjacencies;
  adjacencies.reserve(features_.size());
  for (int i = 0; i < count(); ++i)
    adjacencies.push_back(relaxed_adjacency(tape, i));
  GenLossTensors terms =
      generation_loss_terms(tape, *expert_, features_, adjacencies, labels_);
  for (auto& opt : opts_) opt->zero_grad();
  tape.backward(terms.total);
  for (auto& opt : opts_) opt->step();
  GenLossParts parts;
  parts.posterior = terms.posterior.value();
  parts.bn = terms.bn.value();
  parts.conf = terms.conf.value();
  parts.total = terms.total.value();
  return parts;
}

SyntheticSet GraphGenerator::run(int expert_id) {
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    if (cfg_.anneal_tau && cfg_.epochs > 1)
      tau_ = cfg_.tau + (cfg_.tau_final - cfg_.tau) * epoch / (cfg_.epochs - 1);
    step();
  }
  SyntheticSet set;
  set.expert_id = expert_id;
  set.config_echo = generator_config_echo(cfg_);
  set.data.num_classes = expert_->descriptor().num_classes;
  set.data.feature_dim = expert_->descriptor().input_dim;
  set.data.name = "synthetic-expert" + std::to_string(expert_id);
  for (int i = 0; i < count(); ++i) {
    const Tensor& x = features_[i];
    int n = x.rows();
    Graph g(n, x.cols());
    g.label = labels_[i];
    g.features = x.values();
    Tape tape(false);
    Tensor relaxed = relaxed_adjacency(tape, i, false);
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (relaxed.at(u, v) > 0.5) g.add_edge(u, v);
    set.data.graphs.push_back(std::move(g));
  }
  return set;
}

SyntheticSet run_generation(GnnModel& expert, const GeneratorConfig& cfg,
                            std::uint64_t seed, int expert_id) {
  GraphGenerator gen(expert, cfg, seed);
  SyntheticSet set = gen.run(expert_id);
  set.seed = seed;
  return set;
}

std::string generator_config_echo(const GeneratorConfig& cfg) {
  std::ostringstream os;
  os << "count=" << cfg.count << " nodes=" << cfg.nodes_min << ".."
     << cfg.nodes_max << " tau=" << cfg.tau << " epochs=" << cfg.epochs
     << " lr_inputs=" << cfg.lr_inputs << " lr_encoder=" << cfg.lr_encoder
     << " encoder_hidden=" << cfg.encoder_hidden
     << " noise=" << (cfg.gumbel_noise ? "on" : "off")
     << " structure=" << (cfg.learn_structure ? "learned" : "fixed");
  return os.str();
}

void save_synthetic_set(const std::string& path, const SyntheticSet& set) {
  write_dataset(path, set.data);
  std::ofstream prov(path + ".prov");
  if (!prov) throw std::runtime_error("cannot write " + path + ".prov");
  prov << "expert_id " << set.expert_id << "\n";
  prov << "seed " << set.seed << "\n";
  prov << "config " << set.config_echo << "\n";
}

SyntheticSet load_synthetic_set(const std::string& path) {
  SyntheticSet set;
  set.data = read_dataset(path);
  std::ifstream prov(path + ".prov");
  if (!prov) throw std::runtime_error("missing sidecar " + path + ".prov");
  std::string key;
  prov >> key >> set.expert_id;
  prov >> key >> set.seed;
  std::getline(prov, key);  // rest of seed line
  std::getline(prov, key);
  if (key.rfind("config ", 0) == 0) set.config_echo = key.substr(7);
  return set;
}

}  // namespace gmerge
