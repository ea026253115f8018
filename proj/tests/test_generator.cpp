#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "gmerge/dataset_io.hpp"
#include "gmerge/generator.hpp"
#include "gmerge/grad_check.hpp"
#include "gmerge/synthetic.hpp"

using namespace gmerge;

namespace {

/// Small expert with populated BN moments for generator tests.
GnnModel toy_expert(GnnKind kind = GnnKind::GCN, std::uint64_t seed = 3) {
  SynthConfig data_cfg;
  data_cfg.num_graphs = 40;
  data_cfg.nodes_min = 6;
  data_cfg.nodes_max = 10;
  data_cfg.edge_prob = 0.15;
  data_cfg.feature_buckets = 4;
  GraphDataset ds = synth_domain_dataset(seed, data_cfg);
  ArchitectureDescriptor desc;
  desc.kind = kind;
  desc.input_dim = 4;
  desc.hidden_dim = 8;
  desc.num_classes = 2;
  Rng rng(seed);
  GnnModel model(desc, rng);
  PretrainConfig cfg;
  cfg.epochs = 15;
  pretrain(model, ds, cfg, seed);
  return model;
}

GeneratorConfig small_gen_cfg() {
  GeneratorConfig cfg;
  cfg.count = 8;
  cfg.nodes_min = 6;
  cfg.nodes_max = 9;
  cfg.encoder_hidden = 16;
  cfg.epochs = 5;
  return cfg;
}

std::vector<double> snapshot(GnnModel& m) {
  std::vector<double> flat;
  for (auto& [n, t] : m.all_params())
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  for (auto& [n, t] : m.bn_buffers())
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  return flat;
}

}  // namespace

TEST_CASE("edge probabilities are symmetric with equal entries for equal rows") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  GraphGenerator gen(expert, cfg, 11);
  // overwrite one feature matrix with identical rows
  Tensor x = gen.features(0);
  for (int u = 0; u < x.rows(); ++u)
    for (int k = 0; k < x.cols(); ++k) x.at(u, k) = 0.37 * (k + 1);
  Tape tape(false);
  Tensor probs = gen.edge_probabilities(tape, 0);
  int n = probs.rows();
  double first = probs.at(0, 1);
  for (int i = 0; i < n; ++i) {
    CHECK(probs.at(i, i) == 0.0);
    for (int j = 0; j < n; ++j) {
      CHECK(std::abs(probs.at(i, j) - probs.at(j, i)) <= 1e-12);
      if (i != j) {
        CHECK(probs.at(i, j) > 0.0);
        CHECK(probs.at(i, j) < 1.0);
        CHECK(probs.at(i, j) == doctest::Approx(first).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("edge probability gradient w.r.t. features passes the oracle") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  GraphGenerator gen(expert, cfg, 13);
  Tensor x = gen.features(0);
  Rng wrng(5);
  Tensor w = Tensor::randn(wrng, x.rows(), x.rows());
  double err = finite_diff_check(
      [&](Tape& t) {
        return t.sum(t.hadamard(w, gen.edge_probabilities(t, 0)));
      },
      x);
  CHECK(err < 1e-4);
}

TEST_CASE("gumbel adjacency: noise-off closed forms") {
  Tape tape(false);
  auto prob_matrix = [](int n, double p) {
    Tensor m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) m.at(i, j) = p;
    return m;
  };
  SUBCASE("p = 0.5 maps to 0.5 at any temperature") {
    for (double tau : {0.01, 0.5, 1.0, 4.0}) {
      Tensor out = gumbel_adjacency(tape, prob_matrix(3, 0.5), tau, nullptr);
      CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(out.at(0, 0) == 0.0);
    }
  }
  SUBCASE("p = 0.9 at tau = 0.01 saturates") {
    Tensor out = gumbel_adjacency(tape, prob_matrix(3, 0.9), 0.01, nullptr);
    CHECK(out.at(0, 1) > 1.0 - 1e-3);
  }
  SUBCASE("monotone approach to {0,1} as tau decreases") {
    double prev_hi = 0.0, prev_lo = 1.0;
    for (double tau : {1.0, 0.5, 0.1, 0.05, 0.01}) {
      double hi = gumbel_adjacency(tape, prob_matrix(2, 0.9), tau, nullptr)
                      .at(0, 1);
      double lo = gumbel_adjacency(tape, prob_matrix(2, 0.2), tau, nullptr)
                      .at(0, 1);
      CHECK(hi >= prev_hi);
      CHECK(lo <= prev_lo);
      prev_hi = hi;
      prev_lo = lo;
    }
    CHECK(1.0 - prev_hi < 1e-3);
    CHECK(prev_lo < 1e-3);
  }
  SUBCASE("contract errors") {
    CHECK_THROWS_AS(gumbel_adjacency(tape, prob_matrix(2, 0.5), 0.0, nullptr),
                    std::invalid_argument);
    Tensor bad(2, 2);
    bad.at(0, 1) = 1.0;  // probability exactly one
    bad.at(1, 0) = 1.0;
    CHECK_THROWS_AS(gumbel_adjacency(tape, bad, 1.0, nullptr),
                    std::domain_error);
  }
}

TEST_CASE("gumbel adjacency: Monte-Carlo behaviour at tau = 1") {
  // Closed form for the relaxed mean: E[sigmoid(logit(p) + Logistic(0,1))],
  // which is 0.63792 at p = 0.7 (and 0.5 at p = 0.5 by symmetry). The
  // edge-on event rate P(y > 1/2) equals p exactly.
  struct Expect {
    double p, relaxed_mean;
  };
  for (auto [p, relaxed_mean] : {Expect{0.3, 0.36208}, Expect{0.5, 0.5},
                                 Expect{0.7, 0.63792}}) {
    Tape tape(false);
    Rng noise(2024);
    int n = 15;  // 105 pairs per draw
    Tensor probs(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) probs.at(i, j) = p;
    long draws = 0, on_events = 0;
    double value_sum = 0.0;
    while (draws < 10000) {
      Tensor relaxed = gumbel_adjacency(tape, probs, 1.0, &noise);
      for (int i = 0; i < n && draws < 10000; ++i)
        for (int j = i + 1; j < n && draws < 10000; ++j) {
          double y = relaxed.at(i, j);
          value_sum += y;
          on_events += y > 0.5 ? 1 : 0;
          ++draws;
        }
    }
    double event_rate = static_cast<double>(on_events) / draws;
    double mean_value = value_sum / draws;
    INFO("p = " << p);
    CHECK(std::abs(event_rate - p) <= 0.02);
    CHECK(std::abs(mean_value - relaxed_mean) <= 0.02);
  }
}

TEST_CASE("bn regularizer values") {
  SUBCASE("hand-computed gaps on a controlled GCN") {
    // identity adjacency, identity first-layer weights: the pre-BN
    // activations are exactly the (positive) inputs
    ArchitectureDescriptor desc;
    desc.kind = GnnKind::GCN;
    desc.input_dim = 32;
    desc.hidden_dim = 32;
    desc.num_classes = 2;
    Rng rng(1);
    GnnModel expert(desc, rng);
    for (auto& [name, t] : expert.all_params()) {
      std::fill(t.values().begin(), t.values().end(), 0.0);
      if (name == "enc.l1.w")
        for (int k = 0; k < 32; ++k) t.at(k, k) = 1.0;
    }
    expert.bn_states()[0].running_mean.values().assign(32, 0.0);
    expert.bn_states()[0].running_var.values().assign(32, 1.0);
    // a negligible nudge so the moments count as populated
    expert.bn_states()[0].running_var.at(0, 31) = 1.0 + 1e-12;
    // two nodes with values 3 -/+ sqrt(2): column mean 3, biased var 2
    double s = std::sqrt(2.0);
    Tensor x(2, 32);
    for (int k = 0; k < 32; ++k) {
      x.at(0, k) = 3.0 - s;
      x.at(1, k) = 3.0 + s;
    }
    Tensor a = Tensor::zeros(2, 2);
    Tape tape(false);
    Tensor reg = bn_regularizer(tape, expert, {x}, {a});
    // ||mean gap||_2 = 3*sqrt(32), ||var gap||_2 = 1*sqrt(32)
    CHECK(reg.value() == doctest::Approx(4.0 * std::sqrt(32.0)).epsilon(1e-9));
  }
  SUBCASE("matching moments give zero") {
    GnnModel expert = toy_expert();
    GeneratorConfig cfg = small_gen_cfg();
    GraphGenerator gen(expert, cfg, 21);
    // one relaxed batch; copy its batch moments into the running buffers
    Tape tape(false);
    std::vector<Tensor> xs, as;
    for (int i = 0; i < gen.count(); ++i) {
      xs.push_back(gen.features(i));
      as.push_back(gen.relaxed_adjacency(tape, i, false));
    }
    GnnModel::Trace trace;
    expert.forward_batch(tape, xs, as, Mode::Eval, nullptr, &trace);
    auto& bns = expert.bn_states();
    for (std::size_t layer = 0; layer < bns.size(); ++layer) {
      Tensor mu = tape.col_mean(trace.pre_bn[layer]);
      Tensor var = tape.col_var(trace.pre_bn[layer], mu);
      bns[layer].running_mean.values() = mu.values();
      bns[layer].running_var.values() = var.values();
    }
    Tensor reg = bn_regularizer(tape, expert, xs, as);
    CHECK(reg.value() <= 1e-9);
  }
  SUBCASE("non-negative on random batches") {
    GnnModel expert = toy_expert(GnnKind::GIN);
    GeneratorConfig cfg = small_gen_cfg();
    GraphGenerator gen(expert, cfg, 31);
    Tape tape(false);
    std::vector<Tensor> xs, as;
    for (int i = 0; i < gen.count(); ++i) {
      xs.push_back(gen.features(i));
      as.push_back(gen.relaxed_adjacency(tape, i));
    }
    CHECK(bn_regularizer(tape, expert, xs, as).value() >= 0.0);
  }
  SUBCASE("uninitialized running moments are rejected") {
    ArchitectureDescriptor desc;
    desc.kind = GnnKind::GCN;
    desc.input_dim = 4;
    desc.hidden_dim = 8;
    desc.num_classes = 2;
    Rng rng(2);
    GnnModel fresh(desc, rng);
    Tape tape(false);
    Tensor x = Tensor::ones(3, 4);
    Tensor a = Tensor::zeros(3, 3);
    CHECK_THROWS_AS(bn_regularizer(tape, fresh, {x}, {a}),
                    std::invalid_argument);
  }
}

TEST_CASE("confidence regularizer") {
  GnnModel expert = toy_expert();
  Tensor x = Tensor::ones(4, 4);
  Tensor a = Tensor::zeros(4, 4);
  SUBCASE("one-hot outputs give zero entropy") {
    GnnModel sharp = expert.clone();
    for (auto& [name, t] : sharp.all_params())
      if (name == "clf.b") {
        t.at(0, 0) = 200.0;
        t.at(0, 1) = -200.0;
      }
    Tape tape(false);
    CHECK(confidence_regularizer(tape, sharp, {x}, {a}).value() <= 1e-12);
  }
  SUBCASE("uniform outputs give ln 2") {
    GnnModel flat = expert.clone();
    for (auto& [name, t] : flat.all_params())
      if (name.rfind("clf.", 0) == 0)
        std::fill(t.values().begin(), t.values().end(), 0.0);
    Tape tape(false);
    CHECK(confidence_regularizer(tape, flat, {x}, {a}).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("entropy strictly decreases when logits sharpen") {
    GnnModel base = expert.clone();
    GnnModel sharper = expert.clone();
    for (auto& [name, t] : sharper.all_params())
      if (name.rfind("clf.", 0) == 0)
        for (double& v : t.values()) v *= 3.0;
    Tape tape(false);
    double h_base = confidence_regularizer(tape, base, {x}, {a}).value();
    double h_sharp = confidence_regularizer(tape, sharper, {x}, {a}).value();
    CHECK(h_sharp < h_base);
  }
}

TEST_CASE("generation step contract") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  SUBCASE("expert parameters receive zero gradient") {
    GraphGenerator gen(expert, cfg, 41);
    gen.step();
    for (auto& [name, t] : expert.all_params())
      for (double g : t.grad()) CHECK(g == 0.0);
  }
  SUBCASE("loss finite at initialization for seeds 0..9") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GraphGenerator gen(expert, cfg, seed);
      GenLossParts parts = gen.step();
      CHECK(std::isfinite(parts.total));
      CHECK(std::isfinite(parts.posterior));
      CHECK(std::isfinite(parts.bn));
      CHECK(std::isfinite(parts.conf));
    }
  }
  SUBCASE("posterior term decreases over 200 steps") {
    GraphGenerator gen(expert, cfg, 43);
    double initial = gen.step().posterior;
    double last = initial;
    for (int i = 0; i < 199; ++i) last = gen.step().posterior;
    CHECK(last < initial);
  }
}

TEST_CASE("generator loss gradients pass the oracle") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  cfg.count = 3;
  GraphGenerator gen(expert, cfg, 47);
  // noise-off keeps the loss a pure function during the FD sweep
  auto loss = [&](Tape& t) {
    std::vector<Tensor> xs, as;
    for (int i = 0; i < gen.count(); ++i) {
      xs.push_back(gen.features(i));
      as.push_back(gen.relaxed_adjacency(t, i, false));
    }
    return generation_loss_terms(t, expert, xs, as, gen.labels()).total;
  };
  Rng coord_rng(7);
  for (int i = 0; i < gen.count(); ++i) {
    Tensor x = gen.features(i);
    CHECK(finite_diff_check(loss, x, 1e-5, 20, &coord_rng) < 1e-4);
  }
  for (Tensor& p : gen.trainable_params())
    CHECK(finite_diff_check(loss, p, 1e-5, 10, &coord_rng) < 1e-4);
}

TEST_CASE("run_generation output contract") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  cfg.epochs = 10;
  std::vector<double> before = snapshot(expert);
  SyntheticSet set = run_generation(expert, cfg, 51, 7);
  SUBCASE("set size, labels, provenance") {
    CHECK(set.data.graphs.size() == static_cast<std::size_t>(cfg.count));
    CHECK(set.expert_id == 7);
    CHECK(set.seed == 51);
    std::set<int> seen;
    for (const Graph& g : set.data.graphs) {
      CHECK(g.label >= 0);
      CHECK(g.label < 2);
      seen.insert(g.label);
    }
    CHECK(seen.size() == 2);  // both classes covered
  }
  SUBCASE("hardened adjacencies are symmetric 0/1 with zero diagonal") {
    for (const Graph& g : set.data.graphs) g.validate();
  }
  SUBCASE("expert is bitwise unchanged") {
    CHECK(snapshot(expert) == before);
  }
  SUBCASE("determinism") {
    SyntheticSet again = run_generation(expert, cfg, 51, 7);
    REQUIRE(again.data.graphs.size() == set.data.graphs.size());
    for (std::size_t i = 0; i < set.data.graphs.size(); ++i) {
      CHECK(again.data.graphs[i].adjacency == set.data.graphs[i].adjacency);
      CHECK(again.data.graphs[i].features == set.data.graphs[i].features);
      CHECK(again.data.graphs[i].label == set.data.graphs[i].label);
    }
  }
}

TEST_CASE("expert is more confident on its own synthetic graphs than on noise") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  cfg.count = 16;
  cfg.epochs = 60;
  SyntheticSet set = run_generation(expert, cfg, 53, 0);
  auto mean_confidence = [&](const GraphDataset& ds) {
    double total = 0.0;
    for (const Graph& g : ds.graphs) {
      std::vector<double> p = predict_probs(expert, g);
      total += *std::max_element(p.begin(), p.end());
    }
    return total / ds.graphs.size();
  };
  // uniform-random graphs of the same sizes
  Rng rng(54);
  GraphDataset random_ds;
  random_ds.num_classes = 2;
  random_ds.feature_dim = 4;
  for (const Graph& g : set.data.graphs) {
    Graph r(g.num_nodes, 4);
    for (int u = 0; u < r.num_nodes; ++u)
      for (int v = u + 1; v < r.num_nodes; ++v)
        if (rng.bernoulli(0.5)) r.add_edge(u, v);
    for (double& f : r.features) f = rng.normal();
    r.label = 0;
    random_ds.graphs.push_back(std::move(r));
  }
  CHECK(mean_confidence(set.data) >= mean_confidence(random_ds));
}

TEST_CASE("structure-free generation keeps adjacencies fixed") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  cfg.learn_structure = false;
  cfg.epochs = 4;
  GraphGenerator gen(expert, cfg, 61);
  Tape probe(false);
  std::vector<std::vector<double>> before;
  for (int i = 0; i < gen.count(); ++i)
    before.push_back(gen.relaxed_adjacency(probe, i).values());
  for (int s = 0; s < 4; ++s) gen.step();
  for (int i = 0; i < gen.count(); ++i)
    CHECK(gen.relaxed_adjacency(probe, i).values() == before[i]);
  SyntheticSet set = gen.run(0);
  for (const Graph& g : set.data.graphs) g.validate();
}

TEST_CASE("synthetic set save/load with provenance sidecar") {
  GnnModel expert = toy_expert();
  GeneratorConfig cfg = small_gen_cfg();
  cfg.epochs = 2;
  SyntheticSet set = run_generation(expert, cfg, 71, 3);
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "gmerge_test_synth";
  fs::create_directories(dir);
  std::string path = (dir / "expert3.ds").string();
  save_synthetic_set(path, set);
  SyntheticSet back = load_synthetic_set(path);
  CHECK(back.expert_id == 3);
  CHECK(back.seed == 71);
  CHECK(back.config_echo == set.config_echo);
  REQUIRE(back.data.graphs.size() == set.data.graphs.size());
  for (std::size_t i = 0; i < set.data.graphs.size(); ++i)
    CHECK(back.data.graphs[i].adjacency == set.data.graphs[i].adjacency);
}
