#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gmerge/baselines.hpp"
#include "gmerge/checkpoint.hpp"
#include "gmerge/grad_check.hpp"
#include "gmerge/moe.hpp"
#include "gmerge/synthetic.hpp"

using namespace gmerge;
namespace fs = std::filesystem;

namespace {

GraphDataset small_dataset(std::uint64_t seed, double p = 0.15,
                           int count = 40) {
  SynthConfig cfg;
  cfg.num_graphs = count;
  cfg.nodes_min = 6;
  cfg.nodes_max = 10;
  cfg.edge_prob = p;
  cfg.feature_buckets = 4;
  return synth_domain_dataset(seed, cfg);
}

GnnModel small_expert(GnnKind kind, std::uint64_t seed, double p = 0.15) {
  GraphDataset ds = small_dataset(seed, p);
  ArchitectureDescriptor desc;
  desc.kind = kind;
  desc.input_dim = 4;
  desc.hidden_dim = 8;
  desc.num_classes = 2;
  Rng rng(seed);
  GnnModel model(desc, rng);
  PretrainConfig cfg;
  cfg.epochs = 12;
  pretrain(model, ds, cfg, seed);
  return model;
}

std::vector<double> model_bits(GnnModel& m) {
  std::vector<double> flat;
  for (auto& [n, t] : m.all_params())
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  for (auto& [n, t] : m.bn_buffers())
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  return flat;
}

}  // namespace

TEST_CASE("gate features") {
  SUBCASE("edgeless graph structural stats") {
    Graph g(5, 3);
    for (int u = 0; u < 5; ++u) g.feature(u, 0) = 2.0;
    std::vector<double> f = gate_features(g);
    REQUIRE(f.size() == 7);
    CHECK(f[0] == doctest::Approx(2.0));
    CHECK(f[3] == 0.0);                                 // mean degree
    CHECK(f[4] == 0.0);                                 // degree std
    CHECK(f[5] == 0.0);                                 // density
    CHECK(f[6] == doctest::Approx(std::log(5.0)));      // log n
  }
  SUBCASE("complete graph K4") {
    Graph g(4, 2);
    for (int u = 0; u < 4; ++u)
      for (int v = u + 1; v < 4; ++v) g.add_edge(u, v);
    std::vector<double> f = gate_features(g);
    CHECK(f[2] == doctest::Approx(3.0));  // mean degree
    CHECK(f[3] == doctest::Approx(0.0));  // degree std
    CHECK(f[4] == doctest::Approx(1.0));  // density
  }
  SUBCASE("isomorphic graphs share the feature vector") {
    Rng rng(9);
    Graph g(6, 2);
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    g.add_edge(3, 4);
    for (int u = 0; u < 6; ++u)
      for (int k = 0; k < 2; ++k) g.feature(u, k) = u * 0.5 + k;
    // relabel nodes
    std::vector<int> perm = {5, 3, 1, 0, 2, 4};
    Graph h(6, 2);
    for (int u = 0; u < 6; ++u)
      for (int k = 0; k < 2; ++k) h.feature(perm[u], k) = g.feature(u, k);
    for (int u = 0; u < 6; ++u)
      for (int v = u + 1; v < 6; ++v)
        if (g.has_edge(u, v)) h.add_edge(perm[u], perm[v]);
    std::vector<double> fg = gate_features(g), fh = gate_features(h);
    for (std::size_t i = 0; i < fg.size(); ++i)
      CHECK(fg[i] == doctest::Approx(fh[i]).epsilon(1e-12));
  }
}

TEST_CASE("gate scores") {
  GateParams gate;
  gate.w_gate = Tensor::zeros(3, 4);
  gate.w_noise = Tensor::zeros(3, 4);
  gate.w_gate.set_requires_grad(true);
  gate.w_noise.set_requires_grad(true);
  gate.top_k = 2;
  Tensor x = Tensor::row({1.0, -2.0, 0.5});
  SUBCASE("zero-initialized gate gives zero eval scores") {
    Tape tape(false);
    Tensor q = gate_scores(tape, gate, x, Mode::Eval, nullptr);
    for (double v : q.values()) CHECK(v == 0.0);
  }
  SUBCASE("eval scores equal x * W_g exactly") {
    Rng rng(3);
    for (double& v : gate.w_gate.values()) v = rng.normal();
    Tape tape(false);
    Tensor q = gate_scores(tape, gate, x, Mode::Eval, nullptr);
    Tensor expect = tape.matmul(x, gate.w_gate);
    CHECK(q.values() == expect.values());
  }
  SUBCASE("train-mode variance tracks softplus(x W_n)^2") {
    Rng rng(5);
    for (double& v : gate.w_noise.values()) v = rng.normal();
    Tape tape(false);
    Tensor spread = tape.softplus(tape.matmul(x, gate.w_noise));
    Rng noise(99);
    int draws = 10000;
    std::vector<double> sum(4, 0.0), sumsq(4, 0.0);
    for (int d = 0; d < draws; ++d) {
      Tensor q = gate_scores(tape, gate, x, Mode::Train, &noise);
      for (int j = 0; j < 4; ++j) {
        sum[j] += q.at(0, j);
        sumsq[j] += q.at(0, j) * q.at(0, j);
      }
    }
    for (int j = 0; j < 4; ++j) {
      double mean = sum[j] / draws;
      double var = sumsq[j] / draws - mean * mean;
      double expect = spread.at(0, j) * spread.at(0, j);
      CHECK(std::abs(var - expect) <= 0.05 * std::max(expect, 0.1));
    }
  }
  SUBCASE("dimension mismatch is rejected") {
    Tape tape;
    CHECK_THROWS_AS(gate_scores(tape, gate, Tensor::row({1.0}), Mode::Eval,
                                nullptr),
                    std::invalid_argument);
  }
}

TEST_CASE("sparse gate invariants") {
  Tape tape(false);
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    int m = rng.uniform_int(2, 6);
    int k = rng.uniform_int(1, m);
    Tensor scores(1, m);
    for (double& v : scores.values()) v = rng.normal();
    Tensor w = sparse_gate(tape, scores, k);
    int nonzeros = 0;
    double total = 0.0;
    for (double v : w.values()) {
      CHECK(v >= 0.0);
      if (v > 0.0) ++nonzeros;
      total += v;
    }
    CHECK(nonzeros <= k);
    CHECK(std::abs(total - 1.0) <= 1e-9);
    // shifting every score leaves the weights unchanged (k fixed)
    Tensor shifted = scores.clone();
    for (double& v : shifted.values()) v += 3.7;
    Tensor w2 = sparse_gate(tape, shifted, k);
    for (int j = 0; j < m; ++j)
      CHECK(std::abs(w.at(0, j) - w2.at(0, j)) <= 1e-12);
  }
}

TEST_CASE("importance loss") {
  Tape tape(false);
  auto loss_for = [&](std::vector<std::vector<double>> rows) {
    std::vector<Tensor> weights;
    for (auto& r : rows)
      weights.push_back(Tensor::from_values(1, static_cast<int>(r.size()), r));
    return importance_loss(tape, weights).value();
  };
  SUBCASE("uniform totals give exactly zero") {
    CHECK(loss_for({{5, 5, 5}}) == 0.0);
    CHECK(loss_for({{2, 2, 2}, {3, 3, 3}}) == 0.0);
  }
  SUBCASE("totals [1, 0] give exactly one") {
    CHECK(loss_for({{1, 0}}) == 1.0);
  }
  SUBCASE("scale invariance") {
    double a = loss_for({{1, 2, 3}});
    double b = loss_for({{10, 20, 30}});
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
  SUBCASE("degenerate all-zero totals defined as zero") {
    CHECK(loss_for({{0, 0, 0}}) == 0.0);
  }
  SUBCASE("gradient flows") {
    Tensor w1 = Tensor::from_values(1, 3, {0.7, 0.3, 0.0}, true);
    Tensor w2 = Tensor::from_values(1, 3, {0.1, 0.8, 0.1}, true);
    CHECK(finite_diff_check(
              [&](Tape& t) { return importance_loss(t, {w1, w2}); }, w1) <
          1e-4);
  }
}

TEST_CASE("merged model identities") {
  GnnModel base = small_expert(GnnKind::GCN, 7);
  GraphDataset probe = small_dataset(8, 0.2, 10);
  SUBCASE("identical experts reproduce the single expert's probabilities") {
    std::vector<GnnModel> experts;
    for (int i = 0; i < 3; ++i) experts.push_back(base.clone());
    MergedModel merged = MergedModel::build(std::move(experts), 2);
    for (const Graph& g : probe.graphs) {
      auto [cls, probs] = merged.predict(g);
      std::vector<double> expect = predict_probs(base, g);
      for (std::size_t k = 0; k < probs.size(); ++k)
        CHECK(std::abs(probs[k] - expect[k]) <= 1e-12);
    }
  }
  SUBCASE("k = 1 returns the selected expert's probabilities") {
    std::vector<GnnModel> experts;
    experts.push_back(small_expert(GnnKind::GCN, 7));
    experts.push_back(small_expert(GnnKind::GIN, 9));
    MergedModel merged = MergedModel::build(std::move(experts), 1);
    // zero-init gate ties at score 0, so expert 0 is always selected
    GnnModel first = small_expert(GnnKind::GCN, 7);
    for (const Graph& g : probe.graphs) {
      auto [cls, probs] = merged.predict(g);
      std::vector<double> expect = predict_probs(first, g);
      for (std::size_t k = 0; k < probs.size(); ++k)
        CHECK(std::abs(probs[k] - expect[k]) <= 1e-12);
    }
  }
  SUBCASE("identity mask + uniform gate equals the probability ensemble") {
    std::vector<GnnModel> experts;
    experts.push_back(small_expert(GnnKind::GCN, 7));
    experts.push_back(small_expert(GnnKind::GIN, 9));
    experts.push_back(small_expert(GnnKind::GCN, 11, 0.25));
    int m = static_cast<int>(experts.size());
    std::vector<GnnModel> ensemble;
    for (GnnModel& e : experts) ensemble.push_back(e.clone());
    MergedModel merged = MergedModel::build(std::move(experts), m);
    for (const Graph& g : probe.graphs) {
      auto [cls, probs] = merged.predict(g);
      std::vector<double> expect = ens_prob(ensemble, g);
      for (std::size_t k = 0; k < probs.size(); ++k)
        CHECK(std::abs(probs[k] - expect[k]) <= 1e-12);
    }
  }
  SUBCASE("output is a probability vector") {
    std::vector<GnnModel> experts;
    experts.push_back(small_expert(GnnKind::GCN, 7));
    experts.push_back(small_expert(GnnKind::GIN, 9));
    MergedModel merged = MergedModel::build(std::move(experts), 2);
    for (const Graph& g : probe.graphs) {
      auto [cls, probs] = merged.predict(g);
      double total = 0.0;
      for (double p : probs) {
        CHECK(p >= 0.0);
        total += p;
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("predict tie breaking") {
  // two identical experts with opposite fixed outputs is overkill; probe the
  // rule directly through a crafted classifier
  GnnModel expert = small_expert(GnnKind::GCN, 13);
  for (auto& [name, t] : expert.all_params())
    std::fill(t.values().begin(), t.values().end(), 0.0);
  std::vector<GnnModel> experts;
  experts.push_back(std::move(expert));
  MergedModel merged = MergedModel::build(std::move(experts), 1);
  Graph g(4, 4);
  g.add_edge(0, 1);
  auto [cls, probs] = merged.predict(g);
  CHECK(probs[0] == doctest::Approx(0.5));
  CHECK(cls == 0);  // exact tie goes to the lower class index
}

TEST_CASE("mask loss anchors and gradient") {
  std::vector<GnnModel> experts;
  experts.push_back(small_expert(GnnKind::GCN, 7));
  experts.push_back(small_expert(GnnKind::GIN, 9));
  GraphDataset probe = small_dataset(10, 0.2, 8);
  std::vector<const Graph*> batch;
  std::vector<int> labels;
  for (const Graph& g : probe.graphs) {
    batch.push_back(&g);
    labels.push_back(g.label);
  }
  SUBCASE("all-ones masks with gamma_p = 1 zero the anchors") {
    MergeHyper h1;
    h1.gamma_p = 1.0;
    MergeHyper h2;
    h2.gamma_p = 0.8;
    std::vector<GnnModel> e1, e2;
    for (GnnModel& e : experts) {
      e1.push_back(e.clone());
      e2.push_back(e.clone());
    }
    MergedModel m1 = MergedModel::build(std::move(e1), 2, h1);
    MergedModel m2 = MergedModel::build(std::move(e2), 2, h2);
    Tape tape(false);
    double l1 = mask_loss(tape, m1, batch, labels).value();
    double l2 = mask_loss(tape, m2, batch, labels).value();
    // identical CE terms; anchors contribute |1-0.8| + |1-0.8| per expert
    CHECK(l2 - l1 == doctest::Approx(0.4 * 2).epsilon(1e-12));
  }
  SUBCASE("gradient w.r.t. masks passes the oracle") {
    std::vector<GnnModel> e1;
    for (GnnModel& e : experts) e1.push_back(e.clone());
    MergedModel model = MergedModel::build(std::move(e1), 2);
    // move masks off the all-ones point so gradients are generic
    Rng rng(23);
    for (MaskedExpert& me : model.experts())
      for (auto& [name, t] : me.masks)
        for (double& v : t.values()) v = 1.0 + 0.2 * rng.normal();
    auto loss = [&](Tape& t) { return mask_loss(t, model, batch, labels); };
    for (MaskedExpert& me : model.experts())
      for (auto& [name, t] : me.masks)
        CHECK(finite_diff_check(loss, t) < 1e-4);
  }
}

TEST_CASE("merge_train contract") {
  auto build_setup = [&](MaskPosition position) {
    std::vector<GnnModel> experts;
    experts.push_back(small_expert(GnnKind::GCN, 7));
    experts.push_back(small_expert(GnnKind::GIN, 9));
    MergeHyper hyper;
    return MergedModel::build(std::move(experts), 2, hyper, position);
  };
  GraphDataset synth = small_dataset(31, 0.18, 32);
  SUBCASE("expert backbones are bitwise frozen; only masks and gate move") {
    MergedModel model = build_setup(MaskPosition::Classifier);
    std::vector<std::vector<double>> before;
    for (MaskedExpert& e : model.experts())
      before.push_back(model_bits(e.model));
    std::vector<double> mask_before =
        model.experts()[0].masks.begin()->second.values();
    MergeConfig cfg;
    cfg.epochs = 3;
    TrainHistory hist = merge_train(model, synth, cfg, 77);
    CHECK(hist.loss.size() == 3);
    for (std::size_t j = 0; j < model.experts().size(); ++j)
      CHECK(model_bits(model.experts()[j].model) == before[j]);
    CHECK(model.experts()[0].masks.begin()->second.values() != mask_before);
    double wg_change = 0.0;
    for (double v : model.gate().w_gate.values()) wg_change += std::abs(v);
    CHECK(wg_change > 0.0);
  }
  SUBCASE("training loss does not explode: final <= first epoch") {
    MergedModel model = build_setup(MaskPosition::Classifier);
    MergeConfig cfg;
    cfg.epochs = 20;
    TrainHistory hist = merge_train(model, synth, cfg, 78);
    CHECK(hist.loss.back() <= hist.loss.front());
  }
  SUBCASE("encoder mask placement trains too") {
    MergedModel model = build_setup(MaskPosition::Encoder);
    CHECK(model.mask_position() == MaskPosition::Encoder);
    MergeConfig cfg;
    cfg.epochs = 2;
    cfg.position = MaskPosition::Encoder;
    merge_train(model, synth, cfg, 79);
    // encoder masks exist for every encoder parameter
    for (MaskedExpert& e : model.experts())
      CHECK(e.masks.size() == e.model.encoder_params().size());
  }
  SUBCASE("k grid {1..5} accepted") {
    for (int k = 1; k <= 5; ++k) {
      std::vector<GnnModel> experts;
      for (int j = 0; j < 5; ++j)
        experts.push_back(small_expert(GnnKind::GCN, 7 + j));
      MergedModel model = MergedModel::build(std::move(experts), k);
      CHECK(model.gate().top_k == k);
    }
    std::vector<GnnModel> experts;
    experts.push_back(small_expert(GnnKind::GCN, 7));
    CHECK_THROWS_AS(MergedModel::build(std::move(experts), 2),
                    std::invalid_argument);
  }
  SUBCASE("deterministic per seed") {
    auto run = [&](std::uint64_t seed) {
      MergedModel model = build_setup(MaskPosition::Classifier);
      MergeConfig cfg;
      cfg.epochs = 2;
      merge_train(model, synth, cfg, seed);
      std::vector<double> flat = model.gate().w_gate.values();
      for (MaskedExpert& e : model.experts())
        for (auto& [name, t] : e.masks)
          flat.insert(flat.end(), t.values().begin(), t.values().end());
      return flat;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
  }
}

TEST_CASE("masked parameter share is small for classifier masks") {
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    std::vector<GnnModel> experts;
    Rng rng(41);
    ArchitectureDescriptor desc;
    desc.kind = kind;
    desc.input_dim = 7;  // MUTAG-like
    desc.hidden_dim = 32;
    desc.num_classes = 2;
    experts.emplace_back(desc, rng);
    MergedModel model = MergedModel::build(std::move(experts), 1);
    MaskedExpert& e = model.experts()[0];
    double share = static_cast<double>(e.masked_param_count()) /
                   e.total_param_count();
    INFO(to_string(kind));
    CHECK(share < 0.25);
  }
}

TEST_CASE("merged model persistence round trip") {
  fs::path dir = fs::temp_directory_path() / "gmerge_test_merged";
  fs::create_directories(dir);
  std::vector<GnnModel> experts;
  experts.push_back(small_expert(GnnKind::GCN, 7));
  experts.push_back(small_expert(GnnKind::GIN, 9));
  std::vector<std::string> paths;
  for (std::size_t j = 0; j < experts.size(); ++j) {
    std::string p = (dir / ("expert" + std::to_string(j) + ".ckpt")).string();
    save_checkpoint(p, experts[j], {});
    paths.push_back(p);
  }
  MergedModel model = MergedModel::build(std::move(experts), 2);
  GraphDataset synth = small_dataset(51, 0.2, 16);
  MergeConfig cfg;
  cfg.epochs = 2;
  merge_train(model, synth, cfg, 91);

  std::string mpath = (dir / "merged.mm").string();
  save_merged_model(mpath, model, paths);
  MergedModel loaded = load_merged_model(mpath);

  CHECK(loaded.gate().top_k == 2);
  CHECK(loaded.num_experts() == 2);
  GraphDataset probe = small_dataset(52, 0.2, 10);
  for (const Graph& g : probe.graphs) {
    auto [ca, pa] = model.predict(g);
    auto [cb, pb] = loaded.predict(g);
    CHECK(ca == cb);
    for (std::size_t k = 0; k < pa.size(); ++k)
      CHECK(pa[k] == doctest::Approx(pb[k]).epsilon(1e-15));
  }
  // frozen-backbone check after load
  for (MaskedExpert& e : loaded.experts())
    for (auto& [name, t] : e.model.all_params())
      CHECK(!t.requires_grad());
}

TEST_CASE("baseline operations") {
  std::vector<GnnModel> gcn_pool;
  gcn_pool.push_back(small_expert(GnnKind::GCN, 7));
  gcn_pool.push_back(small_expert(GnnKind::GCN, 8));
  gcn_pool.push_back(small_expert(GnnKind::GCN, 9));
  GraphDataset probe = small_dataset(17, 0.2, 12);
  SUBCASE("ens_prob averages and stays convex") {
    const Graph& g = probe.graphs[0];
    std::vector<double> avg = ens_prob(gcn_pool, g);
    double total = 0.0;
    for (std::size_t k = 0; k < avg.size(); ++k) {
      double lo = 1.0, hi = 0.0;
      for (GnnModel& e : gcn_pool) {
        double v = predict_probs(e, g)[k];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(avg[k] >= lo - 1e-12);
      CHECK(avg[k] <= hi + 1e-12);
      total += avg[k];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    std::vector<GnnModel> solo;
    solo.push_back(gcn_pool[0].clone());
    std::vector<double> same = ens_prob(solo, g);
    std::vector<double> expect = predict_probs(gcn_pool[0], g);
    for (std::size_t k = 0; k < same.size(); ++k)
      CHECK(same[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
  SUBCASE("ens_highconf picks the lowest entropy, ties to the first") {
    const Graph& g = probe.graphs[1];
    std::vector<double> pick = ens_highconf(gcn_pool, g);
    auto ent = [](const std::vector<double>& p) {
      double h = 0.0;
      for (double v : p)
        if (v > 0) h -= v * std::log(v);
      return h;
    };
    double he = ent(pick);
    for (GnnModel& e : gcn_pool)
      CHECK(he <= ent(predict_probs(e, g)) + 1e-15);
    // identical experts: returns expert 0's output
    std::vector<GnnModel> twins;
    twins.push_back(gcn_pool[0].clone());
    twins.push_back(gcn_pool[0].clone());
    std::vector<double> t = ens_highconf(twins, g);
    std::vector<double> expect = predict_probs(gcn_pool[0], g);
    CHECK(t == expect);
  }
  SUBCASE("uniform soup identities and errors") {
    // N copies of one checkpoint behave like the original
    std::vector<GnnModel> copies;
    for (int i = 0; i < 3; ++i) copies.push_back(gcn_pool[0].clone());
    GnnModel soup = uniform_soup(copies);
    const Graph& g = probe.graphs[2];
    std::vector<double> a = predict_probs(soup, g);
    std::vector<double> b = predict_probs(gcn_pool[0], g);
    for (std::size_t k = 0; k < a.size(); ++k)
      CHECK(std::abs(a[k] - b[k]) <= 1e-12);
    // mean of {0, 2W} is W
    std::vector<GnnModel> pair;
    pair.push_back(gcn_pool[0].clone());
    pair.push_back(gcn_pool[0].clone());
    for (auto& [name, t] : pair[0].all_params())
      std::fill(t.values().begin(), t.values().end(), 0.0);
    for (auto& [name, t] : pair[1].all_params())
      for (double& v : t.values()) v *= 2.0;
    GnnModel mean = uniform_soup(pair);
    auto orig = gcn_pool[0].all_params();
    auto got = mean.all_params();
    for (std::size_t i = 0; i < orig.size(); ++i)
      for (int j = 0; j < orig[i].tensor.size(); ++j)
        CHECK(got[i].tensor.values()[j] ==
              doctest::Approx(orig[i].tensor.values()[j]).epsilon(1e-12));
    // heterogeneous mixtures are rejected
    std::vector<GnnModel> mixed;
    mixed.push_back(small_expert(GnnKind::GCN, 7));
    mixed.push_back(small_expert(GnnKind::GIN, 9));
    CHECK_THROWS_AS(uniform_soup(mixed), std::invalid_argument);
  }
  SUBCASE("uniform soup is order invariant") {
    std::vector<GnnModel> fwd, rev;
    for (GnnModel& m : gcn_pool) fwd.push_back(m.clone());
    for (auto it = gcn_pool.rbegin(); it != gcn_pool.rend(); ++it)
      rev.push_back(it->clone());
    GnnModel a = uniform_soup(fwd);
    GnnModel b = uniform_soup(rev);
    const Graph& g = probe.graphs[3];
    std::vector<double> pa = predict_probs(a, g), pb = predict_probs(b, g);
    for (std::size_t k = 0; k < pa.size(); ++k)
      CHECK(pa[k] == doctest::Approx(pb[k]).epsilon(1e-12));
  }
  SUBCASE("greedy soup excludes a sabotaged checkpoint") {
    std::vector<GnnModel> pool;
    pool.push_back(gcn_pool[0].clone());
    pool.push_back(gcn_pool[1].clone());
    GnnModel sabotage = gcn_pool[0].clone();
    Rng rng(1234);
    for (auto& [name, t] : sabotage.all_params())
      for (double& v : t.values()) v = 50.0 * rng.normal();
    pool.push_back(std::move(sabotage));
    GraphDataset val = small_dataset(18, 0.15, 30);
    double best_single = 0.0;
    for (GnnModel& m : pool)
      best_single = std::max(best_single, evaluate(m, val).accuracy);
    GnnModel soup = greedy_soup(pool, val);
    CHECK(evaluate(soup, val).accuracy >= best_single);
    // single checkpoint returns itself
    std::vector<GnnModel> one;
    one.push_back(gcn_pool[2].clone());
    GnnModel same = greedy_soup(one, val);
    const Graph& g = probe.graphs[0];
    std::vector<double> pa = predict_probs(same, g);
    std::vector<double> pb = predict_probs(gcn_pool[2], g);
    for (std::size_t k = 0; k < pa.size(); ++k)
      CHECK(std::abs(pa[k] - pb[k]) <= 1e-12);
  }
}

TEST_CASE("inverse-x baseline keeps structures fixed and completes") {
  std::vector<GnnModel> experts;
  experts.push_back(small_expert(GnnKind::GCN, 7));
  experts.push_back(small_expert(GnnKind::GIN, 9));
  GeneratorConfig gen_cfg;
  gen_cfg.count = 6;
  gen_cfg.nodes_min = 6;
  gen_cfg.nodes_max = 8;
  gen_cfg.epochs = 5;
  gen_cfg.encoder_hidden = 16;
  MergeConfig merge_cfg;
  merge_cfg.epochs = 2;
  merge_cfg.top_k = 2;
  InverseXResult result =
      inverse_x_baseline(experts, gen_cfg, merge_cfg, 313);
  CHECK(result.synthetic.graphs.size() == 12);
  for (const Graph& g : result.synthetic.graphs) g.validate();
  GraphDataset probe = small_dataset(19, 0.2, 6);
  for (const Graph& g : probe.graphs) {
    auto [cls, probs] = result.model.predict(g);
    CHECK(cls >= 0);
    CHECK(cls < 2);
  }
  // determinism of the fixed structures: rerun reproduces the adjacencies
  InverseXResult again = inverse_x_baseline(experts, gen_cfg, merge_cfg, 313);
  for (std::size_t i = 0; i < result.synthetic.graphs.size(); ++i)
    CHECK(again.synthetic.graphs[i].adjacency ==
          result.synthetic.graphs[i].adjacency);
}
