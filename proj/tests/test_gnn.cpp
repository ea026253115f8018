#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gmerge/checkpoint.hpp"
#include "gmerge/gnn.hpp"
#include "gmerge/grad_check.hpp"
#include "gmerge/rng.hpp"
#include "gmerge/synthetic.hpp"

using namespace gmerge;
namespace fs = std::filesystem;

namespace {

ArchitectureDescriptor desc_for(GnnKind kind, int input_dim = 4,
                                int classes = 2, int hidden = 8) {
  ArchitectureDescriptor d;
  d.kind = kind;
  d.input_dim = input_dim;
  d.num_classes = classes;
  d.hidden_dim = hidden;
  return d;
}

Graph random_graph(Rng& rng, int n, int fdim, double p) {
  Graph g(n, fdim);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) g.add_edge(u, v);
  for (int u = 0; u < n; ++u)
    for (int k = 0; k < fdim; ++k) g.feature(u, k) = rng.normal();
  g.label = rng.uniform_int(0, 1);
  return g;
}

Graph permuted(const Graph& g, const std::vector<int>& perm) {
  Graph out(g.num_nodes, g.feature_dim);
  out.label = g.label;
  for (int u = 0; u < g.num_nodes; ++u) {
    for (int k = 0; k < g.feature_dim; ++k)
      out.feature(perm[u], k) = g.feature(u, k);
    for (int v = u + 1; v < g.num_nodes; ++v)
      if (g.has_edge(u, v)) out.add_edge(perm[u], perm[v]);
  }
  return out;
}

/// Linearly separable toy set: class decided by a strong constant feature.
GraphDataset separable_dataset(int count) {
  Rng rng(404);
  GraphDataset ds;
  ds.num_classes = 2;
  ds.feature_dim = 4;
  for (int i = 0; i < count; ++i) {
    Graph g = random_graph(rng, 6 + (i % 3), 4, 0.3);
    g.label = i % 2;
    for (int u = 0; u < g.num_nodes; ++u) {
      g.feature(u, 0) = g.label == 0 ? 3.0 : -3.0;
      g.feature(u, 1) = g.label == 0 ? -2.0 : 2.0;
    }
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace

TEST_CASE("descriptor BN layer counts") {
  CHECK(desc_for(GnnKind::GCN).bn_layer_count() == 1);
  CHECK(desc_for(GnnKind::GAT).bn_layer_count() == 1);
  CHECK(desc_for(GnnKind::GIN).bn_layer_count() == 2);
}

TEST_CASE("parameter groups partition and match descriptor formulas") {
  Rng rng(1);
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    GnnModel model(desc_for(kind), rng);
    auto enc = model.encoder_params();
    auto clf = model.classifier_params();
    auto all = model.all_params();
    CHECK(enc.size() + clf.size() == all.size());
    int d = 4, h = 8, c = 2;
    std::size_t enc_count = 0;
    for (auto& [n, t] : enc) enc_count += t.size();
    std::size_t clf_count = 0;
    for (auto& [n, t] : clf) clf_count += t.size();
    CHECK(clf_count == static_cast<std::size_t>(h * c + c));
    switch (kind) {
      case GnnKind::GCN:
        CHECK(enc_count == static_cast<std::size_t>(d * h + h * h + 2 * h));
        break;
      case GnnKind::GIN:
        CHECK(enc_count ==
              static_cast<std::size_t>((1 + d * h + h + 2 * h + h * h + h) +
                                       (1 + h * h + h + 2 * h + h * h + h)));
        break;
      case GnnKind::GAT:
        CHECK(enc_count ==
              static_cast<std::size_t>((d * h + 2 * h) + (h * h + 2 * h) + 2 * h));
        break;
    }
  }
}

TEST_CASE("permutation invariance of all backbones") {
  Rng rng(42);
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    GnnModel model(desc_for(kind), rng);
    for (int rep = 0; rep < 3; ++rep) {
      Graph g = random_graph(rng, 9, 4, 0.35);
      std::vector<int> perm(g.num_nodes);
      for (int i = 0; i < g.num_nodes; ++i) perm[i] = i;
      rng.shuffle(perm);
      Graph gp = permuted(g, perm);
      Tape tape(false);
      Tensor a = model.forward(tape, g, Mode::Eval);
      Tensor b = model.forward(tape, gp, Mode::Eval);
      for (int j = 0; j < a.cols(); ++j)
        CHECK(std::abs(a.at(0, j) - b.at(0, j)) <= 1e-10);
    }
  }
}

TEST_CASE("edgeless graph through GCN ignores structure") {
  Rng rng(7);
  GnnModel model(desc_for(GnnKind::GCN), rng);
  Graph g(5, 4);
  for (int u = 0; u < 5; ++u)
    for (int k = 0; k < 4; ++k) g.feature(u, k) = rng.normal();
  std::vector<int> perm = {4, 2, 0, 1, 3};
  Graph gp = permuted(g, perm);
  Tape tape(false);
  Tensor a = model.forward(tape, g, Mode::Eval);
  Tensor b = model.forward(tape, gp, Mode::Eval);
  for (int j = 0; j < a.cols(); ++j)
    CHECK(std::abs(a.at(0, j) - b.at(0, j)) <= 1e-10);
}

TEST_CASE("eval-mode forward is pure") {
  Rng rng(11);
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    GnnModel model(desc_for(kind), rng);
    Graph g = random_graph(rng, 8, 4, 0.4);
    Tape tape(false);
    Tensor a = model.forward(tape, g, Mode::Eval);
    Tensor b = model.forward(tape, g, Mode::Eval);
    CHECK(a.values() == b.values());
  }
}

TEST_CASE("full model gradients pass the finite-difference oracle") {
  Rng rng(13);
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    Rng init(100 + static_cast<int>(kind));
    GnnModel model(desc_for(kind), init);
    Graph g = random_graph(rng, 7, 4, 0.4);
    auto loss = [&](Tape& t) {
      return t.cross_entropy(model.forward(t, g, Mode::Eval), {g.label});
    };
    for (auto& [name, param] : model.all_params()) {
      INFO(to_string(kind) << " param " << name);
      CHECK(finite_diff_check(loss, param) < 1e-4);
    }
    // gradient w.r.t. the input features as well
    Tensor x = g.feature_tensor();
    x.set_requires_grad(true);
    Tensor a = g.adjacency_tensor();
    auto loss_x = [&](Tape& t) {
      return t.cross_entropy(model.forward(t, x, a, Mode::Eval), {g.label});
    };
    CHECK(finite_diff_check(loss_x, x) < 1e-4);
  }
}

TEST_CASE("pretrain fits a separable toy set") {
  GraphDataset ds = separable_dataset(50);
  Rng rng(21);
  GnnModel model(desc_for(GnnKind::GCN), rng);
  PretrainConfig cfg;
  cfg.epochs = 100;
  TrainHistory hist = pretrain(model, ds, cfg, 77);
  REQUIRE(hist.accuracy.size() == 100);
  CHECK(hist.accuracy.back() == doctest::Approx(1.0));
  EvalMetrics m = evaluate(model, ds);
  CHECK(m.accuracy == doctest::Approx(1.0));
  CHECK(m.macro_precision == doctest::Approx(1.0));
}

TEST_CASE("pretrain with zero epochs leaves parameters unchanged") {
  Rng rng(31);
  GnnModel model(desc_for(GnnKind::GIN), rng);
  std::vector<std::vector<double>> before;
  for (auto& [n, t] : model.all_params()) before.push_back(t.values());
  PretrainConfig cfg;
  cfg.epochs = 0;
  pretrain(model, separable_dataset(10), cfg, 1);
  std::size_t i = 0;
  for (auto& [n, t] : model.all_params()) CHECK(t.values() == before[i++]);
}

TEST_CASE("pretrain determinism") {
  auto run = [](std::uint64_t seed) {
    GraphDataset ds = separable_dataset(24);
    Rng rng(55);
    GnnModel model(desc_for(GnnKind::GCN), rng);
    PretrainConfig cfg;
    cfg.epochs = 5;
    pretrain(model, ds, cfg, seed);
    std::vector<double> flat;
    for (auto& [n, t] : model.all_params())
      flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
  };
  CHECK(run(9) == run(9));
  CHECK(run(9) != run(10));
}

TEST_CASE("evaluate on a constant predictor gives macro precision 0.25") {
  Rng rng(61);
  GnnModel model(desc_for(GnnKind::GCN), rng);
  // force a constant prediction: zero all params, then bias class 0
  for (auto& [name, t] : model.all_params())
    std::fill(t.values().begin(), t.values().end(), 0.0);
  for (auto& [name, t] : model.classifier_params())
    if (name == "clf.b") t.at(0, 0) = 5.0;
  GraphDataset ds = separable_dataset(40);  // balanced binary
  EvalMetrics m = evaluate(model, ds);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.macro_precision == doctest::Approx(0.25));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(71);
  for (GnnKind kind : {GnnKind::GCN, GnnKind::GIN, GnnKind::GAT}) {
    GnnModel model(desc_for(kind), rng);
    GraphDataset ds = separable_dataset(12);
    PretrainConfig cfg;
    cfg.epochs = 3;
    pretrain(model, ds, cfg, 5);

    fs::path dir = fs::temp_directory_path() / "gmerge_test_ckpt";
    fs::create_directories(dir);
    std::string path = (dir / ("m_" + to_string(kind) + ".ckpt")).string();
    CheckpointMeta meta;
    meta.seed = 5;
    meta.epochs = 3;
    meta.domain_tag = "A";
    save_checkpoint(path, model, meta);

    CheckpointMeta got;
    GnnModel loaded = load_checkpoint(path, &got);
    CHECK(got.domain_tag == "A");
    CHECK(got.seed == 5);
    CHECK(loaded.descriptor() == model.descriptor());

    auto pa = model.all_params();
    auto pb = loaded.all_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
      CHECK(pa[i].tensor.values() == pb[i].tensor.values());
    auto ba = model.bn_buffers();
    auto bb = loaded.bn_buffers();
    for (std::size_t i = 0; i < ba.size(); ++i)
      CHECK(ba[i].tensor.values() == bb[i].tensor.values());

    // identical eval outputs, bit for bit
    Rng grng(3);
    Graph g = random_graph(grng, 8, 4, 0.3);
    Tape tape(false);
    Tensor a = model.forward(tape, g, Mode::Eval);
    Tensor b = loaded.forward(tape, g, Mode::Eval);
    CHECK(a.values() == b.values());

    EvalMetrics ma = evaluate(model, ds);
    EvalMetrics mb = evaluate(loaded, ds);
    CHECK(ma.accuracy == mb.accuracy);
    CHECK(ma.macro_precision == mb.macro_precision);
  }
}

TEST_CASE("truncated checkpoint raises a corruption error") {
  Rng rng(81);
  GnnModel model(desc_for(GnnKind::GCN), rng);
  fs::path dir = fs::temp_directory_path() / "gmerge_test_ckpt";
  fs::create_directories(dir);
  std::string path = (dir / "trunc.ckpt").string();
  save_checkpoint(path, model, {});
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  in.close();
  std::ofstream out(path);
  out << content.substr(0, content.size() / 2);
  out.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("corrupt"),
                       std::runtime_error);
}
