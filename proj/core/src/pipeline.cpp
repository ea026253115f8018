#include "gmerge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gmerge/baselines.hpp"
#include "gmerge/checkpoint.hpp"
#include "gmerge/dataset_io.hpp"
#include "gmerge/generator.hpp"
#include "gmerge/synthetic.hpp"

namespace fs = std::filesystem;

namespace gmerge {

namespace {

// stable seed-stream ordinals per pipeline component
constexpr std::uint64_t kOrdGenData = 1;     // + domain index
constexpr std::uint64_t kOrdPretrain = 100;  // + expert index
constexpr std::uint64_t kOrdInvert = 200;    // + expert index
constexpr std::uint64_t kOrdMerge = 300;
constexpr std::uint64_t kOrdMaskStudy = 310;
constexpr std::uint64_t kOrdInverseX = 400;

void log(const ExperimentConfig& cfg, const std::string& msg) {
  if (!cfg.quiet) std::printf("[graphmerge] %s\n", msg.c_str());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

GeneratorConfig generator_config(const ExperimentConfig& cfg) {
  GeneratorConfig g;
  g.count = cfg.gen_count;
  g.nodes_min = cfg.gen_nodes_min;
  g.nodes_max = cfg.gen_nodes_max;
  g.tau = cfg.gen_tau;
  g.anneal_tau = cfg.gen_anneal;
  g.tau_final = cfg.gen_tau_final;
  g.epochs = cfg.gen_epochs;
  g.lr_inputs = cfg.gen_lr_inputs;
  g.lr_encoder = cfg.gen_lr_encoder;
  g.weight_decay = cfg.gen_weight_decay;
  g.encoder_hidden = cfg.gen_encoder_hidden;
  g.gumbel_noise = cfg.gen_noise;
  g.center_pair_scores = cfg.gen_center_scores;
  return g;
}

MergeConfig merge_config(const ExperimentConfig& cfg) {
  MergeConfig m;
  m.epochs = cfg.merge_epochs;
  m.batch_size = cfg.merge_batch;
  m.lr = cfg.merge_lr;
  m.weight_decay = cfg.merge_weight_decay;
  m.top_k = cfg.merge_k;
  m.hyper.lambda_gate = cfg.lambda_gate;
  m.hyper.lambda_mask = cfg.lambda_mask;
  m.hyper.gamma_p = cfg.gamma_p;
  m.hyper.gamma_v = cfg.gamma_v;
  m.position = cfg.mask_position;
  return m;
}

std::uint64_t expert_seed(const ExperimentConfig& cfg, std::size_t index) {
  if (cfg.roster[index].seed) return *cfg.roster[index].seed;
  return derive_seed(cfg.seed, kOrdPretrain + index);
}

/// Run fn(i) for i in [0, count) on the configured number of threads; each
/// index is independent and carries its own seed stream.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int t = 0; t < std::min(threads, count); ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<GnnModel> load_experts(const ExperimentConfig& cfg,
                                   const RunPaths& paths) {
  std::vector<GnnModel> experts;
  for (const std::string& name : expert_names(cfg))
    experts.push_back(load_checkpoint(paths.checkpoint_file(name)));
  return experts;
}

EvalMetrics metrics_of_probs(
    const GraphDataset& ds,
    const std::function<std::vector<double>(const Graph&)>& prob_fn,
    int classes) {
  std::vector<int> predictions, labels;
  for (const Graph& g : ds.graphs) {
    std::vector<double> p = prob_fn(g);
    int best = 0;
    for (int k = 1; k < classes; ++k)
      if (p[k] > p[best]) best = k;
    predictions.push_back(best);
    labels.push_back(g.label);
  }
  return metrics_from_predictions(predictions, labels, classes);
}

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

const MethodRow& RunReport::row(const std::string& method) const {
  for (const MethodRow& r : rows)
    if (r.method == method) return r;
  throw std::invalid_argument("RunReport: no row for method " + method);
}

RunPaths::RunPaths(const ExperimentConfig& cfg) : out(cfg.out_dir) {}

std::string RunPaths::data_file(const std::string& tag) const {
  return (fs::path(out) / "data" / (tag + ".ds")).string();
}
std::string RunPaths::checkpoint_file(const std::string& name) const {
  return (fs::path(out) / "checkpoints" / (name + ".ckpt")).string();
}
std::string RunPaths::synthetic_file(const std::string& name) const {
  return (fs::path(out) / "synthetic" / (name + ".ds")).string();
}
std::string RunPaths::mixture_file() const {
  return (fs::path(out) / "synthetic" / "mixture.ds").string();
}
std::string RunPaths::merged_file() const {
  return (fs::path(out) / "merged" / "model.mm").string();
}
std::string RunPaths::report_csv_file() const {
  return (fs::path(out) / "report.csv").string();
}
std::string RunPaths::report_text_file() const {
  return (fs::path(out) / "report.txt").string();
}
std::string RunPaths::cross_error_file() const {
  return (fs::path(out) / "cross_error.csv").string();
}
std::string RunPaths::divergence_file() const {
  return (fs::path(out) / "divergence.csv").string();
}
std::string RunPaths::mask_study_file() const {
  return (fs::path(out) / "mask_study.csv").string();
}
std::string RunPaths::timings_file() const {
  return (fs::path(out) / "timings.txt").string();
}
std::string RunPaths::config_echo_file() const {
  return (fs::path(out) / "config_echo.cfg").string();
}

std::vector<std::string> expert_names(const ExperimentConfig& cfg) {
  std::vector<std::string> names;
  for (const ExpertSpec& e : cfg.roster) {
    std::string base = e.name();
    std::string name = base;
    int suffix = 2;
    while (std::find(names.begin(), names.end(), name) != names.end())
      name = base + "-" + std::to_string(suffix++);
    names.push_back(name);
  }
  return names;
}

int configured_threads() {
  const char* env = std::getenv("GRAPHMERGE_THREADS");
  if (env == nullptr) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

void cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  fs::create_directories(fs::path(paths.out) / "data");
  if (cfg.source == DataSource::Synthetic) {
    std::vector<DomainSpec> all = cfg.domains;
    all.push_back(cfg.target);
    for (std::size_t i = 0; i < all.size(); ++i) {
      SynthConfig sc;
      sc.num_graphs = cfg.graphs_per_domain;
      sc.nodes_min = cfg.data_nodes_min;
      sc.nodes_max = cfg.data_nodes_max;
      sc.edge_prob = all[i].edge_prob;
      sc.feature_buckets = cfg.feature_buckets;
      GraphDataset ds = synth_domain_dataset(derive_seed(cfg.seed, kOrdGenData + i), sc);
      ds.name = all[i].tag;
      write_dataset(paths.data_file(all[i].tag), ds);
      log(cfg, "gen-data: wrote " + paths.data_file(all[i].tag) + " (" +
                   std::to_string(ds.graphs.size()) + " graphs, mean e/n " +
                   std::to_string(ds.mean_edge_node_ratio()) + ")");
    }
  } else {
    GraphDataset full = load_tu_dataset(cfg.tu_dir);
    DomainSplit split = split_by_edge_density(full, cfg.split_fractions);
    for (const auto& [tag, ds] : split.domains) {
      write_dataset(paths.data_file(tag), ds);
      log(cfg, "gen-data: wrote " + paths.data_file(tag) + " (" +
                   std::to_string(ds.graphs.size()) + " graphs)");
    }
  }
}

void cmd_pretrain(const ExperimentConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  fs::create_directories(fs::path(paths.out) / "checkpoints");
  std::vector<std::string> names = expert_names(cfg);
  // domain datasets are shared read-only across worker threads
  std::map<std::string, GraphDataset> data;
  for (const ExpertSpec& e : cfg.roster)
    if (!data.count(e.domain))
      data[e.domain] = read_dataset(paths.data_file(e.domain));
  parallel_for(
      static_cast<int>(cfg.roster.size()), configured_threads(), [&](int i) {
        const ExpertSpec& spec = cfg.roster[i];
        const GraphDataset& ds = data.at(spec.domain);
        ArchitectureDescriptor desc;
        desc.kind = spec.kind;
        desc.hidden_dim = cfg.hidden_dim;
        desc.input_dim = ds.feature_dim;
        desc.num_classes = ds.num_classes;
        std::uint64_t seed = expert_seed(cfg, i);
        Rng init(seed);
        GnnModel model(desc, init);
        PretrainConfig pcfg;
        pcfg.epochs = cfg.pretrain_epochs;
        pcfg.batch_size = cfg.pretrain_batch;
        pcfg.lr = cfg.pretrain_lr;
        pcfg.weight_decay = cfg.pretrain_weight_decay;
        TrainHistory hist = pretrain(model, ds, pcfg, seed);
        CheckpointMeta meta;
        meta.seed = seed;
        meta.epochs = cfg.pretrain_epochs;
        meta.domain_tag = spec.domain;
        save_checkpoint(paths.checkpoint_file(names[i]), model, meta);
        log(cfg, "pretrain: " + names[i] + " train acc " +
                     std::to_string(hist.accuracy.empty()
                                        ? 0.0
                                        : hist.accuracy.back()));
      });
}

void cmd_invert(const ExperimentConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  fs::create_directories(fs::path(paths.out) / "synthetic");
  std::vector<std::string> names = expert_names(cfg);
  std::vector<SyntheticSet> sets(cfg.roster.size());
  parallel_for(
      static_cast<int>(cfg.roster.size()), configured_threads(), [&](int i) {
        GnnModel expert = load_checkpoint(paths.checkpoint_file(names[i]));
        sets[i] = run_generation(expert, generator_config(cfg),
                                 derive_seed(cfg.seed, kOrdInvert + i), i);
        save_synthetic_set(paths.synthetic_file(names[i]), sets[i]);
        log(cfg, "invert: " + names[i] + " -> " +
                     std::to_string(sets[i].data.graphs.size()) + " graphs");
      });
  // union of the per-expert sets in roster order
  GraphDataset mixture;
  mixture.num_classes = sets.front().data.num_classes;
  mixture.feature_dim = sets.front().data.feature_dim;
  mixture.name = "mixture";
  for (const SyntheticSet& s : sets)
    for (const Graph& g : s.data.graphs) mixture.graphs.push_back(g);
  write_dataset(paths.mixture_file(), mixture);
  log(cfg, "invert: mixture has " + std::to_string(mixture.graphs.size()) +
               " graphs");
}

void cmd_merge(const ExperimentConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  fs::create_directories(fs::path(paths.out) / "merged");
  std::vector<GnnModel> experts = load_experts(cfg, paths);
  GraphDataset mixture = read_dataset(paths.mixture_file());
  MergeConfig mcfg = merge_config(cfg);
  MergedModel model = MergedModel::build(std::move(experts), mcfg.top_k,
                                         mcfg.hyper, mcfg.position);
  TrainHistory hist =
      merge_train(model, mixture, mcfg, derive_seed(cfg.seed, kOrdMerge));
  std::vector<std::string> rel_paths;
  for (const std::string& name : expert_names(cfg))
    rel_paths.push_back("../checkpoints/" + name + ".ckpt");
  save_merged_model(paths.merged_file(), model, rel_paths);
  log(cfg, "merge: final loss " +
               std::to_string(hist.loss.empty() ? 0.0 : hist.loss.back()));
}

RunReport cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  RunReport report;
  report.config_echo = serialize_config(cfg);

  GraphDataset target = read_dataset(paths.data_file(cfg.target.tag));
  int classes = target.num_classes;
  std::vector<std::string> names = expert_names(cfg);
  std::vector<GnnModel> experts = load_experts(cfg, paths);

  // individual experts
  std::vector<EvalMetrics> expert_metrics;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    EvalMetrics m = evaluate(experts[i], target);
    expert_metrics.push_back(m);
    report.rows.push_back({names[i], m.accuracy, m.macro_precision,
                           "expert on " + cfg.roster[i].domain});
  }

  // Avg-PTM: mean of the individual metric values
  double avg_acc = 0.0, avg_pre = 0.0;
  for (const EvalMetrics& m : expert_metrics) {
    avg_acc += m.accuracy / expert_metrics.size();
    avg_pre += m.macro_precision / expert_metrics.size();
  }
  report.rows.push_back({"Avg-PTM", avg_acc, avg_pre, "mean expert metrics"});

  EvalMetrics ens_p = metrics_of_probs(
      target, [&](const Graph& g) { return ens_prob(experts, g); }, classes);
  report.rows.push_back(
      {"Ens-Prob", ens_p.accuracy, ens_p.macro_precision, "probability mean"});

  EvalMetrics ens_h = metrics_of_probs(
      target, [&](const Graph& g) { return ens_highconf(experts, g); },
      classes);
  report.rows.push_back({"Ens-HighConf", ens_h.accuracy,
                         ens_h.macro_precision, "lowest-entropy expert"});

  // parameter soups need a homogeneous roster
  bool homogeneous = true;
  for (GnnModel& e : experts)
    if (!(e.descriptor() == experts.front().descriptor())) homogeneous = false;
  if (homogeneous) {
    GnnModel uni = uniform_soup(experts);
    EvalMetrics m = evaluate(uni, target);
    report.rows.push_back(
        {"Uni-Soup", m.accuracy, m.macro_precision, "parameter mean"});
    GraphDataset mixture = read_dataset(paths.mixture_file());
    GnnModel greedy = greedy_soup(experts, mixture);
    EvalMetrics mg = evaluate(greedy, target);
    report.rows.push_back({"Greedy-Soup", mg.accuracy, mg.macro_precision,
                           "validated on the synthetic mixture"});
  } else {
    report.rows.push_back(
        {"Uni-Soup", {}, {}, "heterogeneous roster, parameter soup undefined"});
    report.rows.push_back(
        {"Greedy-Soup", {}, {}, "heterogeneous roster, parameter soup undefined"});
  }

  if (cfg.eval_inverse_x) {
    GeneratorConfig gcfg = generator_config(cfg);
    InverseXResult ix = inverse_x_baseline(
        experts, gcfg, merge_config(cfg), derive_seed(cfg.seed, kOrdInverseX));
    EvalMetrics m = metrics_of_probs(
        target, [&](const Graph& g) { return ix.model.predict(g).second; },
        classes);
    report.rows.push_back({"Inverse-X", m.accuracy, m.macro_precision,
                           "features-only inversion"});
  } else {
    report.rows.push_back({"Inverse-X", {}, {}, "disabled in config"});
  }

  MergedModel merged = load_merged_model(paths.merged_file());
  EvalMetrics mm = metrics_of_probs(
      target, [&](const Graph& g) { return merged.predict(g).second; },
      classes);
  report.rows.push_back({"MoE-Merge", mm.accuracy, mm.macro_precision,
                         "masked experts + sparse gate"});

  if (cfg.eval_cross_error) {
    std::vector<std::pair<std::string, const GraphDataset*>> domain_ptrs;
    std::vector<GraphDataset> storage;
    storage.reserve(cfg.all_domain_tags().size());
    for (const std::string& tag : cfg.all_domain_tags())
      storage.push_back(read_dataset(paths.data_file(tag)));
    std::size_t di = 0;
    for (const std::string& tag : cfg.all_domain_tags())
      domain_ptrs.emplace_back(tag, &storage[di++]);
    report.cross_error = cross_error_matrix(experts, names, domain_ptrs);
  }

  if (cfg.eval_divergence) {
    std::map<std::string, GraphDataset> per_tag;
    for (const ExpertSpec& e : cfg.roster)
      if (!per_tag.count(e.domain))
        per_tag[e.domain] = read_dataset(paths.data_file(e.domain));
    report.divergence_tags = names;
    std::size_t m = experts.size();
    report.divergence.assign(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        report.divergence[i * m + j] = hdh_divergence(
            experts[i], experts[j], per_tag.at(cfg.roster[i].domain),
            per_tag.at(cfg.roster[j].domain));
      }
  }

  if (cfg.mask_study) report.mask_study = run_mask_position_study(cfg);

  write_report_files(cfg, report);
  return report;
}

std::vector<MaskStudyRow> run_mask_position_study(const ExperimentConfig& cfg) {
  RunPaths paths(cfg);
  GraphDataset mixture = read_dataset(paths.mixture_file());
  GraphDataset target = read_dataset(paths.data_file(cfg.target.tag));
  std::vector<MaskStudyRow> rows;
  for (MaskPosition position :
       {MaskPosition::Classifier, MaskPosition::Encoder}) {
    std::vector<GnnModel> experts = load_experts(cfg, RunPaths(cfg));
    MergeConfig mcfg = merge_config(cfg);
    mcfg.position = position;
    MergedModel model = MergedModel::build(std::move(experts), mcfg.top_k,
                                           mcfg.hyper, position);
    merge_train(model, mixture, mcfg, derive_seed(cfg.seed, kOrdMaskStudy));
    EvalMetrics m = metrics_of_probs(
        target, [&](const Graph& g) { return model.predict(g).second; },
        target.num_classes);
    std::size_t masked = 0, total = 0;
    for (MaskedExpert& e : model.experts()) {
      masked += e.masked_param_count();
      total += e.total_param_count();
    }
    rows.push_back({to_string(position), m.accuracy, m.macro_precision,
                    static_cast<double>(masked) / total});
  }
  return rows;
}

RunReport cmd_pipeline(const ExperimentConfig& cfg) {
  RunReport report;
  auto timed = [&](const std::string& stage, auto&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    report.timings_sec.emplace_back(stage, seconds_since(t0));
  };
  timed("gen-data", [&]() { cmd_gen_data(cfg); });
  timed("pretrain", [&]() { cmd_pretrain(cfg); });
  timed("invert", [&]() { cmd_invert(cfg); });
  timed("merge", [&]() { cmd_merge(cfg); });
  RunReport eval_report;
  timed("eval", [&]() { eval_report = cmd_eval(cfg); });
  eval_report.timings_sec = report.timings_sec;
  write_report_files(cfg, eval_report);
  return eval_report;
}

std::string report_csv(const RunReport& report) {
  std::ostringstream os;
  os << "method,accuracy,macro_precision,note\n";
  for (const MethodRow& r : report.rows) {
    os << r.method << "," << (r.accuracy ? fmt_metric(r.accuracy) : "") << ","
       << (r.precision ? fmt_metric(r.precision) : "") << "," << r.note
       << "\n";
  }
  return os.str();
}

std::string report_text(const RunReport& report) {
  std::ostringstream os;
  os << "== target-domain results ==\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-14s %10s %10s  %s\n", "method", "acc",
                "precision", "note");
  os << buf;
  for (const MethodRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %10s %10s  %s\n", r.method.c_str(),
                  fmt_metric(r.accuracy).c_str(),
                  fmt_metric(r.precision).c_str(), r.note.c_str());
    os << buf;
  }
  if (!report.cross_error.entries.empty()) {
    os << "\n== cross-domain error matrix (1 - accuracy) ==\n";
    os << "expert \\ domain";
    for (const std::string& t : report.cross_error.domain_tags) os << "  " << t;
    os << "\n";
    for (std::size_t i = 0; i < report.cross_error.expert_tags.size(); ++i) {
      os << report.cross_error.expert_tags[i];
      for (std::size_t j = 0; j < report.cross_error.domain_tags.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "  %.4f",
                      report.cross_error.at(static_cast<int>(i),
                                            static_cast<int>(j)));
        os << buf;
      }
      os << "\n";
    }
  }
  if (!report.divergence.empty()) {
    os << "\n== pairwise divergence (lower-bound estimate) ==\n";
    std::size_t m = report.divergence_tags.size();
    for (std::size_t i = 0; i < m; ++i) {
      os << report.divergence_tags[i];
      for (std::size_t j = 0; j < m; ++j) {
        std::snprintf(buf, sizeof(buf), "  %.4f", report.divergence[i * m + j]);
        os << buf;
      }
      os << "\n";
    }
  }
  if (!report.mask_study.empty()) {
    os << "\n== mask position study ==\n";
    for (const MaskStudyRow& r : report.mask_study) {
      std::snprintf(buf, sizeof(buf),
                    "%-12s acc %.6f precision %.6f masked_fraction %.4f\n",
                    r.position.c_str(), r.accuracy, r.precision,
                    r.masked_fraction);
      os << buf;
    }
  }
  os << "\n== config ==\n" << report.config_echo;
  return os.str();
}

void write_report_files(const ExperimentConfig& cfg, const RunReport& report) {
  RunPaths paths(cfg);
  fs::create_directories(paths.out);
  std::ofstream(paths.report_csv_file()) << report_csv(report);
  std::ofstream(paths.report_text_file()) << report_text(report);
  std::ofstream(paths.config_echo_file()) << report.config_echo;
  if (!report.cross_error.entries.empty()) {
    std::ofstream ce(paths.cross_error_file());
    ce << "expert";
    for (const std::string& t : report.cross_error.domain_tags) ce << "," << t;
    ce << "\n";
    for (std::size_t i = 0; i < report.cross_error.expert_tags.size(); ++i) {
      ce << report.cross_error.expert_tags[i];
      for (std::size_t j = 0; j < report.cross_error.domain_tags.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f",
                      report.cross_error.at(static_cast<int>(i),
                                            static_cast<int>(j)));
        ce << "," << buf;
      }
      ce << "\n";
    }
  }
  if (!report.divergence.empty()) {
    std::ofstream dv(paths.divergence_file());
    dv << "expert";
    for (const std::string& t : report.divergence_tags) dv << "," << t;
    dv << "\n";
    std::size_t m = report.divergence_tags.size();
    for (std::size_t i = 0; i < m; ++i) {
      dv << report.divergence_tags[i];
      for (std::size_t j = 0; j < m; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", report.divergence[i * m + j]);
        dv << "," << buf;
      }
      dv << "\n";
    }
  }
  if (!report.mask_study.empty()) {
    std::ofstream ms(paths.mask_study_file());
    ms << "position,accuracy,macro_precision,masked_param_fraction\n";
    for (const MaskStudyRow& r : report.mask_study) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n",
                    r.position.c_str(), r.accuracy, r.precision,
                    r.masked_fraction);
      ms << buf;
    }
  }
  if (!report.timings_sec.empty()) {
    std::ofstream tm(paths.timings_file());
    for (const auto& [stage, sec] : report.timings_sec) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%-10s %.3f s\n", stage.c_str(), sec);
      tm << buf;
    }
  }
}

}  // namespace gmerge
