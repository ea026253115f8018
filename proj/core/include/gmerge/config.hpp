#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmerge/gnn.hpp"
#include "gmerge/moe.hpp"

namespace gmerge {

enum class DataSource { Synthetic, Tu };

struct DomainSpec {
  std::string tag;
  double edge_prob = 0.1;
  bool operator==(const DomainSpec&) const = default;
};

struct ExpertSpec {
  GnnKind kind = GnnKind::GCN;
  std::string domain;
  std::optional<std::uint64_t> seed;  // derived from the global seed if unset
  bool operator==(const ExpertSpec&) const = default;

  std::string name() const { return to_string(kind) + "-" + domain; }
};

/// Strictly-parsed key=value configuration with section headers. Every field
/// has a default; unknown sections or keys are errors; parse -> serialize ->
/// parse is the identity.
struct ExperimentConfig {
  // [dataset]
  DataSource source = DataSource::Synthetic;
  std::vector<DomainSpec> domains = {{"A", 0.10}, {"B", 0.30}};
  DomainSpec target = {"T", 0.45};
  int graphs_per_domain = 200;
  int data_nodes_min = 10;
  int data_nodes_max = 20;
  int feature_buckets = 8;
  std::string tu_dir;

  // [split] (TU source only)
  std::vector<double> split_fractions = {0.4, 0.4, 0.2};

  // [experts]
  std::vector<ExpertSpec> roster = {{GnnKind::GCN, "A", {}},
                                    {GnnKind::GIN, "A", {}},
                                    {GnnKind::GCN, "B", {}},
                                    {GnnKind::GIN, "B", {}}};
  int hidden_dim = 32;
  int pretrain_epochs = 60;
  int pretrain_batch = 32;
  double pretrain_lr = 1e-2;
  double pretrain_weight_decay = 1e-4;

  // [generation]
  int gen_count = 64;
  int gen_nodes_min = 10;
  int gen_nodes_max = 20;
  double gen_tau = 1.0;
  bool gen_anneal = false;
  double gen_tau_final = 0.5;
  int gen_epochs = 200;
  double gen_lr_inputs = 1e-1;
  double gen_lr_encoder = 1e-2;
  double gen_weight_decay = 1e-4;
  int gen_encoder_hidden = 64;
  bool gen_noise = true;
  bool gen_center_scores = true;

  // [merge]
  int merge_k = 2;
  double lambda_gate = 0.1;
  double lambda_mask = 0.1;
  double gamma_p = 0.9;
  double gamma_v = 0.1;
  int merge_epochs = 20;
  int merge_batch = 32;
  double merge_lr = 1e-2;
  double merge_weight_decay = 1e-4;
  MaskPosition mask_position = MaskPosition::Classifier;
  bool mask_study = false;

  // [eval]
  bool eval_inverse_x = true;
  bool eval_divergence = true;
  bool eval_cross_error = true;

  // [run]
  std::uint64_t seed = 42;
  std::string out_dir = "runs/exp";
  bool quiet = false;

  bool operator==(const ExperimentConfig&) const = default;

  /// All domain tags in order (sources then target).
  std::vector<std::string> all_domain_tags() const;
  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);
void save_config(const std::string& path, const ExperimentConfig& cfg);

}  // namespace gmerge
