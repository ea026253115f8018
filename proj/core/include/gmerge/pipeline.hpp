#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmerge/config.hpp"
#include "gmerge/diagnostics.hpp"

namespace gmerge {

struct MethodRow {
  std::string method;
  std::optional<double> accuracy;   // empty = not applicable
  std::optional<double> precision;
  std::string note;
};

struct MaskStudyRow {
  std::string position;
  double accuracy = 0.0;
  double precision = 0.0;
  double masked_fraction = 0.0;
};

/// Per-method target metrics, diagnostics, config echo and stage timings.
/// The CSV/text serializations are deterministic; wall-clock times go to a
/// separate timings file so identical reruns produce identical reports.
struct RunReport {
  std::vector<MethodRow> rows;
  CrossErrorMatrix cross_error;
  std::vector<std::string> divergence_tags;
  std::vector<double> divergence;  // row-major pairs matrix
  std::vector<MaskStudyRow> mask_study;
  std::string config_echo;
  std::vector<std::pair<std::string, double>> timings_sec;

  const MethodRow& row(const std::string& method) const;
};

/// Output-directory layout used by every command.
struct RunPaths {
  explicit RunPaths(const ExperimentConfig& cfg);
  std::string out;
  std::string data_file(const std::string& tag) const;
  std::string checkpoint_file(const std::string& expert_name) const;
  std::string synthetic_file(const std::string& expert_name) const;
  std::string mixture_file() const;
  std::string merged_file() const;
  std::string report_csv_file() const;
  std::string report_text_file() const;
  std::string cross_error_file() const;
  std::string divergence_file() const;
  std::string mask_study_file() const;
  std::string timings_file() const;
  std::string config_echo_file() const;
};

/// Unique expert names in roster order (duplicates get an ordinal suffix).
std::vector<std::string> expert_names(const ExperimentConfig& cfg);

/// Worker threads for the per-expert stages (GRAPHMERGE_THREADS, default 1).
int configured_threads();

void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_pretrain(const ExperimentConfig& cfg);
void cmd_invert(const ExperimentConfig& cfg);
void cmd_merge(const ExperimentConfig& cfg);
RunReport cmd_eval(const ExperimentConfig& cfg);
RunReport cmd_pipeline(const ExperimentConfig& cfg);

std::vector<MaskStudyRow> run_mask_position_study(const ExperimentConfig& cfg);

std::string report_csv(const RunReport& report);
std::string report_text(const RunReport& report);
void write_report_files(const ExperimentConfig& cfg, const RunReport& report);

}  // namespace gmerge
