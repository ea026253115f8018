#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "gmerge/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file");
  auto* seed = cmd->add_option("--seed", "override the global seed");
  seed->each([&args](const std::string& v) { args.seed = std::stoull(v); });
  auto* out = cmd->add_option("--out", "override the output directory");
  out->each([&args](const std::string& v) { args.out = v; });
  cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

gmerge::ExperimentConfig resolve(const CommonArgs& args) {
  gmerge::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = gmerge::load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out_dir = *args.out;
  if (args.quiet) cfg.quiet = true;
  cfg.validate();
  return cfg;
}

void print_report(const gmerge::RunReport& report, bool quiet) {
  if (quiet) return;
  std::fputs(gmerge::report_text(report).c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphmerge: merge distribution-shifted GNN classifiers via "
               "data-free inversion and a sparse mixture of masked experts"};
  app.require_subcommand(1);

  CommonArgs gen_args, pre_args, inv_args, mrg_args, evl_args, pipe_args;
  CLI::App* gen = app.add_subcommand("gen-data", "write the domain datasets");
  add_common(gen, gen_args);
  CLI::App* pre =
      app.add_subcommand("pretrain", "train one expert per roster entry");
  add_common(pre, pre_args);
  CLI::App* inv = app.add_subcommand(
      "invert", "distill each expert into synthetic graphs");
  add_common(inv, inv_args);
  CLI::App* mrg = app.add_subcommand(
      "merge", "train the gated masked-expert model on the mixture");
  add_common(mrg, mrg_args);
  CLI::App* evl = app.add_subcommand(
      "eval", "evaluate experts, baselines and the merged model");
  add_common(evl, evl_args);
  CLI::App* pipe =
      app.add_subcommand("pipeline", "run every stage in sequence");
  add_common(pipe, pipe_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gmerge::cmd_gen_data(resolve(gen_args));
    } else if (pre->parsed()) {
      gmerge::cmd_pretrain(resolve(pre_args));
    } else if (inv->parsed()) {
      gmerge::cmd_invert(resolve(inv_args));
    } else if (mrg->parsed()) {
      gmerge::cmd_merge(resolve(mrg_args));
    } else if (evl->parsed()) {
      gmerge::ExperimentConfig cfg = resolve(evl_args);
      print_report(gmerge::cmd_eval(cfg), cfg.quiet);
    } else if (pipe->parsed()) {
      gmerge::ExperimentConfig cfg = resolve(pipe_args);
      print_report(gmerge::cmd_pipeline(cfg), cfg.quiet);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
