#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "normpert/experiment.hpp"

using namespace normpert;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalization perturbation experiments on a synthetic domain-shift benchmark", "normpert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", library_version());

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool regen = false;
  std::string checkpoint;
  std::size_t jobs = 1;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "training seed, overrides the config");
    cmd->add_option("--out", out, "output directory, overrides the config");
    cmd->add_flag("--regen", regen, "regenerate the benchmark even if it exists");
  };
  auto* gen = app.add_subcommand("gen", "generate the synthetic benchmark");
  auto* tr = app.add_subcommand("train", "train a model on the source domain");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on source and target domains");
  auto* dg = app.add_subcommand("diagnose", "domain-gap, sensitivity and channel-transfer reports");
  auto* sw = app.add_subcommand("sweep", "ablation sweep over NP settings and seeds");
  for (auto* cmd : {gen, tr, ev, dg, sw}) common(cmd);
  for (auto* cmd : {ev, dg}) {
    cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default: <out>/checkpoint)");
  }
  sw->add_option("--jobs", jobs, "models trained concurrently")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    Overrides o;
    o.seed = seed;
    if (!out.empty()) o.out = out;
    o.regen = regen;
    const ExperimentConfig cfg = apply_overrides(load_config(config_path), o);
    const fs::path ckpt = checkpoint.empty() ? checkpoint_dir(cfg) : fs::path(checkpoint);

    if (gen->parsed()) {
      std::cout << cmd_gen(cfg, log_line).string() << "\n";
    } else if (tr->parsed()) {
      const auto res = cmd_train(cfg, log_line);
      std::cout << "checkpoint " << res.checkpoint.string() << "\nmetrics " << res.metrics_csv.string() << "\n";
    } else if (ev->parsed()) {
      const auto rows = cmd_eval(cfg, ckpt, log_line);
      std::cout << "domain     split  count  loss      accuracy\n";
      for (const auto& r : rows) {
        std::printf("%-10s %-6s %-6zu %-9.4f %.4f\n", r.domain.c_str(), r.split.c_str(), r.count, r.loss, r.accuracy);
      }
    } else if (dg->parsed()) {
      for (const auto& p : cmd_diagnose(cfg, ckpt, log_line)) std::cout << p.string() << "\n";
    } else if (sw->parsed()) {
      const auto res = cmd_sweep(cfg, jobs, log_line);
      std::printf("%-12s %-28s %-8s %-8s\n", "group", "label", "source", "targets");
      for (const auto& s : res.summary) {
        std::printf("%-12s %-28s %-8.4f %-8.4f\n", s.group.c_str(), s.label.c_str(), s.source_mean, s.mean_target);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
