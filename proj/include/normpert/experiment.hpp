#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "normpert/config.hpp"
#include "normpert/diagnostics.hpp"
#include "normpert/domains.hpp"
#include "normpert/toynet.hpp"

namespace normpert {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

/// Command-line overrides applied on top of a config file.
struct Overrides {
  std::optional<std::uint64_t> seed;  // training seed
  std::optional<fs::path> out;
  bool regen = false;
};

ExperimentConfig apply_overrides(ExperimentConfig cfg, const Overrides& o);

fs::path dataset_dir(const ExperimentConfig& cfg);
fs::path checkpoint_dir(const ExperimentConfig& cfg);

/// Loads the benchmark from the dataset directory, or generates and saves it
/// when missing, stale, or regeneration is requested.
Benchmark obtain_benchmark(const ExperimentConfig& cfg, const Logger& log = {});

template <typename T>
void save_checkpoint(const fs::path& dir, const ToyNet<T>& net, const ExperimentConfig& cfg, std::size_t epoch,
                     const std::vector<EpochMetrics>& metrics);

struct Checkpoint {
  ExperimentConfig config;
  std::size_t epoch = 0;
  nlohmann::json manifest;
};

/// Reads manifest.json; throws std::runtime_error if it is missing.
Checkpoint read_checkpoint_manifest(const fs::path& dir);
template <typename T>
ToyNet<T> load_checkpoint_weights(const fs::path& dir, const Checkpoint& ckpt);

/// Writes run.json: command, config hash, seeds, versions and a timestamp.
void write_run_record(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                      const nlohmann::json& extra = nlohmann::json::object());

std::string library_version();

struct TrainOutputs {
  fs::path checkpoint;
  fs::path metrics_csv;
  std::vector<EpochMetrics> epochs;
};

struct EvalRow {
  std::string domain;
  std::string split;
  std::size_t count = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

fs::path cmd_gen(const ExperimentConfig& cfg, const Logger& log = {});
TrainOutputs cmd_train(const ExperimentConfig& cfg, const Logger& log = {});
/// Source val plus every target; also written to eval.csv.
std::vector<EvalRow> cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const Logger& log = {});
/// Writes gap reports (source vs each target), the sensitivity report and
/// channel-subset transfer metrics. Returns the written files.
std::vector<fs::path> cmd_diagnose(const ExperimentConfig& cfg, const fs::path& checkpoint, const Logger& log = {});
SweepResult cmd_sweep(const ExperimentConfig& cfg, std::size_t jobs, const Logger& log = {});

nlohmann::json to_json(const GapReport& r);
nlohmann::json to_json(const SensitivityReport& r);
nlohmann::json to_json(const TransferMetrics& m);

void write_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& epochs);
void write_eval_csv(const fs::path& path, const std::vector<EvalRow>& rows);

}  // namespace normpert
