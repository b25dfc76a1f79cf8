#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "normpert/diagnostics.hpp"
#include "normpert/domains.hpp"
#include "normpert/featstats.hpp"
#include "normpert/perturb.hpp"
#include "normpert/toynet.hpp"

namespace normpert {

/// Malformed or inconsistent configuration. what() names the field path
/// (e.g. "training.learning_rate") or the line and column of a syntax error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSection {
  BenchmarkConfig benchmark;
  std::string dir = "data";  // relative paths resolve against output_dir
  bool regenerate = false;
  bool operator==(const DatasetSection&) const = default;
};

/// Sites carry no mode of their own here: `plus` switches every site to NP+.
struct NpSection {
  std::vector<NpSiteConfig> sites;
  bool plus = false;
  bool augment = false;
  bool operator==(const NpSection&) const = default;
};

struct DiagnosticsSection {
  KernelSpec kernel;
  Embedding embedding = Embedding::raw;
  std::vector<std::size_t> stages;  // empty means every stage
  std::size_t top_k = 3;
  std::size_t sensitivity_stage = 1;
  double transfer_fraction = 0.2;
  std::string sensitivity_target = "warm";
  std::string gap_target = "fog";
  SweepGrid sweep;
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};
  bool operator==(const DiagnosticsSection&) const = default;
};

struct ExperimentConfig {
  DatasetSection dataset;
  NetworkConfig network;  // np_sites come from the np section
  TrainConfig training;
  NpSection np;
  DiagnosticsSection diagnostics;
  std::string output_dir = "runs/default";

  /// Network with the np section's sites installed.
  NetworkConfig effective_network() const;
  /// Training config with the np section's augmentation flag applied.
  TrainConfig effective_training() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Strict: unknown keys and wrong types are errors; missing keys keep defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical serialization: sorted keys, two-space indent, trailing newline.
std::string dump_config(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over dump_config().
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace normpert
