#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "normpert/domains.hpp"
#include "normpert/featstats.hpp"
#include "normpert/perturb.hpp"
#include "normpert/toynet.hpp"

namespace normpert {

/// Sample average of the per-channel means and stds of one feature set.
struct StatsSummary {
  std::vector<double> mean;
  std::vector<double> std;
};

StatsSummary summarize(const ChannelStats& stats);

struct StageGap {
  std::size_t stage = 0;  // 1-based
  double mmd = 0.0;
  double accumulated = 0.0;  // running sum of mmd over stages 1..stage
  double bandwidth = 0.0;    // 0 for the linear kernel
  StatsSummary a;
  StatsSummary b;
};

struct GapReport {
  std::string model_id;
  std::string dataset_a;
  std::string dataset_b;
  KernelSpec kernel;
  Embedding embedding = Embedding::raw;
  std::vector<StageGap> stages;

  double final_mmd() const { return stages.empty() ? 0.0 : stages.back().mmd; }
};

/// Per-stage MMD between the channel-statistics embeddings of two datasets,
/// using clean stage features in evaluation mode.
template <typename T>
GapReport stage_gap(const ToyNet<T>& net, const Dataset& a, const Dataset& b, const KernelSpec& kernel,
                    Embedding embedding = Embedding::raw, const std::string& model_id = "");

/// Same, from already extracted per-stage features (N x C x H x W each).
template <typename T>
GapReport stage_gap_from_features(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                                  const KernelSpec& kernel, Embedding embedding = Embedding::raw);

struct SensitivityReport {
  std::size_t stage = 0;
  StatVariance delta;            // over the concatenation of both styles
  std::vector<double> between;   // per-channel variance explained by the style change
  std::vector<double> within;    // per-channel variance across content
  std::vector<std::size_t> ranking;  // all channels, delta descending, ties by index
  std::vector<std::size_t> top_k;
  double signal_ratio = 0.0;     // max(between) / max(within)
  bool style_signal = false;     // signal_ratio >= kStyleSignalRatio

  static constexpr double kStyleSignalRatio = 2.0;
};

/// a and b are N x C x H x W features of the same N contents under two
/// styles. between + within equals delta_raw channel by channel.
template <typename T>
SensitivityReport sensitivity_from_features(const Tensor<T>& a, const Tensor<T>& b, std::size_t top_k,
                                            std::size_t stage = 0);

/// Datasets must be content-aligned (same content_ids in the same order).
template <typename T>
SensitivityReport sensitivity_ranking(const ToyNet<T>& net, const Dataset& a, const Dataset& b, std::size_t stage,
                                      std::size_t top_k);

void require_paired(const Dataset& a, const Dataset& b);

enum class ChannelDirection { most_sensitive, least_sensitive };

struct TransferMetrics {
  double fraction = 0.0;
  ChannelDirection direction = ChannelDirection::most_sensitive;
  std::vector<std::size_t> channels;  // channels that received the style statistics
  double style_match_mmd = 0.0;       // transferred vs style, all channels
  double baseline_mmd = 0.0;          // untouched content vs style
  double bandwidth = 0.0;             // rbf bandwidth shared by both MMDs, from the untouched pair
  double content_retention = 0.0;     // mean within-channel spatial Spearman correlation
};

/// Channel count selected for a fraction of C channels (rounded to nearest).
std::size_t subset_size(double fraction, std::size_t channels);

/// AdaIN restricted to the fraction of channels ranked most (or least)
/// sensitive by delta over the content/style concatenation.
template <typename T>
TransferMetrics channel_subset_transfer(const Tensor<T>& content, const Tensor<T>& style, double fraction,
                                        ChannelDirection direction, const KernelSpec& kernel);

/// Features of a stage of net, then channel_subset_transfer.
template <typename T>
TransferMetrics channel_subset_transfer(const ToyNet<T>& net, const Dataset& content, const Dataset& style,
                                        std::size_t stage, double fraction, ChannelDirection direction,
                                        const KernelSpec& kernel);

/// Spearman correlation with average ranks for ties. Constant inputs give 1
/// when both are constant and 0 otherwise.
double spearman(std::span<const double> x, std::span<const double> y);

std::string to_string(ChannelDirection d);
ChannelDirection direction_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
  std::string group;  // "p", "noise", "placement", "mode", "granularity", "augment"
  std::string label;
  std::vector<NpSiteConfig> sites;
  bool augment = false;

  /// Canonical text of the training-relevant fields; equal keys train equal models.
  std::string key() const;
};

struct SweepGrid {
  std::vector<double> p_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<NoiseSpec> noises;
  std::vector<std::vector<std::size_t>> placements{{1, 2}, {1}, {2}, {3}};
  std::vector<NpMode> modes{NpMode::np, NpMode::np_plus};
  std::vector<Granularity> granularities{Granularity::channel, Granularity::activation, Granularity::spatial};
  bool augment_ablation = true;
  NpSiteConfig reference;  // defaults every cell starts from
  std::vector<std::size_t> reference_stages{1, 2};

  bool operator==(const SweepGrid&) const = default;
};

struct SweepSpec {
  NetworkConfig network;
  TrainConfig training;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<SweepCell> cells;
  KernelSpec kernel;
  Embedding embedding = Embedding::raw;
  std::size_t jobs = 1;
};

/// Expands a grid into cells. Invalid combinations are kept; run_sweep skips
/// them with a reason.
std::vector<SweepCell> expand_grid(const SweepGrid& grid);

struct SweepRow {
  std::string group;
  std::string label;
  std::string key;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string reason;
  double source_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> target_accuracy;
  double final_stage_mmd = 0.0;  // source val vs fog target

  double mean_target_accuracy() const;
  double target(const std::string& domain) const;
};

struct SweepSummaryRow {
  std::string group;
  std::string label;
  std::size_t seeds = 0;
  double source_mean = 0.0, source_min = 0.0, source_max = 0.0;
  std::vector<std::string> targets;
  std::vector<double> target_mean, target_min, target_max;
  double mean_target = 0.0;
  double final_stage_mmd = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // one per (cell, seed), cells in spec order
  std::vector<SweepSummaryRow> summary;

  const SweepSummaryRow* find(const std::string& group, const std::string& label) const;
};

using SweepLog = std::function<void(const std::string&)>;

/// Trains one model per cell and seed. Cells with the same key share one
/// trained model per seed. jobs > 1 trains distinct models on worker threads;
/// results do not depend on the job count.
SweepResult run_sweep(const SweepSpec& spec, const Benchmark& bench, const SweepLog& log = {});

std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows);

void write_sweep_csv(const SweepResult& result, std::ostream& os);
void write_sweep_summary_csv(const SweepResult& result, std::ostream& os);

}  // namespace normpert
