#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "normpert/tensor.hpp"

namespace normpert {

/// Per-sample, per-channel spatial mean and population standard deviation.
/// mean and std are row-major B x C.
struct ChannelStats {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::vector<double> mean;
  std::vector<double> std;

  double mean_at(std::size_t b, std::size_t c) const { return mean[b * channels + c]; }
  double std_at(std::size_t b, std::size_t c) const { return std[b * channels + c]; }
};

/// Target statistics for AdaIN, estimated from style features.
using StyleStats = ChannelStats;

/// Cross-batch variance of channel means and its max-normalized form.
struct StatVariance {
  std::vector<double> delta_raw;      // per-channel variance of the batch means
  std::vector<double> mean_of_means;  // per-channel batch average of the means
  std::vector<double> delta;          // delta_raw / max(delta_raw), all zero if max is 0
};

enum class KernelFamily { linear, rbf };

struct KernelSpec {
  KernelFamily family = KernelFamily::rbf;
  std::optional<double> bandwidth;  // rbf only; median heuristic when empty

  std::string describe() const;
  bool operator==(const KernelSpec&) const = default;
};

/// How stats vectors are embedded before MMD.
enum class Embedding { raw, zscore };

template <typename T>
ChannelStats channel_mean_std(const Tensor<T>& x);
ChannelStats channel_mean_std(std::span<const double> x, std::size_t batch, std::size_t channels,
                              std::size_t spatial);

/// means: row-major B x C. Requires B >= 2.
StatVariance batch_stat_variance(std::span<const double> means, std::size_t batch, std::size_t channels);

/// y = style_std * (x - content_mean) / (content_std + eps) + style_mean on
/// masked channels; other channels are copied unchanged.
template <typename T>
Tensor<T> adain_transfer(const Tensor<T>& x, const ChannelStats& content, const StyleStats& style,
                         const std::vector<bool>& mask, double eps = 1e-5);

using Vectors = std::vector<std::vector<double>>;

/// One 2C vector per sample: the C means followed by the C stds.
Vectors stats_to_vectors(const ChannelStats& stats);

/// Standardizes every coordinate with the mean and std pooled over both
/// sets. Coordinates with zero spread are centered only.
void zscore_jointly(Vectors& xs, Vectors& ys);

/// Median of pairwise Euclidean distances over X u Y; 1.0 when all points coincide.
double median_heuristic_bandwidth(const Vectors& xs, const Vectors& ys);

/// Biased MMD^2 estimate: mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y).
/// RBF kernel is exp(-|a-b|^2 / (2 h^2)).
double mmd(const Vectors& xs, const Vectors& ys, const KernelSpec& kernel);

/// Bandwidth actually used by mmd() for these inputs.
double resolved_bandwidth(const Vectors& xs, const Vectors& ys, const KernelSpec& kernel);

std::string to_string(KernelFamily family);
std::string to_string(Embedding embedding);
KernelFamily kernel_family_from_string(const std::string& s);
Embedding embedding_from_string(const std::string& s);

}  // namespace normpert
