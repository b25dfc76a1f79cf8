#pragma once

#include <optional>
#include <string>
#include <vector>

#include "normpert/featstats.hpp"
#include "normpert/rng.hpp"
#include "normpert/tensor.hpp"

namespace normpert {

enum class NoiseFamily { gaussian, uniform, beta_scaled };

/// Distribution of the perturbation factors alpha and beta.
///   gaussian:    N(first, second^2)
///   uniform:     U(first, second)
///   beta_scaled: 2 * Beta(first, second), supported on [0, 2]
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::gaussian;
  double first = 1.0;
  double second = 0.75;

  static NoiseSpec gaussian(double mean, double stddev) { return {NoiseFamily::gaussian, mean, stddev}; }
  static NoiseSpec uniform(double lo, double hi) { return {NoiseFamily::uniform, lo, hi}; }
  static NoiseSpec beta_scaled(double a, double b) { return {NoiseFamily::beta_scaled, a, b}; }

  double mean() const;
  double stddev() const;
  std::string describe() const;

  /// Throws std::invalid_argument for malformed parameters, or when the
  /// distribution mean leaves [mean_lo, mean_hi]. Perturbation factors are
  /// expected to sit around one.
  void validate(double mean_lo = 0.9, double mean_hi = 1.1) const;
  double sample(Rng& rng) const;

  bool operator==(const NoiseSpec&) const = default;
};

/// How many independent factors a draw carries per feature map.
///   channel:    one (alpha, beta) per sample and channel, B x C
///   activation: one per element, B x C x H x W
///   spatial:    one per position shared over channels, B x 1 x H x W
enum class Granularity { channel, activation, spatial };

struct NoiseDraw {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t spatial = 1;  // H*W for activation/spatial draws, 1 otherwise
  Granularity granularity = Granularity::channel;
  std::vector<double> alpha;
  std::vector<double> beta;

  /// Constant (alpha, beta) for every sample and channel.
  static NoiseDraw constant(std::size_t batch, std::size_t channels, double alpha, double beta);
  /// Factor index for element (b, c, i) of the feature map.
  std::size_t index(std::size_t b, std::size_t c, std::size_t i) const;
};

enum class NpMode { np, np_plus };

struct NpSiteConfig {
  std::size_t stage = 1;  // applied to the output of this stage (1-based)
  double probability = 0.5;
  NpMode mode = NpMode::np;
  NoiseSpec noise;
  Granularity granularity = Granularity::channel;
  bool clamp_negative_alpha = false;
  bool per_sample_gate = false;

  void validate() const;
  bool operator==(const NpSiteConfig&) const = default;
};

/// Draws alpha and beta i.i.d. per sample and channel, independently of each
/// other. Values are not clamped.
NoiseDraw sample_noise(const NoiseSpec& spec, std::size_t batch, std::size_t channels, Rng& rng);
NoiseDraw sample_noise(const NoiseSpec& spec, std::size_t batch, std::size_t channels, std::size_t spatial,
                       Granularity granularity, Rng& rng);

/// y = alpha * x + (beta - alpha) * mu_c, differentiable in x (through mu_c
/// as well); alpha and beta are constants.
template <typename T>
Tensor<T> np_forward(const Tensor<T>& x, const NoiseDraw& draw);

/// y = (alpha * sigma_c) * (x - mu_c) / (sigma_c + eps) + beta * mu_c.
/// Not differentiable; used to cross-check np_forward.
template <typename T>
Tensor<T> np_reference(const Tensor<T>& x, const NoiseDraw& draw, double eps);

/// y = alpha * x + delta_c * (beta - alpha) * mu_c. delta is treated as a
/// constant. Requires a batch of at least 2.
template <typename T>
Tensor<T> np_plus_forward(const Tensor<T>& x, const NoiseDraw& draw, const StatVariance& delta);

/// Normalized variance of this mini-batch's channel means.
template <typename T>
StatVariance minibatch_delta(const Tensor<T>& x);

/// Training-time perturbation site. Identity when not training or when the
/// Bernoulli(p) gate comes up off; otherwise draws fresh noise and applies
/// np_forward or np_plus_forward. The gate is drawn from gate_rng and the
/// noise from noise_rng.
template <typename T>
Tensor<T> apply_site(const Tensor<T>& x, const NpSiteConfig& cfg, const std::optional<StatVariance>& batch_delta,
                     Rng& gate_rng, Rng& noise_rng, bool training);

template <typename T>
Tensor<T> apply_site(const Tensor<T>& x, const NpSiteConfig& cfg, const std::optional<StatVariance>& batch_delta,
                     Rng& rng, bool training) {
  return apply_site(x, cfg, batch_delta, rng, rng, training);
}

std::string to_string(NoiseFamily family);
std::string to_string(Granularity granularity);
std::string to_string(NpMode mode);
NoiseFamily noise_family_from_string(const std::string& s);
Granularity granularity_from_string(const std::string& s);
NpMode np_mode_from_string(const std::string& s);

}  // namespace normpert
