#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "normpert/rng.hpp"
#include "normpert/tensor.hpp"

namespace normpert {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr int kNumShapeClasses = 4;  // disk, square, triangle, cross

/// RGB image stored channel-major (3 x H x W), values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(kImageChannels * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::size_t plane() const { return height * width; }
};

/// Photometric style of a domain. Applied in a fixed order:
/// gamma, contrast about 0.5, per-channel gain and bias, fog blend toward
/// white, additive gaussian noise, clip to [0, 1].
struct StyleParams {
  std::array<double, 3> channel_gain{1.0, 1.0, 1.0};
  std::array<double, 3> channel_bias{0.0, 0.0, 0.0};
  double contrast = 1.0;
  double fog_strength = 0.0;
  double noise_std = 0.0;
  double gamma = 1.0;

  static StyleParams identity() { return {}; }
  /// All-zero half-widths, i.e. no jitter.
  static StyleParams zero() { return {{0, 0, 0}, {0, 0, 0}, 0, 0, 0, 0}; }
  void validate() const;
  bool operator==(const StyleParams&) const = default;
};

struct DomainSpec {
  std::string name;
  StyleParams style;
  StyleParams jitter = StyleParams::zero();  // per-field half-widths of uniform jitter

  /// Style for one image: every field drawn uniformly within style +- jitter,
  /// then pulled back into its valid range.
  StyleParams sample_style(Rng& rng) const;
};

DomainSpec source_domain();
DomainSpec fog_domain();
DomainSpec night_domain();
DomainSpec warm_domain();
std::vector<DomainSpec> target_domains();
std::vector<std::string> target_domain_names();

struct Canvas {
  Image image;
  int label = 0;
};

struct LabeledImage {
  Image pixels;
  int label = 0;
  std::string domain;
};

/// n content canvases, one shape each on a textured background. Labels are
/// assigned round-robin, so classes are balanced. Image i depends only on
/// (seed, i).
std::vector<Canvas> generate_content(std::size_t n, std::uint64_t seed, std::size_t size = 32);

Image apply_style(const Image& image, const StyleParams& params, Rng& rng);

/// Which augmentation transforms fire; drawn with probability 0.5 each
/// unless forced.
struct AugmentGates {
  bool color_jitter = false;
  bool grayscale = false;
  bool blur = false;
  bool solarize = false;
};

Image photometric_augment(const Image& image, Rng& rng, const std::optional<AugmentGates>& forced = std::nullopt);

/// Images of one domain and split, stored contiguously as N x 3 x H x W.
struct Dataset {
  std::string domain;
  std::string split;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::vector<std::size_t> content_ids;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return kImageChannels * height * width; }
  std::span<const float> image_span(std::size_t i) const;
  Image image(std::size_t i) const;
  void push_back(const Image& image, int label, std::size_t content_id);

  /// Batch tensor for the given indices.
  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  double mean_brightness() const;
};

struct BenchmarkConfig {
  std::uint64_t seed = 7;
  std::size_t train_size = 2000;
  std::size_t val_size = 400;
  std::size_t image_size = 32;
  bool operator==(const BenchmarkConfig&) const = default;
};

/// Single-source benchmark. Targets are rendered from the same content as
/// source_val, so targets[k] image i and source_val image i share a canvas.
struct Benchmark {
  BenchmarkConfig config;
  Dataset source_train;
  Dataset source_val;
  std::vector<Dataset> targets;  // fog, night, warm

  const Dataset& target(const std::string& name) const;
};

Benchmark make_benchmark(const BenchmarkConfig& config);

/// Directory layout: index.json plus one <domain>_<split>.tsr blob per dataset.
void save_benchmark(const Benchmark& bench, const std::filesystem::path& dir);
Benchmark load_benchmark(const std::filesystem::path& dir);

}  // namespace normpert
