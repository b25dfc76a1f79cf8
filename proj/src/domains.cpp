#include "normpert/domains.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "normpert/tsr_io.hpp"

namespace normpert {
namespace {

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

bool inside_shape(int label, double dx, double dy, double r) {
  switch (label) {
    case 0:  // disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::max(std::abs(dx), std::abs(dy)) <= 0.8 * r;
    case 2: {  // triangle, apex up
      const double h = 0.8 * r;
      if (dy < -h || dy > h) return false;
      return std::abs(dx) <= r * (dy + h) / (2.0 * h);
    }
    default:  // cross
      return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
  }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0 + (b - r) / d;
  } else {
    h = 4.0 + (r - g) / d;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = 6.0 * (h - std::floor(h));
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

StyleParams clamp_style(StyleParams p) {
  for (auto& g : p.channel_gain) g = std::max(g, 0.01);
  p.contrast = std::max(p.contrast, 0.01);
  p.fog_strength = std::clamp(p.fog_strength, 0.0, 1.0);
  p.noise_std = std::max(p.noise_std, 0.0);
  p.gamma = std::max(p.gamma, 0.05);
  return p;
}

StyleParams mild_jitter() {
  StyleParams j = StyleParams::zero();
  j.channel_gain = {0.05, 0.05, 0.05};
  j.channel_bias = {0.03, 0.03, 0.03};
  j.contrast = 0.05;
  j.gamma = 0.05;
  j.noise_std = 0.01;
  return j;
}

}  // namespace

void StyleParams::validate() const {
  for (double g : channel_gain) {
    if (!(g > 0.0)) throw std::invalid_argument("style: channel gains must be > 0");
  }
  if (!(contrast > 0.0)) throw std::invalid_argument("style: contrast must be > 0");
  if (!(fog_strength >= 0.0 && fog_strength <= 1.0)) throw std::invalid_argument("style: fog strength must be in [0, 1]");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("style: noise std must be >= 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("style: gamma must be > 0");
}

StyleParams DomainSpec::sample_style(Rng& rng) const {
  auto jit = [&rng](double center, double half) { return center + half * (2.0 * rng.uniform() - 1.0); };
  StyleParams p;
  for (std::size_t c = 0; c < 3; ++c) p.channel_gain[c] = jit(style.channel_gain[c], jitter.channel_gain[c]);
  for (std::size_t c = 0; c < 3; ++c) p.channel_bias[c] = jit(style.channel_bias[c], jitter.channel_bias[c]);
  p.contrast = jit(style.contrast, jitter.contrast);
  p.fog_strength = jit(style.fog_strength, jitter.fog_strength);
  p.noise_std = jit(style.noise_std, jitter.noise_std);
  p.gamma = jit(style.gamma, jitter.gamma);
  return clamp_style(p);
}

DomainSpec source_domain() {
  StyleParams s;
  s.noise_std = 0.01;
  return {"source", s, mild_jitter()};
}

DomainSpec fog_domain() {
  StyleParams s;
  s.fog_strength = 0.5;
  s.noise_std = 0.01;
  auto j = mild_jitter();
  j.fog_strength = 0.05;
  return {"fog", s, j};
}

DomainSpec night_domain() {
  StyleParams s;
  s.channel_gain = {0.3, 0.3, 0.45};
  s.gamma = 1.8;
  s.noise_std = 0.01;
  auto j = mild_jitter();
  j.channel_gain = {0.03, 0.03, 0.03};
  j.channel_bias = {0.01, 0.01, 0.01};
  return {"night", s, j};
}

DomainSpec warm_domain() {
  StyleParams s;
  s.channel_gain = {1.3, 1.0, 0.7};
  s.noise_std = 0.01;
  return {"warm", s, mild_jitter()};
}

std::vector<DomainSpec> target_domains() { return {fog_domain(), night_domain(), warm_domain()}; }

std::vector<std::string> target_domain_names() {
  std::vector<std::string> names;
  for (const auto& d : target_domains()) names.push_back(d.name);
  return names;
}

std::vector<Canvas> generate_content(std::size_t n, std::uint64_t seed, std::size_t size) {
  if (n < 1) throw std::invalid_argument("generate_content: n must be >= 1");
  if (size < 8) throw std::invalid_argument("generate_content: image size must be >= 8");
  const Rng root(seed);
  const double scale = static_cast<double>(size) / 32.0;
  std::vector<Canvas> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = root.fork(static_cast<std::uint64_t>(i));
    Canvas canvas{Image(size, size), static_cast<int>(i % kNumShapeClasses)};

    // background: gray level with a tint, a low-frequency wave and grain
    const double level = r.uniform(0.3, 0.7);
    std::array<double, 3> bg;
    for (auto& v : bg) v = level + r.uniform(-0.08, 0.08);
    const double amp = r.uniform(0.02, 0.08);
    const double fx = r.uniform(0.1, 0.5), fy = r.uniform(0.1, 0.5);
    const double phase = r.uniform(0.0, 2.0 * std::numbers::pi);

    std::array<double, 3> fg{};
    for (int attempt = 0; attempt < 32; ++attempt) {
      for (auto& v : fg) v = r.uniform();
      if (std::abs(luma(fg[0], fg[1], fg[2]) - luma(bg[0], bg[1], bg[2])) >= 0.2) break;
    }
    const double cx = r.uniform(11.0, 21.0) * scale, cy = r.uniform(11.0, 21.0) * scale;
    const double radius = r.uniform(6.0, 10.0) * scale;

    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const bool on = inside_shape(canvas.label, px - cx, py - cy, radius);
        const double wave = amp * std::sin(fx * px + fy * py + phase);
        for (std::size_t c = 0; c < 3; ++c) {
          const double grain = r.normal(0.0, 0.02);
          const double v = on ? fg[c] + grain : bg[c] + wave + grain;
          canvas.image.at(c, y, x) = clip01(v);
        }
      }
    }
    out.push_back(std::move(canvas));
  }
  return out;
}

Image apply_style(const Image& image, const StyleParams& params, Rng& rng) {
  params.validate();
  Image out = image;
  const std::size_t plane = image.plane();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      double v = image.pixels[c * plane + i];
      if (params.gamma != 1.0) v = std::pow(std::max(v, 0.0), params.gamma);
      if (params.contrast != 1.0) v = (v - 0.5) * params.contrast + 0.5;
      if (params.channel_gain[c] != 1.0) v *= params.channel_gain[c];
      if (params.channel_bias[c] != 0.0) v += params.channel_bias[c];
      if (params.fog_strength != 0.0) v = (1.0 - params.fog_strength) * v + params.fog_strength;
      if (params.noise_std > 0.0) v += rng.normal(0.0, params.noise_std);
      out.pixels[c * plane + i] = clip01(v);
    }
  }
  return out;
}

Image photometric_augment(const Image& image, Rng& rng, const std::optional<AugmentGates>& forced) {
  AugmentGates gates;
  if (forced) {
    gates = *forced;
  } else {
    gates.color_jitter = rng.bernoulli(0.5);
    gates.grayscale = rng.bernoulli(0.5);
    gates.blur = rng.bernoulli(0.5);
    gates.solarize = rng.bernoulli(0.5);
  }
  Image out = image;
  const std::size_t plane = image.plane();
  float* R = out.pixels.data();
  float* G = R + plane;
  float* B = G + plane;

  if (gates.color_jitter) {
    const double brightness = rng.uniform(0.6, 1.4);
    const double contrast = rng.uniform(0.6, 1.4);
    const double saturation = rng.uniform(0.6, 1.4);
    const double hue = rng.uniform(-0.1, 0.1);
    for (auto& v : out.pixels) v = clip01(v * brightness);
    double mean_luma = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean_luma += luma(R[i], G[i], B[i]);
    mean_luma /= static_cast<double>(plane);
    for (auto& v : out.pixels) v = clip01((v - mean_luma) * contrast + mean_luma);
    for (std::size_t i = 0; i < plane; ++i) {
      const double l = luma(R[i], G[i], B[i]);
      R[i] = clip01(l + (R[i] - l) * saturation);
      G[i] = clip01(l + (G[i] - l) * saturation);
      B[i] = clip01(l + (B[i] - l) * saturation);
    }
    for (std::size_t i = 0; i < plane; ++i) {
      double h, s, v, r, g, b;
      rgb_to_hsv(R[i], G[i], B[i], h, s, v);
      hsv_to_rgb(h + hue, s, v, r, g, b);
      R[i] = clip01(r);
      G[i] = clip01(g);
      B[i] = clip01(b);
    }
  }
  if (gates.grayscale) {
    for (std::size_t i = 0; i < plane; ++i) {
      const float l = clip01(luma(R[i], G[i], B[i]));
      R[i] = G[i] = B[i] = l;
    }
  }
  if (gates.blur) {
    const double sigma = rng.uniform(0.1, 1.0);
    double k[3][3];
    double total = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        k[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        total += k[dy + 1][dx + 1];
      }
    }
    const Image src = out;
    const auto H = static_cast<std::ptrdiff_t>(image.height), W = static_cast<std::ptrdiff_t>(image.width);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const auto yy = std::clamp<std::ptrdiff_t>(y + dy, 0, H - 1);
              const auto xx = std::clamp<std::ptrdiff_t>(x + dx, 0, W - 1);
              acc += k[dy + 1][dx + 1] * src.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
          }
          out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = clip01(acc / total);
        }
      }
    }
  }
  if (gates.solarize) {
    for (auto& v : out.pixels) {
      if (v > 0.5f) v = 1.0f - v;
    }
  }
  return out;
}

std::span<const float> Dataset::image_span(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("dataset index out of range");
  return std::span<const float>(pixels).subspan(i * image_numel(), image_numel());
}

Image Dataset::image(std::size_t i) const {
  Image img(height, width);
  auto src = image_span(i);
  std::copy(src.begin(), src.end(), img.pixels.begin());
  return img;
}

void Dataset::push_back(const Image& image, int label, std::size_t content_id) {
  if (image.height != height || image.width != width) throw std::invalid_argument("dataset: image size mismatch");
  pixels.insert(pixels.end(), image.pixels.begin(), image.pixels.end());
  labels.push_back(label);
  content_ids.push_back(content_id);
}

template <typename T>
Tensor<T> Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("dataset: empty batch");
  std::vector<T> data;
  data.reserve(indices.size() * image_numel());
  for (auto i : indices) {
    auto src = image_span(i);
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor<T>({indices.size(), kImageChannels, height, width}, std::move(data));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

double Dataset::mean_brightness() const {
  if (pixels.empty()) return 0.0;
  double acc = 0.0;
  for (float v : pixels) acc += v;
  return acc / static_cast<double>(pixels.size());
}

template Tensor<float> Dataset::batch(std::span<const std::size_t>) const;
template Tensor<double> Dataset::batch(std::span<const std::size_t>) const;

const Dataset& Benchmark::target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.domain == name) return t;
  }
  throw std::out_of_range("benchmark has no target domain '" + name + "'");
}

namespace {

Dataset render(const std::vector<Canvas>& content, const DomainSpec& domain, const std::string& split,
               const Rng& style_root, std::size_t size) {
  Dataset ds;
  ds.domain = domain.name;
  ds.split = split;
  ds.height = ds.width = size;
  const Rng stream = style_root.fork(domain.name + "/" + split);
  for (std::size_t i = 0; i < content.size(); ++i) {
    Rng r = stream.fork(static_cast<std::uint64_t>(i));
    const StyleParams style = domain.sample_style(r);
    ds.push_back(apply_style(content[i].image, style, r), content[i].label, i);
  }
  return ds;
}

}  // namespace

Benchmark make_benchmark(const BenchmarkConfig& config) {
  if (config.train_size < 1 || config.val_size < 1) throw std::invalid_argument("benchmark: sizes must be >= 1");
  const Rng root(config.seed);
  const auto train_content = generate_content(config.train_size, root.fork("content/train").seed(), config.image_size);
  const auto val_content = generate_content(config.val_size, root.fork("content/val").seed(), config.image_size);
  const Rng style_root = root.fork("style");
  Benchmark bench;
  bench.config = config;
  const auto source = source_domain();
  bench.source_train = render(train_content, source, "train", style_root, config.image_size);
  bench.source_val = render(val_content, source, "val", style_root, config.image_size);
  for (const auto& domain : target_domains()) {
    bench.targets.push_back(render(val_content, domain, "val", style_root, config.image_size));
  }
  return bench;
}

void save_benchmark(const Benchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["seed"] = bench.config.seed;
  index["train_size"] = bench.config.train_size;
  index["val_size"] = bench.config.val_size;
  index["image_size"] = bench.config.image_size;
  index["datasets"] = nlohmann::json::array();
  auto emit = [&](const Dataset& ds) {
    const std::string file = ds.domain + "_" + ds.split + ".tsr";
    write_tsr<float>(dir / file, {ds.size(), kImageChannels, ds.height, ds.width}, ds.pixels);
    index["datasets"].push_back({{"domain", ds.domain},
                                 {"split", ds.split},
                                 {"file", file},
                                 {"labels", ds.labels},
                                 {"content_ids", ds.content_ids}});
  };
  emit(bench.source_train);
  emit(bench.source_val);
  for (const auto& t : bench.targets) emit(t);
  std::ofstream os(dir / "index.json");
  os << index.dump(1) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "index.json").string());
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  if (!is) throw std::runtime_error("no dataset index at " + (dir / "index.json").string());
  const auto index = nlohmann::json::parse(is);
  Benchmark bench;
  bench.config.seed = index.at("seed").get<std::uint64_t>();
  bench.config.train_size = index.at("train_size").get<std::size_t>();
  bench.config.val_size = index.at("val_size").get<std::size_t>();
  bench.config.image_size = index.at("image_size").get<std::size_t>();
  for (const auto& entry : index.at("datasets")) {
    Dataset ds;
    ds.domain = entry.at("domain").get<std::string>();
    ds.split = entry.at("split").get<std::string>();
    ds.labels = entry.at("labels").get<std::vector<int>>();
    ds.content_ids = entry.at("content_ids").get<std::vector<std::size_t>>();
    const auto blob = read_tsr_blob(dir / entry.at("file").get<std::string>());
    if (blob.shape.size() != 4 || blob.shape[0] != ds.labels.size() || blob.shape[1] != kImageChannels) {
      throw std::runtime_error("dataset blob " + entry.at("file").get<std::string>() + " has unexpected shape");
    }
    ds.height = blob.shape[2];
    ds.width = blob.shape[3];
    ds.pixels.assign(blob.values.begin(), blob.values.end());
    if (ds.domain == "source" && ds.split == "train") {
      bench.source_train = std::move(ds);
    } else if (ds.domain == "source") {
      bench.source_val = std::move(ds);
    } else {
      bench.targets.push_back(std::move(ds));
    }
  }
  return bench;
}

}  // namespace normpert
