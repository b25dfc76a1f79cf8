#include "normpert/perturb.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace normpert {

double NoiseSpec::mean() const {
  switch (family) {
    case NoiseFamily::gaussian: return first;
    case NoiseFamily::uniform: return 0.5 * (first + second);
    case NoiseFamily::beta_scaled: return 2.0 * first / (first + second);
  }
  return 0.0;
}

double NoiseSpec::stddev() const {
  switch (family) {
    case NoiseFamily::gaussian: return second;
    case NoiseFamily::uniform: return (second - first) / std::sqrt(12.0);
    case NoiseFamily::beta_scaled: {
      const double s = first + second;
      return 2.0 * std::sqrt(first * second / (s * s * (s + 1.0)));
    }
  }
  return 0.0;
}

std::string NoiseSpec::describe() const {
  std::ostringstream os;
  switch (family) {
    case NoiseFamily::gaussian: os << "G(" << first << ", " << second << ")"; break;
    case NoiseFamily::uniform: os << "U(" << first << ", " << second << ")"; break;
    case NoiseFamily::beta_scaled: os << "2*B(" << first << ", " << second << ")"; break;
  }
  return os.str();
}

void NoiseSpec::validate(double mean_lo, double mean_hi) const {
  switch (family) {
    case NoiseFamily::gaussian:
      if (!(second >= 0.0)) throw std::invalid_argument("gaussian noise: std must be >= 0, got " + std::to_string(second));
      break;
    case NoiseFamily::uniform:
      if (!(first <= second)) throw std::invalid_argument("uniform noise: requires lo <= hi");
      break;
    case NoiseFamily::beta_scaled:
      if (!(first > 0.0 && second > 0.0)) throw std::invalid_argument("beta noise: shape parameters must be > 0");
      break;
  }
  const double m = mean();
  if (m < mean_lo || m > mean_hi) {
    std::ostringstream os;
    os << "noise " << describe() << " has mean " << m << " outside [" << mean_lo << ", " << mean_hi << "]";
    throw std::invalid_argument(os.str());
  }
}

double NoiseSpec::sample(Rng& rng) const {
  switch (family) {
    case NoiseFamily::gaussian: return rng.normal(first, second);
    case NoiseFamily::uniform: return rng.uniform(first, second);
    case NoiseFamily::beta_scaled: return 2.0 * rng.beta(first, second);
  }
  return 1.0;
}

NoiseDraw NoiseDraw::constant(std::size_t batch, std::size_t channels, double alpha, double beta) {
  return {batch, channels, 1, Granularity::channel, std::vector<double>(batch * channels, alpha),
          std::vector<double>(batch * channels, beta)};
}

std::size_t NoiseDraw::index(std::size_t b, std::size_t c, std::size_t i) const {
  switch (granularity) {
    case Granularity::channel: return b * channels + c;
    case Granularity::activation: return (b * channels + c) * spatial + i;
    case Granularity::spatial: return b * spatial + i;
  }
  return 0;
}

void NpSiteConfig::validate() const {
  if (stage < 1) throw std::invalid_argument("NP site stage must be >= 1");
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("NP site probability must lie in [0, 1], got " + std::to_string(probability));
  }
  if (mode == NpMode::np_plus && granularity != Granularity::channel) {
    throw std::invalid_argument("np_plus is defined for channel-level noise only");
  }
  noise.validate();
}

NoiseDraw sample_noise(const NoiseSpec& spec, std::size_t batch, std::size_t channels, std::size_t spatial,
                       Granularity granularity, Rng& rng) {
  if (batch < 1 || channels < 1 || spatial < 1) throw std::invalid_argument("sample_noise: extents must be >= 1");
  spec.validate(-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  NoiseDraw d;
  d.batch = batch;
  d.channels = channels;
  d.granularity = granularity;
  d.spatial = granularity == Granularity::channel ? 1 : spatial;
  std::size_t n = 0;
  switch (granularity) {
    case Granularity::channel: n = batch * channels; break;
    case Granularity::activation: n = batch * channels * spatial; break;
    case Granularity::spatial: n = batch * spatial; break;
  }
  d.alpha.resize(n);
  d.beta.resize(n);
  for (auto& a : d.alpha) a = spec.sample(rng);
  for (auto& b : d.beta) b = spec.sample(rng);
  return d;
}

NoiseDraw sample_noise(const NoiseSpec& spec, std::size_t batch, std::size_t channels, Rng& rng) {
  return sample_noise(spec, batch, channels, 1, Granularity::channel, rng);
}

namespace {

void check_draw(const Shape& s, const NoiseDraw& d, const char* op) {
  if (s.size() != 4) throw std::invalid_argument(std::string(op) + ": expected B x C x H x W, got " + shape_str(s));
  const bool spatial_ok = d.granularity == Granularity::channel || d.spatial == s[2] * s[3];
  std::size_t expected = 0;
  switch (d.granularity) {
    case Granularity::channel: expected = d.batch * d.channels; break;
    case Granularity::activation: expected = d.batch * d.channels * d.spatial; break;
    case Granularity::spatial: expected = d.batch * d.spatial; break;
  }
  if (d.batch != s[0] || d.channels != s[1] || !spatial_ok || d.alpha.size() != expected ||
      d.beta.size() != expected) {
    throw std::invalid_argument(std::string(op) + ": noise draw does not match feature map " + shape_str(s));
  }
}

std::vector<double> spatial_means(std::span<const double> x, std::size_t planes, std::size_t hw) {
  std::vector<double> mu(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    mu[p] = acc / static_cast<double>(hw);
  }
  return mu;
}

// y = alpha * x + shift_weight[c] * (beta - alpha) * mu_c
template <typename T>
Tensor<T> perturb_impl(const Tensor<T>& x, const NoiseDraw& draw, std::vector<double> shift_weight) {
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> xd(x.data().begin(), x.data().end());
  const auto mu = spatial_means(xd, B * C, HW);
  std::vector<T> out(xd.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t p = b * C + c;
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t k = draw.index(b, c, i);
        const double a = draw.alpha[k];
        out[p * HW + i] = static_cast<T>(a * xd[p * HW + i] + shift_weight[c] * (draw.beta[k] - a) * mu[p]);
      }
    }
  }
  auto shared_draw = std::make_shared<const NoiseDraw>(draw);
  auto weights = std::make_shared<const std::vector<double>>(std::move(shift_weight));
  return make_result<T>(x.shape(), std::move(out), {x}, [shared_draw, weights, B, C, HW](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    const auto& d = *shared_draw;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t p = b * C + c;
        const T* g = self.grad.data() + p * HW;
        // mu_c = mean(x) feeds every output of the channel
        double shift_adj = 0.0;
        for (std::size_t i = 0; i < HW; ++i) {
          const std::size_t k = d.index(b, c, i);
          shift_adj += (d.beta[k] - d.alpha[k]) * static_cast<double>(g[i]);
        }
        shift_adj *= (*weights)[c] / static_cast<double>(HW);
        for (std::size_t i = 0; i < HW; ++i) {
          const double a = d.alpha[d.index(b, c, i)];
          dx[p * HW + i] += static_cast<T>(a * static_cast<double>(g[i]) + shift_adj);
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> np_forward(const Tensor<T>& x, const NoiseDraw& draw) {
  check_draw(x.shape(), draw, "np_forward");
  return perturb_impl(x, draw, std::vector<double>(x.dim(1), 1.0));
}

template <typename T>
Tensor<T> np_plus_forward(const Tensor<T>& x, const NoiseDraw& draw, const StatVariance& delta) {
  check_draw(x.shape(), draw, "np_plus_forward");
  if (draw.granularity != Granularity::channel) throw std::invalid_argument("np_plus_forward: channel-level noise only");
  if (x.dim(0) < 2) throw std::invalid_argument("np_plus_forward: batch statistic variance needs a batch of >= 2");
  if (delta.delta.size() != x.dim(1)) {
    throw std::invalid_argument("np_plus_forward: delta has " + std::to_string(delta.delta.size()) +
                                " channels, feature map has " + std::to_string(x.dim(1)));
  }
  return perturb_impl(x, draw, delta.delta);
}

template <typename T>
Tensor<T> np_reference(const Tensor<T>& x, const NoiseDraw& draw, double eps) {
  check_draw(x.shape(), draw, "np_reference");
  if (!(eps > 0.0)) throw std::invalid_argument("np_reference: eps must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> xd(x.data().begin(), x.data().end());
  const auto stats = channel_mean_std(xd, B, C, HW);
  std::vector<T> out(xd.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t p = b * C + c;
      const double mu = stats.mean[p], sigma = stats.std[p];
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t k = draw.index(b, c, i);
        const double style_std = draw.alpha[k] * sigma;
        const double style_mean = draw.beta[k] * mu;
        out[p * HW + i] = static_cast<T>(style_std * (xd[p * HW + i] - mu) / (sigma + eps) + style_mean);
      }
    }
  }
  return Tensor<T>(x.shape(), std::move(out));
}

template <typename T>
StatVariance minibatch_delta(const Tensor<T>& x) {
  const auto stats = channel_mean_std(x);
  return batch_stat_variance(stats.mean, stats.batch, stats.channels);
}

template <typename T>
Tensor<T> apply_site(const Tensor<T>& x, const NpSiteConfig& cfg, const std::optional<StatVariance>& batch_delta,
                     Rng& gate_rng, Rng& noise_rng, bool training) {
  if (!training) return x;
  if (cfg.mode == NpMode::np_plus && !batch_delta) {
    throw std::invalid_argument("apply_site: np_plus requires the mini-batch statistic variance");
  }
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<bool> on(B, false);
  if (cfg.per_sample_gate) {
    bool any = false;
    for (std::size_t b = 0; b < B; ++b) any = (on[b] = gate_rng.bernoulli(cfg.probability)) || any;
    if (!any) return x;
  } else {
    if (!gate_rng.bernoulli(cfg.probability)) return x;
    on.assign(B, true);
  }
  NoiseDraw draw = sample_noise(cfg.noise, B, C, HW, cfg.granularity, noise_rng);
  const std::size_t per_sample = draw.alpha.size() / B;
  for (std::size_t k = 0; k < draw.alpha.size(); ++k) {
    if (!on[k / per_sample]) {
      draw.alpha[k] = 1.0;
      draw.beta[k] = 1.0;
    } else if (cfg.clamp_negative_alpha && draw.alpha[k] < 0.0) {
      draw.alpha[k] = 0.0;
    }
  }
  if (cfg.mode == NpMode::np_plus) return np_plus_forward(x, draw, *batch_delta);
  return np_forward(x, draw);
}

std::string to_string(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::beta_scaled: return "beta";
  }
  return "?";
}

std::string to_string(Granularity granularity) {
  switch (granularity) {
    case Granularity::channel: return "channel";
    case Granularity::activation: return "activation";
    case Granularity::spatial: return "spatial";
  }
  return "?";
}

std::string to_string(NpMode mode) { return mode == NpMode::np ? "np" : "np_plus"; }

NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "uniform") return NoiseFamily::uniform;
  if (s == "beta") return NoiseFamily::beta_scaled;
  throw std::invalid_argument("unknown noise family '" + s + "' (expected gaussian, uniform or beta)");
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "channel") return Granularity::channel;
  if (s == "activation") return Granularity::activation;
  if (s == "spatial") return Granularity::spatial;
  throw std::invalid_argument("unknown perturbation granularity '" + s + "'");
}

NpMode np_mode_from_string(const std::string& s) {
  if (s == "np") return NpMode::np;
  if (s == "np_plus") return NpMode::np_plus;
  throw std::invalid_argument("unknown NP mode '" + s + "' (expected np or np_plus)");
}

#define NORMPERT_INSTANTIATE_PERTURB(T)                                                                   \
  template Tensor<T> np_forward(const Tensor<T>&, const NoiseDraw&);                                     \
  template Tensor<T> np_reference(const Tensor<T>&, const NoiseDraw&, double);                           \
  template Tensor<T> np_plus_forward(const Tensor<T>&, const NoiseDraw&, const StatVariance&);           \
  template StatVariance minibatch_delta(const Tensor<T>&);                                               \
  template Tensor<T> apply_site(const Tensor<T>&, const NpSiteConfig&, const std::optional<StatVariance>&, \
                                Rng&, Rng&, bool);

NORMPERT_INSTANTIATE_PERTURB(float)
NORMPERT_INSTANTIATE_PERTURB(double)

}  // namespace normpert
