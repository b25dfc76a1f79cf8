#include "normpert/featstats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace normpert {

std::string KernelSpec::describe() const {
  std::ostringstream os;
  if (family == KernelFamily::linear) {
    os << "linear";
  } else {
    os << "rbf(";
    if (bandwidth) {
      os << "h=" << *bandwidth;
    } else {
      os << "median";
    }
    os << ')';
  }
  return os.str();
}

ChannelStats channel_mean_std(std::span<const double> x, std::size_t batch, std::size_t channels,
                              std::size_t spatial) {
  if (spatial == 0) throw std::invalid_argument("channel_mean_std: empty spatial extent");
  if (x.size() != batch * channels * spatial) throw std::invalid_argument("channel_mean_std: size mismatch");
  ChannelStats s{batch, channels, std::vector<double>(batch * channels), std::vector<double>(batch * channels)};
  for (std::size_t p = 0; p < batch * channels; ++p) {
    const double* v = x.data() + p * spatial;
    double acc = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) acc += v[i];
    const double mu = acc / static_cast<double>(spatial);
    double sq = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) sq += (v[i] - mu) * (v[i] - mu);
    s.mean[p] = mu;
    s.std[p] = std::sqrt(sq / static_cast<double>(spatial));
  }
  return s;
}

template <typename T>
ChannelStats channel_mean_std(const Tensor<T>& x) {
  if (x.rank() != 4) throw std::invalid_argument("channel_mean_std: expected B x C x H x W, got " + shape_str(x.shape()));
  std::vector<double> values(x.data().begin(), x.data().end());
  return channel_mean_std(values, x.dim(0), x.dim(1), x.dim(2) * x.dim(3));
}

StatVariance batch_stat_variance(std::span<const double> means, std::size_t batch, std::size_t channels) {
  if (batch < 2) throw std::invalid_argument("batch_stat_variance: need at least 2 samples, got " + std::to_string(batch));
  if (means.size() != batch * channels) throw std::invalid_argument("batch_stat_variance: size mismatch");
  StatVariance v{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0),
                 std::vector<double>(channels, 0.0)};
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) acc += means[b * channels + c];
    const double mu = acc / static_cast<double>(batch);
    double sq = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double d = means[b * channels + c] - mu;
      sq += d * d;
    }
    v.mean_of_means[c] = mu;
    v.delta_raw[c] = sq / static_cast<double>(batch);
  }
  const double top = *std::max_element(v.delta_raw.begin(), v.delta_raw.end());
  if (top > 0.0) {
    for (std::size_t c = 0; c < channels; ++c) v.delta[c] = v.delta_raw[c] / top;
  }
  return v;
}

template <typename T>
Tensor<T> adain_transfer(const Tensor<T>& x, const ChannelStats& content, const StyleStats& style,
                         const std::vector<bool>& mask, double eps) {
  if (x.rank() != 4) throw std::invalid_argument("adain_transfer: expected B x C x H x W, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (mask.size() != C) throw std::invalid_argument("adain_transfer: mask length does not match channel count");
  for (const auto* s : {&content, &style}) {
    if (s->batch != B || s->channels != C) throw std::invalid_argument("adain_transfer: statistics shape mismatch");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("adain_transfer: eps must be positive");
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      if (!mask[c]) continue;
      const std::size_t p = b * C + c;
      const double gain = style.std[p] / (content.std[p] + eps);
      T* v = out.data() + p * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        v[i] = static_cast<T>(gain * (static_cast<double>(v[i]) - content.mean[p]) + style.mean[p]);
      }
    }
  }
  return Tensor<T>(x.shape(), std::move(out));
}

Vectors stats_to_vectors(const ChannelStats& stats) {
  Vectors out(stats.batch, std::vector<double>(2 * stats.channels));
  for (std::size_t b = 0; b < stats.batch; ++b) {
    for (std::size_t c = 0; c < stats.channels; ++c) {
      out[b][c] = stats.mean_at(b, c);
      out[b][stats.channels + c] = stats.std_at(b, c);
    }
  }
  return out;
}

namespace {

std::size_t common_dim(const Vectors& xs, const Vectors& ys) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("mmd: both sample sets must be non-empty");
  const std::size_t d = xs.front().size();
  for (const auto* set : {&xs, &ys}) {
    for (const auto& v : *set) {
      if (v.size() != d) throw std::invalid_argument("mmd: vectors have mismatched dimensions");
    }
  }
  return d;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

void zscore_jointly(Vectors& xs, Vectors& ys) {
  const std::size_t d = common_dim(xs, ys);
  const double n = static_cast<double>(xs.size() + ys.size());
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (const auto* set : {&xs, &ys}) {
      for (const auto& v : *set) acc += v[k];
    }
    const double mu = acc / n;
    double sq = 0.0;
    for (const auto* set : {&xs, &ys}) {
      for (const auto& v : *set) sq += (v[k] - mu) * (v[k] - mu);
    }
    const double sd = std::sqrt(sq / n);
    for (auto* set : {&xs, &ys}) {
      for (auto& v : *set) v[k] = sd > 0.0 ? (v[k] - mu) / sd : v[k] - mu;
    }
  }
}

double median_heuristic_bandwidth(const Vectors& xs, const Vectors& ys) {
  common_dim(xs, ys);
  std::vector<const std::vector<double>*> all;
  for (const auto& v : xs) all.push_back(&v);
  for (const auto& v : ys) all.push_back(&v);
  std::vector<double> dists;
  dists.reserve(all.size() * (all.size() - 1) / 2);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) dists.push_back(std::sqrt(sq_dist(*all[i], *all[j])));
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  }
  return median > 0.0 ? median : 1.0;
}

double resolved_bandwidth(const Vectors& xs, const Vectors& ys, const KernelSpec& kernel) {
  if (kernel.family == KernelFamily::linear) return 0.0;
  if (kernel.bandwidth) {
    if (!(*kernel.bandwidth > 0.0)) throw std::invalid_argument("mmd: bandwidth must be positive");
    return *kernel.bandwidth;
  }
  return median_heuristic_bandwidth(xs, ys);
}

double mmd(const Vectors& xs, const Vectors& ys, const KernelSpec& kernel) {
  common_dim(xs, ys);
  if (kernel.family == KernelFamily::linear) {
    // pairwise form; algebraically |mean(X) - mean(Y)|^2
    auto mean_k = [](const Vectors& a, const Vectors& b) {
      double acc = 0.0;
      for (const auto& u : a) {
        for (const auto& v : b) acc += dot(u, v);
      }
      return acc / static_cast<double>(a.size() * b.size());
    };
    return mean_k(xs, xs) + mean_k(ys, ys) - 2.0 * mean_k(xs, ys);
  }
  const double h = resolved_bandwidth(xs, ys, kernel);
  const double inv = 1.0 / (2.0 * h * h);
  auto mean_k = [inv](const Vectors& a, const Vectors& b) {
    double acc = 0.0;
    for (const auto& u : a) {
      for (const auto& v : b) acc += std::exp(-sq_dist(u, v) * inv);
    }
    return acc / static_cast<double>(a.size() * b.size());
  };
  return mean_k(xs, xs) + mean_k(ys, ys) - 2.0 * mean_k(xs, ys);
}

template ChannelStats channel_mean_std(const Tensor<float>&);
template ChannelStats channel_mean_std(const Tensor<double>&);
template Tensor<float> adain_transfer(const Tensor<float>&, const ChannelStats&, const StyleStats&,
                                      const std::vector<bool>&, double);
template Tensor<double> adain_transfer(const Tensor<double>&, const ChannelStats&, const StyleStats&,
                                       const std::vector<bool>&, double);

std::string to_string(KernelFamily family) { return family == KernelFamily::linear ? "linear" : "rbf"; }

std::string to_string(Embedding embedding) { return embedding == Embedding::raw ? "raw" : "zscore"; }

KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "linear") return KernelFamily::linear;
  if (s == "rbf") return KernelFamily::rbf;
  throw std::invalid_argument("unknown kernel '" + s + "' (expected linear or rbf)");
}

Embedding embedding_from_string(const std::string& s) {
  if (s == "raw") return Embedding::raw;
  if (s == "zscore") return Embedding::zscore;
  throw std::invalid_argument("unknown embedding '" + s + "' (expected raw or zscore)");
}

}  // namespace normpert
