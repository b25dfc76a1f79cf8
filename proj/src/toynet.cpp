#include "normpert/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "normpert/featstats.hpp"
#include "normpert/ops.hpp"

namespace normpert {

void NetworkConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("network: at least one stage is required");
  for (const auto& s : stages) {
    if (s.channels < 1 || s.blocks < 1) throw std::invalid_argument("network: stage channels and blocks must be >= 1");
  }
  if (in_channels < 1 || num_classes < 2) throw std::invalid_argument("network: need >= 1 input channel and >= 2 classes");
  if (input_size % downsampling() != 0) {
    throw std::invalid_argument("network: input size " + std::to_string(input_size) + " not divisible by total downsampling " +
                                std::to_string(downsampling()));
  }
  for (const auto& site : np_sites) {
    site.validate();
    if (site.stage >= stages.size()) {
      throw std::invalid_argument("network: NP site after stage " + std::to_string(site.stage) +
                                  " must precede the last of " + std::to_string(stages.size()) + " stages");
    }
  }
}

void TrainConfig::validate(const NetworkConfig& net) const {
  if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("training: batch size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("training: learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("training: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("training: weight decay must be >= 0");
  const bool plus = std::any_of(net.np_sites.begin(), net.np_sites.end(),
                                [](const NpSiteConfig& s) { return s.mode == NpMode::np_plus; });
  if (plus && batch_size < 2) throw std::invalid_argument("training: np_plus needs batch size >= 2");
}

std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::float32;
  if (s == "float64") return Precision::float64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected float32 or float64)");
}

template <typename T>
ToyNet<T>::ToyNet(NetworkConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  auto uniform_tensor = [&rng](const Shape& shape, double bound) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(shape, std::move(v), true);
  };
  std::size_t in = config_.in_channels;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    for (std::size_t k = 0; k < config_.stages[s].blocks; ++k) {
      const std::size_t out = config_.stages[s].channels;
      const std::string prefix = "stage" + std::to_string(s + 1) + ".conv" + std::to_string(k + 1);
      const double fan_in = static_cast<double>(in * 9);
      params_.emplace_back(prefix + ".weight", uniform_tensor({out, in, 3, 3}, std::sqrt(6.0 / fan_in)));
      params_.emplace_back(prefix + ".bias", Tensor<T>::zeros({out}, true));
      in = out;
    }
  }
  params_.emplace_back("head.weight", uniform_tensor({config_.num_classes, in}, std::sqrt(1.0 / static_cast<double>(in))));
  params_.emplace_back("head.bias", Tensor<T>::zeros({config_.num_classes}, true));
}

template <typename T>
void ToyNet<T>::set_np_sites(std::vector<NpSiteConfig> sites) {
  NetworkConfig next = config_;
  next.np_sites = std::move(sites);
  next.validate();
  config_ = std::move(next);
}

template <typename T>
ForwardResult<T> ToyNet<T>::forward(const Tensor<T>& images, bool training, Rng* gate_rng, Rng* noise_rng) const {
  if (images.rank() != 4 || images.dim(1) != config_.in_channels) {
    throw std::invalid_argument("forward: expected B x " + std::to_string(config_.in_channels) + " x H x W images, got " +
                                shape_str(images.shape()));
  }
  if (images.dim(2) % config_.downsampling() != 0 || images.dim(3) % config_.downsampling() != 0) {
    throw std::invalid_argument("forward: spatial size " + shape_str(images.shape()) +
                                " not divisible by total downsampling " + std::to_string(config_.downsampling()));
  }
  const bool perturb = training && !config_.np_sites.empty();
  if (perturb && (!gate_rng || !noise_rng)) throw std::invalid_argument("forward: training with NP sites needs an rng");

  ForwardResult<T> result;
  Tensor<T> x = images;
  if (config_.input_offset != 0.0) {
    std::vector<T> shifted(images.data().begin(), images.data().end());
    for (auto& v : shifted) v -= static_cast<T>(config_.input_offset);
    x = Tensor<T>(images.shape(), std::move(shifted));
  }
  std::size_t p = 0;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    for (std::size_t k = 0; k < config_.stages[s].blocks; ++k, p += 2) {
      x = relu(conv2d(x, params_[p].second, params_[p + 1].second, 1, 1));
    }
    result.stage_features.push_back(x);
    if (perturb) {
      for (const auto& site : config_.np_sites) {
        if (site.stage != s + 1) continue;
        std::optional<StatVariance> delta;
        if (site.mode == NpMode::np_plus) delta = minibatch_delta(x);
        x = apply_site(x, site, delta, *gate_rng, *noise_rng, true);
      }
    }
    if (s + 1 < config_.stages.size()) x = maxpool2(x);
  }
  result.logits = linear(global_avg_pool(x), params_[p].second, params_[p + 1].second);
  return result;
}

template <typename T>
std::vector<Tensor<T>> ToyNet<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

template <typename T>
Tensor<T> ToyNet<T>::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename T>
void ToyNet<T>::load_parameter(const std::string& name, std::span<const double> values) {
  Tensor<T> t = parameter(name);
  if (values.size() != t.numel()) {
    throw std::invalid_argument("parameter '" + name + "' expects " + std::to_string(t.numel()) + " values, got " +
                                std::to_string(values.size()));
  }
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(values[i]);
}

template <typename T>
std::vector<double> ToyNet<T>::flat_parameters() const {
  std::vector<double> out;
  for (const auto& [name, t] : params_) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::uint64_t init_seed_for(std::uint64_t training_seed) { return Rng(training_seed).fork("init").seed(); }

template <typename T>
ToyNet<T> make_passthrough_stem() {
  NetworkConfig cfg;
  cfg.stages = {{3, 1}};
  cfg.input_size = 32;
  cfg.input_offset = 0.0;
  ToyNet<T> net(cfg, 0);
  std::vector<double> w(3 * 3 * 9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[(c * 3 + c) * 9 + 4] = 1.0;  // center tap of kernel (c, c)
  net.load_parameter("stage1.conv1.weight", w);
  return net;
}

namespace {

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, std::vector<std::vector<T>>& velocity, const TrainConfig& cfg) {
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mom = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto& v = velocity[i];
    if (!params[i].has_grad()) continue;
    auto g = params[i].grad();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mom * v[k] + g[k] + wd * w[k];
      w[k] -= lr * v[k];
    }
    params[i].zero_grad();
  }
}

std::size_t count_correct(std::span<const double> logits, std::size_t k, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double* row = logits.data() + n * k;
    const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
    if (pred == labels[n]) ++correct;
  }
  return correct;
}

}  // namespace

template <typename T>
EvalResult evaluate_detailed(const ToyNet<T>& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  NoGradGuard no_grad;
  EvalResult r;
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = data.batch_labels(idx);
    const auto out = net.forward(data.batch<T>(idx), false);
    const auto l = softmax_cross_entropy(out.logits, labels);
    loss += static_cast<double>(l.item()) * static_cast<double>(idx.size());
    std::vector<double> logits(out.logits.data().begin(), out.logits.data().end());
    correct += count_correct(logits, out.logits.dim(1), labels);
  }
  r.count = data.size();
  r.loss = loss / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

template <typename T>
TrainResult train(ToyNet<T>& net, const Dataset& train_set, const Dataset* val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate(net.config());
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  const Rng root(cfg.seed);
  Rng gate_rng = root.fork("gates");
  Rng noise_rng = root.fork("noise");
  const Rng order_root = root.fork("order");
  const Rng augment_root = root.fork("augment");
  const bool needs_pairs = std::any_of(net.config().np_sites.begin(), net.config().np_sites.end(),
                                       [](const NpSiteConfig& s) { return s.mode == NpMode::np_plus; });
  const std::size_t min_batch = needs_pairs ? 2 : 1;

  auto params = net.parameters();
  std::vector<std::vector<T>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.numel(), T(0));

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = order_root.fork(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    Rng augment_rng = augment_root.fork(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0, step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      if (n < min_batch) break;
      std::span<const std::size_t> idx(order.data() + start, n);
      Tensor<T> images = train_set.batch<T>(idx);
      if (cfg.augment) {
        auto d = images.mutable_data();
        const std::size_t per = train_set.image_numel();
        for (std::size_t b = 0; b < n; ++b) {
          const Image aug = photometric_augment(train_set.image(idx[b]), augment_rng);
          std::copy(aug.pixels.begin(), aug.pixels.end(), d.begin() + static_cast<std::ptrdiff_t>(b * per));
        }
      }
      const auto labels = train_set.batch_labels(idx);
      const auto out = net.forward(images, true, &gate_rng, &noise_rng);
      const auto loss = softmax_cross_entropy(out.logits, labels);
      const double loss_value = static_cast<double>(loss.item());
      if (cfg.check_finite && !std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "training diverged: loss " << loss_value << " at epoch " << epoch << " step " << step;
        throw TrainingDiverged(os.str());
      }
      try {
        backward(loss);
      } catch (const std::runtime_error& e) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << " step " << step << ": " << e.what();
        throw TrainingDiverged(os.str());
      }
      sgd_step(params, velocity, cfg);
      if (cfg.check_finite) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          try {
            check_finite<T>(params[i].data(), net.named_parameters()[i].first);
          } catch (const std::runtime_error& e) {
            throw TrainingDiverged(std::string("training diverged after epoch ") + std::to_string(epoch) + " step " +
                                   std::to_string(step) + ": " + e.what());
          }
        }
      }
      loss_sum += loss_value * static_cast<double>(n);
      std::vector<double> logits(out.logits.data().begin(), out.logits.data().end());
      correct += count_correct(logits, out.logits.dim(1), labels);
      seen += n;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    m.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (val_set) {
      const auto ev = evaluate_detailed(net, *val_set);
      m.val_loss = ev.loss;
      m.val_accuracy = ev.accuracy;
    }
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

template <typename T>
std::vector<Tensor<T>> extract_stage_features(const ToyNet<T>& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("extract_stage_features: empty dataset");
  NoGradGuard no_grad;
  const std::size_t stages = net.config().stages.size();
  std::vector<std::vector<T>> acc(stages);
  std::vector<Shape> shapes(stages);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto out = net.forward(data.batch<T>(idx), false);
    for (std::size_t s = 0; s < stages; ++s) {
      const auto& f = out.stage_features[s];
      acc[s].insert(acc[s].end(), f.data().begin(), f.data().end());
      shapes[s] = f.shape();
    }
  }
  std::vector<Tensor<T>> features;
  for (std::size_t s = 0; s < stages; ++s) {
    Shape shape = shapes[s];
    shape[0] = data.size();
    features.emplace_back(shape, std::move(acc[s]));
  }
  return features;
}

template class ToyNet<float>;
template class ToyNet<double>;

#define NORMPERT_INSTANTIATE_TOYNET(T)                                                                  \
  template ToyNet<T> make_passthrough_stem<T>();                                                        \
  template TrainResult train(ToyNet<T>&, const Dataset&, const Dataset*, const TrainConfig&,            \
                             const std::function<void(const EpochMetrics&)>&);                          \
  template EvalResult evaluate_detailed(const ToyNet<T>&, const Dataset&, std::size_t);                 \
  template std::vector<Tensor<T>> extract_stage_features(const ToyNet<T>&, const Dataset&, std::size_t);

NORMPERT_INSTANTIATE_TOYNET(float)
NORMPERT_INSTANTIATE_TOYNET(double)

}  // namespace normpert
