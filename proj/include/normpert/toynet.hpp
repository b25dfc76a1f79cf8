#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "normpert/domains.hpp"
#include "normpert/perturb.hpp"
#include "normpert/rng.hpp"
#include "normpert/tensor.hpp"

namespace normpert {

struct StageSpec {
  std::size_t channels = 16;
  std::size_t blocks = 1;
  bool operator==(const StageSpec&) const = default;
};

/// Staged classifier: every stage is `blocks` x (3x3 conv + ReLU), stages are
/// separated by 2x2 max-pooling, and the head is global average pooling
/// followed by a linear layer. Perturbation sites act on stage outputs.
struct NetworkConfig {
  std::vector<StageSpec> stages{{16, 1}, {32, 1}, {64, 1}, {128, 1}};
  std::size_t in_channels = 3;
  std::size_t num_classes = 4;
  std::size_t input_size = 32;
  double input_offset = 0.5;  // subtracted from every pixel before stage 1
  std::vector<NpSiteConfig> np_sites;

  void validate() const;
  std::size_t downsampling() const { return std::size_t{1} << (stages.size() - 1); }
  bool operator==(const NetworkConfig&) const = default;
};

enum class Precision { float32, float64 };

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  Precision precision = Precision::float32;
  bool augment = false;       // photometric augmentation of training images
  bool check_finite = true;   // abort on NaN/Inf loss or gradients

  void validate(const NetworkConfig& net) const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::vector<Tensor<T>> stage_features;  // clean stage outputs, before any perturbation
};

template <typename T>
class ToyNet {
 public:
  /// Kaiming-uniform conv weights, fan-in scaled head, zero biases.
  ToyNet(NetworkConfig config, std::uint64_t init_seed);

  const NetworkConfig& config() const { return config_; }
  void set_np_sites(std::vector<NpSiteConfig> sites);

  /// images: B x in_channels x S x S. Perturbation sites run only when
  /// training; gates come from gate_rng and noise from noise_rng.
  ForwardResult<T> forward(const Tensor<T>& images, bool training, Rng* gate_rng, Rng* noise_rng) const;
  ForwardResult<T> forward(const Tensor<T>& images, bool training, Rng* rng = nullptr) const {
    return forward(images, training, rng, rng);
  }

  std::vector<Tensor<T>> parameters() const;
  const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const { return params_; }
  Tensor<T> parameter(const std::string& name) const;
  /// Copies values into an existing parameter of the same shape.
  void load_parameter(const std::string& name, std::span<const double> values);
  std::vector<double> flat_parameters() const;

 private:
  NetworkConfig config_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
};

/// Weight-initialization seed derived from a training seed.
std::uint64_t init_seed_for(std::uint64_t training_seed);

/// One-stage network whose three 3x3 convs copy the input channels through
/// unchanged; its stage-1 features equal the (non-negative) input image.
template <typename T>
ToyNet<T> make_passthrough_stem();

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD with momentum and L2 weight decay over shuffled mini-batches. Data
/// order, gates, noise and augmentation use separate streams derived from
/// cfg.seed. val_set may be null.
template <typename T>
TrainResult train(ToyNet<T>& net, const Dataset& train_set, const Dataset* val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Evaluation-mode pass over a whole dataset.
template <typename T>
EvalResult evaluate_detailed(const ToyNet<T>& net, const Dataset& data, std::size_t batch_size = 100);

template <typename T>
double evaluate(const ToyNet<T>& net, const Dataset& data, std::size_t batch_size = 100) {
  return evaluate_detailed(net, data, batch_size).accuracy;
}

/// Clean stage features of every image, evaluation mode. Result[s] is the
/// N x C_s x H_s x W_s output of stage s+1.
template <typename T>
std::vector<Tensor<T>> extract_stage_features(const ToyNet<T>& net, const Dataset& data,
                                              std::size_t batch_size = 100);

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

extern template class ToyNet<float>;
extern template class ToyNet<double>;

}  // namespace normpert
