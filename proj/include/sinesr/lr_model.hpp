#pragma once

// Degradation-learning stage networks: the LR generator (bicubic LR in,
// realistic LR out) and its patch discriminator.

#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/nets_core.hpp"

namespace sinesr {

struct LRGeneratorConfig {
  int num_blocks = 8;
  int channels = 64;
  int kernel_size = 3;
  int image_channels = 3;
  double omega0 = 30.0;
};

struct LRDiscriminatorConfig {
  std::vector<int> channels{64, 128, 256};
  int kernel_size = 5;
  int image_channels = 3;
  double leaky_slope = 0.2;
};

void to_json(nlohmann::json& j, const LRGeneratorConfig& c);
void from_json(const nlohmann::json& j, LRGeneratorConfig& c);
void to_json(nlohmann::json& j, const LRDiscriminatorConfig& c);
void from_json(const nlohmann::json& j, LRDiscriminatorConfig& c);

// conv_in -> num_blocks sandwich residual blocks -> conv_out -> sigmoid.
// Input and output are [0, 1] images of the same size.
template <typename T>
class LRGenerator : public Layer<T> {
 public:
  LRGenerator(const LRGeneratorConfig& config, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;
  void set_training(bool on) override;
  void set_recording(bool on) override;

  const LRGeneratorConfig& config() const { return config_; }
  Conv2d<T>& input_conv() { return *conv_in_; }
  Conv2d<T>& output_conv() { return *conv_out_; }
  ResidualBlock<T>& block(int i) { return *blocks_.at(i); }

 private:
  LRGeneratorConfig config_;
  std::unique_ptr<Conv2d<T>> conv_in_;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
  std::unique_ptr<Conv2d<T>> conv_out_;
  Sigmoid<T> sigmoid_;
};

// Unpadded stride-1 conv stages with batch norm and leaky ReLU, then a 1x1
// head to one unbounded score per receptive-field patch.
template <typename T>
class LRDiscriminator : public Layer<T> {
 public:
  LRDiscriminator(const LRDiscriminatorConfig& config, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;
  void set_training(bool on) override;
  void set_recording(bool on) override;

  // Toggles running-statistics updates of every batch-norm layer.
  void set_update_running_stats(bool on);
  int receptive_field() const;
  // Score-map extent for an input side length.
  int output_extent(int input) const { return input - receptive_field() + 1; }
  const LRDiscriminatorConfig& config() const { return config_; }

 private:
  LRDiscriminatorConfig config_;
  Sequential<T> net_;
  std::vector<BatchNorm2d<T>*> norms_;
};

}  // namespace sinesr
