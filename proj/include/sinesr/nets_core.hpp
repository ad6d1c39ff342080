#pragma once

// Building blocks shared by every network in the toolkit: parameters, the
// layer protocol (forward caches what backward needs), convolutions, the
// sine activation, residual blocks and a few standard layers.
//
// All layers are templates over the scalar type and are instantiated for
// float (training) and double (gradient verification).

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sinesr/rng.hpp"
#include "sinesr/tensor.hpp"

namespace sinesr {

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  // Buffers (batch-norm running statistics) are saved in checkpoints but
  // neither counted nor optimized.
  bool trainable = true;

  Parameter() = default;
  Parameter(Tensor<T> v, bool is_trainable = true)
      : value(std::move(v)), grad(value.shape()), trainable(is_trainable) {}
  void zero_grad() { grad.zero(); }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param = nullptr;
};

// Named parameter tree of one model, flattened in a stable order.
template <typename T>
using ParamList = std::vector<NamedParameter<T>>;

// Element count of all trainable tensors.
template <typename T>
std::size_t count_parameters(const ParamList<T>& params);

template <typename T>
void zero_grads(const ParamList<T>& params);

std::string join_name(const std::string& prefix, const std::string& name);

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  // Consumes the state cached by the most recent forward(); accumulates
  // parameter gradients and returns the gradient wrt the input.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual void collect_parameters(const std::string& prefix, ParamList<T>& out) {
    (void)prefix;
    (void)out;
  }
  ParamList<T> parameters() {
    ParamList<T> out;
    collect_parameters("", out);
    return out;
  }

  // Training mode switches batch-norm to batch statistics.
  virtual void set_training(bool on) { training_ = on; }
  // With recording off, forward() keeps no state (inference on large images).
  virtual void set_recording(bool on) { recording_ = on; }
  bool training() const { return training_; }
  bool recording() const { return recording_; }

 protected:
  bool training_ = true;
  bool recording_ = true;
};

// ---------------------------------------------------------------------------
// Initialization

// Bound of the sine-layer initializer, sqrt(6 / fan_in).
double siren_bound(int fan_in);

// i.i.d. U(-sqrt(6/fan_in), sqrt(6/fan_in)). Throws std::invalid_argument for
// fan_in < 1.
template <typename T>
Tensor<T> siren_init(int fan_in, Shape shape, Rng& rng);

// i.i.d. U(-1/sqrt(fan_in), 1/sqrt(fan_in)); used for every non-sine weight.
template <typename T>
Tensor<T> kaiming_uniform_init(int fan_in, Shape shape, Rng& rng);

// ---------------------------------------------------------------------------
// Convolution

enum class PaddingMode { kZero, kReflection };

struct ConvOptions {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = -1;  // -1: (kernel - 1) / 2
  PaddingMode mode = PaddingMode::kZero;
  bool bias = true;

  int effective_padding() const { return padding < 0 ? (kernel - 1) / 2 : padding; }
};

// Maps each coordinate of a padded axis to its source index (-1 = zero).
// Reflection does not repeat the edge sample and needs pad < len.
std::vector<int> padded_axis_map(int len, int pad_before, int padded_len,
                                 PaddingMode mode);

template <typename T>
class Conv2d : public Layer<T> {
 public:
  // Weights ~ kaiming_uniform_init, bias = 0.
  Conv2d(const ConvOptions& opt, Rng& rng);
  // All-zero weights and bias.
  explicit Conv2d(const ConvOptions& opt);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;

  Shape output_shape(const Shape& in) const;
  const ConvOptions& options() const { return opt_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  ConvOptions opt_;
  Parameter<T> weight_;  // out x in x k x k
  Parameter<T> bias_;    // out x 1 x 1 x 1
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Sine activation: out[p] = sin(omega0 * W * f[p]) at every pixel p, where W
// is a learnable channel-mixing matrix (a 1x1 convolution without bias).

template <typename T>
class SineLayer : public Layer<T> {
 public:
  SineLayer(int in_channels, int out_channels, double omega0, Rng& rng);
  SineLayer(int in_channels, int out_channels, double omega0);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;

  double omega0() const { return omega0_; }
  Parameter<T>& weight() { return weight_; }

 private:
  int in_;
  int out_;
  double omega0_;
  Parameter<T> weight_;  // out x in x 1 x 1
  Tensor<T> input_;
  Tensor<T> cos_pre_;
};

// ---------------------------------------------------------------------------
// Residual block: inner_path(x) + x.
//   sandwich:       conv_a -> sine -> conv_b
//   preactivation:  sine_a -> conv_a -> sine_b -> conv_b

enum class BlockArrangement { kSandwich, kPreactivation };

struct ResidualBlockOptions {
  int channels = 64;
  int kernel = 3;
  double omega0 = 30.0;
  BlockArrangement arrangement = BlockArrangement::kSandwich;
  PaddingMode padding = PaddingMode::kZero;
};

template <typename T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(const ResidualBlockOptions& opt, Rng& rng);
  // Every weight zero: the block is the identity.
  explicit ResidualBlock(const ResidualBlockOptions& opt);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;
  void set_training(bool on) override;
  void set_recording(bool on) override;

  const ResidualBlockOptions& options() const { return opt_; }
  Conv2d<T>& conv_a() { return *conv_a_; }
  Conv2d<T>& conv_b() { return *conv_b_; }
  // Sandwich blocks have one sine layer (index 0); preactivation blocks two.
  SineLayer<T>& sine(int i) { return *sines_.at(i); }

 private:
  void build(Rng* rng);

  ResidualBlockOptions opt_;
  std::unique_ptr<Conv2d<T>> conv_a_;
  std::unique_ptr<Conv2d<T>> conv_b_;
  std::vector<std::unique_ptr<SineLayer<T>>> sines_;
  std::vector<Layer<T>*> path_;
};

// ---------------------------------------------------------------------------
// Standard layers used by the discriminators and the feature extractor.

template <typename T>
class LeakyReLU : public Layer<T> {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  double slope_;
  Tensor<T> input_;
};

template <typename T>
class Sigmoid : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;

  // When false, training-mode forwards normalize with batch statistics but
  // leave the running estimates untouched.
  void set_update_running_stats(bool on) { update_running_ = on; }

 private:
  int channels_;
  double eps_;
  double momentum_;
  bool update_running_ = true;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Parameter<T> running_mean_;
  Parameter<T> running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  bool used_batch_stats_ = false;
};

template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
};

template <typename T>
class MaxPool2 : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// Dense layer on N x C x 1 x 1 tensors.
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(int in, int out, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;

 private:
  int in_;
  int out_;
  Parameter<T> weight_;  // out x in
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Sequential : public Layer<T> {
 public:
  Layer<T>& add(std::string name, std::unique_ptr<Layer<T>> layer);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;
  void set_training(bool on) override;
  void set_recording(bool on) override;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i).second; }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> layers_;
};

}  // namespace sinesr
