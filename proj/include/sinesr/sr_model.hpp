#pragma once

// Super-resolution stage networks.
//
// Generator pipeline on [0, 255] images:
//   up  = bicubic_upsample(x, s)
//   r   = 255 * decoder(blocks(encoder(up / 255)))     estimated residual
//   out = clip(up - project(r, sigma, alpha), 0, 255)
// where project() is the l2-ball projection of each image's residual onto
// radius alpha * sigma * sqrt(N).

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/degradation.hpp"
#include "sinesr/nets_core.hpp"

namespace sinesr {

inline constexpr double kPixelMax = 255.0;

struct SRGeneratorConfig {
  int scale = 4;
  int image_channels = 3;
  int features = 64;
  int enc_dec_kernel = 5;
  int num_blocks = 5;
  int res_kernel = 3;
  double omega0 = 30.0;
  // Number of projection scales; they split the image channels into equal
  // contiguous groups, so num_alpha must divide image_channels.
  int num_alpha = 1;
  double alpha_max = 2.0;
  double alpha_min = 1.0;
};

struct SRDiscriminatorConfig {
  int image_channels = 3;
  std::vector<int> channels{64, 64, 128, 128, 256, 256, 512, 512, 512, 512};
  double leaky_slope = 0.2;
  int min_input_size = 128;
};

void to_json(nlohmann::json& j, const SRGeneratorConfig& c);
void from_json(const nlohmann::json& j, SRGeneratorConfig& c);
void to_json(nlohmann::json& j, const SRDiscriminatorConfig& c);
void from_json(const nlohmann::json& j, SRDiscriminatorConfig& c);

// Geometric sequence from alpha_max down to alpha_min with k entries
// (k == 1 yields {alpha_max}).
std::vector<double> initial_alphas(int k, double alpha_max, double alpha_min);

// r_out = r * min(1, radius / ||r||), radius = alpha * sigma * sqrt(N) with N
// the element count of the projected group, evaluated per image.
template <typename T>
class ProjectionLayer {
 public:
  explicit ProjectionLayer(const std::vector<double>& alphas);

  Tensor<T> forward(const Tensor<T>& r, std::span<const double> sigma);
  Tensor<T> backward(const Tensor<T>& grad_out);

  Parameter<T>& alpha() { return alpha_; }
  int groups() const { return static_cast<int>(alpha_.value.size()); }
  void set_recording(bool on) { recording_ = on; }

 private:
  Parameter<T> alpha_;
  bool recording_ = true;
  // Per (image, group): cached input and projection state.
  Tensor<T> input_;
  std::vector<double> norms_;
  std::vector<double> radius_scale_;  // sigma * sqrt(N)
};

// Elementwise clamp to [0, 255].
template <typename T>
Tensor<T> clip_output(const Tensor<T>& img);

template <typename T>
class SRGenerator {
 public:
  SRGenerator(const SRGeneratorConfig& config, Rng& rng);

  // x_lr: N x C x h x w on [0, 255]; sigma: one noise level per image.
  Tensor<T> forward(const Tensor<T>& x_lr, std::span<const double> sigma);
  // Returns the gradient wrt x_lr and accumulates parameter gradients.
  Tensor<T> backward(const Tensor<T>& grad_out);

  // Inference on one large image: the residual branch runs on overlapping
  // LR tiles of `tile` pixels (plus `margin` context on each side); the
  // projection and clipping then act on the whole image. tile <= 0 runs the
  // image in one pass.
  Tensor<T> infer(const Tensor<T>& x_lr, double sigma, int tile = 0, int margin = 8);

  Tensor<T> upsample(const Tensor<T>& x_lr);

  ParamList<T> parameters();
  void set_recording(bool on);
  const SRGeneratorConfig& config() const { return config_; }
  Conv2d<T>& encoder() { return *encoder_; }
  Conv2d<T>& decoder() { return *decoder_; }
  ResidualBlock<T>& block(int i) { return *blocks_.at(i); }
  ProjectionLayer<T>& projection() { return projection_; }

 private:
  const Resizer<T>& resizer_for(int h, int w);
  Tensor<T> residual(const Tensor<T>& up);
  Tensor<T> residual_backward(const Tensor<T>& grad_r);

  SRGeneratorConfig config_;
  std::unique_ptr<Conv2d<T>> encoder_;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
  std::unique_ptr<Conv2d<T>> decoder_;
  ProjectionLayer<T> projection_;
  std::optional<Resizer<T>> resizer_;
  bool recording_ = true;
  Tensor<T> clip_mask_;
};

// VGG-style stack: 3x3 stride-1 and 4x4 stride-2 convolutions alternating,
// batch norm after all but the first, leaky ReLU, global average pooling and
// a linear head producing one score per image. Inputs on [0, 255].
template <typename T>
class SRDiscriminator : public Layer<T> {
 public:
  SRDiscriminator(const SRDiscriminatorConfig& config, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList<T>& out) override;
  void set_training(bool on) override;
  void set_recording(bool on) override;
  void set_update_running_stats(bool on);

  const SRDiscriminatorConfig& config() const { return config_; }

 private:
  SRDiscriminatorConfig config_;
  Sequential<T> net_;
  std::vector<BatchNorm2d<T>*> norms_;
};

}  // namespace sinesr
