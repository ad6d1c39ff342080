#include "sinesr/sr_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sinesr {

void to_json(nlohmann::json& j, const SRGeneratorConfig& c) {
  j = {{"scale", c.scale},
       {"image_channels", c.image_channels},
       {"features", c.features},
       {"enc_dec_kernel", c.enc_dec_kernel},
       {"num_blocks", c.num_blocks},
       {"res_kernel", c.res_kernel},
       {"omega0", c.omega0},
       {"num_alpha", c.num_alpha},
       {"alpha_max", c.alpha_max},
       {"alpha_min", c.alpha_min}};
}

void from_json(const nlohmann::json& j, SRGeneratorConfig& c) {
  SRGeneratorConfig d;
  d.scale = j.value("scale", d.scale);
  d.image_channels = j.value("image_channels", d.image_channels);
  d.features = j.value("features", d.features);
  d.enc_dec_kernel = j.value("enc_dec_kernel", d.enc_dec_kernel);
  d.num_blocks = j.value("num_blocks", d.num_blocks);
  d.res_kernel = j.value("res_kernel", d.res_kernel);
  d.omega0 = j.value("omega0", d.omega0);
  d.num_alpha = j.value("num_alpha", d.num_alpha);
  d.alpha_max = j.value("alpha_max", d.alpha_max);
  d.alpha_min = j.value("alpha_min", d.alpha_min);
  if (d.scale < 1) throw std::invalid_argument("sr_generator.scale must be >= 1");
  if (d.num_alpha < 1 || d.image_channels % d.num_alpha != 0) {
    throw std::invalid_argument("sr_generator.num_alpha must divide image_channels");
  }
  if (!(d.alpha_max > 0.0) || !(d.alpha_min > 0.0)) {
    throw std::invalid_argument("sr_generator.alpha_max/alpha_min must be positive");
  }
  c = d;
}

void to_json(nlohmann::json& j, const SRDiscriminatorConfig& c) {
  j = {{"image_channels", c.image_channels},
       {"channels", c.channels},
       {"leaky_slope", c.leaky_slope},
       {"min_input_size", c.min_input_size}};
}

void from_json(const nlohmann::json& j, SRDiscriminatorConfig& c) {
  SRDiscriminatorConfig d;
  d.image_channels = j.value("image_channels", d.image_channels);
  d.channels = j.value("channels", d.channels);
  d.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  d.min_input_size = j.value("min_input_size", d.min_input_size);
  if (d.channels.empty()) throw std::invalid_argument("sr_discriminator.channels is empty");
  c = d;
}

std::vector<double> initial_alphas(int k, double alpha_max, double alpha_min) {
  if (k < 1) throw std::invalid_argument("initial_alphas: k must be >= 1");
  std::vector<double> out(k, alpha_max);
  for (int i = 1; i < k; ++i) {
    out[i] = alpha_max * std::pow(alpha_min / alpha_max, static_cast<double>(i) / (k - 1));
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
ProjectionLayer<T>::ProjectionLayer(const std::vector<double>& alphas)
    : alpha_(Tensor<T>(static_cast<int>(alphas.size()), 1, 1, 1)) {
  for (std::size_t i = 0; i < alphas.size(); ++i) alpha_.value[i] = static_cast<T>(alphas[i]);
}

template <typename T>
Tensor<T> ProjectionLayer<T>::forward(const Tensor<T>& r, std::span<const double> sigma) {
  const int groups = this->groups();
  if (sigma.size() != static_cast<std::size_t>(r.n())) {
    throw std::invalid_argument("projection: need one sigma per image");
  }
  if (r.c() % groups != 0) throw ShapeError("projection: channels not divisible by groups");
  const std::size_t group_len = r.shape().sample() / groups;
  Tensor<T> out = r;
  std::vector<double> norms(static_cast<std::size_t>(r.n()) * groups);
  std::vector<double> radius_scale(norms.size());
  for (int n = 0; n < r.n(); ++n) {
    if (!(sigma[n] >= 0.0)) throw std::invalid_argument("projection: sigma must be >= 0");
    for (int g = 0; g < groups; ++g) {
      const std::size_t k = static_cast<std::size_t>(n) * groups + g;
      T* p = out.sample(n) + g * group_len;
      double sq = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) sq += static_cast<double>(p[i]) * p[i];
      const double norm = std::sqrt(sq);
      radius_scale[k] = sigma[n] * std::sqrt(static_cast<double>(group_len));
      const double radius = std::max(0.0, static_cast<double>(alpha_.value[g]) * radius_scale[k]);
      norms[k] = norm;
      if (norm > radius) {
        const T factor = static_cast<T>(radius / norm);
        for (std::size_t i = 0; i < group_len; ++i) p[i] *= factor;
      }
    }
  }
  if (recording_) {
    input_ = r;
    norms_ = std::move(norms);
    radius_scale_ = std::move(radius_scale);
  }
  return out;
}

template <typename T>
Tensor<T> ProjectionLayer<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw std::logic_error("projection: backward() without forward()");
  require_same_shape(grad_out.shape(), input_.shape(), "projection backward");
  const int groups = this->groups();
  const std::size_t group_len = input_.shape().sample() / groups;
  Tensor<T> dr = grad_out;
  for (int n = 0; n < input_.n(); ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t k = static_cast<std::size_t>(n) * groups + g;
      const double radius =
          std::max(0.0, static_cast<double>(alpha_.value[g]) * radius_scale_[k]);
      const double norm = norms_[k];
      T* d = dr.sample(n) + g * group_len;
      if (radius == 0.0) {
        std::fill(d, d + group_len, T(0));
        continue;
      }
      if (norm <= radius) continue;
      const T* r = input_.sample(n) + g * group_len;
      double ug = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) ug += (r[i] / norm) * d[i];
      const double factor = radius / norm;
      for (std::size_t i = 0; i < group_len; ++i) {
        d[i] = static_cast<T>(factor * (d[i] - (r[i] / norm) * ug));
      }
      alpha_.grad[g] += static_cast<T>(radius_scale_[k] * ug);
    }
  }
  return dr;
}

template <typename T>
Tensor<T> clip_output(const Tensor<T>& img) {
  Tensor<T> out = img;
  for (auto& v : out.values()) v = std::clamp(v, T(0), static_cast<T>(kPixelMax));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
SRGenerator<T>::SRGenerator(const SRGeneratorConfig& config, Rng& rng)
    : config_(config),
      projection_(initial_alphas(config.num_alpha, config.alpha_max, config.alpha_min)) {
  if (config.image_channels % config.num_alpha != 0) {
    throw std::invalid_argument("SR generator: num_alpha must divide image_channels");
  }
  encoder_ = std::make_unique<Conv2d<T>>(
      ConvOptions{config.image_channels, config.features, config.enc_dec_kernel, 1, -1,
                  PaddingMode::kReflection, true},
      rng);
  ResidualBlockOptions block{config.features, config.res_kernel, config.omega0,
                             BlockArrangement::kPreactivation, PaddingMode::kReflection};
  for (int i = 0; i < config.num_blocks; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock<T>>(block, rng));
  }
  decoder_ = std::make_unique<Conv2d<T>>(
      ConvOptions{config.features, config.image_channels, config.enc_dec_kernel, 1, -1,
                  PaddingMode::kReflection, true},
      rng);
}

template <typename T>
const Resizer<T>& SRGenerator<T>::resizer_for(int h, int w) {
  if (!resizer_ || resizer_->in_h() != h || resizer_->in_w() != w) {
    const int s = config_.scale;
    resizer_.emplace(h, w, h * s, w * s, s, s, ResampleKernel::kCubic, true);
  }
  return *resizer_;
}

template <typename T>
Tensor<T> SRGenerator<T>::upsample(const Tensor<T>& x_lr) {
  if (x_lr.h() < 1 || x_lr.w() < 1 || x_lr.n() < 1) {
    throw ShapeError("SR generator: non-positive input dimensions " + x_lr.shape().str());
  }
  if (x_lr.c() != config_.image_channels) {
    throw ShapeError("SR generator: expected " + std::to_string(config_.image_channels) +
                     " channels, got " + x_lr.shape().str());
  }
  return resizer_for(x_lr.h(), x_lr.w()).forward(x_lr);
}

template <typename T>
Tensor<T> SRGenerator<T>::residual(const Tensor<T>& up) {
  Tensor<T> h = encoder_->forward(up * static_cast<T>(1.0 / kPixelMax));
  for (auto& b : blocks_) h = b->forward(h);
  return decoder_->forward(h) * static_cast<T>(kPixelMax);
}

template <typename T>
Tensor<T> SRGenerator<T>::residual_backward(const Tensor<T>& grad_r) {
  Tensor<T> g = decoder_->backward(grad_r * static_cast<T>(kPixelMax));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
  return encoder_->backward(g) * static_cast<T>(1.0 / kPixelMax);
}

template <typename T>
Tensor<T> SRGenerator<T>::forward(const Tensor<T>& x_lr, std::span<const double> sigma) {
  for (double s : sigma) {
    if (!(s >= 0.0)) throw std::invalid_argument("SR generator: sigma must be >= 0");
  }
  if (sigma.size() != static_cast<std::size_t>(x_lr.n())) {
    throw std::invalid_argument("SR generator: need one sigma per image");
  }
  Tensor<T> up = upsample(x_lr);
  Tensor<T> projected = projection_.forward(residual(up), sigma);
  Tensor<T> y = up - projected;
  if (recording_) {
    clip_mask_ = Tensor<T>(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      clip_mask_[i] = (y[i] >= T(0) && y[i] <= static_cast<T>(kPixelMax)) ? T(1) : T(0);
    }
  }
  return clip_output(y);
}

template <typename T>
Tensor<T> SRGenerator<T>::backward(const Tensor<T>& grad_out) {
  if (clip_mask_.empty() || !resizer_) {
    throw std::logic_error("SR generator: backward() without a recorded forward()");
  }
  require_same_shape(grad_out.shape(), clip_mask_.shape(), "SR generator backward");
  Tensor<T> gy = grad_out;
  for (std::size_t i = 0; i < gy.size(); ++i) gy[i] *= clip_mask_[i];
  Tensor<T> gr = projection_.backward(gy * T(-1));
  Tensor<T> gup = gy;
  gup += residual_backward(gr);
  return resizer_->adjoint(gup);
}

template <typename T>
Tensor<T> SRGenerator<T>::infer(const Tensor<T>& x_lr, double sigma, int tile, int margin) {
  if (x_lr.n() != 1) throw ShapeError("SR generator infer: expected one image");
  const bool was_recording = recording_;
  set_recording(false);
  Tensor<T> result;
  const double sig[1] = {sigma};
  if (tile <= 0 || (x_lr.h() <= tile && x_lr.w() <= tile)) {
    result = forward(x_lr, sig);
    set_recording(was_recording);
    return result;
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("SR generator: sigma must be >= 0");
  const int s = config_.scale;
  const Tensor<T> up = upsample(x_lr);
  Tensor<T> r(up.shape());
  for (int y0 = 0; y0 < x_lr.h(); y0 += tile) {
    for (int x0 = 0; x0 < x_lr.w(); x0 += tile) {
      const int y1 = std::min(y0 + tile, x_lr.h());
      const int x1 = std::min(x0 + tile, x_lr.w());
      const int ey0 = std::max(0, y0 - margin);
      const int ex0 = std::max(0, x0 - margin);
      const int ey1 = std::min(x_lr.h(), y1 + margin);
      const int ex1 = std::min(x_lr.w(), x1 + margin);
      Tensor<T> piece(1, x_lr.c(), ey1 - ey0, ex1 - ex0);
      for (int c = 0; c < x_lr.c(); ++c) {
        for (int y = ey0; y < ey1; ++y) {
          for (int x = ex0; x < ex1; ++x) piece(0, c, y - ey0, x - ex0) = x_lr(0, c, y, x);
        }
      }
      const Resizer<T> local(piece.h(), piece.w(), piece.h() * s, piece.w() * s, s, s,
                             ResampleKernel::kCubic, true);
      const Tensor<T> rt = residual(local.forward(piece));
      for (int c = 0; c < r.c(); ++c) {
        for (int y = y0 * s; y < y1 * s; ++y) {
          for (int x = x0 * s; x < x1 * s; ++x) {
            r(0, c, y, x) = rt(0, c, y - ey0 * s, x - ex0 * s);
          }
        }
      }
    }
  }
  result = clip_output(up - projection_.forward(r, sig));
  set_recording(was_recording);
  return result;
}

template <typename T>
ParamList<T> SRGenerator<T>::parameters() {
  ParamList<T> out;
  encoder_->collect_parameters("encoder", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i]->collect_parameters("blocks." + std::to_string(i), out);
  }
  decoder_->collect_parameters("decoder", out);
  out.push_back({"projection.alpha", &projection_.alpha()});
  return out;
}

template <typename T>
void SRGenerator<T>::set_recording(bool on) {
  recording_ = on;
  encoder_->set_recording(on);
  for (auto& b : blocks_) b->set_recording(on);
  decoder_->set_recording(on);
  projection_.set_recording(on);
}

// ---------------------------------------------------------------------------

template <typename T>
SRDiscriminator<T>::SRDiscriminator(const SRDiscriminatorConfig& config, Rng& rng)
    : config_(config) {
  int in = config.image_channels;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const std::string id = std::to_string(i);
    const bool downsample = i % 2 == 1;
    const int out = config.channels[i];
    // Batch norm absorbs the bias of the convolutions it follows.
    ConvOptions conv{in, out, downsample ? 4 : 3, downsample ? 2 : 1, 1, PaddingMode::kZero,
                     i == 0};
    net_.add("conv" + id, std::make_unique<Conv2d<T>>(conv, rng));
    if (i > 0) {
      auto norm = std::make_unique<BatchNorm2d<T>>(out);
      norms_.push_back(norm.get());
      net_.add("bn" + id, std::move(norm));
    }
    net_.add("act" + id, std::make_unique<LeakyReLU<T>>(config.leaky_slope));
    in = out;
  }
  net_.add("pool", std::make_unique<GlobalAvgPool<T>>());
  net_.add("head", std::make_unique<Linear<T>>(in, 1, rng));
}

template <typename T>
Tensor<T> SRDiscriminator<T>::forward(const Tensor<T>& x) {
  if (x.h() < config_.min_input_size || x.w() < config_.min_input_size) {
    throw ShapeError("SR discriminator: input " + x.shape().str() + " below minimum size " +
                     std::to_string(config_.min_input_size));
  }
  if (x.c() != config_.image_channels) {
    throw ShapeError("SR discriminator: channel mismatch " + x.shape().str());
  }
  return net_.forward(x * static_cast<T>(1.0 / kPixelMax));
}

template <typename T>
Tensor<T> SRDiscriminator<T>::backward(const Tensor<T>& grad_out) {
  return net_.backward(grad_out) * static_cast<T>(1.0 / kPixelMax);
}

template <typename T>
void SRDiscriminator<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  net_.collect_parameters(prefix, out);
}

template <typename T>
void SRDiscriminator<T>::set_training(bool on) {
  Layer<T>::set_training(on);
  net_.set_training(on);
}

template <typename T>
void SRDiscriminator<T>::set_recording(bool on) {
  Layer<T>::set_recording(on);
  net_.set_recording(on);
}

template <typename T>
void SRDiscriminator<T>::set_update_running_stats(bool on) {
  for (auto* n : norms_) n->set_update_running_stats(on);
}

template class ProjectionLayer<float>;
template class ProjectionLayer<double>;
template Tensor<float> clip_output(const Tensor<float>&);
template Tensor<double> clip_output(const Tensor<double>&);
template class SRGenerator<float>;
template class SRGenerator<double>;
template class SRDiscriminator<float>;
template class SRDiscriminator<double>;

}  // namespace sinesr
