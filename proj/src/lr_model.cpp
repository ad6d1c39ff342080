#include "sinesr/lr_model.hpp"

#include <stdexcept>

namespace sinesr {

void to_json(nlohmann::json& j, const LRGeneratorConfig& c) {
  j = {{"num_blocks", c.num_blocks},
       {"channels", c.channels},
       {"kernel_size", c.kernel_size},
       {"image_channels", c.image_channels},
       {"omega0", c.omega0}};
}

void from_json(const nlohmann::json& j, LRGeneratorConfig& c) {
  LRGeneratorConfig d;
  d.num_blocks = j.value("num_blocks", d.num_blocks);
  d.channels = j.value("channels", d.channels);
  d.kernel_size = j.value("kernel_size", d.kernel_size);
  d.image_channels = j.value("image_channels", d.image_channels);
  d.omega0 = j.value("omega0", d.omega0);
  if (d.num_blocks < 1) throw std::invalid_argument("lr_generator.num_blocks must be >= 1");
  if (d.channels < 1 || d.kernel_size < 1 || d.kernel_size % 2 == 0) {
    throw std::invalid_argument("lr_generator: channels > 0 and odd kernel_size required");
  }
  c = d;
}

void to_json(nlohmann::json& j, const LRDiscriminatorConfig& c) {
  j = {{"channels", c.channels},
       {"kernel_size", c.kernel_size},
       {"image_channels", c.image_channels},
       {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, LRDiscriminatorConfig& c) {
  LRDiscriminatorConfig d;
  d.channels = j.value("channels", d.channels);
  d.kernel_size = j.value("kernel_size", d.kernel_size);
  d.image_channels = j.value("image_channels", d.image_channels);
  d.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  if (d.channels.empty()) throw std::invalid_argument("lr_discriminator.channels is empty");
  c = d;
}

// ---------------------------------------------------------------------------

template <typename T>
LRGenerator<T>::LRGenerator(const LRGeneratorConfig& config, Rng& rng) : config_(config) {
  if (config.num_blocks < 1) throw std::invalid_argument("LR generator needs >= 1 block");
  const int k = config.kernel_size;
  conv_in_ = std::make_unique<Conv2d<T>>(
      ConvOptions{config.image_channels, config.channels, k, 1, -1, PaddingMode::kZero, true},
      rng);
  ResidualBlockOptions block{config.channels, k, config.omega0, BlockArrangement::kSandwich,
                             PaddingMode::kZero};
  for (int i = 0; i < config.num_blocks; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock<T>>(block, rng));
  }
  conv_out_ = std::make_unique<Conv2d<T>>(
      ConvOptions{config.channels, config.image_channels, k, 1, -1, PaddingMode::kZero, true},
      rng);
}

template <typename T>
Tensor<T> LRGenerator<T>::forward(const Tensor<T>& x) {
  if (x.c() != config_.image_channels) {
    throw ShapeError("LR generator: expected " + std::to_string(config_.image_channels) +
                     " channels, got " + x.shape().str());
  }
  Tensor<T> h = conv_in_->forward(x);
  for (auto& b : blocks_) h = b->forward(h);
  return sigmoid_.forward(conv_out_->forward(h));
}

template <typename T>
Tensor<T> LRGenerator<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = conv_out_->backward(sigmoid_.backward(grad_out));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
  return conv_in_->backward(g);
}

template <typename T>
void LRGenerator<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  conv_in_->collect_parameters(join_name(prefix, "conv_in"), out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i]->collect_parameters(join_name(prefix, "blocks." + std::to_string(i)), out);
  }
  conv_out_->collect_parameters(join_name(prefix, "conv_out"), out);
}

template <typename T>
void LRGenerator<T>::set_training(bool on) {
  Layer<T>::set_training(on);
  conv_in_->set_training(on);
  for (auto& b : blocks_) b->set_training(on);
  conv_out_->set_training(on);
  sigmoid_.set_training(on);
}

template <typename T>
void LRGenerator<T>::set_recording(bool on) {
  Layer<T>::set_recording(on);
  conv_in_->set_recording(on);
  for (auto& b : blocks_) b->set_recording(on);
  conv_out_->set_recording(on);
  sigmoid_.set_recording(on);
}

// ---------------------------------------------------------------------------

template <typename T>
LRDiscriminator<T>::LRDiscriminator(const LRDiscriminatorConfig& config, Rng& rng)
    : config_(config) {
  int in = config.image_channels;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const std::string id = std::to_string(i);
    const int out = config.channels[i];
    net_.add("conv" + id, std::make_unique<Conv2d<T>>(
                              ConvOptions{in, out, config.kernel_size, 1, 0,
                                          PaddingMode::kZero, false},
                              rng));
    auto norm = std::make_unique<BatchNorm2d<T>>(out);
    norms_.push_back(norm.get());
    net_.add("bn" + id, std::move(norm));
    net_.add("act" + id, std::make_unique<LeakyReLU<T>>(config.leaky_slope));
    in = out;
  }
  net_.add("head", std::make_unique<Conv2d<T>>(
                       ConvOptions{in, 1, 1, 1, 0, PaddingMode::kZero, true}, rng));
}

template <typename T>
int LRDiscriminator<T>::receptive_field() const {
  return 1 + static_cast<int>(config_.channels.size()) * (config_.kernel_size - 1);
}

template <typename T>
Tensor<T> LRDiscriminator<T>::forward(const Tensor<T>& x) {
  if (x.h() < receptive_field() || x.w() < receptive_field()) {
    throw ShapeError("LR discriminator: input " + x.shape().str() +
                     " smaller than receptive field " + std::to_string(receptive_field()));
  }
  if (x.c() != config_.image_channels) {
    throw ShapeError("LR discriminator: channel mismatch " + x.shape().str());
  }
  return net_.forward(x);
}

template <typename T>
Tensor<T> LRDiscriminator<T>::backward(const Tensor<T>& grad_out) {
  return net_.backward(grad_out);
}

template <typename T>
void LRDiscriminator<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  net_.collect_parameters(prefix, out);
}

template <typename T>
void LRDiscriminator<T>::set_training(bool on) {
  Layer<T>::set_training(on);
  net_.set_training(on);
}

template <typename T>
void LRDiscriminator<T>::set_recording(bool on) {
  Layer<T>::set_recording(on);
  net_.set_recording(on);
}

template <typename T>
void LRDiscriminator<T>::set_update_running_stats(bool on) {
  for (auto* n : norms_) n->set_update_running_stats(on);
}

template class LRGenerator<float>;
template class LRGenerator<double>;
template class LRDiscriminator<float>;
template class LRDiscriminator<double>;

}  // namespace sinesr
