#include "sinesr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "sinesr/checkpoint.hpp"

namespace sinesr {

namespace {

template <typename T>
T sign_of(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// -log(max(sigmoid(z), kLogGuard)) and its derivative.
double nll_sigmoid(double z) {
  const double p = sigmoid(z);
  if (p < kLogGuard) return -std::log(kLogGuard);
  return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double nll_sigmoid_grad(double z) {
  return sigmoid(z) < kLogGuard ? 0.0 : -sigmoid(-z);
}

// Mean box filter along one axis (axis 0 = rows, 1 = columns) or its
// transpose, reflection borders.
template <typename T>
Tensor<T> box_pass(const Tensor<T>& x, int k, int axis, bool adjoint) {
  const int pad = (k - 1) / 2;
  const int len = axis == 0 ? x.h() : x.w();
  if (pad >= len) {
    throw ShapeError("low-pass kernel " + std::to_string(k) + " does not fit image " +
                     x.shape().str());
  }
  const std::vector<int> map = padded_axis_map(len, pad, len + 2 * pad, PaddingMode::kReflection);
  const T inv = static_cast<T>(1.0 / k);
  Tensor<T> out(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < x.h(); ++y) {
        for (int xx = 0; xx < x.w(); ++xx) {
          const int i = axis == 0 ? y : xx;
          const T v = src[static_cast<std::size_t>(y) * x.w() + xx];
          T acc = 0;
          for (int d = 0; d < k; ++d) {
            const int j = map[i + d];
            const std::size_t at = axis == 0 ? static_cast<std::size_t>(j) * x.w() + xx
                                             : static_cast<std::size_t>(y) * x.w() + j;
            if (adjoint) {
              dst[at] += v * inv;
            } else {
              acc += src[at];
            }
          }
          if (!adjoint) dst[static_cast<std::size_t>(y) * x.w() + xx] = acc * inv;
        }
      }
    }
  }
  return out;
}

void check_kernel(int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("low-pass kernel size must be odd");
}

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  if (s == "lrelu") return Activation::kLeakyRelu;
  throw std::invalid_argument("unknown activation '" + s + "' (none|relu|lrelu)");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kNone:
      return "none";
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "lrelu";
  }
  return "none";
}

template <typename T>
PairLoss<T> pair_nll(const Tensor<T>& real, const Tensor<T>& fake, double real_sign,
                     double fake_sign) {
  // L = mean_i nll(real_sign * a_i) + mean_j nll(fake_sign * b_j),
  // a_i = r_i - mean(f), b_j = f_j - mean(r).
  if (real.empty() || fake.empty()) throw std::invalid_argument("empty score batch");
  const double R = static_cast<double>(real.size());
  const double F = static_cast<double>(fake.size());
  const double mean_r = sum(real) / R;
  const double mean_f = sum(fake) / F;
  PairLoss<T> out;
  out.grad_real = Tensor<T>(real.shape());
  out.grad_fake = Tensor<T>(fake.shape());
  std::vector<double> da(real.size());
  std::vector<double> db(fake.size());
  double sum_da = 0.0;
  double sum_db = 0.0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const double a = real_sign * (real[i] - mean_f);
    out.value += nll_sigmoid(a) / R;
    da[i] = real_sign * nll_sigmoid_grad(a) / R;
    sum_da += da[i];
  }
  for (std::size_t j = 0; j < fake.size(); ++j) {
    const double b = fake_sign * (fake[j] - mean_r);
    out.value += nll_sigmoid(b) / F;
    db[j] = fake_sign * nll_sigmoid_grad(b) / F;
    sum_db += db[j];
  }
  for (std::size_t i = 0; i < real.size(); ++i) {
    out.grad_real[i] = static_cast<T>(da[i] - sum_db / R);
  }
  for (std::size_t j = 0; j < fake.size(); ++j) {
    out.grad_fake[j] = static_cast<T>(db[j] - sum_da / F);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> frequency_filter(const Tensor<T>& img, FrequencyBand band, int kernel_size) {
  check_kernel(kernel_size);
  Tensor<T> low = box_pass(box_pass(img, kernel_size, 0, false), kernel_size, 1, false);
  if (band == FrequencyBand::kLow) return low;
  return img - low;
}

template <typename T>
Tensor<T> frequency_filter_adjoint(const Tensor<T>& grad, FrequencyBand band, int kernel_size) {
  check_kernel(kernel_size);
  Tensor<T> low = box_pass(box_pass(grad, kernel_size, 1, true), kernel_size, 0, true);
  if (band == FrequencyBand::kLow) return low;
  return grad - low;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const FeatureExtractorConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"in", s.in_channels},
                      {"out", s.out_channels},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"activation", activation_name(s.activation)},
                      {"pool_after", s.pool_after}});
  }
  j = {{"weights_path", c.weights_path},
       {"stages", stages},
       {"taps", c.taps},
       {"input_scale", c.input_scale},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, FeatureExtractorConfig& c) {
  FeatureExtractorConfig d;
  d.weights_path = j.value("weights_path", d.weights_path);
  if (j.contains("stages")) {
    d.stages.clear();
    for (const auto& s : j.at("stages")) {
      ExtractorStage st;
      st.in_channels = s.value("in", st.in_channels);
      st.out_channels = s.value("out", st.out_channels);
      st.kernel = s.value("kernel", st.kernel);
      st.stride = s.value("stride", st.stride);
      st.activation = activation_from_string(s.value("activation", std::string("lrelu")));
      st.pool_after = s.value("pool_after", st.pool_after);
      d.stages.push_back(st);
    }
  }
  d.taps = j.value("taps", d.taps);
  d.input_scale = j.value("input_scale", d.input_scale);
  d.seed = j.value("seed", d.seed);
  if (d.stages.empty() || d.taps.empty()) {
    throw std::invalid_argument("perceptual: stages and taps must be non-empty");
  }
  for (int t : d.taps) {
    if (t < 0 || t >= static_cast<int>(d.stages.size())) {
      throw std::invalid_argument("perceptual: tap index out of range");
    }
  }
  c = d;
}

template <typename T>
ConvFeatureExtractor<T>::ConvFeatureExtractor(const FeatureExtractorConfig& config)
    : config_(config) {
  if (config_.taps.empty()) throw std::invalid_argument("feature extractor needs a tap");
  for (int t : config_.taps) {
    if (t < 0 || t >= static_cast<int>(config_.stages.size())) {
      throw std::invalid_argument("feature extractor tap out of range");
    }
  }
  Rng rng(config_.seed);
  for (const auto& s : config_.stages) {
    convs_.push_back(std::make_unique<Conv2d<T>>(
        ConvOptions{s.in_channels, s.out_channels, s.kernel, s.stride, -1, PaddingMode::kZero,
                    true},
        rng));
    switch (s.activation) {
      case Activation::kNone:
        acts_.push_back(nullptr);
        break;
      case Activation::kRelu:
        acts_.push_back(std::make_unique<LeakyReLU<T>>(0.0));
        break;
      case Activation::kLeakyRelu:
        acts_.push_back(std::make_unique<LeakyReLU<T>>(0.2));
        break;
    }
    pools_.push_back(s.pool_after ? std::make_unique<MaxPool2<T>>() : nullptr);
  }
  name_ = "fallback-seed" + std::to_string(config_.seed);
  if (config_.weights_path.empty()) return;
  if (!std::filesystem::exists(config_.weights_path)) {
    spdlog::warn("perceptual weights '{}' not found, using the seeded fallback extractor",
                 config_.weights_path);
    return;
  }
  const TensorContainer c = read_container(config_.weights_path);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string base = "stages." + std::to_string(i) + ".";
    for (auto* p : {&convs_[i]->weight(), &convs_[i]->bias()}) {
      const std::string key = base + (p == &convs_[i]->weight() ? "weight" : "bias");
      const Tensorf& t = c.get(key);
      if (!(t.shape() == p->value.shape())) {
        throw DataError("perceptual weights: tensor '" + key + "' has shape " + t.shape().str());
      }
      p->value = t.template cast<T>();
    }
  }
  pretrained_ = true;
  name_ = "pretrained:" + std::filesystem::path(config_.weights_path).filename().string();
}

template <typename T>
std::vector<Tensor<T>> ConvFeatureExtractor<T>::features(const Tensor<T>& x) {
  const int last = *std::max_element(config_.taps.begin(), config_.taps.end());
  std::vector<Tensor<T>> stage_out;
  Tensor<T> h = x * static_cast<T>(config_.input_scale);
  for (int i = 0; i <= last; ++i) {
    h = convs_[i]->forward(h);
    if (acts_[i]) h = acts_[i]->forward(h);
    if (pools_[i]) h = pools_[i]->forward(h);
    stage_out.push_back(h);
  }
  std::vector<Tensor<T>> out;
  for (int t : config_.taps) out.push_back(stage_out[t]);
  return out;
}

template <typename T>
Tensor<T> ConvFeatureExtractor<T>::backward(const std::vector<Tensor<T>>& grads) {
  if (grads.size() != config_.taps.size()) {
    throw std::invalid_argument("feature extractor: one gradient per tap required");
  }
  const int last = *std::max_element(config_.taps.begin(), config_.taps.end());
  Tensor<T> g;
  for (int i = last; i >= 0; --i) {
    for (std::size_t k = 0; k < config_.taps.size(); ++k) {
      if (config_.taps[k] != i || grads[k].empty()) continue;
      if (g.empty()) {
        g = grads[k];
      } else {
        g += grads[k];
      }
    }
    if (g.empty()) continue;
    if (pools_[i]) g = pools_[i]->backward(g);
    if (acts_[i]) g = acts_[i]->backward(g);
    g = convs_[i]->backward(g);
  }
  return g * static_cast<T>(config_.input_scale);
}

// ---------------------------------------------------------------------------

template <typename T>
LossResult<T> color_loss(const Tensor<T>& gen, const Tensor<T>& target, int kernel_size) {
  require_same_shape(gen.shape(), target.shape(), "color_loss");
  const Tensor<T> d = frequency_filter(gen - target, FrequencyBand::kLow, kernel_size);
  LossResult<T> out;
  Tensor<T> s(d.shape());
  const double inv = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.value += std::abs(static_cast<double>(d[i]));
    s[i] = static_cast<T>(sign_of(d[i]) * inv);
  }
  out.value *= inv;
  out.grad = frequency_filter_adjoint(s, FrequencyBand::kLow, kernel_size);
  return out;
}

template <typename T>
LossResult<T> texture_loss_from_scores(const Tensor<T>& scores) {
  if (scores.empty()) throw std::invalid_argument("texture_loss: empty scores");
  LossResult<T> out;
  out.grad = Tensor<T>(scores.shape());
  const double inv = 1.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.value += nll_sigmoid(scores[i]) * inv;
    out.grad[i] = static_cast<T>(nll_sigmoid_grad(scores[i]) * inv);
  }
  return out;
}

template <typename T>
LossResult<T> texture_loss(const Tensor<T>& gen, Layer<T>& disc, int kernel_size) {
  const Tensor<T> high = frequency_filter(gen, FrequencyBand::kHigh, kernel_size);
  LossResult<T> out = texture_loss_from_scores(disc.forward(high));
  out.grad = frequency_filter_adjoint(disc.backward(out.grad), FrequencyBand::kHigh, kernel_size);
  return out;
}

template <typename T>
LossResult<T> perceptual_loss(const Tensor<T>& gen, const Tensor<T>& target,
                              FeatureExtractor<T>& fx) {
  require_same_shape(gen.shape(), target.shape(), "perceptual_loss");
  const std::vector<Tensor<T>> ft = fx.features(target);
  const std::vector<Tensor<T>> fg = fx.features(gen);
  if (ft.size() != fg.size() || ft.empty()) {
    throw std::logic_error("feature extractor returned inconsistent taps");
  }
  LossResult<T> out;
  std::vector<Tensor<T>> grads;
  const double taps = static_cast<double>(fg.size());
  for (std::size_t k = 0; k < fg.size(); ++k) {
    if (!(fg[k].shape() == ft[k].shape())) {
      throw std::logic_error("feature extractor returned mismatched feature shapes");
    }
    const double inv = 1.0 / (static_cast<double>(fg[k].size()) * taps);
    Tensor<T> g(fg[k].shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T d = fg[k][i] - ft[k][i];
      out.value += std::abs(static_cast<double>(d)) * inv;
      g[i] = static_cast<T>(sign_of(d) * inv);
    }
    grads.push_back(std::move(g));
  }
  out.grad = fx.backward(grads);
  return out;
}

template <typename T>
PairLoss<T> bce_discriminator_loss(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
  if (scores_real.empty() || scores_fake.empty()) {
    throw std::invalid_argument("bce_discriminator_loss: empty score batch");
  }
  PairLoss<T> out;
  out.grad_real = Tensor<T>(scores_real.shape());
  out.grad_fake = Tensor<T>(scores_fake.shape());
  const double ir = 1.0 / static_cast<double>(scores_real.size());
  const double ifk = 1.0 / static_cast<double>(scores_fake.size());
  for (std::size_t i = 0; i < scores_real.size(); ++i) {
    out.value += nll_sigmoid(scores_real[i]) * ir;
    out.grad_real[i] = static_cast<T>(nll_sigmoid_grad(scores_real[i]) * ir);
  }
  for (std::size_t i = 0; i < scores_fake.size(); ++i) {
    out.value += nll_sigmoid(-scores_fake[i]) * ifk;
    out.grad_fake[i] = static_cast<T>(-nll_sigmoid_grad(-scores_fake[i]) * ifk);
  }
  return out;
}

template <typename T>
RaganLosses<T> ragan_losses(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
  RaganLosses<T> out;
  out.generator = pair_nll(scores_real, scores_fake, -1.0, 1.0);
  out.discriminator = pair_nll(scores_real, scores_fake, 1.0, -1.0);
  return out;
}

template <typename T>
LossResult<T> tv_loss(const Tensor<T>& gen, const Tensor<T>& target) {
  require_same_shape(gen.shape(), target.shape(), "tv_loss");
  const Tensor<T> d = gen - target;
  LossResult<T> out;
  out.grad = Tensor<T>(d.shape());
  const double inv = 1.0 / std::max(1, d.n());
  const int h = d.h();
  const int w = d.w();
  for (int n = 0; n < d.n(); ++n) {
    for (int c = 0; c < d.c(); ++c) {
      const T* p = d.plane(n, c);
      T* g = out.grad.plane(n, c);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          if (x + 1 < w) {
            const T e = p[i + 1] - p[i];
            out.value += std::abs(static_cast<double>(e)) * inv;
            const T s = static_cast<T>(sign_of(e) * inv);
            g[i + 1] += s;
            g[i] -= s;
          }
          if (y + 1 < h) {
            const T e = p[i + w] - p[i];
            out.value += std::abs(static_cast<double>(e)) * inv;
            const T s = static_cast<T>(sign_of(e) * inv);
            g[i + w] += s;
            g[i] -= s;
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
LossResult<T> content_loss(const Tensor<T>& gen, const Tensor<T>& target) {
  require_same_shape(gen.shape(), target.shape(), "content_loss");
  LossResult<T> out;
  out.grad = Tensor<T>(gen.shape());
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, gen.size()));
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const T d = gen[i] - target[i];
    out.value += std::abs(static_cast<double>(d)) * inv;
    out.grad[i] = static_cast<T>(sign_of(d) * inv);
  }
  return out;
}

double lr_total_loss(const LRLossParts& parts) {
  return parts.color + kTextureWeight * parts.tex + kLRPerceptualWeight * parts.per;
}

double sr_total_loss(const SRLossParts& parts) {
  return parts.per + parts.gan + parts.tv + kContentWeight * parts.l1;
}

#define SINESR_INSTANTIATE_LOSSES(T)                                                      \
  template Tensor<T> frequency_filter(const Tensor<T>&, FrequencyBand, int);              \
  template Tensor<T> frequency_filter_adjoint(const Tensor<T>&, FrequencyBand, int);      \
  template class ConvFeatureExtractor<T>;                                                 \
  template LossResult<T> color_loss(const Tensor<T>&, const Tensor<T>&, int);             \
  template LossResult<T> texture_loss_from_scores(const Tensor<T>&);                      \
  template LossResult<T> texture_loss(const Tensor<T>&, Layer<T>&, int);                  \
  template LossResult<T> perceptual_loss(const Tensor<T>&, const Tensor<T>&,              \
                                         FeatureExtractor<T>&);                           \
  template PairLoss<T> bce_discriminator_loss(const Tensor<T>&, const Tensor<T>&);        \
  template RaganLosses<T> ragan_losses(const Tensor<T>&, const Tensor<T>&);               \
  template LossResult<T> tv_loss(const Tensor<T>&, const Tensor<T>&);                     \
  template LossResult<T> content_loss(const Tensor<T>&, const Tensor<T>&);

SINESR_INSTANTIATE_LOSSES(float)
SINESR_INSTANTIATE_LOSSES(double)

}  // namespace sinesr
