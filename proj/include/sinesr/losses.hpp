#pragma once

// Training objectives of both stages. Every loss returns its value together
// with the gradient wrt the generated image (or the scores), so trainers can
// chain straight into the networks' backward passes.
//
// Reductions: l1-type losses average over every element of the batch; the
// total-variation loss sums per image and averages over the batch.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/nets_core.hpp"

namespace sinesr {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;
};

// Lower clamp of probabilities inside logarithms.
inline constexpr double kLogGuard = 1e-8;

// ---------------------------------------------------------------------------
// Frequency separation: low = box filter (reflection borders), high = x - low.

enum class FrequencyBand { kLow, kHigh };

inline constexpr int kDefaultLowPassSize = 5;

template <typename T>
Tensor<T> frequency_filter(const Tensor<T>& img, FrequencyBand band,
                           int kernel_size = kDefaultLowPassSize);
// Transpose of frequency_filter(., band, kernel_size).
template <typename T>
Tensor<T> frequency_filter_adjoint(const Tensor<T>& grad, FrequencyBand band,
                                   int kernel_size = kDefaultLowPassSize);

// ---------------------------------------------------------------------------
// Feature extractors

template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // One tensor per tap; caches state for backward().
  virtual std::vector<Tensor<T>> features(const Tensor<T>& x) = 0;
  // Gradients wrt each tap of the most recent features() call (an empty
  // tensor means zero); returns the gradient wrt the input.
  virtual Tensor<T> backward(const std::vector<Tensor<T>>& grads) = 0;
  virtual std::string name() const = 0;
};

enum class Activation { kNone, kRelu, kLeakyRelu };

struct ExtractorStage {
  int in_channels = 3;
  int out_channels = 16;
  int kernel = 3;
  int stride = 1;
  Activation activation = Activation::kLeakyRelu;
  bool pool_after = false;
};

struct FeatureExtractorConfig {
  // Container with tensors "stages.<i>.weight" / "stages.<i>.bias"; empty or
  // missing falls back to seeded random weights.
  std::string weights_path;
  std::vector<ExtractorStage> stages{
      {3, 16, 3, 1, Activation::kLeakyRelu, false},
      {16, 32, 3, 2, Activation::kLeakyRelu, false},
      {32, 32, 3, 1, Activation::kLeakyRelu, false},
  };
  // Stage indices whose outputs are returned.
  std::vector<int> taps{1, 2};
  // Multiplies the input before the first stage.
  double input_scale = 1.0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const FeatureExtractorConfig& c);
void from_json(const nlohmann::json& j, FeatureExtractorConfig& c);

template <typename T>
class ConvFeatureExtractor : public FeatureExtractor<T> {
 public:
  explicit ConvFeatureExtractor(const FeatureExtractorConfig& config);

  std::vector<Tensor<T>> features(const Tensor<T>& x) override;
  Tensor<T> backward(const std::vector<Tensor<T>>& grads) override;
  std::string name() const override { return name_; }

  bool pretrained() const { return pretrained_; }
  Conv2d<T>& conv(int stage) { return *convs_.at(stage); }

 private:
  FeatureExtractorConfig config_;
  std::vector<std::unique_ptr<Conv2d<T>>> convs_;
  std::vector<std::unique_ptr<Layer<T>>> acts_;
  std::vector<std::unique_ptr<MaxPool2<T>>> pools_;
  bool pretrained_ = false;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Losses

// Mean |low(gen) - low(target)|.
template <typename T>
LossResult<T> color_loss(const Tensor<T>& gen, const Tensor<T>& target,
                         int kernel_size = kDefaultLowPassSize);

// -mean log(clamp(sigmoid(s))) over all scores; gradient wrt the scores.
template <typename T>
LossResult<T> texture_loss_from_scores(const Tensor<T>& scores);

// Texture loss of the high-pass generated image scored by `disc`. The
// gradient is wrt gen; disc parameter gradients accumulate as a side effect.
template <typename T>
LossResult<T> texture_loss(const Tensor<T>& gen, Layer<T>& disc,
                           int kernel_size = kDefaultLowPassSize);

// Average over taps of the mean |f(gen) - f(target)|.
template <typename T>
LossResult<T> perceptual_loss(const Tensor<T>& gen, const Tensor<T>& target,
                              FeatureExtractor<T>& fx);

// Binary cross-entropy on raw scores with the guarded logarithm:
// -mean log p(real) - mean log (1 - p(fake)).
template <typename T>
struct PairLoss {
  double value = 0.0;
  Tensor<T> grad_real;
  Tensor<T> grad_fake;
};

template <typename T>
PairLoss<T> bce_discriminator_loss(const Tensor<T>& scores_real, const Tensor<T>& scores_fake);

// Relativistic average losses. D(a, b) = sigmoid(C(a) - mean C(b));
// generator = -mean log(1 - D(real, fake)) - mean log D(fake, real),
// discriminator = -mean log D(real, fake) - mean log(1 - D(fake, real)).
template <typename T>
struct RaganLosses {
  PairLoss<T> generator;
  PairLoss<T> discriminator;
};

template <typename T>
RaganLosses<T> ragan_losses(const Tensor<T>& scores_real, const Tensor<T>& scores_fake);

// Batch mean of the per-image sum of |grad(gen) - grad(target)| over forward
// differences in both directions.
template <typename T>
LossResult<T> tv_loss(const Tensor<T>& gen, const Tensor<T>& target);

// Mean |gen - target|.
template <typename T>
LossResult<T> content_loss(const Tensor<T>& gen, const Tensor<T>& target);

struct LRLossParts {
  double color = 0.0;
  double tex = 0.0;
  double per = 0.0;
};

struct SRLossParts {
  double per = 0.0;
  double gan = 0.0;
  double tv = 0.0;
  double l1 = 0.0;
};

inline constexpr double kTextureWeight = 0.005;
inline constexpr double kLRPerceptualWeight = 0.01;
inline constexpr double kContentWeight = 10.0;

double lr_total_loss(const LRLossParts& parts);
double sr_total_loss(const SRLossParts& parts);

}  // namespace sinesr
