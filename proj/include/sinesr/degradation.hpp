#pragma once

// Classical degradation synthesizer y = (k * x) downsampled by s + noise,
// optionally followed by a JPEG round trip, plus the resampling machinery
// shared with the networks' bicubic upsampling layer and the per-image noise
// level estimator.

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/rng.hpp"
#include "sinesr/tensor.hpp"

namespace sinesr {

// ---------------------------------------------------------------------------
// Resampling (imresize conventions: cubic a = -0.5, symmetric borders,
// kernel stretched by 1/scale when antialiasing a downscale).

enum class ResampleKernel { kCubic, kTriangle, kBox };

double cubic_kernel(double x);

// Contribution table of one axis: out_len rows of `taps` (index, weight)
// pairs; weights of a row sum to 1.
struct ResampleWeights {
  int in_len = 0;
  int out_len = 0;
  int taps = 0;
  std::vector<int> index;
  std::vector<double> weight;
};

ResampleWeights resample_weights(int in_len, int out_len, double scale,
                                 ResampleKernel kernel, bool antialias);

// Separable resampler for a fixed input size. forward() maps H x W to
// out_h x out_w; adjoint() applies the transpose (used for backprop).
template <typename T>
class Resizer {
 public:
  Resizer(int in_h, int in_w, int out_h, int out_w, double scale_h, double scale_w,
          ResampleKernel kernel, bool antialias);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> adjoint(const Tensor<T>& g) const;

  int in_h() const { return rows_.in_len; }
  int in_w() const { return cols_.in_len; }
  int out_h() const { return rows_.out_len; }
  int out_w() const { return cols_.out_len; }

 private:
  ResampleWeights rows_;
  ResampleWeights cols_;
  bool rows_first_ = true;
};

// Output size ceil(H * scale) x ceil(W * scale).
template <typename T>
Tensor<T> resize_bicubic(const Tensor<T>& img, double scale, bool antialias = true);

template <typename T>
Tensor<T> resize_bicubic_to(const Tensor<T>& img, int out_h, int out_w,
                            bool antialias = true);

Image resize(const Image& img, double scale, ResampleKernel kernel, bool antialias);

// ---------------------------------------------------------------------------
// Degradation

struct BlurSpec {
  bool enabled = false;
  double stddev = 1.2;
  int kernel_size = 7;
};

enum class Downsampler { kBicubic, kBilinear, kNearest };

struct DegradationSpec {
  BlurSpec blur;
  Downsampler downsampler = Downsampler::kBicubic;
  int scale = 4;
  double noise_sigma = 0.0;  // on the 8-bit intensity scale
  std::optional<int> jpeg_quality;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const DegradationSpec& spec);
void from_json(const nlohmann::json& j, DegradationSpec& spec);

// Normalized separable Gaussian, reflection borders.
Image gaussian_blur(const Image& img, double stddev, int kernel_size);

void add_awgn(Image& img, double sigma, Rng& rng);

// Applies blur, downsampling by spec.scale, AWGN and the optional JPEG round
// trip to a [0, 255] image. The identity spec returns the input unchanged.
Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng);

// Robust noise standard deviation: median(|HH|) / 0.6745 over the finest
// diagonal Haar coefficients of all channels. Needs at least 16 x 16 pixels.
double estimate_sigma(const Image& img);

// Minimum side length accepted by estimate_sigma.
inline constexpr int kMinSigmaEstimateSize = 16;

}  // namespace sinesr
