#include "sinesr/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sinesr/image_io.hpp"
#include "sinesr/nets_core.hpp"

namespace sinesr {

namespace {

double kernel_value(ResampleKernel kernel, double x) {
  switch (kernel) {
    case ResampleKernel::kCubic:
      return cubic_kernel(x);
    case ResampleKernel::kTriangle:
      return std::max(0.0, 1.0 - std::abs(x));
    case ResampleKernel::kBox:
      return (x >= -0.5 && x < 0.5) ? 1.0 : 0.0;
  }
  return 0.0;
}

double kernel_width(ResampleKernel kernel) {
  switch (kernel) {
    case ResampleKernel::kCubic:
      return 4.0;
    case ResampleKernel::kTriangle:
      return 2.0;
    case ResampleKernel::kBox:
      return 1.0;
  }
  return 0.0;
}

template <typename T>
Tensor<T> apply_rows(const Tensor<T>& x, const ResampleWeights& rw) {
  if (x.h() != rw.in_len) throw ShapeError("resample: height mismatch");
  Tensor<T> out(Shape{x.n(), x.c(), rw.out_len, x.w()});
  const int w = x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < rw.out_len; ++oy) {
        T* d = dst + static_cast<std::size_t>(oy) * w;
        for (int t = 0; t < rw.taps; ++t) {
          const double wt = rw.weight[oy * rw.taps + t];
          if (wt == 0.0) continue;
          const T* s = src + static_cast<std::size_t>(rw.index[oy * rw.taps + t]) * w;
          const T tw = static_cast<T>(wt);
          for (int xx = 0; xx < w; ++xx) d[xx] += tw * s[xx];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> apply_rows_adjoint(const Tensor<T>& g, const ResampleWeights& rw) {
  if (g.h() != rw.out_len) throw ShapeError("resample adjoint: height mismatch");
  Tensor<T> out(Shape{g.n(), g.c(), rw.in_len, g.w()});
  const int w = g.w();
  for (int n = 0; n < g.n(); ++n) {
    for (int c = 0; c < g.c(); ++c) {
      const T* src = g.plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < rw.out_len; ++oy) {
        const T* s = src + static_cast<std::size_t>(oy) * w;
        for (int t = 0; t < rw.taps; ++t) {
          const double wt = rw.weight[oy * rw.taps + t];
          if (wt == 0.0) continue;
          T* d = dst + static_cast<std::size_t>(rw.index[oy * rw.taps + t]) * w;
          const T tw = static_cast<T>(wt);
          for (int xx = 0; xx < w; ++xx) d[xx] += tw * s[xx];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> apply_cols(const Tensor<T>& x, const ResampleWeights& cw) {
  if (x.w() != cw.in_len) throw ShapeError("resample: width mismatch");
  Tensor<T> out(Shape{x.n(), x.c(), x.h(), cw.out_len});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < x.h(); ++y) {
        const T* s = x.plane(n, c) + static_cast<std::size_t>(y) * x.w();
        T* d = out.plane(n, c) + static_cast<std::size_t>(y) * cw.out_len;
        for (int ox = 0; ox < cw.out_len; ++ox) {
          double acc = 0.0;
          for (int t = 0; t < cw.taps; ++t) {
            acc += cw.weight[ox * cw.taps + t] * s[cw.index[ox * cw.taps + t]];
          }
          d[ox] = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> apply_cols_adjoint(const Tensor<T>& g, const ResampleWeights& cw) {
  if (g.w() != cw.out_len) throw ShapeError("resample adjoint: width mismatch");
  Tensor<T> out(Shape{g.n(), g.c(), g.h(), cw.in_len});
  for (int n = 0; n < g.n(); ++n) {
    for (int c = 0; c < g.c(); ++c) {
      for (int y = 0; y < g.h(); ++y) {
        const T* s = g.plane(n, c) + static_cast<std::size_t>(y) * g.w();
        T* d = out.plane(n, c) + static_cast<std::size_t>(y) * cw.in_len;
        for (int ox = 0; ox < cw.out_len; ++ox) {
          for (int t = 0; t < cw.taps; ++t) {
            d[cw.index[ox * cw.taps + t]] +=
                static_cast<T>(cw.weight[ox * cw.taps + t] * s[ox]);
          }
        }
      }
    }
  }
  return out;
}

int scaled_length(int len, double scale) {
  // Guard against 64 * 0.25 evaluating to 16.000000000000004.
  return static_cast<int>(std::ceil(len * scale - 1e-9));
}

std::vector<double> gaussian_taps(double stddev, int kernel_size) {
  std::vector<double> taps(kernel_size);
  const int r = kernel_size / 2;
  double total = 0.0;
  for (int i = 0; i < kernel_size; ++i) {
    taps[i] = std::exp(-0.5 * (i - r) * (i - r) / (stddev * stddev));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

}  // namespace

double cubic_kernel(double x) {
  const double a = std::abs(x);
  const double a2 = a * a;
  const double a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a <= 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

ResampleWeights resample_weights(int in_len, int out_len, double scale,
                                 ResampleKernel kernel, bool antialias) {
  if (in_len < 1 || out_len < 1) {
    throw std::invalid_argument("resample: target and source sizes must be >= 1");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("resample: scale must be positive");
  double width = kernel_width(kernel);
  const bool stretch = antialias && scale < 1.0;
  if (stretch) width /= scale;

  ResampleWeights rw;
  rw.in_len = in_len;
  rw.out_len = out_len;
  rw.taps = static_cast<int>(std::ceil(width)) + 2;
  rw.index.resize(static_cast<std::size_t>(out_len) * rw.taps);
  rw.weight.resize(rw.index.size());
  const int period = 2 * in_len;
  for (int i = 0; i < out_len; ++i) {
    // 1-based output coordinate mapped into 1-based input space.
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    double total = 0.0;
    for (int t = 0; t < rw.taps; ++t) {
      const int j = left + t;
      const double d = u - j;
      const double w = stretch ? scale * kernel_value(kernel, scale * d)
                               : kernel_value(kernel, d);
      rw.weight[i * rw.taps + t] = w;
      total += w;
      // Symmetric extension [1..n, n..1] repeated.
      int m = (j - 1) % period;
      if (m < 0) m += period;
      rw.index[i * rw.taps + t] = m < in_len ? m : period - 1 - m;
    }
    for (int t = 0; t < rw.taps; ++t) rw.weight[i * rw.taps + t] /= total;
  }
  return rw;
}

template <typename T>
Resizer<T>::Resizer(int in_h, int in_w, int out_h, int out_w, double scale_h,
                    double scale_w, ResampleKernel kernel, bool antialias)
    : rows_(resample_weights(in_h, out_h, scale_h, kernel, antialias)),
      cols_(resample_weights(in_w, out_w, scale_w, kernel, antialias)),
      rows_first_(scale_h <= scale_w) {}

template <typename T>
Tensor<T> Resizer<T>::forward(const Tensor<T>& x) const {
  if (x.h() != rows_.in_len || x.w() != cols_.in_len) {
    throw ShapeError("resizer: built for " + std::to_string(rows_.in_len) + "x" +
                     std::to_string(cols_.in_len) + ", got " + x.shape().str());
  }
  return rows_first_ ? apply_cols(apply_rows(x, rows_), cols_)
                     : apply_rows(apply_cols(x, cols_), rows_);
}

template <typename T>
Tensor<T> Resizer<T>::adjoint(const Tensor<T>& g) const {
  if (g.h() != rows_.out_len || g.w() != cols_.out_len) {
    throw ShapeError("resizer adjoint: unexpected gradient shape " + g.shape().str());
  }
  return rows_first_ ? apply_rows_adjoint(apply_cols_adjoint(g, cols_), rows_)
                     : apply_cols_adjoint(apply_rows_adjoint(g, rows_), cols_);
}

template <typename T>
Tensor<T> resize_bicubic(const Tensor<T>& img, double scale, bool antialias) {
  if (!(scale > 0.0)) throw std::invalid_argument("resize: scale must be positive");
  const int oh = scaled_length(img.h(), scale);
  const int ow = scaled_length(img.w(), scale);
  if (oh < 1 || ow < 1) throw std::invalid_argument("resize: target size below 1 pixel");
  return Resizer<T>(img.h(), img.w(), oh, ow, scale, scale, ResampleKernel::kCubic,
                    antialias)
      .forward(img);
}

template <typename T>
Tensor<T> resize_bicubic_to(const Tensor<T>& img, int out_h, int out_w, bool antialias) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: target size below 1 pixel");
  return Resizer<T>(img.h(), img.w(), out_h, out_w, static_cast<double>(out_h) / img.h(),
                    static_cast<double>(out_w) / img.w(), ResampleKernel::kCubic, antialias)
      .forward(img);
}

Image resize(const Image& img, double scale, ResampleKernel kernel, bool antialias) {
  const int oh = scaled_length(img.h(), scale);
  const int ow = scaled_length(img.w(), scale);
  if (oh < 1 || ow < 1) throw std::invalid_argument("resize: target size below 1 pixel");
  if (kernel == ResampleKernel::kBox) antialias = false;
  return Resizer<float>(img.h(), img.w(), oh, ow, scale, scale, kernel, antialias)
      .forward(img);
}

// ---------------------------------------------------------------------------

void DegradationSpec::validate() const {
  if (scale < 1) throw std::invalid_argument("degradation.scale must be >= 1");
  if (blur.enabled) {
    if (blur.kernel_size < 1 || blur.kernel_size % 2 == 0) {
      throw std::invalid_argument("degradation.blur.kernel_size must be odd and positive");
    }
    if (!(blur.stddev > 0.0) || !std::isfinite(blur.stddev)) {
      throw std::invalid_argument("degradation.blur.std must be finite and positive");
    }
  }
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw std::invalid_argument("degradation.sigma must be finite and >= 0");
  }
  if (jpeg_quality && (*jpeg_quality < 1 || *jpeg_quality > 100)) {
    throw std::invalid_argument("degradation.jpeg_quality must lie in [1, 100]");
  }
}

NLOHMANN_JSON_SERIALIZE_ENUM(Downsampler, {{Downsampler::kBicubic, "bicubic"},
                                           {Downsampler::kBilinear, "bilinear"},
                                           {Downsampler::kNearest, "nearest"}})

void to_json(nlohmann::json& j, const DegradationSpec& spec) {
  j = nlohmann::json::object();
  j["blur"] = {{"type", spec.blur.enabled ? "gaussian" : "none"},
               {"std", spec.blur.stddev},
               {"kernel_size", spec.blur.kernel_size}};
  j["downsampler"] = spec.downsampler;
  j["scale"] = spec.scale;
  j["sigma"] = spec.noise_sigma;
  j["jpeg_quality"] = spec.jpeg_quality ? nlohmann::json(*spec.jpeg_quality) : nlohmann::json();
}

void from_json(const nlohmann::json& j, DegradationSpec& spec) {
  DegradationSpec out;
  if (j.contains("blur")) {
    const auto& b = j.at("blur");
    const std::string type = b.is_string() ? b.get<std::string>() : b.value("type", "none");
    if (type == "gaussian") {
      out.blur.enabled = true;
      if (b.is_object()) {
        out.blur.stddev = b.value("std", out.blur.stddev);
        out.blur.kernel_size = b.value("kernel_size", out.blur.kernel_size);
      }
    } else if (type != "none") {
      throw std::invalid_argument("degradation.blur.type must be 'none' or 'gaussian'");
    }
  }
  if (j.contains("downsampler")) {
    const auto name = j.at("downsampler").get<std::string>();
    if (name != "bicubic" && name != "bilinear" && name != "nearest") {
      throw std::invalid_argument("degradation.downsampler: unknown value '" + name + "'");
    }
    out.downsampler = j.at("downsampler").get<Downsampler>();
  }
  out.scale = j.value("scale", out.scale);
  out.noise_sigma = j.value("sigma", out.noise_sigma);
  if (j.contains("jpeg_quality") && !j.at("jpeg_quality").is_null()) {
    out.jpeg_quality = j.at("jpeg_quality").get<int>();
  }
  out.validate();
  spec = out;
}

Image gaussian_blur(const Image& img, double stddev, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian_blur: kernel size must be odd");
  }
  const std::vector<double> taps = gaussian_taps(stddev, kernel_size);
  const int r = kernel_size / 2;
  const auto ymap = padded_axis_map(img.h(), r, img.h() + 2 * r, PaddingMode::kReflection);
  const auto xmap = padded_axis_map(img.w(), r, img.w() + 2 * r, PaddingMode::kReflection);
  Image tmp(img.shape());
  Image out(img.shape());
  for (int n = 0; n < img.n(); ++n) {
    for (int c = 0; c < img.c(); ++c) {
      for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x) {
          double acc = 0.0;
          for (int t = 0; t < kernel_size; ++t) acc += taps[t] * img(n, c, ymap[y + t], x);
          tmp(n, c, y, x) = static_cast<float>(acc);
        }
      }
      for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x) {
          double acc = 0.0;
          for (int t = 0; t < kernel_size; ++t) acc += taps[t] * tmp(n, c, y, xmap[x + t]);
          out(n, c, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

void add_awgn(Image& img, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_awgn: sigma must be >= 0");
  if (sigma == 0.0) return;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : img.values()) v = static_cast<float>(v + dist(rng));
}

Image degrade(const Image& hr, const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  Image out = hr;
  if (spec.blur.enabled) out = gaussian_blur(out, spec.blur.stddev, spec.blur.kernel_size);
  if (spec.scale > 1) {
    const double s = 1.0 / spec.scale;
    switch (spec.downsampler) {
      case Downsampler::kBicubic:
        out = resize(out, s, ResampleKernel::kCubic, true);
        break;
      case Downsampler::kBilinear:
        out = resize(out, s, ResampleKernel::kTriangle, true);
        break;
      case Downsampler::kNearest:
        out = resize(out, s, ResampleKernel::kBox, false);
        break;
    }
  }
  add_awgn(out, spec.noise_sigma, rng);
  if (spec.jpeg_quality) out = jpeg_roundtrip(out, *spec.jpeg_quality);
  return out;
}

double estimate_sigma(const Image& img) {
  if (img.h() < kMinSigmaEstimateSize || img.w() < kMinSigmaEstimateSize) {
    throw ShapeError("estimate_sigma: image must be at least 16x16, got " + img.shape().str());
  }
  const int hh = img.h() / 2;
  const int hw = img.w() / 2;
  std::vector<double> coeffs;
  coeffs.reserve(static_cast<std::size_t>(img.n()) * img.c() * hh * hw);
  for (int n = 0; n < img.n(); ++n) {
    for (int c = 0; c < img.c(); ++c) {
      for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < hw; ++x) {
          const double a = img(n, c, 2 * y, 2 * x);
          const double b = img(n, c, 2 * y, 2 * x + 1);
          const double d = img(n, c, 2 * y + 1, 2 * x);
          const double e = img(n, c, 2 * y + 1, 2 * x + 1);
          coeffs.push_back(std::abs(a - b - d + e) / 2.0);
        }
      }
    }
  }
  const std::size_t mid = coeffs.size() / 2;
  std::nth_element(coeffs.begin(), coeffs.begin() + mid, coeffs.end());
  double median = coeffs[mid];
  if (coeffs.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(coeffs.begin(), coeffs.begin() + mid));
  }
  return median / 0.6745;
}

template class Resizer<float>;
template class Resizer<double>;
template Tensor<float> resize_bicubic(const Tensor<float>&, double, bool);
template Tensor<double> resize_bicubic(const Tensor<double>&, double, bool);
template Tensor<float> resize_bicubic_to(const Tensor<float>&, int, int, bool);
template Tensor<double> resize_bicubic_to(const Tensor<double>&, int, int, bool);

}  // namespace sinesr
