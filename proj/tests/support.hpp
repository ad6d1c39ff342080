#pragma once

// Shared helpers for the unit and acceptance tests: random tensors, central
// finite differences and brute-force reference implementations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "sinesr/nets_core.hpp"
#include "sinesr/rng.hpp"
#include "sinesr/tensor.hpp"

namespace sinesr::testing {

inline constexpr double kFdStep = 1e-6;

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(uniform_real(rng, lo, hi));
  return t;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Central differences of a scalar function of x, one entry per element.
inline std::vector<double> numeric_gradient(const std::function<double(const Tensord&)>& f,
                                            Tensord x, double h = kFdStep) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const double up = f(x);
    x[i] = v - h;
    const double down = f(x);
    x[i] = v;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Central differences wrt a parameter tensor (modified in place and restored).
inline std::vector<double> numeric_param_gradient(const std::function<double()>& f,
                                                  Tensord& p, double h = kFdStep) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p[i];
    p[i] = v + h;
    const double up = f();
    p[i] = v - h;
    const double down = f();
    p[i] = v;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> to_vector(const Tensord& t) {
  return {t.values().begin(), t.values().end()};
}

// Worst relative error of a layer's input and parameter gradients for the
// probe loss <g, layer(x)>.
inline double layer_gradient_error(Layer<double>& layer, const Tensord& x, Rng& rng) {
  const Tensord y = layer.forward(x);
  const Tensord g = random_tensor<double>(y.shape(), rng);
  auto params = layer.parameters();
  zero_grads(params);
  layer.forward(x);
  const Tensord dx = layer.backward(g);
  auto probe = [&](const Tensord& in) { return dot(layer.forward(in), g); };
  double worst = relative_error(to_vector(dx), numeric_gradient(probe, x));
  for (auto& np : params) {
    if (!np.param->trainable) continue;
    const std::vector<double> analytic = to_vector(np.param->grad);
    const auto numeric = numeric_param_gradient([&] { return probe(x); }, np.param->value);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// Direct-convolution imresize reference: cubic a = -0.5, kernel stretched by
// 1/scale when antialiasing a downscale, symmetric borders.
inline double ref_cubic(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

inline int ref_mirror(int j, int len) {
  const int period = 2 * len;
  j %= period;
  if (j < 0) j += period;
  return j < len ? j : period - 1 - j;
}

inline std::vector<std::vector<double>> ref_resample_matrix(int in_len, int out_len, double scale,
                                                            bool antialias) {
  std::vector<std::vector<double>> m(out_len, std::vector<double>(in_len, 0.0));
  const double stretch = (antialias && scale < 1.0) ? scale : 1.0;
  for (int i = 0; i < out_len; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    std::vector<double> row(in_len, 0.0);
    double total = 0.0;
    const int reach = static_cast<int>(std::ceil(2.0 / stretch)) + 2;
    for (int j = static_cast<int>(std::floor(center)) - reach;
         j <= static_cast<int>(std::floor(center)) + reach; ++j) {
      const double w = stretch * ref_cubic(stretch * (center - j));
      row[ref_mirror(j, in_len)] += w;
      total += w;
    }
    for (int j = 0; j < in_len; ++j) m[i][j] = row[j] / total;
  }
  return m;
}

inline Tensord ref_resize(const Tensord& img, int out_h, int out_w, double scale_h,
                          double scale_w, bool antialias) {
  const auto rows = ref_resample_matrix(img.h(), out_h, scale_h, antialias);
  const auto cols = ref_resample_matrix(img.w(), out_w, scale_w, antialias);
  Tensord out(img.n(), img.c(), out_h, out_w);
  for (int n = 0; n < img.n(); ++n) {
    for (int c = 0; c < img.c(); ++c) {
      for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
          double acc = 0.0;
          for (int i = 0; i < img.h(); ++i) {
            if (rows[y][i] == 0.0) continue;
            for (int j = 0; j < img.w(); ++j) acc += rows[y][i] * cols[x][j] * img(n, c, i, j);
          }
          out(n, c, y, x) = acc;
        }
      }
    }
  }
  return out;
}

// Per-window SSIM: every 11 x 11 valid window evaluated directly.
inline double ref_ssim(const Tensorf& a, const Tensorf& b) {
  const int win = 11;
  const double sigma = 1.5;
  std::vector<double> w(win * win);
  double total = 0.0;
  for (int y = 0; y < win; ++y) {
    for (int x = 0; x < win; ++x) {
      const double dy = y - win / 2;
      const double dx = x - win / 2;
      w[y * win + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      total += w[y * win + x];
    }
  }
  for (auto& v : w) v /= total;
  const double c1 = std::pow(0.01 * 255.0, 2);
  const double c2 = std::pow(0.03 * 255.0, 2);
  double acc = 0.0;
  long count = 0;
  for (int c = 0; c < a.c(); ++c) {
    for (int y0 = 0; y0 + win <= a.h(); ++y0) {
      for (int x0 = 0; x0 + win <= a.w(); ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = 0; y < win; ++y) {
          for (int x = 0; x < win; ++x) {
            const double wt = w[y * win + x];
            const double va = a(0, c, y0 + y, x0 + x);
            const double vb = b(0, c, y0 + y, x0 + x);
            ma += wt * va;
            mb += wt * vb;
            saa += wt * va * va;
            sbb += wt * vb * vb;
            sab += wt * va * vb;
          }
        }
        const double va = saa - ma * ma;
        const double vb = sbb - mb * mb;
        const double cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return acc / count;
}

// Two-sided Kolmogorov-Smirnov statistic against U(lo, hi).
inline double ks_uniform_statistic(std::vector<double> s, double lo, double hi) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double cdf = std::clamp((s[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d;
}

// Asymptotic critical value of the KS statistic at significance 0.01.
inline double ks_critical_001(std::size_t n) { return 1.62762 / std::sqrt(static_cast<double>(n)); }

}  // namespace sinesr::testing
