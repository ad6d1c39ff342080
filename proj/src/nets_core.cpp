#include "sinesr/nets_core.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sinesr {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; larger outputs are processed in
// bands of output rows.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

template <typename T>
Tensor<T> uniform_tensor(double bound, Shape shape, Rng& rng) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

struct ConvGeometry {
  int in_h = 0;
  int in_w = 0;
  int out_h = 0;
  int out_w = 0;
  int rows_per_band = 1;
  int k_dim = 0;
  std::vector<int> ymap;
  std::vector<int> xmap;
};

ConvGeometry conv_geometry(const ConvOptions& opt, const Shape& in) {
  if (in.c != opt.in_channels) {
    throw ShapeError("conv: expected " + std::to_string(opt.in_channels) +
                     " input channels, got shape " + in.str());
  }
  const int pad = opt.effective_padding();
  const int hp = in.h + 2 * pad;
  const int wp = in.w + 2 * pad;
  if (in.h < 1 || in.w < 1 || hp < opt.kernel || wp < opt.kernel) {
    throw ShapeError("conv: input " + in.str() + " smaller than kernel " +
                     std::to_string(opt.kernel));
  }
  ConvGeometry g;
  g.in_h = in.h;
  g.in_w = in.w;
  g.out_h = (hp - opt.kernel) / opt.stride + 1;
  g.out_w = (wp - opt.kernel) / opt.stride + 1;
  g.k_dim = opt.in_channels * opt.kernel * opt.kernel;
  g.rows_per_band = static_cast<int>(std::max<std::size_t>(
      1, kColumnBudget / (static_cast<std::size_t>(g.k_dim) * g.out_w)));
  g.rows_per_band = std::min(g.rows_per_band, g.out_h);
  g.ymap = padded_axis_map(in.h, pad, hp, opt.mode);
  g.xmap = padded_axis_map(in.w, pad, wp, opt.mode);
  return g;
}

// Gathers the receptive fields of output rows [row0, row0 + rows) into a
// (k_dim x rows * out_w) matrix.
template <typename T>
void im2col(const T* x, const ConvOptions& opt, const ConvGeometry& g, int row0,
            int rows, T* col) {
  const int k = opt.kernel;
  const int s = opt.stride;
  const std::size_t cols = static_cast<std::size_t>(rows) * g.out_w;
  for (int c = 0; c < opt.in_channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = g.ymap[(row0 + oy) * s + ky];
          T* d = dst + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0) {
            std::fill(d, d + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = g.xmap[ox * s + kx];
            d[ox] = ix < 0 ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
// Reflected taps fold onto their source pixels.
template <typename T>
void col2im(const T* col, const ConvOptions& opt, const ConvGeometry& g, int row0,
            int rows, T* dx) {
  const int k = opt.kernel;
  const int s = opt.stride;
  const std::size_t cols = static_cast<std::size_t>(rows) * g.out_w;
  for (int c = 0; c < opt.in_channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = g.ymap[(row0 + oy) * s + ky];
          if (iy < 0) continue;
          T* d = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* sr = src + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = g.xmap[ox * s + kx];
            if (ix >= 0) d[ix] += sr[ox];
          }
        }
      }
    }
  }
}

void require_cache(const void* p, const char* layer) {
  if (p == nullptr) {
    throw std::logic_error(std::string(layer) +
                           ": backward() without a recorded forward()");
  }
}

}  // namespace

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params) {
    if (p.param->trainable) total += p.param->value.size();
  }
  return total;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& p : params) p.param->zero_grad();
}

double siren_bound(int fan_in) {
  if (fan_in < 1) throw std::invalid_argument("siren_init: fan_in must be >= 1");
  return std::sqrt(6.0 / fan_in);
}

template <typename T>
Tensor<T> siren_init(int fan_in, Shape shape, Rng& rng) {
  return uniform_tensor<T>(siren_bound(fan_in), shape, rng);
}

template <typename T>
Tensor<T> kaiming_uniform_init(int fan_in, Shape shape, Rng& rng) {
  if (fan_in < 1) throw std::invalid_argument("kaiming_uniform_init: fan_in must be >= 1");
  return uniform_tensor<T>(1.0 / std::sqrt(static_cast<double>(fan_in)), shape, rng);
}

std::vector<int> padded_axis_map(int len, int pad_before, int padded_len,
                                 PaddingMode mode) {
  if (mode == PaddingMode::kReflection &&
      (pad_before >= len || padded_len - len - pad_before >= len)) {
    throw ShapeError("reflection padding " + std::to_string(pad_before) +
                     " needs an axis longer than the pad, got " + std::to_string(len));
  }
  std::vector<int> map(padded_len);
  for (int i = 0; i < padded_len; ++i) {
    int src = i - pad_before;
    if (src < 0 || src >= len) {
      if (mode == PaddingMode::kZero) {
        src = -1;
      } else {
        src = src < 0 ? -src : 2 * (len - 1) - src;
      }
    }
    map[i] = src;
  }
  return map;
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvOptions& opt, Rng& rng) : Conv2d(opt) {
  const int fan_in = opt.in_channels * opt.kernel * opt.kernel;
  weight_.value = kaiming_uniform_init<T>(fan_in, weight_.value.shape(), rng);
}

template <typename T>
Conv2d<T>::Conv2d(const ConvOptions& opt)
    : opt_(opt),
      weight_(Tensor<T>(opt.out_channels, opt.in_channels, opt.kernel, opt.kernel)),
      bias_(Tensor<T>(opt.bias ? opt.out_channels : 0, 1, 1, 1)) {
  if (opt.in_channels < 1 || opt.out_channels < 1 || opt.kernel < 1 || opt.stride < 1) {
    throw std::invalid_argument("conv: channels, kernel and stride must be positive");
  }
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  const ConvGeometry g = conv_geometry(opt_, in);
  return Shape{in.n, opt_.out_channels, g.out_h, g.out_w};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  const ConvGeometry g = conv_geometry(opt_, x.shape());
  const int cout = opt_.out_channels;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  Tensor<T> out(Shape{x.n(), cout, g.out_h, g.out_w});
  std::vector<T> col(static_cast<std::size_t>(g.k_dim) * g.rows_per_band * g.out_w);
  ConstMatMap<T> w(weight_.value.data(), cout, g.k_dim);

  for (int n = 0; n < x.n(); ++n) {
    for (int row0 = 0; row0 < g.out_h; row0 += g.rows_per_band) {
      const int rows = std::min(g.rows_per_band, g.out_h - row0);
      const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.out_w;
      im2col(x.sample(n), opt_, g, row0, rows, col.data());
      ConstMatMap<T> colm(col.data(), g.k_dim, cols);
      StridedMap<T> dst(out.sample(n) + static_cast<std::size_t>(row0) * g.out_w, cout,
                        cols, Eigen::OuterStride<>(out_plane));
      dst.noalias() = w * colm;
    }
    if (opt_.bias) {
      for (int c = 0; c < cout; ++c) {
        T* p = out.plane(n, c);
        const T b = bias_.value[c];
        for (std::size_t i = 0; i < out_plane; ++i) p[i] += b;
      }
    }
  }
  if (this->recording_) input_ = x;
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(input_.empty() ? nullptr : &input_, "conv");
  const ConvGeometry g = conv_geometry(opt_, input_.shape());
  const int cout = opt_.out_channels;
  require_same_shape(grad_out.shape(), Shape{input_.n(), cout, g.out_h, g.out_w},
                     "conv backward");
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  Tensor<T> dx(input_.shape());
  std::vector<T> col(static_cast<std::size_t>(g.k_dim) * g.rows_per_band * g.out_w);
  std::vector<T> dcol(col.size());
  ConstMatMap<T> w(weight_.value.data(), cout, g.k_dim);
  MatMap<T> dw(weight_.grad.data(), cout, g.k_dim);

  for (int n = 0; n < input_.n(); ++n) {
    for (int row0 = 0; row0 < g.out_h; row0 += g.rows_per_band) {
      const int rows = std::min(g.rows_per_band, g.out_h - row0);
      const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.out_w;
      im2col(input_.sample(n), opt_, g, row0, rows, col.data());
      ConstMatMap<T> colm(col.data(), g.k_dim, cols);
      ConstStridedMap<T> gm(grad_out.sample(n) + static_cast<std::size_t>(row0) * g.out_w,
                            cout, cols, Eigen::OuterStride<>(out_plane));
      dw.noalias() += gm * colm.transpose();
      MatMap<T> dcolm(dcol.data(), g.k_dim, cols);
      dcolm.noalias() = w.transpose() * gm;
      col2im(dcol.data(), opt_, g, row0, rows, dx.sample(n));
    }
    if (opt_.bias) {
      for (int c = 0; c < cout; ++c) {
        const T* p = grad_out.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) acc += p[i];
        bias_.grad[c] += static_cast<T>(acc);
      }
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  out.push_back({join_name(prefix, "weight"), &weight_});
  if (opt_.bias) out.push_back({join_name(prefix, "bias"), &bias_});
}

// ---------------------------------------------------------------------------
// SineLayer

template <typename T>
SineLayer<T>::SineLayer(int in_channels, int out_channels, double omega0, Rng& rng)
    : SineLayer(in_channels, out_channels, omega0) {
  weight_.value = siren_init<T>(in_channels, weight_.value.shape(), rng);
}

template <typename T>
SineLayer<T>::SineLayer(int in_channels, int out_channels, double omega0)
    : in_(in_channels),
      out_(out_channels),
      omega0_(omega0),
      weight_(Tensor<T>(out_channels, in_channels, 1, 1)) {
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("sine layer: channel counts must be positive");
  }
}

template <typename T>
Tensor<T> SineLayer<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_) {
    throw ShapeError("sine layer: expected " + std::to_string(in_) +
                     " channels, got " + x.shape().str());
  }
  const Eigen::Index hw = static_cast<Eigen::Index>(x.shape().plane());
  Tensor<T> out(Shape{x.n(), out_, x.h(), x.w()});
  if (this->recording_) cos_pre_ = Tensor<T>(out.shape());
  ConstMatMap<T> w(weight_.value.data(), out_, in_);
  const T omega = static_cast<T>(omega0_);
  for (int n = 0; n < x.n(); ++n) {
    MatMap<T> pre(out.sample(n), out_, hw);
    pre.noalias() = w * ConstMatMap<T>(x.sample(n), in_, hw);
    T* o = out.sample(n);
    T* cp = this->recording_ ? cos_pre_.sample(n) : nullptr;
    const std::size_t count = static_cast<std::size_t>(out_) * hw;
    for (std::size_t i = 0; i < count; ++i) {
      const T z = omega * o[i];
      if (cp) cp[i] = std::cos(z);
      o[i] = std::sin(z);
    }
  }
  if (this->recording_) input_ = x;
  return out;
}

template <typename T>
Tensor<T> SineLayer<T>::backward(const Tensor<T>& grad_out) {
  require_cache(input_.empty() ? nullptr : &input_, "sine layer");
  require_same_shape(grad_out.shape(), cos_pre_.shape(), "sine backward");
  const Eigen::Index hw = static_cast<Eigen::Index>(input_.shape().plane());
  Tensor<T> dx(input_.shape());
  ConstMatMap<T> w(weight_.value.data(), out_, in_);
  MatMap<T> dw(weight_.grad.data(), out_, in_);
  const T omega = static_cast<T>(omega0_);
  RowMat<T> gpre(out_, hw);
  for (int n = 0; n < input_.n(); ++n) {
    const T* g = grad_out.sample(n);
    const T* cp = cos_pre_.sample(n);
    T* gp = gpre.data();
    const std::size_t count = static_cast<std::size_t>(out_) * hw;
    for (std::size_t i = 0; i < count; ++i) gp[i] = g[i] * cp[i] * omega;
    dw.noalias() += gpre * ConstMatMap<T>(input_.sample(n), in_, hw).transpose();
    MatMap<T>(dx.sample(n), in_, hw).noalias() = w.transpose() * gpre;
  }
  return dx;
}

template <typename T>
void SineLayer<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  out.push_back({join_name(prefix, "weight"), &weight_});
}

// ---------------------------------------------------------------------------
// ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(const ResidualBlockOptions& opt, Rng& rng) : opt_(opt) {
  build(&rng);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(const ResidualBlockOptions& opt) : opt_(opt) {
  build(nullptr);
}

template <typename T>
void ResidualBlock<T>::build(Rng* rng) {
  ConvOptions conv{opt_.channels, opt_.channels, opt_.kernel, 1, -1, opt_.padding, true};
  auto make_conv = [&] {
    return rng ? std::make_unique<Conv2d<T>>(conv, *rng) : std::make_unique<Conv2d<T>>(conv);
  };
  auto make_sine = [&] {
    return rng ? std::make_unique<SineLayer<T>>(opt_.channels, opt_.channels, opt_.omega0, *rng)
               : std::make_unique<SineLayer<T>>(opt_.channels, opt_.channels, opt_.omega0);
  };
  if (opt_.arrangement == BlockArrangement::kSandwich) {
    conv_a_ = make_conv();
    sines_.push_back(make_sine());
    conv_b_ = make_conv();
    path_ = {conv_a_.get(), sines_[0].get(), conv_b_.get()};
  } else {
    sines_.push_back(make_sine());
    conv_a_ = make_conv();
    sines_.push_back(make_sine());
    conv_b_ = make_conv();
    path_ = {sines_[0].get(), conv_a_.get(), sines_[1].get(), conv_b_.get()};
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) {
  if (x.c() != opt_.channels) {
    throw ShapeError("residual block: expected " + std::to_string(opt_.channels) +
                     " channels, got " + x.shape().str());
  }
  Tensor<T> h = x;
  for (Layer<T>* layer : path_) h = layer->forward(h);
  h += x;
  return h;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = path_.rbegin(); it != path_.rend(); ++it) g = (*it)->backward(g);
  g += grad_out;
  return g;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  if (opt_.arrangement == BlockArrangement::kSandwich) {
    conv_a_->collect_parameters(join_name(prefix, "conv_a"), out);
    sines_[0]->collect_parameters(join_name(prefix, "sine"), out);
    conv_b_->collect_parameters(join_name(prefix, "conv_b"), out);
  } else {
    sines_[0]->collect_parameters(join_name(prefix, "sine_a"), out);
    conv_a_->collect_parameters(join_name(prefix, "conv_a"), out);
    sines_[1]->collect_parameters(join_name(prefix, "sine_b"), out);
    conv_b_->collect_parameters(join_name(prefix, "conv_b"), out);
  }
}

template <typename T>
void ResidualBlock<T>::set_training(bool on) {
  Layer<T>::set_training(on);
  for (Layer<T>* layer : path_) layer->set_training(on);
}

template <typename T>
void ResidualBlock<T>::set_recording(bool on) {
  Layer<T>::set_recording(on);
  for (Layer<T>* layer : path_) layer->set_recording(on);
}

// ---------------------------------------------------------------------------
// Pointwise layers

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  const T slope = static_cast<T>(slope_);
  for (auto& v : out.values()) v = v > T(0) ? v : v * slope;
  if (this->recording_) input_ = x;
  return out;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& grad_out) {
  require_cache(input_.empty() ? nullptr : &input_, "leaky relu");
  require_same_shape(grad_out.shape(), input_.shape(), "leaky relu backward");
  Tensor<T> dx = grad_out;
  const T slope = static_cast<T>(slope_);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > T(0))) dx[i] *= slope;
  }
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  if (this->recording_) output_ = out;
  return out;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_out) {
  require_cache(output_.empty() ? nullptr : &output_, "sigmoid");
  require_same_shape(grad_out.shape(), output_.shape(), "sigmoid backward");
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (T(1) - output_[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(Tensor<T>(channels, 1, 1, 1, T(1))),
      beta_(Tensor<T>(channels, 1, 1, 1)),
      running_mean_(Tensor<T>(channels, 1, 1, 1), false),
      running_var_(Tensor<T>(channels, 1, 1, 1, T(1)), false) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != channels_) throw ShapeError("batch norm: channel mismatch " + x.shape().str());
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<double> inv_std(channels_);
  const bool batch_stats = this->training_;
  for (int c = 0; c < channels_; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (batch_stats) {
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= count;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= count;
      if (update_running_) {
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean_.value[c] = static_cast<T>((1 - momentum_) * running_mean_.value[c] +
                                                momentum_ * mean);
        running_var_.value[c] = static_cast<T>((1 - momentum_) * running_var_.value[c] +
                                               momentum_ * unbiased);
      }
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + eps_);
    const T g = gamma_.value[c];
    const T b = beta_.value[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      T* xh = xhat.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = static_cast<T>((p[i] - mean) * inv_std[c]);
        o[i] = g * xh[i] + b;
      }
    }
  }
  if (this->recording_) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
    used_batch_stats_ = batch_stats;
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(xhat_.empty() ? nullptr : &xhat_, "batch norm");
  require_same_shape(grad_out.shape(), xhat_.shape(), "batch norm backward");
  const std::size_t plane = xhat_.shape().plane();
  const double count = static_cast<double>(plane) * xhat_.n();
  Tensor<T> dx(xhat_.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int n = 0; n < xhat_.n(); ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    gamma_.grad[c] += static_cast<T>(sum_gx);
    beta_.grad[c] += static_cast<T>(sum_g);
    const double scale = gamma_.value[c] * inv_std_[c];
    for (int n = 0; n < xhat_.n(); ++n) {
      const T* g = grad_out.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      T* d = dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        d[i] = used_batch_stats_
                   ? static_cast<T>(scale * (g[i] - sum_g / count - xh[i] * sum_gx / count))
                   : static_cast<T>(scale * g[i]);
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  out.push_back({join_name(prefix, "weight"), &gamma_});
  out.push_back({join_name(prefix, "bias"), &beta_});
  out.push_back({join_name(prefix, "running_mean"), &running_mean_});
  out.push_back({join_name(prefix, "running_var"), &running_var_});
}

// ---------------------------------------------------------------------------
// Pooling and dense layers

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  Tensor<T> out(Shape{x.n(), x.c(), 1, 1});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out(n, c, 0, 0) = static_cast<T>(acc / plane);
    }
  }
  in_shape_ = x.shape();
  return out;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const std::size_t plane = in_shape_.plane();
  for (int n = 0; n < in_shape_.n; ++n) {
    for (int c = 0; c < in_shape_.c; ++c) {
      const T g = grad_out(n, c, 0, 0) / static_cast<T>(plane);
      T* p = dx.plane(n, c);
      std::fill(p, p + plane, g);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x) {
  const int oh = x.h() / 2;
  const int ow = x.w() / 2;
  if (oh < 1 || ow < 1) throw ShapeError("max pool: input too small " + x.shape().str());
  Tensor<T> out(Shape{x.n(), x.c(), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  std::size_t k = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++k) {
          std::size_t best = 0;
          T best_v = T(0);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(n) * x.c() + c) * x.h() + 2 * y + dy) * x.w() +
                  2 * xx + dx;
              if ((dy == 0 && dx == 0) || x[idx] > best_v) {
                best = idx;
                best_v = x[idx];
              }
            }
          }
          out[k] = best_v;
          argmax[k] = best;
        }
      }
    }
  }
  in_shape_ = x.shape();
  if (this->recording_) argmax_ = std::move(argmax);
  return out;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& grad_out) {
  if (argmax_.size() != grad_out.size()) throw ShapeError("max pool backward: shape mismatch");
  Tensor<T> dx(in_shape_);
  for (std::size_t k = 0; k < argmax_.size(); ++k) dx[argmax_[k]] += grad_out[k];
  return dx;
}

template <typename T>
Linear<T>::Linear(int in, int out, Rng& rng)
    : in_(in),
      out_(out),
      weight_(kaiming_uniform_init<T>(in, Shape{out, in, 1, 1}, rng)),
      bias_(Tensor<T>(out, 1, 1, 1)) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (x.shape().sample() != static_cast<std::size_t>(in_)) {
    throw ShapeError("linear: expected " + std::to_string(in_) + " features, got " +
                     x.shape().str());
  }
  Tensor<T> out(Shape{x.n(), out_, 1, 1});
  ConstMatMap<T> w(weight_.value.data(), out_, in_);
  ConstMatMap<T> xm(x.data(), x.n(), in_);
  MatMap<T> om(out.data(), x.n(), out_);
  om.noalias() = xm * w.transpose();
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < out_; ++o) om(n, o) += bias_.value[o];
  }
  if (this->recording_) input_ = x;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  require_cache(input_.empty() ? nullptr : &input_, "linear");
  ConstMatMap<T> w(weight_.value.data(), out_, in_);
  ConstMatMap<T> xm(input_.data(), input_.n(), in_);
  ConstMatMap<T> gm(grad_out.data(), input_.n(), out_);
  MatMap<T>(weight_.grad.data(), out_, in_).noalias() += gm.transpose() * xm;
  for (int n = 0; n < input_.n(); ++n) {
    for (int o = 0; o < out_; ++o) bias_.grad[o] += gm(n, o);
  }
  Tensor<T> dx(input_.shape());
  MatMap<T>(dx.data(), input_.n(), in_).noalias() = gm * w;
  return dx;
}

template <typename T>
void Linear<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  out.push_back({join_name(prefix, "weight"), &weight_});
  out.push_back({join_name(prefix, "bias"), &bias_});
}

// ---------------------------------------------------------------------------
// Sequential

template <typename T>
Layer<T>& Sequential<T>::add(std::string name, std::unique_ptr<Layer<T>> layer) {
  layer->set_training(this->training_);
  layer->set_recording(this->recording_);
  layers_.emplace_back(std::move(name), std::move(layer));
  return *layers_.back().second;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_parameters(const std::string& prefix, ParamList<T>& out) {
  for (auto& [name, layer] : layers_) layer->collect_parameters(join_name(prefix, name), out);
}

template <typename T>
void Sequential<T>::set_training(bool on) {
  Layer<T>::set_training(on);
  for (auto& entry : layers_) entry.second->set_training(on);
}

template <typename T>
void Sequential<T>::set_recording(bool on) {
  Layer<T>::set_recording(on);
  for (auto& entry : layers_) entry.second->set_recording(on);
}

#define SINESR_INSTANTIATE(T)                                                \
  template std::size_t count_parameters(const ParamList<T>&);                \
  template void zero_grads(const ParamList<T>&);                             \
  template Tensor<T> siren_init(int, Shape, Rng&);                           \
  template Tensor<T> kaiming_uniform_init(int, Shape, Rng&);                 \
  template class Conv2d<T>;                                                  \
  template class SineLayer<T>;                                               \
  template class ResidualBlock<T>;                                           \
  template class LeakyReLU<T>;                                               \
  template class Sigmoid<T>;                                                 \
  template class BatchNorm2d<T>;                                             \
  template class GlobalAvgPool<T>;                                           \
  template class MaxPool2<T>;                                                \
  template class Linear<T>;                                                  \
  template class Sequential<T>;

SINESR_INSTANTIATE(float)
SINESR_INSTANTIATE(double)
#undef SINESR_INSTANTIATE

}  // namespace sinesr
