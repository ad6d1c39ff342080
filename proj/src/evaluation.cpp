#include "sinesr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "sinesr/image_io.hpp"
#include "sinesr/sr_model.hpp"

namespace sinesr {

namespace {

// Valid separable correlation of one plane with a 1-D kernel.
std::vector<double> valid_filter(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int d = 0; d < n; ++d) acc += k[d] * src[static_cast<std::size_t>(y) * w + x + d];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int d = 0; d < n; ++d) acc += k[d] * rows[static_cast<std::size_t>(y + d) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

MetricRow score(const std::string& name, const SRModelFn& model, const ImagePair& pair,
                FeatureExtractor<float>& fx, bool ensemble) {
  MetricRow row;
  row.name = name;
  Image sr;
  if (ensemble) {
    EnsembleResult r = self_ensemble(model, pair.lr);
    double mse = 0.0;
    for (const auto& p : r.predictions) {
      require_same_shape(p.shape(), pair.hr.shape(), "evaluation");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - pair.hr[i];
        mse += d * d;
      }
    }
    mse /= static_cast<double>(pair.hr.size() * r.predictions.size());
    row.psnr_transform_pool = mse == 0.0 ? std::numeric_limits<double>::infinity()
                                         : 10.0 * std::log10(255.0 * 255.0 / mse);
    sr = std::move(r.output);
  } else {
    sr = model(pair.lr);
  }
  if (!(sr.shape() == pair.hr.shape())) {
    throw DataError("model output " + sr.shape().str() + " does not match HR " +
                    pair.hr.shape().str());
  }
  row.psnr_db = psnr(sr, pair.hr);
  row.ssim = ssim(sr, pair.hr);
  row.perceptual = perceptual_distance(sr, pair.hr, fx);
  return row;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (a.h() < opt.window || a.w() < opt.window) {
    throw ShapeError("ssim needs at least " + std::to_string(opt.window) + "x" +
                     std::to_string(opt.window) + " pixels, got " + a.shape().str());
  }
  const std::vector<double> k = gaussian_window(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.range) * (opt.k1 * opt.range);
  const double c2 = (opt.k2 * opt.range) * (opt.k2 * opt.range);
  const int h = a.h();
  const int w = a.w();
  const std::size_t plane = a.shape().plane();
  double total = 0.0;
  int planes = 0;
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) {
      std::vector<double> x(a.plane(n, c), a.plane(n, c) + plane);
      std::vector<double> y(b.plane(n, c), b.plane(n, c) + plane);
      std::vector<double> xx(plane), yy(plane), xy(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = valid_filter(x, h, w, k);
      const auto my = valid_filter(y, h, w, k);
      const auto sxx = valid_filter(xx, h, w, k);
      const auto syy = valid_filter(yy, h, w, k);
      const auto sxy = valid_filter(xy, h, w, k);
      double acc = 0.0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      total += acc / static_cast<double>(mx.size());
      ++planes;
    }
  }
  return total / planes;
}

double perceptual_distance(const Image& a, const Image& b, FeatureExtractor<float>& fx) {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  const auto fa = fx.features(a);
  const auto fb = fx.features(b);
  double total = 0.0;
  for (std::size_t t = 0; t < fa.size(); ++t) {
    const Tensorf& x = fa[t];
    const Tensorf& y = fb[t];
    const std::size_t plane = x.shape().plane();
    double acc = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      for (std::size_t p = 0; p < plane; ++p) {
        double nx = 0.0;
        double ny = 0.0;
        for (int c = 0; c < x.c(); ++c) {
          nx += static_cast<double>(x.plane(n, c)[p]) * x.plane(n, c)[p];
          ny += static_cast<double>(y.plane(n, c)[p]) * y.plane(n, c)[p];
        }
        nx = std::sqrt(nx) + 1e-10;
        ny = std::sqrt(ny) + 1e-10;
        for (int c = 0; c < x.c(); ++c) {
          const double d = x.plane(n, c)[p] / nx - y.plane(n, c)[p] / ny;
          acc += d * d;
        }
      }
    }
    total += acc / static_cast<double>(plane * x.n());
  }
  return total / static_cast<double>(fa.size());
}

EnsembleResult self_ensemble(const SRModelFn& model, const Image& lr) {
  EnsembleResult r;
  for (int k = 0; k < kDihedralOrder; ++k) {
    r.predictions.push_back(inverse_dihedral(model(dihedral(lr, k)), k));
  }
  const Shape s = r.predictions.front().shape();
  std::vector<double> acc(s.numel(), 0.0);
  for (const auto& p : r.predictions) {
    require_same_shape(p.shape(), s, "self_ensemble");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  r.output = Image(s);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    r.output[i] = static_cast<float>(acc[i] / kDihedralOrder);
  }
  r.output = clip_output(r.output);
  return r;
}

Image self_ensemble_infer(const SRModelFn& model, const Image& lr) {
  return self_ensemble(model, lr).output;
}

Aggregate aggregate(std::vector<double> values) {
  Aggregate a;
  if (values.empty()) return a;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (!std::isfinite(a.mean)) {
    a.std = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(sq / static_cast<double>(values.size()));
  return a;
}

void MetricReport::recompute() {
  std::vector<double> p, s, q;
  for (const auto& r : rows) {
    p.push_back(r.psnr_db);
    s.push_back(r.ssim);
    q.push_back(r.perceptual);
  }
  psnr = aggregate(p);
  ssim = aggregate(s);
  perceptual = aggregate(q);
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "name,psnr_db,ssim,perceptual";
  if (self_ensemble) out << ",psnr_transform_pool";
  out << '\n';
  for (const auto& r : rows) {
    out << r.name << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ','
        << format_metric(r.perceptual);
    if (self_ensemble) out << ',' << format_metric(r.psnr_transform_pool);
    out << '\n';
  }
}

nlohmann::json MetricReport::summary() const {
  const auto agg = [](const Aggregate& a) {
    return nlohmann::json{{"mean", format_metric(a.mean)}, {"std", format_metric(a.std)}};
  };
  return {{"count", rows.size()},
          {"psnr_db", agg(psnr)},
          {"ssim", agg(ssim)},
          {"perceptual", agg(perceptual)},
          {"checkpoint", checkpoint},
          {"dataset", dataset},
          {"color_space", color_space},
          {"extractor", extractor},
          {"self_ensemble", self_ensemble}};
}

std::string MetricReport::triple() const {
  return fmt::format("PSNR {:.2f} dB / SSIM {:.4f} / perceptual {:.4f} ({})", psnr.mean,
                     ssim.mean, perceptual.mean, extractor);
}

MetricReport evaluate_pairs(const SRModelFn& model, const std::vector<ImagePair>& pairs,
                            FeatureExtractor<float>& fx, const EvalOptions& opt) {
  if (pairs.empty()) throw DataError("evaluation set is empty");
  MetricReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string name = pairs[i].name.empty() ? std::to_string(i) : pairs[i].name;
    try {
      report.rows.push_back(score(name, model, pairs[i], fx, opt.self_ensemble));
    } catch (const DataError& e) {
      spdlog::warn("skipping {}: {}", name, e.what());
    }
  }
  report.checkpoint = opt.checkpoint;
  report.dataset = opt.dataset;
  report.extractor = fx.name();
  report.self_ensemble = opt.self_ensemble;
  report.recompute();
  return report;
}

MetricReport evaluate_dataset(const SRModelFn& model, const std::vector<EvalItem>& items,
                              FeatureExtractor<float>& fx, const EvalOptions& opt) {
  if (items.empty()) throw DataError("evaluation set is empty");
  MetricReport report;
  for (const auto& item : items) {
    try {
      ImagePair pair{read_image(item.lr_path), read_image(item.hr_path), Provenance::kBicubic,
                     item.name};
      report.rows.push_back(score(item.name, model, pair, fx, opt.self_ensemble));
    } catch (const DataError& e) {
      spdlog::warn("skipping {}: {}", item.name, e.what());
    }
  }
  report.checkpoint = opt.checkpoint;
  report.dataset = opt.dataset;
  report.extractor = fx.name();
  report.self_ensemble = opt.self_ensemble;
  report.recompute();
  return report;
}

std::vector<EvalItem> eval_items_from_manifest(const std::filesystem::path& manifest) {
  std::vector<EvalItem> items;
  const auto base = manifest.parent_path();
  for (const auto& r : read_manifest(manifest)) {
    items.push_back({std::filesystem::path(r.lr_path).stem().string(), base / r.lr_path,
                     base / r.hr_path});
  }
  return items;
}

}  // namespace sinesr
