#pragma once

// Fidelity and perceptual metrics on [0, 255] RGB images, self-ensemble
// inference and dataset reports.

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/data_pipeline.hpp"
#include "sinesr/losses.hpp"

namespace sinesr {

// 10 log10(255^2 / MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 255.0;
};

// Gaussian-windowed SSIM over valid window positions, averaged over channels
// and positions. Throws ShapeError when the image is smaller than the window.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

// Mean over taps of the spatial mean of the squared difference between
// channel-normalized feature vectors.
double perceptual_distance(const Image& a, const Image& b, FeatureExtractor<float>& fx);

// Super-resolves one LR image.
using SRModelFn = std::function<Image(const Image&)>;

struct EnsembleResult {
  Image output;
  // Aligned prediction of each dihedral element.
  std::vector<Image> predictions;
};

EnsembleResult self_ensemble(const SRModelFn& model, const Image& lr);
// Mean of the 8 aligned predictions, clipped to [0, 255].
Image self_ensemble_infer(const SRModelFn& model, const Image& lr);

struct MetricRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double perceptual = 0.0;
  // Self-ensemble only: PSNR of the mean MSE of the per-transform predictions.
  double psnr_transform_pool = std::numeric_limits<double>::quiet_NaN();
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

// Order-independent (values are sorted before summation).
Aggregate aggregate(std::vector<double> values);

struct MetricReport {
  std::vector<MetricRow> rows;
  Aggregate psnr;
  Aggregate ssim;
  Aggregate perceptual;
  std::string checkpoint;
  std::string dataset;
  std::string color_space = "RGB";
  std::string extractor;
  bool self_ensemble = false;

  void recompute();
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
  // "PSNR / SSIM / perceptual" triple for console output.
  std::string triple() const;
};

// Formats a metric for CSV: "inf" / "-inf" / "nan" or shortest round-trip.
std::string format_metric(double v);

struct EvalItem {
  std::string name;
  std::filesystem::path lr_path;
  std::filesystem::path hr_path;
};

struct EvalOptions {
  bool self_ensemble = false;
  std::string checkpoint;
  std::string dataset;
};

// Unreadable or misaligned items are skipped with a warning.
MetricReport evaluate_dataset(const SRModelFn& model, const std::vector<EvalItem>& items,
                              FeatureExtractor<float>& fx, const EvalOptions& opt);
MetricReport evaluate_pairs(const SRModelFn& model, const std::vector<ImagePair>& pairs,
                            FeatureExtractor<float>& fx, const EvalOptions& opt);

// Items from a pair manifest, paths resolved against its directory.
std::vector<EvalItem> eval_items_from_manifest(const std::filesystem::path& manifest);

}  // namespace sinesr
