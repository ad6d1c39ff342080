#pragma once

// Patch sampling, dihedral augmentation, mixture-of-augmentations (MOA) and
// synthesized-pair datasets for both training stages.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/degradation.hpp"
#include "sinesr/lr_model.hpp"

namespace sinesr {

enum class Provenance { kBicubic, kLearned, kClassical };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// Full-size aligned pair on [0, 255]: hr is exactly scale x lr.
struct ImagePair {
  Image lr;
  Image hr;
  Provenance provenance = Provenance::kBicubic;
  std::string name;
};

struct PatchPair {
  Image lr;
  Image hr;
  Provenance provenance = Provenance::kBicubic;
};

// Aligned random crop: LR patch of lr_patch pixels at (y, x) and HR patch at
// (scale * y, scale * x). Throws std::invalid_argument when the LR image is
// smaller than the patch and ShapeError when the sizes are not aligned.
PatchPair sample_patch_pair(const ImagePair& pair, int scale, int lr_patch, Rng& rng);

Image random_crop(const Image& img, int size, Rng& rng);

// ---------------------------------------------------------------------------
// Dihedral group: element k in [0, 8) rotates by (k & 3) quarter turns
// counter-clockwise, then flips horizontally when k & 4.

inline constexpr int kDihedralOrder = 8;

template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int k);
template <typename T>
Tensor<T> inverse_dihedral(const Tensor<T>& x, int k);

// Applies one uniformly drawn element to both members; returns it.
int geometric_augment(PatchPair& pair, Rng& rng);

// ---------------------------------------------------------------------------
// MOA

enum class MOATechnique { kBlend, kRgbPermutation, kMixup, kCutout, kCutmix, kCutmixup, kCutBlur };

std::string moa_technique_name(MOATechnique t);
MOATechnique moa_technique_from_name(const std::string& name);

struct MOAConfig {
  std::vector<MOATechnique> techniques{
      MOATechnique::kBlend,  MOATechnique::kRgbPermutation, MOATechnique::kMixup,
      MOATechnique::kCutout, MOATechnique::kCutmix,         MOATechnique::kCutmixup,
      MOATechnique::kCutBlur};
  double blend_min = 0.2;
  double blend_max = 0.8;
  double mixup_alpha = 1.2;
  double cutout_ratio = 0.1;
  double box_area_min = 0.1;
  double box_area_max = 0.4;
};

void to_json(nlohmann::json& j, const MOAConfig& c);
void from_json(const nlohmann::json& j, MOAConfig& c);

// A training batch: lr is N x C x h x w, hr is N x C x sh x sw.
struct PairBatch {
  Tensorf lr;
  Tensorf hr;
  // Noise estimate of each sample's full source LR image.
  std::vector<double> source_sigma;
};

struct Box {
  int y = 0;
  int x = 0;
  int h = 0;
  int w = 0;
};

// Box covering `area_fraction` of an h x w image at a random position.
Box random_box(int h, int w, double area_fraction, Rng& rng);

// Primitive operations, partner[i] is the sample mixed into sample i.
void moa_blend(PairBatch& b, double v, const std::vector<float>& color);
void moa_rgb_permutation(PairBatch& b, const std::vector<int>& perm);
void moa_mixup(PairBatch& b, const std::vector<int>& partner, double lambda);
// Zeroes exactly ceil(ratio * h * w) LR pixel sites (all channels) per sample.
void moa_cutout(PairBatch& b, double ratio, Rng& rng);
void moa_cutmix(PairBatch& b, const std::vector<int>& partner, const Box& lr_box);
void moa_cutmixup(PairBatch& b, const std::vector<int>& partner, const Box& lr_box,
                  double lambda);
// Inside the box, the bicubic upsample of LR is replaced by HR; the mixture
// is resampled back to LR size. HR is unchanged.
void moa_cutblur(PairBatch& b, const Box& lr_box);

// Draws one technique uniformly from cfg and applies it with random
// parameters. Throws std::invalid_argument for an empty technique set.
MOATechnique moa_augment(PairBatch& b, const MOAConfig& cfg, int scale, Rng& rng);

// ---------------------------------------------------------------------------
// Datasets

struct ManifestRecord {
  std::string lr_path;
  std::string hr_path;
  Provenance provenance = Provenance::kBicubic;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ManifestRecord& r);
void from_json(const nlohmann::json& j, ManifestRecord& r);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Loads every pair of a manifest (paths relative to the manifest directory).
// Unreadable pairs are skipped with a warning; throws DataError when none load.
std::vector<ImagePair> load_pairs(const std::filesystem::path& manifest, int scale);

// How LR images are produced from HR images.
struct PairSynthesizer {
  Provenance provenance = Provenance::kBicubic;
  int scale = 4;
  DegradationSpec spec;                     // classical
  LRGenerator<float>* generator = nullptr;  // learned, fed the bicubic downscale
};

// LR image for one HR image; seed drives the classical noise draw.
Image synthesize_lr(const Image& hr, const PairSynthesizer& synth, std::uint64_t seed);

// Crops HR to a multiple of the scale and pairs it with its synthesized LR.
ImagePair make_pair(const Image& hr, const PairSynthesizer& synth, std::uint64_t seed,
                    const std::string& name = "");

// Writes lr/<stem>.png, hr/<stem>.png and manifest.jsonl into out_dir for
// every readable input; returns the number of pairs written.
std::size_t synthesize_pairs(const std::vector<std::filesystem::path>& hr_paths,
                             const PairSynthesizer& synth, std::uint64_t global_seed,
                             const std::filesystem::path& out_dir);

// Epoch-shuffled index stream with a serializable position. The order of
// epoch e is a permutation drawn from derive_seed(seed, e).
class IndexSampler {
 public:
  IndexSampler(std::size_t count, std::uint64_t seed);
  std::size_t next();
  std::vector<std::size_t> next(std::size_t n);

  std::uint64_t epoch() const { return epoch_; }
  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  void reshuffle();

  std::size_t count_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

struct PairLoaderOptions {
  int scale = 4;
  int lr_patch = 32;
  int batch = 16;
  bool geometric = true;
  bool moa = false;
  MOAConfig moa_config;
};

// Draws augmented patch batches from an in-memory pair set.
class PairLoader {
 public:
  PairLoader(const std::vector<ImagePair>& pairs, const PairLoaderOptions& opt,
             std::uint64_t seed);

  PairBatch next(Rng& rng);
  const std::vector<ImagePair>& pairs() const { return pairs_; }
  IndexSampler& sampler() { return sampler_; }
  const IndexSampler& sampler() const { return sampler_; }

 private:
  const std::vector<ImagePair>& pairs_;
  PairLoaderOptions opt_;
  IndexSampler sampler_;
  std::vector<double> sigma_;
};

// Smooth synthetic test image (sum of random sinusoids and gradients plus a
// few discs) on [0, 255].
Image synthetic_image(int h, int w, Rng& rng);

}  // namespace sinesr
