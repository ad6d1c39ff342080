#include "sinesr/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "sinesr/image_io.hpp"

namespace sinesr {

namespace {

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_indices(idx, rng);
  return {idx.begin(), idx.end()};
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  Image out(1, img.c(), h, w);
  for (int c = 0; c < img.c(); ++c) {
    for (int y = 0; y < h; ++y) {
      const float* src = &img(0, c, y0 + y, x0);
      std::copy(src, src + w, &out(0, c, y, 0));
    }
  }
  return out;
}

template <typename T>
Tensor<T> rot90(const Tensor<T>& x) {
  Tensor<T> out(x.n(), x.c(), x.w(), x.h());
  const int w = x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) out(n, c, y, xx) = x(n, c, xx, w - 1 - y);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_h(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < x.h(); ++y) {
        for (int xx = 0; xx < x.w(); ++xx) out(n, c, y, xx) = x(n, c, y, x.w() - 1 - xx);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> rotate(const Tensor<T>& x, int quarter_turns) {
  Tensor<T> out = x;
  for (int i = 0; i < quarter_turns; ++i) out = rot90(out);
  return out;
}

void check_element(int k) {
  if (k < 0 || k >= kDihedralOrder) throw std::invalid_argument("dihedral element out of range");
}

int batch_scale(const PairBatch& b) {
  if (b.lr.n() != b.hr.n() || b.lr.h() == 0 || b.hr.h() % b.lr.h() != 0 ||
      b.hr.w() != b.lr.w() * (b.hr.h() / b.lr.h())) {
    throw ShapeError("misaligned pair batch " + b.lr.shape().str() + " / " + b.hr.shape().str());
  }
  return b.hr.h() / b.lr.h();
}

// Replaces the box of sample i in dst with the same box of sample j in src
// blended by weight lambda (1 = src only).
void paste_box(Tensorf& dst, const Tensorf& src, int i, int j, const Box& box, double lambda) {
  const auto l = static_cast<float>(lambda);
  for (int c = 0; c < dst.c(); ++c) {
    for (int y = box.y; y < box.y + box.h; ++y) {
      for (int x = box.x; x < box.x + box.w; ++x) {
        dst(i, c, y, x) = l * src(j, c, y, x) + (1.0f - l) * dst(i, c, y, x);
      }
    }
  }
}

Box scale_box(const Box& b, int s) { return {b.y * s, b.x * s, b.h * s, b.w * s}; }

}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kBicubic:
      return "bicubic";
    case Provenance::kLearned:
      return "learned_G_LR";
    case Provenance::kClassical:
      return "classical_spec";
  }
  return "bicubic";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "bicubic") return Provenance::kBicubic;
  if (name == "learned_G_LR" || name == "learned") return Provenance::kLearned;
  if (name == "classical_spec" || name == "classical") return Provenance::kClassical;
  throw std::invalid_argument("unknown provenance '" + name + "'");
}

PatchPair sample_patch_pair(const ImagePair& pair, int scale, int lr_patch, Rng& rng) {
  if (lr_patch < 1) throw std::invalid_argument("patch size must be positive");
  if (pair.hr.h() != pair.lr.h() * scale || pair.hr.w() != pair.lr.w() * scale) {
    throw ShapeError("pair is not aligned at scale " + std::to_string(scale) + ": " +
                     pair.lr.shape().str() + " / " + pair.hr.shape().str());
  }
  if (pair.lr.h() < lr_patch || pair.lr.w() < lr_patch) {
    throw std::invalid_argument("image " + pair.lr.shape().str() + " smaller than patch " +
                                std::to_string(lr_patch));
  }
  const int y = uniform_index(rng, pair.lr.h() - lr_patch + 1);
  const int x = uniform_index(rng, pair.lr.w() - lr_patch + 1);
  return {crop(pair.lr, y, x, lr_patch, lr_patch),
          crop(pair.hr, y * scale, x * scale, lr_patch * scale, lr_patch * scale),
          pair.provenance};
}

Image random_crop(const Image& img, int size, Rng& rng) {
  if (img.h() < size || img.w() < size) {
    throw std::invalid_argument("image " + img.shape().str() + " smaller than crop " +
                                std::to_string(size));
  }
  const int y = uniform_index(rng, img.h() - size + 1);
  const int x = uniform_index(rng, img.w() - size + 1);
  return crop(img, y, x, size, size);
}

template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int k) {
  check_element(k);
  Tensor<T> out = rotate(x, k & 3);
  return (k & 4) ? flip_h(out) : out;
}

template <typename T>
Tensor<T> inverse_dihedral(const Tensor<T>& x, int k) {
  check_element(k);
  const Tensor<T> unflipped = (k & 4) ? flip_h(x) : x;
  return rotate(unflipped, (4 - (k & 3)) % 4);
}

template Tensor<float> dihedral(const Tensor<float>&, int);
template Tensor<double> dihedral(const Tensor<double>&, int);
template Tensor<float> inverse_dihedral(const Tensor<float>&, int);
template Tensor<double> inverse_dihedral(const Tensor<double>&, int);

int geometric_augment(PatchPair& pair, Rng& rng) {
  const int k = uniform_index(rng, kDihedralOrder);
  pair.lr = dihedral(pair.lr, k);
  pair.hr = dihedral(pair.hr, k);
  return k;
}

// ---------------------------------------------------------------------------

std::string moa_technique_name(MOATechnique t) {
  switch (t) {
    case MOATechnique::kBlend:
      return "blend";
    case MOATechnique::kRgbPermutation:
      return "rgb";
    case MOATechnique::kMixup:
      return "mixup";
    case MOATechnique::kCutout:
      return "cutout";
    case MOATechnique::kCutmix:
      return "cutmix";
    case MOATechnique::kCutmixup:
      return "cutmixup";
    case MOATechnique::kCutBlur:
      return "cutblur";
  }
  return "blend";
}

MOATechnique moa_technique_from_name(const std::string& name) {
  for (auto t : MOAConfig{}.techniques) {
    if (moa_technique_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown MOA technique '" + name + "'");
}

void to_json(nlohmann::json& j, const MOAConfig& c) {
  std::vector<std::string> names;
  for (auto t : c.techniques) names.push_back(moa_technique_name(t));
  j = {{"techniques", names},
       {"blend_min", c.blend_min},
       {"blend_max", c.blend_max},
       {"mixup_alpha", c.mixup_alpha},
       {"cutout_ratio", c.cutout_ratio},
       {"box_area_min", c.box_area_min},
       {"box_area_max", c.box_area_max}};
}

void from_json(const nlohmann::json& j, MOAConfig& c) {
  MOAConfig d;
  if (j.contains("techniques")) {
    d.techniques.clear();
    for (const auto& n : j.at("techniques")) {
      d.techniques.push_back(moa_technique_from_name(n.get<std::string>()));
    }
  }
  d.blend_min = j.value("blend_min", d.blend_min);
  d.blend_max = j.value("blend_max", d.blend_max);
  d.mixup_alpha = j.value("mixup_alpha", d.mixup_alpha);
  d.cutout_ratio = j.value("cutout_ratio", d.cutout_ratio);
  d.box_area_min = j.value("box_area_min", d.box_area_min);
  d.box_area_max = j.value("box_area_max", d.box_area_max);
  if (!(d.blend_min <= d.blend_max) || !(d.box_area_min <= d.box_area_max) ||
      d.box_area_min <= 0.0 || d.box_area_max > 1.0 || d.cutout_ratio < 0.0 ||
      d.cutout_ratio > 1.0 || d.mixup_alpha <= 0.0) {
    throw std::invalid_argument("moa: inconsistent parameter ranges");
  }
  c = d;
}

Box random_box(int h, int w, double area_fraction, Rng& rng) {
  const double side = std::sqrt(std::clamp(area_fraction, 0.0, 1.0));
  Box b;
  b.h = std::clamp(static_cast<int>(std::lround(h * side)), 1, h);
  b.w = std::clamp(static_cast<int>(std::lround(w * side)), 1, w);
  b.y = uniform_index(rng, h - b.h + 1);
  b.x = uniform_index(rng, w - b.w + 1);
  return b;
}

void moa_blend(PairBatch& b, double v, const std::vector<float>& color) {
  if (color.size() != static_cast<std::size_t>(b.lr.c())) {
    throw std::invalid_argument("blend color needs one value per channel");
  }
  const auto fv = static_cast<float>(v);
  for (Tensorf* t : {&b.lr, &b.hr}) {
    for (int n = 0; n < t->n(); ++n) {
      for (int c = 0; c < t->c(); ++c) {
        float* p = t->plane(n, c);
        for (std::size_t i = 0; i < t->shape().plane(); ++i) {
          p[i] = fv * p[i] + (1.0f - fv) * color[c];
        }
      }
    }
  }
}

void moa_rgb_permutation(PairBatch& b, const std::vector<int>& perm) {
  if (perm.size() != static_cast<std::size_t>(b.lr.c())) {
    throw std::invalid_argument("channel permutation size mismatch");
  }
  for (Tensorf* t : {&b.lr, &b.hr}) {
    const Tensorf src = *t;
    for (int n = 0; n < t->n(); ++n) {
      for (int c = 0; c < t->c(); ++c) {
        std::copy(src.plane(n, perm[c]), src.plane(n, perm[c]) + src.shape().plane(),
                  t->plane(n, c));
      }
    }
  }
}

void moa_mixup(PairBatch& b, const std::vector<int>& partner, double lambda) {
  const auto l = static_cast<float>(lambda);
  for (Tensorf* t : {&b.lr, &b.hr}) {
    const Tensorf src = *t;
    for (int n = 0; n < t->n(); ++n) {
      const float* other = src.sample(partner.at(n));
      float* p = t->sample(n);
      for (std::size_t i = 0; i < t->shape().sample(); ++i) {
        p[i] = l * p[i] + (1.0f - l) * other[i];
      }
    }
  }
}

void moa_cutout(PairBatch& b, double ratio, Rng& rng) {
  const std::size_t sites = b.lr.shape().plane();
  const auto count =
      std::min(sites, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(sites))));
  std::vector<std::size_t> idx(sites);
  for (int n = 0; n < b.lr.n(); ++n) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, static_cast<int>(sites - i)));
      std::swap(idx[i], idx[j]);
      for (int c = 0; c < b.lr.c(); ++c) b.lr.plane(n, c)[idx[i]] = 0.0f;
    }
  }
}

void moa_cutmix(PairBatch& b, const std::vector<int>& partner, const Box& lr_box) {
  moa_cutmixup(b, partner, lr_box, 1.0);
}

void moa_cutmixup(PairBatch& b, const std::vector<int>& partner, const Box& lr_box,
                  double lambda) {
  const int s = batch_scale(b);
  const PairBatch src = b;
  for (int n = 0; n < b.lr.n(); ++n) {
    paste_box(b.lr, src.lr, n, partner.at(n), lr_box, lambda);
    paste_box(b.hr, src.hr, n, partner.at(n), scale_box(lr_box, s), lambda);
  }
}

void moa_cutblur(PairBatch& b, const Box& lr_box) {
  const int s = batch_scale(b);
  const Box hr_box = scale_box(lr_box, s);
  for (int n = 0; n < b.lr.n(); ++n) {
    Tensorf up = resize_bicubic_to(b.lr.slice(n, 1), b.hr.h(), b.hr.w());
    const Tensorf hr = b.hr.slice(n, 1);
    paste_box(up, hr, 0, 0, hr_box, 1.0);
    const Tensorf lr = resize_bicubic_to(up, b.lr.h(), b.lr.w());
    std::copy(lr.data(), lr.data() + lr.size(), b.lr.sample(n));
  }
}

MOATechnique moa_augment(PairBatch& b, const MOAConfig& cfg, int scale, Rng& rng) {
  if (cfg.techniques.empty()) throw std::invalid_argument("MOA: no technique enabled");
  if (batch_scale(b) != scale) throw ShapeError("MOA: batch scale differs from configured scale");
  const MOATechnique t =
      cfg.techniques[uniform_index(rng, static_cast<int>(cfg.techniques.size()))];
  const int n = b.lr.n();
  const auto area = [&] { return uniform_real(rng, cfg.box_area_min, cfg.box_area_max); };
  switch (t) {
    case MOATechnique::kBlend: {
      const double v = uniform_real(rng, cfg.blend_min, cfg.blend_max);
      std::vector<float> color(b.lr.c());
      for (auto& c : color) c = static_cast<float>(uniform_real(rng, 0.0, 255.0));
      moa_blend(b, v, color);
      break;
    }
    case MOATechnique::kRgbPermutation:
      moa_rgb_permutation(b, random_permutation(b.lr.c(), rng));
      break;
    case MOATechnique::kMixup: {
      const double lambda = beta_sample(rng, cfg.mixup_alpha, cfg.mixup_alpha);
      moa_mixup(b, random_permutation(n, rng), lambda);
      break;
    }
    case MOATechnique::kCutout:
      moa_cutout(b, cfg.cutout_ratio, rng);
      break;
    case MOATechnique::kCutmix: {
      const auto partner = random_permutation(n, rng);
      moa_cutmix(b, partner, random_box(b.lr.h(), b.lr.w(), area(), rng));
      break;
    }
    case MOATechnique::kCutmixup: {
      const auto partner = random_permutation(n, rng);
      const Box box = random_box(b.lr.h(), b.lr.w(), area(), rng);
      moa_cutmixup(b, partner, box, beta_sample(rng, cfg.mixup_alpha, cfg.mixup_alpha));
      break;
    }
    case MOATechnique::kCutBlur:
      moa_cutblur(b, random_box(b.lr.h(), b.lr.w(), area(), rng));
      break;
  }
  return t;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ManifestRecord& r) {
  j = {{"lr_path", r.lr_path},
       {"hr_path", r.hr_path},
       {"provenance", provenance_name(r.provenance)},
       {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, ManifestRecord& r) {
  r.lr_path = j.at("lr_path").get<std::string>();
  r.hr_path = j.at("hr_path").get<std::string>();
  r.provenance = provenance_from_name(j.at("provenance").get<std::string>());
  r.seed = j.value("seed", std::uint64_t{0});
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<ManifestRecord>());
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ImagePair> load_pairs(const std::filesystem::path& manifest, int scale) {
  const auto base = manifest.parent_path();
  std::vector<ImagePair> out;
  for (const auto& r : read_manifest(manifest)) {
    try {
      ImagePair p{read_image(base / r.lr_path), read_image(base / r.hr_path), r.provenance,
                  std::filesystem::path(r.lr_path).stem().string()};
      if (p.hr.h() != p.lr.h() * scale || p.hr.w() != p.lr.w() * scale) {
        throw DataError("pair " + r.lr_path + " is not aligned at scale " + std::to_string(scale));
      }
      out.push_back(std::move(p));
    } catch (const DataError& e) {
      spdlog::warn("skipping pair: {}", e.what());
    }
  }
  if (out.empty()) throw DataError("no usable pairs in " + manifest.string());
  return out;
}

Image synthesize_lr(const Image& hr, const PairSynthesizer& synth, std::uint64_t seed) {
  switch (synth.provenance) {
    case Provenance::kBicubic:
      return resize_bicubic(hr, 1.0 / synth.scale);
    case Provenance::kClassical: {
      DegradationSpec spec = synth.spec;
      spec.scale = synth.scale;
      Rng rng(seed);
      return degrade(hr, spec, rng);
    }
    case Provenance::kLearned: {
      if (synth.generator == nullptr) throw std::invalid_argument("learned synthesis needs G_LR");
      const bool was_recording = synth.generator->recording();
      synth.generator->set_recording(false);
      Image lr = synth.generator->forward(resize_bicubic(hr, 1.0 / synth.scale) * (1.0f / 255.0f));
      synth.generator->set_recording(was_recording);
      return lr * 255.0f;
    }
  }
  throw std::invalid_argument("unknown provenance");
}

ImagePair make_pair(const Image& hr, const PairSynthesizer& synth, std::uint64_t seed,
                    const std::string& name) {
  const int s = synth.scale;
  const int h = hr.h() / s * s;
  const int w = hr.w() / s * s;
  if (h == 0 || w == 0) throw DataError("image smaller than the scale factor");
  ImagePair p;
  p.hr = (h == hr.h() && w == hr.w()) ? hr : crop(hr, 0, 0, h, w);
  p.lr = synthesize_lr(p.hr, synth, seed);
  p.provenance = synth.provenance;
  p.name = name;
  return p;
}

std::size_t synthesize_pairs(const std::vector<std::filesystem::path>& hr_paths,
                             const PairSynthesizer& synth, std::uint64_t global_seed,
                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "lr");
  std::filesystem::create_directories(out_dir / "hr");
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest in " + out_dir.string());
  std::size_t written = 0;
  for (std::size_t i = 0; i < hr_paths.size(); ++i) {
    const std::uint64_t seed = derive_seed(global_seed, i);
    Image hr;
    try {
      hr = read_image(hr_paths[i]);
    } catch (const DataError& e) {
      spdlog::warn("skipping {}: {}", hr_paths[i].string(), e.what());
      continue;
    }
    const std::string stem = hr_paths[i].stem().string();
    const ImagePair p = make_pair(hr, synth, seed, stem);
    ManifestRecord rec{"lr/" + stem + ".png", "hr/" + stem + ".png", synth.provenance, seed};
    write_png(out_dir / rec.lr_path, p.lr);
    write_png(out_dir / rec.hr_path, p.hr);
    manifest << nlohmann::json(rec).dump() << '\n';
    ++written;
  }
  return written;
}

// ---------------------------------------------------------------------------

IndexSampler::IndexSampler(std::size_t count, std::uint64_t seed) : count_(count), seed_(seed) {
  if (count == 0) throw DataError("cannot sample from an empty dataset");
  reshuffle();
}

void IndexSampler::reshuffle() {
  order_.resize(count_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, epoch_));
  shuffle_indices(order_, rng);
}

std::size_t IndexSampler::next() {
  if (cursor_ == count_) {
    ++epoch_;
    cursor_ = 0;
    reshuffle();
  }
  return order_[cursor_++];
}

std::vector<std::size_t> IndexSampler::next(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& v : out) v = next();
  return out;
}

nlohmann::json IndexSampler::state() const {
  return {{"count", count_}, {"seed", seed_}, {"epoch", epoch_}, {"cursor", cursor_}};
}

void IndexSampler::restore(const nlohmann::json& state) {
  if (state.at("count").get<std::size_t>() != count_) {
    throw DataError("sampler state is for a dataset of different size");
  }
  seed_ = state.at("seed").get<std::uint64_t>();
  epoch_ = state.at("epoch").get<std::uint64_t>();
  reshuffle();
  cursor_ = state.at("cursor").get<std::size_t>();
}

PairLoader::PairLoader(const std::vector<ImagePair>& pairs, const PairLoaderOptions& opt,
                       std::uint64_t seed)
    : pairs_(pairs), opt_(opt), sampler_(pairs.size(), seed) {
  for (const auto& p : pairs_) {
    const bool large = p.lr.h() >= kMinSigmaEstimateSize && p.lr.w() >= kMinSigmaEstimateSize;
    sigma_.push_back(large ? estimate_sigma(p.lr) : 0.0);
  }
}

PairBatch PairLoader::next(Rng& rng) {
  std::vector<Image> lr;
  std::vector<Image> hr;
  PairBatch b;
  for (std::size_t i : sampler_.next(static_cast<std::size_t>(opt_.batch))) {
    PatchPair p = sample_patch_pair(pairs_[i], opt_.scale, opt_.lr_patch, rng);
    if (opt_.geometric) geometric_augment(p, rng);
    lr.push_back(std::move(p.lr));
    hr.push_back(std::move(p.hr));
    b.source_sigma.push_back(sigma_[i]);
  }
  b.lr = stack<float>(lr);
  b.hr = stack<float>(hr);
  if (opt_.moa) moa_augment(b, opt_.moa_config, opt_.scale, rng);
  return b;
}

Image synthetic_image(int h, int w, Rng& rng) {
  Image img(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    const double base = uniform_real(rng, 60.0, 190.0);
    const double gy = uniform_real(rng, -40.0, 40.0) / h;
    const double gx = uniform_real(rng, -40.0, 40.0) / w;
    struct Wave {
      double fy, fx, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k) {
      const double freq = uniform_real(rng, 0.05, 0.6);
      const double angle = uniform_real(rng, 0.0, std::numbers::pi);
      waves.push_back({freq * std::sin(angle), freq * std::cos(angle),
                       uniform_real(rng, 0.0, 2.0 * std::numbers::pi),
                       uniform_real(rng, 8.0, 30.0)});
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = base + gy * y + gx * x;
        for (const auto& wv : waves) v += wv.amp * std::sin(wv.fy * y + wv.fx * x + wv.phase);
        img(0, c, y, x) = static_cast<float>(v);
      }
    }
  }
  const int shapes = 3 + uniform_index(rng, 4);
  for (int s = 0; s < shapes; ++s) {
    const double cy = uniform_real(rng, 0.0, h);
    const double cx = uniform_real(rng, 0.0, w);
    const double r = uniform_real(rng, 0.08, 0.3) * std::min(h, w);
    const bool disc = uniform_index(rng, 2) == 0;
    float color[3];
    for (auto& v : color) v = static_cast<float>(uniform_real(rng, 0.0, 255.0));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dy = y - cy;
        const double dx = x - cx;
        const bool inside = disc ? dy * dy + dx * dx <= r * r
                                 : std::abs(dy) <= r && std::abs(dx) <= 0.6 * r;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img(0, c, y, x) = color[c];
      }
    }
  }
  for (auto& v : img.values()) v = std::clamp(v, 0.0f, 255.0f);
  return img;
}

}  // namespace sinesr
