#include "sinesr/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace sinesr {

namespace {

constexpr float kInv255 = 1.0f / 255.0f;

const std::vector<std::string> kLRColumns{"d_loss", "color", "tex", "per", "total"};
const std::vector<std::string> kSRColumns{"d_loss", "per", "gan", "tv", "l1", "total"};

void check_finite(long long step, std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
  }
}

std::string checkpoint_name(long long iteration) {
  return fmt::format("iter_{:08d}.ckpt", iteration);
}

TensorContainer read_stage_checkpoint(const std::filesystem::path& path, const std::string& kind) {
  TensorContainer c = read_container(path);
  if (c.header.value("kind", std::string()) != kind) {
    throw DataError(path.string() + " is not a " + kind + " checkpoint");
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------

double lr_stage_schedule(int epoch, const LRScheduleConfig& cfg) {
  if (epoch < 0 || epoch > cfg.total_epochs) {
    throw std::out_of_range("lr_stage_schedule: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(cfg.total_epochs) + "]");
  }
  if (epoch < cfg.decay_start_epoch) return cfg.base_lr;
  const double span = cfg.total_epochs - cfg.decay_start_epoch;
  return cfg.base_lr * (cfg.total_epochs - epoch) / span;
}

double sr_stage_schedule(int iteration, const SRScheduleConfig& cfg) {
  if (iteration < 0 || iteration > cfg.total_iterations) {
    throw std::out_of_range("sr_stage_schedule: iteration " + std::to_string(iteration) +
                            " outside [0, " + std::to_string(cfg.total_iterations) + "]");
  }
  int passed = 0;
  for (int m : cfg.milestones) passed += iteration >= m ? 1 : 0;
  return cfg.base_lr * std::pow(cfg.gamma, passed);
}

// ---------------------------------------------------------------------------

std::size_t LossLog::column(const std::string& name) const {
  auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw std::out_of_range("no loss column '" + name + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

void LossLog::open(const std::filesystem::path& path, long long keep_until) {
  if (file_.is_open()) file_.close();
  rows_.clear();
  std::vector<std::string> kept;
  if (keep_until >= 0 && std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      LossRow row;
      std::getline(ss, cell, ',');
      row.step = std::stoll(cell);
      if (row.step > keep_until) break;
      std::getline(ss, cell, ',');
      row.lr = std::stod(cell);
      while (std::getline(ss, cell, ',')) row.values.push_back(std::stod(cell));
      rows_.push_back(row);
      kept.push_back(line);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.open(path, std::ios::trunc);
  if (!file_) throw DataError("cannot write loss log " + path.string());
  file_ << "step,lr";
  for (const auto& c : columns_) file_ << ',' << c;
  file_ << '\n';
  for (const auto& line : kept) file_ << line << '\n';
  file_.flush();
}

void LossLog::append(const LossRow& row) {
  rows_.push_back(row);
  if (!file_.is_open()) return;
  file_ << row.step << ',' << fmt::format("{}", row.lr);
  for (double v : row.values) file_ << ',' << fmt::format("{}", v);
  file_ << '\n';
  file_.flush();
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const LRTrainConfig& c) {
  j = {{"generator", c.generator},
       {"discriminator", c.discriminator},
       {"perceptual", c.perceptual},
       {"adam", c.adam},
       {"base_lr", c.schedule.base_lr},
       {"decay_start_epoch", c.schedule.decay_start_epoch},
       {"epochs", c.schedule.total_epochs},
       {"scale", c.scale},
       {"lr_patch", c.lr_patch},
       {"batch", c.batch},
       {"iterations", c.iterations},
       {"lowpass_kernel", c.lowpass_kernel},
       {"texture_norm", c.texture_norm == TextureNormMode::kLive ? "live" : "frozen"},
       {"geometric", c.geometric},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, LRTrainConfig& c) {
  LRTrainConfig d;
  if (j.contains("generator")) d.generator = j.at("generator").get<LRGeneratorConfig>();
  if (j.contains("discriminator")) {
    d.discriminator = j.at("discriminator").get<LRDiscriminatorConfig>();
  }
  if (j.contains("perceptual")) d.perceptual = j.at("perceptual").get<FeatureExtractorConfig>();
  if (j.contains("adam")) from_json(j.at("adam"), d.adam);
  d.schedule.base_lr = j.value("base_lr", d.schedule.base_lr);
  d.schedule.decay_start_epoch = j.value("decay_start_epoch", d.schedule.decay_start_epoch);
  d.schedule.total_epochs = j.value("epochs", d.schedule.total_epochs);
  d.scale = j.value("scale", d.scale);
  d.lr_patch = j.value("lr_patch", d.lr_patch);
  d.batch = j.value("batch", d.batch);
  d.iterations = j.value("iterations", d.iterations);
  d.lowpass_kernel = j.value("lowpass_kernel", d.lowpass_kernel);
  const std::string norm = j.value("texture_norm", std::string("live"));
  if (norm != "live" && norm != "frozen") {
    throw std::invalid_argument("lr_stage.texture_norm must be live or frozen");
  }
  d.texture_norm = norm == "live" ? TextureNormMode::kLive : TextureNormMode::kFrozen;
  d.geometric = j.value("geometric", d.geometric);
  d.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  if (d.scale < 1 || d.lr_patch < 1 || d.batch < 1 || d.iterations < 0 ||
      d.schedule.total_epochs < 1 || d.schedule.decay_start_epoch < 0 ||
      d.schedule.decay_start_epoch >= d.schedule.total_epochs || d.lowpass_kernel % 2 == 0) {
    throw std::invalid_argument("lr_stage: invalid size, batch, schedule or kernel setting");
  }
  c = d;
}

LRStageTrainer::LRStageTrainer(const LRTrainConfig& cfg, std::vector<Image> hr_images,
                               std::vector<Image> real_lr, const std::filesystem::path& out_dir)
    : cfg_(cfg),
      hr_(std::move(hr_images)),
      real_(std::move(real_lr)),
      out_dir_(out_dir),
      rng_(derive_seed(cfg.seed, 1)),
      hr_sampler_(hr_.size(), derive_seed(cfg.seed, 2)),
      real_sampler_(real_.size(), derive_seed(cfg.seed, 3)),
      log_(kLRColumns) {
  const int hr_side = cfg_.lr_patch * cfg_.scale;
  for (const auto& img : hr_) {
    if (img.h() < hr_side || img.w() < hr_side) {
      throw DataError("HR image " + img.shape().str() + " smaller than crop " +
                      std::to_string(hr_side));
    }
  }
  for (const auto& img : real_) {
    if (img.h() < cfg_.lr_patch || img.w() < cfg_.lr_patch) {
      throw DataError("LR image " + img.shape().str() + " smaller than crop " +
                      std::to_string(cfg_.lr_patch));
    }
  }
  Rng init(derive_seed(cfg.seed, 0));
  gen_ = std::make_unique<LRGenerator<float>>(cfg_.generator, init);
  disc_ = std::make_unique<LRDiscriminator<float>>(cfg_.discriminator, init);
  if (cfg_.lr_patch < disc_->receptive_field()) {
    throw ConfigError("lr_stage.lr_patch is below the discriminator receptive field");
  }
  fx_ = std::make_unique<ConvFeatureExtractor<float>>(cfg_.perceptual);
  opt_g_ = std::make_unique<Adam>(gen_->parameters(), cfg_.adam);
  opt_d_ = std::make_unique<Adam>(disc_->parameters(), cfg_.adam);
}

long long LRStageTrainer::iterations_per_epoch() const {
  return (static_cast<long long>(hr_.size()) + cfg_.batch - 1) / cfg_.batch;
}

long long LRStageTrainer::total_iterations() const {
  return cfg_.iterations > 0 ? cfg_.iterations
                             : iterations_per_epoch() * cfg_.schedule.total_epochs;
}

void LRStageTrainer::step() {
  const long long epoch = iteration_ / iterations_per_epoch();
  const double lr = lr_stage_schedule(
      static_cast<int>(std::min<long long>(epoch, cfg_.schedule.total_epochs)), cfg_.schedule);

  std::vector<Image> xs;
  std::vector<Image> ys;
  for (std::size_t i : hr_sampler_.next(static_cast<std::size_t>(cfg_.batch))) {
    Image crop = random_crop(hr_[i], cfg_.lr_patch * cfg_.scale, rng_);
    if (cfg_.geometric) crop = dihedral(crop, uniform_index(rng_, kDihedralOrder));
    xs.push_back(resize_bicubic(crop, 1.0 / cfg_.scale) * kInv255);
  }
  for (std::size_t i : real_sampler_.next(static_cast<std::size_t>(cfg_.batch))) {
    Image crop = random_crop(real_[i], cfg_.lr_patch, rng_);
    if (cfg_.geometric) crop = dihedral(crop, uniform_index(rng_, kDihedralOrder));
    ys.push_back(crop * kInv255);
  }
  const Tensorf x = stack<float>(xs);
  const Tensorf y = stack<float>(ys);
  const int k = cfg_.lowpass_kernel;

  const Tensorf fake = gen_->forward(x);
  const double d_loss = discriminator_update(
      *disc_, *opt_d_, frequency_filter(y, FrequencyBand::kHigh, k),
      frequency_filter(fake, FrequencyBand::kHigh, k), lr,
      [](const Tensorf& r, const Tensorf& f) { return bce_discriminator_loss(r, f); });

  opt_g_->zero_grad();
  if (cfg_.texture_norm == TextureNormMode::kFrozen) {
    disc_->set_training(false);
  } else {
    disc_->set_update_running_stats(false);
  }
  const LossResult<float> color = color_loss(fake, x, k);
  const LossResult<float> tex = texture_loss(fake, *disc_, k);
  disc_->set_training(true);
  disc_->set_update_running_stats(true);
  const LossResult<float> per = perceptual_loss(fake, x, *fx_);

  const LRLossParts parts{color.value, tex.value, per.value};
  const double total = lr_total_loss(parts);
  check_finite(iteration_ + 1, {d_loss, total});

  Tensorf grad = color.grad;
  grad += tex.grad * static_cast<float>(kTextureWeight);
  grad += per.grad * static_cast<float>(kLRPerceptualWeight);
  gen_->backward(grad);
  opt_g_->step(lr);

  ++iteration_;
  best_total_ = iteration_ == 1 ? total : std::min(best_total_, total);
  log_.append({iteration_, lr, {d_loss, parts.color, parts.tex, parts.per, total}});
}

long long LRStageTrainer::train(long long until) {
  if (!out_dir_.empty() && !log_.is_open()) log_.open(out_dir_ / "loss_log.csv", iteration_);
  const long long end = until >= 0 ? std::min(until, total_iterations()) : total_iterations();
  const long long start = iteration_;
  while (iteration_ < end) {
    step();
    if (!out_dir_.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(out_dir_ / "checkpoints" / checkpoint_name(iteration_));
    }
    if (iteration_ % 50 == 0) {
      spdlog::info("lr-stage step {} total {:.5f}", iteration_, log_.rows().back().values.back());
    }
  }
  if (!out_dir_.empty()) save_checkpoint(out_dir_ / "final.ckpt");
  return iteration_ - start;
}

void LRStageTrainer::save_checkpoint(const std::filesystem::path& path) const {
  TensorContainer c;
  c.header = {{"kind", "lr_stage"},
              {"config", cfg_},
              {"seed", cfg_.seed},
              {"iteration", iteration_},
              {"best_total", best_total_},
              {"rng", serialize_rng(rng_)},
              {"samplers", {{"hr", hr_sampler_.state()}, {"real", real_sampler_.state()}}}};
  store_parameters(c, "gen.", gen_->parameters());
  store_parameters(c, "disc.", disc_->parameters());
  opt_g_->store(c, "opt_g.");
  opt_d_->store(c, "opt_d.");
  write_container(path, c);
}

void LRStageTrainer::load_checkpoint(const std::filesystem::path& path) {
  const TensorContainer c = read_stage_checkpoint(path, "lr_stage");
  load_parameters(c, "gen.", gen_->parameters());
  load_parameters(c, "disc.", disc_->parameters());
  opt_g_->load(c, "opt_g.");
  opt_d_->load(c, "opt_d.");
  rng_ = deserialize_rng(c.header.at("rng").get<std::string>());
  hr_sampler_.restore(c.header.at("samplers").at("hr"));
  real_sampler_.restore(c.header.at("samplers").at("real"));
  iteration_ = c.header.at("iteration").get<long long>();
  best_total_ = c.header.at("best_total").get<double>();
  if (!out_dir_.empty()) log_.open(out_dir_ / "loss_log.csv", iteration_);
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const SRTrainConfig& c) {
  j = {{"generator", c.generator},
       {"discriminator", c.discriminator},
       {"perceptual", c.perceptual},
       {"adam", c.adam},
       {"base_lr", c.schedule.base_lr},
       {"milestones", c.schedule.milestones},
       {"gamma", c.schedule.gamma},
       {"schedule_iterations", c.schedule.total_iterations},
       {"lr_patch", c.lr_patch},
       {"batch", c.batch},
       {"iterations", c.iterations},
       {"loss_mode", c.loss_mode == SRLossMode::kFull ? "full" : "content"},
       {"pretrain_iterations", c.pretrain_iterations},
       {"geometric", c.geometric},
       {"moa", c.moa},
       {"moa_config", c.moa_config},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, SRTrainConfig& c) {
  SRTrainConfig d;
  if (j.contains("generator")) d.generator = j.at("generator").get<SRGeneratorConfig>();
  if (j.contains("discriminator")) {
    d.discriminator = j.at("discriminator").get<SRDiscriminatorConfig>();
  }
  if (j.contains("perceptual")) d.perceptual = j.at("perceptual").get<FeatureExtractorConfig>();
  if (j.contains("adam")) from_json(j.at("adam"), d.adam);
  d.schedule.base_lr = j.value("base_lr", d.schedule.base_lr);
  d.schedule.milestones = j.value("milestones", d.schedule.milestones);
  d.schedule.gamma = j.value("gamma", d.schedule.gamma);
  d.schedule.total_iterations = j.value("schedule_iterations", d.schedule.total_iterations);
  d.lr_patch = j.value("lr_patch", d.lr_patch);
  d.batch = j.value("batch", d.batch);
  d.iterations = j.value("iterations", d.iterations);
  const std::string mode = j.value("loss_mode", std::string("full"));
  if (mode != "full" && mode != "content") {
    throw std::invalid_argument("sr_stage.loss_mode must be full or content");
  }
  d.loss_mode = mode == "full" ? SRLossMode::kFull : SRLossMode::kContent;
  d.pretrain_iterations = j.value("pretrain_iterations", d.pretrain_iterations);
  d.geometric = j.value("geometric", d.geometric);
  d.moa = j.value("moa", d.moa);
  if (j.contains("moa_config")) d.moa_config = j.at("moa_config").get<MOAConfig>();
  d.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  if (d.lr_patch < 1 || d.batch < 1 || d.iterations < 0 || d.pretrain_iterations < 0 ||
      d.schedule.total_iterations < 0) {
    throw std::invalid_argument("sr_stage: invalid size, batch or iteration setting");
  }
  c = d;
}

std::vector<double> batch_sigma(const PairBatch& b) {
  std::vector<double> out;
  const bool large = b.lr.h() >= kMinSigmaEstimateSize && b.lr.w() >= kMinSigmaEstimateSize;
  for (int n = 0; n < b.lr.n(); ++n) {
    out.push_back(large ? estimate_sigma(b.lr.slice(n, 1)) : b.source_sigma.at(n));
  }
  return out;
}

SRStageTrainer::SRStageTrainer(const SRTrainConfig& cfg, std::vector<ImagePair> pairs,
                               const std::filesystem::path& out_dir)
    : cfg_(cfg),
      pairs_(std::move(pairs)),
      out_dir_(out_dir),
      rng_(derive_seed(cfg.seed, 1)),
      loader_(pairs_,
              PairLoaderOptions{cfg.generator.scale, cfg.lr_patch, cfg.batch, cfg.geometric,
                                cfg.moa, cfg.moa_config},
              derive_seed(cfg.seed, 2)),
      log_(kSRColumns) {
  Rng init(derive_seed(cfg.seed, 0));
  gen_ = std::make_unique<SRGenerator<float>>(cfg_.generator, init);
  opt_g_ = std::make_unique<Adam>(gen_->parameters(), cfg_.adam);
  if (adversarial()) {
    if (cfg_.lr_patch * cfg_.generator.scale < cfg_.discriminator.min_input_size) {
      throw ConfigError("sr_stage: HR patch " +
                        std::to_string(cfg_.lr_patch * cfg_.generator.scale) +
                        " below the discriminator minimum input " +
                        std::to_string(cfg_.discriminator.min_input_size));
    }
    disc_ = std::make_unique<SRDiscriminator<float>>(cfg_.discriminator, init);
    opt_d_ = std::make_unique<Adam>(disc_->parameters(), cfg_.adam);
    fx_ = std::make_unique<ConvFeatureExtractor<float>>(cfg_.perceptual);
  }
}

bool SRStageTrainer::adversarial() const { return cfg_.loss_mode == SRLossMode::kFull; }

void SRStageTrainer::step() {
  const auto sched_it =
      static_cast<int>(std::min<long long>(iteration_, cfg_.schedule.total_iterations));
  const double lr = sr_stage_schedule(sched_it, cfg_.schedule);
  const PairBatch b = loader_.next(rng_);
  const std::vector<double> sigma = batch_sigma(b);
  const bool full = adversarial() && iteration_ >= cfg_.pretrain_iterations;

  const Tensorf fake = gen_->forward(b.lr, sigma);
  double d_loss = 0.0;
  if (full) {
    d_loss = discriminator_update(*disc_, *opt_d_, b.hr, fake, lr,
                                  [](const Tensorf& r, const Tensorf& f) {
                                    return ragan_losses(r, f).discriminator;
                                  });
  }

  opt_g_->zero_grad();
  const Tensorf fake01 = fake * kInv255;
  const Tensorf hr01 = b.hr * kInv255;
  SRLossParts parts;
  const LossResult<float> l1 = content_loss(fake01, hr01);
  parts.l1 = l1.value;
  Tensorf grad01 = l1.grad * static_cast<float>(kContentWeight);
  Tensorf grad_adv;
  if (full) {
    const LossResult<float> per = perceptual_loss(fake01, hr01, *fx_);
    const LossResult<float> tv = tv_loss(fake01, hr01);
    parts.per = per.value;
    parts.tv = tv.value;
    grad01 += per.grad;
    grad01 += tv.grad;
    disc_->set_update_running_stats(false);
    disc_->set_recording(false);
    const Tensorf s_real = disc_->forward(b.hr);
    disc_->set_recording(true);
    const Tensorf s_fake = disc_->forward(fake);
    const RaganLosses<float> gan = ragan_losses(s_real, s_fake);
    grad_adv = disc_->backward(gan.generator.grad_fake);
    disc_->set_update_running_stats(true);
    parts.gan = gan.generator.value;
  }
  const double total = sr_total_loss(parts);
  check_finite(iteration_ + 1, {d_loss, total});

  Tensorf grad = grad01 * kInv255;
  if (!grad_adv.empty()) grad += grad_adv;
  gen_->backward(grad);
  opt_g_->step(lr);

  ++iteration_;
  best_total_ = iteration_ == 1 ? total : std::min(best_total_, total);
  log_.append({iteration_, lr, {d_loss, parts.per, parts.gan, parts.tv, parts.l1, total}});
}

long long SRStageTrainer::train(long long until) {
  if (!out_dir_.empty() && !log_.is_open()) log_.open(out_dir_ / "loss_log.csv", iteration_);
  const long long end = until >= 0 ? std::min(until, cfg_.iterations) : cfg_.iterations;
  const long long start = iteration_;
  while (iteration_ < end) {
    step();
    if (!out_dir_.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(out_dir_ / "checkpoints" / checkpoint_name(iteration_));
    }
    if (iteration_ % 100 == 0) {
      spdlog::info("sr-stage step {} total {:.5f}", iteration_, log_.rows().back().values.back());
    }
  }
  if (!out_dir_.empty()) save_checkpoint(out_dir_ / "final.ckpt");
  return iteration_ - start;
}

void SRStageTrainer::save_checkpoint(const std::filesystem::path& path) const {
  TensorContainer c;
  c.header = {{"kind", "sr_stage"},
              {"config", cfg_},
              {"seed", cfg_.seed},
              {"iteration", iteration_},
              {"best_total", best_total_},
              {"rng", serialize_rng(rng_)},
              {"samplers", {{"pairs", loader_.sampler().state()}}}};
  store_parameters(c, "gen.", gen_->parameters());
  opt_g_->store(c, "opt_g.");
  if (disc_) {
    store_parameters(c, "disc.", disc_->parameters());
    opt_d_->store(c, "opt_d.");
  }
  write_container(path, c);
}

void SRStageTrainer::load_checkpoint(const std::filesystem::path& path) {
  const TensorContainer c = read_stage_checkpoint(path, "sr_stage");
  load_parameters(c, "gen.", gen_->parameters());
  opt_g_->load(c, "opt_g.");
  if (disc_) {
    load_parameters(c, "disc.", disc_->parameters());
    opt_d_->load(c, "opt_d.");
  }
  rng_ = deserialize_rng(c.header.at("rng").get<std::string>());
  loader_.sampler().restore(c.header.at("samplers").at("pairs"));
  iteration_ = c.header.at("iteration").get<long long>();
  best_total_ = c.header.at("best_total").get<double>();
  if (!out_dir_.empty()) log_.open(out_dir_ / "loss_log.csv", iteration_);
}

std::unique_ptr<LRGenerator<float>> load_lr_generator(const std::filesystem::path& checkpoint) {
  const TensorContainer c = read_stage_checkpoint(checkpoint, "lr_stage");
  const auto cfg = c.header.at("config").get<LRTrainConfig>();
  Rng rng(0);
  auto gen = std::make_unique<LRGenerator<float>>(cfg.generator, rng);
  load_parameters(c, "gen.", gen->parameters());
  return gen;
}

std::unique_ptr<SRGenerator<float>> load_sr_generator(const std::filesystem::path& checkpoint) {
  const TensorContainer c = read_stage_checkpoint(checkpoint, "sr_stage");
  const auto cfg = c.header.at("config").get<SRTrainConfig>();
  Rng rng(0);
  auto gen = std::make_unique<SRGenerator<float>>(cfg.generator, rng);
  load_parameters(c, "gen.", gen->parameters());
  return gen;
}

}  // namespace sinesr
