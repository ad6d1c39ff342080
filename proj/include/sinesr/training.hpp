#pragma once

// Optimization loops of both stages, learning-rate schedules, checkpoints and
// the per-step loss log.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sinesr/data_pipeline.hpp"
#include "sinesr/losses.hpp"
#include "sinesr/lr_model.hpp"
#include "sinesr/optim.hpp"
#include "sinesr/sr_model.hpp"

namespace sinesr {

struct LRScheduleConfig {
  double base_lr = 2e-4;
  int decay_start_epoch = 150;
  int total_epochs = 300;
};

struct SRScheduleConfig {
  double base_lr = 1e-4;
  std::vector<int> milestones{5000, 10000, 20000, 30000};
  double gamma = 0.5;
  int total_iterations = 51000;
};

// Constant, then linear decay to zero. Throws std::out_of_range outside
// [0, total_epochs].
double lr_stage_schedule(int epoch, const LRScheduleConfig& cfg = {});
// base * gamma^(milestones <= iteration). Throws std::out_of_range outside
// [0, total_iterations].
double sr_stage_schedule(int iteration, const SRScheduleConfig& cfg = {});

// Detached discriminator step (gradients are cleared first; the fake batch
// carries no graph back to the generator). Scores of both batches are needed before
// either backward pass, so the fake batch is re-run once with frozen running
// statistics to rebuild its cache.
template <typename Disc, typename LossFn>
double discriminator_update(Disc& d, Adam& opt, const Tensorf& real, const Tensorf& fake,
                            double lr, LossFn loss_fn) {
  opt.zero_grad();
  d.set_training(true);
  d.set_update_running_stats(true);
  const Tensorf s_fake = d.forward(fake);
  const Tensorf s_real = d.forward(real);
  const PairLoss<float> loss = loss_fn(s_real, s_fake);
  d.backward(loss.grad_real);
  d.set_update_running_stats(false);
  d.forward(fake);
  d.backward(loss.grad_fake);
  d.set_update_running_stats(true);
  opt.step(lr);
  return loss.value;
}

// One CSV row per generator update.
struct LossRow {
  long long step = 0;
  double lr = 0.0;
  std::vector<double> values;
};

class LossLog {
 public:
  explicit LossLog(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  // Rows after `keep_until` in an existing file are dropped (resume).
  void open(const std::filesystem::path& path, long long keep_until = -1);
  void append(const LossRow& row);
  bool is_open() const { return file_.is_open(); }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<LossRow>& rows() const { return rows_; }
  // Column index by name; throws std::out_of_range.
  std::size_t column(const std::string& name) const;

 private:
  std::vector<std::string> columns_;
  std::vector<LossRow> rows_;
  std::ofstream file_;
};

// ---------------------------------------------------------------------------
// Stage 1

enum class TextureNormMode { kLive, kFrozen };

struct LRTrainConfig {
  LRGeneratorConfig generator;
  LRDiscriminatorConfig discriminator;
  FeatureExtractorConfig perceptual;
  AdamConfig adam{0.5, 0.999, 1e-8, 0.0};
  LRScheduleConfig schedule;
  int scale = 4;
  int lr_patch = 128;  // generator input and real-LR crop side
  int batch = 16;
  // Stops after this many updates when > 0; otherwise runs total_epochs.
  long long iterations = 0;
  int lowpass_kernel = kDefaultLowPassSize;
  TextureNormMode texture_norm = TextureNormMode::kLive;
  bool geometric = true;
  int checkpoint_every = 0;  // 0: only at the end
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const LRTrainConfig& c);
void from_json(const nlohmann::json& j, LRTrainConfig& c);

class LRStageTrainer {
 public:
  // hr_images: clean HR domain; real_lr: target LR domain; both on [0, 255].
  LRStageTrainer(const LRTrainConfig& cfg, std::vector<Image> hr_images,
                 std::vector<Image> real_lr, const std::filesystem::path& out_dir);

  long long iterations_per_epoch() const;
  long long total_iterations() const;
  long long iteration() const { return iteration_; }

  // Runs until total_iterations() (or `until` when >= 0); returns the number
  // of updates performed. The first call opens out_dir/loss_log.csv.
  long long train(long long until = -1);
  void step();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  LRGenerator<float>& generator() { return *gen_; }
  LRDiscriminator<float>& discriminator() { return *disc_; }
  const LossLog& log() const { return log_; }
  const LRTrainConfig& config() const { return cfg_; }

 private:
  LRTrainConfig cfg_;
  std::vector<Image> hr_;
  std::vector<Image> real_;
  std::filesystem::path out_dir_;
  Rng rng_;
  std::unique_ptr<LRGenerator<float>> gen_;
  std::unique_ptr<LRDiscriminator<float>> disc_;
  std::unique_ptr<ConvFeatureExtractor<float>> fx_;
  std::unique_ptr<Adam> opt_g_;
  std::unique_ptr<Adam> opt_d_;
  IndexSampler hr_sampler_;
  IndexSampler real_sampler_;
  LossLog log_;
  long long iteration_ = 0;
  double best_total_ = 0.0;
};

// ---------------------------------------------------------------------------
// Stage 2

enum class SRLossMode { kFull, kContent };

struct SRTrainConfig {
  SRGeneratorConfig generator;
  SRDiscriminatorConfig discriminator;
  FeatureExtractorConfig perceptual;
  AdamConfig adam{0.9, 0.999, 1e-8, 0.0};
  SRScheduleConfig schedule;
  int lr_patch = 32;
  int batch = 16;
  long long iterations = 51000;
  SRLossMode loss_mode = SRLossMode::kFull;
  // Content-only warm start before the full objective (0 disables).
  long long pretrain_iterations = 0;
  bool geometric = true;
  bool moa = true;
  MOAConfig moa_config;
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SRTrainConfig& c);
void from_json(const nlohmann::json& j, SRTrainConfig& c);

// Noise level of each LR sample of a batch: the wavelet estimate on the patch
// when it is at least kMinSigmaEstimateSize wide, else the source estimate.
std::vector<double> batch_sigma(const PairBatch& b);

class SRStageTrainer {
 public:
  SRStageTrainer(const SRTrainConfig& cfg, std::vector<ImagePair> pairs,
                 const std::filesystem::path& out_dir);

  long long iteration() const { return iteration_; }
  long long train(long long until = -1);
  void step();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  SRGenerator<float>& generator() { return *gen_; }
  SRDiscriminator<float>* discriminator() { return disc_.get(); }
  const LossLog& log() const { return log_; }
  const SRTrainConfig& config() const { return cfg_; }

 private:
  bool adversarial() const;

  SRTrainConfig cfg_;
  std::vector<ImagePair> pairs_;
  std::filesystem::path out_dir_;
  Rng rng_;
  std::unique_ptr<SRGenerator<float>> gen_;
  std::unique_ptr<SRDiscriminator<float>> disc_;
  std::unique_ptr<ConvFeatureExtractor<float>> fx_;
  std::unique_ptr<Adam> opt_g_;
  std::unique_ptr<Adam> opt_d_;
  PairLoader loader_;
  LossLog log_;
  long long iteration_ = 0;
  double best_total_ = 0.0;
};

// Restores a generator from a stage checkpoint (config taken from the file).
std::unique_ptr<LRGenerator<float>> load_lr_generator(const std::filesystem::path& checkpoint);
std::unique_ptr<SRGenerator<float>> load_sr_generator(const std::filesystem::path& checkpoint);

}  // namespace sinesr
