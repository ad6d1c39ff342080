#include "sinesr/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sinesr/evaluation.hpp"
#include "sinesr/image_io.hpp"
#include "sinesr/training.hpp"

namespace sinesr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool self_ensemble = false;
  std::string device = "cpu";
  std::vector<std::string> overrides;
  std::string resume;
};

void check_keys(const json& defaults, const json& given, const std::string& where) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& d = defaults.at(it.key());
    if (d.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + key + "' must be an object");
      check_keys(d, it.value(), key);
    }
  }
}

void flatten(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object() && !it.value().empty()) {
      flatten(it.value(), key, out);
    } else {
      out.push_back(key + " = " + it.value().dump());
    }
  }
}

fs::path data_path(const json& cfg, const std::string& key) {
  const std::string value = cfg.at("data").at(key).get<std::string>();
  if (value.empty()) throw ConfigError("data." + key + " is not set");
  fs::path p(value);
  if (p.is_absolute()) return p;
  std::string root = cfg.at("data").at("root").get<std::string>();
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') root = env;
  return root.empty() ? p : fs::path(root) / p;
}

fs::path require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing input " + p.string());
  return p;
}

std::vector<fs::path> image_inputs(const fs::path& p) {
  require_exists(p);
  if (fs::is_directory(p)) {
    auto list = list_images(p);
    if (list.empty()) throw DataError("no PNG/JPEG images in " + p.string());
    return list;
  }
  return {p};
}

std::vector<Image> read_all(const fs::path& dir) {
  std::vector<Image> out;
  for (const auto& p : image_inputs(dir)) {
    try {
      out.push_back(read_image(p));
    } catch (const DataError& e) {
      spdlog::warn("skipping {}: {}", p.string(), e.what());
    }
  }
  if (out.empty()) throw DataError("no readable images in " + dir.string());
  return out;
}

// Pairs each LR file with the HR file of the same stem.
std::vector<EvalItem> items_by_stem(const std::vector<fs::path>& lr_files, const fs::path& hr_dir) {
  std::map<std::string, fs::path> hr;
  for (const auto& p : list_images(hr_dir)) hr[p.stem().string()] = p;
  std::vector<EvalItem> items;
  for (const auto& p : lr_files) {
    const auto it = hr.find(p.stem().string());
    if (it == hr.end()) {
      spdlog::warn("no HR image for {}", p.string());
      continue;
    }
    items.push_back({p.stem().string(), p, it->second});
  }
  if (items.empty()) throw DataError("no LR/HR pairs share a file stem under " + hr_dir.string());
  return items;
}

void write_resolved(const fs::path& out, const json& cfg, const Options& opt) {
  fs::create_directories(out);
  json snapshot = cfg;
  snapshot["command"] = opt.command;
  snapshot["seed"] = opt.seed;
  std::ofstream f(out / "resolved_config.json", std::ios::trunc);
  f << snapshot.dump(2) << '\n';
}

SRModelFn sr_model(const json& cfg, const std::string& checkpoint,
                   std::unique_ptr<SRGenerator<float>>& holder, int scale_if_bicubic) {
  const int tile = cfg.at("inference").at("tile").get<int>();
  const int margin = cfg.at("inference").at("margin").get<int>();
  if (checkpoint == "bicubic") {
    return [scale_if_bicubic](const Image& lr) {
      return clip_output(resize_bicubic(lr, static_cast<double>(scale_if_bicubic)));
    };
  }
  holder = load_sr_generator(require_exists(checkpoint));
  SRGenerator<float>* gen = holder.get();
  return [gen, tile, margin](const Image& lr) {
    const bool large = lr.h() >= kMinSigmaEstimateSize && lr.w() >= kMinSigmaEstimateSize;
    if (!large) spdlog::warn("input below {} px: noise level set to 0", kMinSigmaEstimateSize);
    return gen->infer(lr, large ? estimate_sigma(lr) : 0.0, tile, margin);
  };
}

int cmd_train_lr(const json& cfg, const Options& opt) {
  auto tc = cfg.at("lr_stage").get<LRTrainConfig>();
  tc.seed = opt.seed;
  std::vector<Image> hr = read_all(data_path(cfg, "hr_dir"));
  std::vector<Image> lr = read_all(data_path(cfg, "lr_dir"));
  LRStageTrainer trainer(tc, std::move(hr), std::move(lr), opt.out);
  if (!opt.resume.empty()) trainer.load_checkpoint(require_exists(opt.resume));
  trainer.train();
  std::cout << "trained " << trainer.iteration() << " iterations; checkpoint "
            << (fs::path(opt.out) / "final.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_synth_pairs(const json& cfg, const Options& opt) {
  const json& s = cfg.at("synthesis");
  PairSynthesizer synth;
  synth.provenance = provenance_from_name(s.at("provenance").get<std::string>());
  synth.scale = s.at("scale").get<int>();
  synth.spec = s.at("degradation").get<DegradationSpec>();
  std::unique_ptr<LRGenerator<float>> gen;
  if (synth.provenance == Provenance::kLearned) {
    const std::string ckpt = s.at("lr_checkpoint").get<std::string>();
    if (ckpt.empty()) throw ConfigError("synthesis.lr_checkpoint is required for learned pairs");
    gen = load_lr_generator(require_exists(ckpt));
    synth.generator = gen.get();
  }
  const auto inputs = image_inputs(data_path(cfg, "hr_dir"));
  const std::size_t n = synthesize_pairs(inputs, synth, opt.seed, opt.out);
  std::cout << "synthesized " << n << " pairs into " << opt.out << '\n';
  return n == 0 ? kExitData : kExitOk;
}

int cmd_train_sr(const json& cfg, const Options& opt) {
  auto tc = cfg.at("sr_stage").get<SRTrainConfig>();
  tc.seed = opt.seed;
  auto pairs =
      load_pairs(require_exists(data_path(cfg, "pairs_manifest")), tc.generator.scale);
  SRStageTrainer trainer(tc, std::move(pairs), opt.out);
  if (!opt.resume.empty()) trainer.load_checkpoint(require_exists(opt.resume));
  trainer.train();
  std::cout << "trained " << trainer.iteration() << " iterations; checkpoint "
            << (fs::path(opt.out) / "final.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_infer(const json& cfg, const Options& opt) {
  const std::string ckpt = cfg.at("inference").at("checkpoint").get<std::string>();
  if (ckpt.empty()) throw ConfigError("inference.checkpoint is not set");
  std::unique_ptr<SRGenerator<float>> gen;
  const SRModelFn model =
      sr_model(cfg, ckpt, gen, cfg.at("sr_stage").at("generator").at("scale").get<int>());
  std::size_t done = 0;
  for (const auto& p : image_inputs(data_path(cfg, "input"))) {
    const Image lr = read_image(p);
    const Image sr = opt.self_ensemble ? self_ensemble_infer(model, lr) : model(lr);
    write_png(fs::path(opt.out) / (p.stem().string() + ".png"), sr);
    ++done;
  }
  std::cout << "wrote " << done << " images to " << opt.out << '\n';
  return kExitOk;
}

int cmd_evaluate(const json& cfg, const Options& opt) {
  const json& e = cfg.at("evaluation");
  const std::string ckpt = e.at("checkpoint").get<std::string>();
  if (ckpt.empty()) throw ConfigError("evaluation.checkpoint is not set (path or \"bicubic\")");
  std::unique_ptr<SRGenerator<float>> gen;
  const SRModelFn model =
      sr_model(cfg, ckpt, gen, cfg.at("sr_stage").at("generator").at("scale").get<int>());
  ConvFeatureExtractor<float> fx(e.at("perceptual").get<FeatureExtractorConfig>());
  std::vector<EvalItem> items;
  std::string dataset;
  if (!cfg.at("data").at("eval_manifest").get<std::string>().empty()) {
    const fs::path manifest = require_exists(data_path(cfg, "eval_manifest"));
    items = eval_items_from_manifest(manifest);
    dataset = manifest.string();
  } else {
    const fs::path hr_dir = require_exists(data_path(cfg, "eval_hr_dir"));
    items = items_by_stem(image_inputs(data_path(cfg, "eval_lr_dir")), hr_dir);
    dataset = hr_dir.string();
  }
  EvalOptions eo{opt.self_ensemble, ckpt, dataset};
  const MetricReport report = evaluate_dataset(model, items, fx, eo);
  if (report.rows.empty()) throw DataError("no evaluation pair could be scored");
  report.write_csv(fs::path(opt.out) / "metrics.csv");
  std::ofstream(fs::path(opt.out) / "summary.json") << report.summary().dump(2) << '\n';
  std::cout << report.rows.size() << " images: " << report.triple() << '\n';
  return kExitOk;
}

int cmd_degrade(const json& cfg, const Options& opt) {
  const auto spec = cfg.at("degradation").get<DegradationSpec>();
  const auto inputs = image_inputs(data_path(cfg, "input"));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng(derive_seed(opt.seed, i));
    const Image out = degrade(read_image(inputs[i]), spec, rng);
    write_png(fs::path(opt.out) / (inputs[i].stem().string() + ".png"), out);
  }
  std::cout << "degraded " << inputs.size() << " images into " << opt.out << '\n';
  return kExitOk;
}

int fail(const char* category, const std::string& message, int code) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "error: category=" << category << " message=" << line << std::endl;
  return code;
}

}  // namespace

json default_config() {
  return {{"data",
           {{"root", ""},
            {"hr_dir", ""},
            {"lr_dir", ""},
            {"pairs_manifest", ""},
            {"eval_manifest", ""},
            {"eval_lr_dir", ""},
            {"eval_hr_dir", ""},
            {"input", ""}}},
          {"lr_stage", LRTrainConfig{}},
          {"synthesis",
           {{"provenance", "learned_G_LR"},
            {"scale", 4},
            {"lr_checkpoint", ""},
            {"degradation", DegradationSpec{}}}},
          {"sr_stage", SRTrainConfig{}},
          {"degradation", DegradationSpec{}},
          {"inference", {{"checkpoint", ""}, {"tile", 0}, {"margin", 8}}},
          {"evaluation", {{"checkpoint", ""}, {"perceptual", FeatureExtractorConfig{}}}}};
}

std::vector<std::string> describe_config() {
  std::vector<std::string> out;
  flatten(default_config(), "", out);
  return out;
}

json resolve_config(const json& file, const std::vector<std::string>& overrides) {
  const json defaults = default_config();
  check_keys(defaults, file, "");
  json cfg = defaults;
  cfg.merge_patch(file);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not of the form key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    json patch;
    patch[json::json_pointer(pointer)] = value;
    check_keys(defaults, patch, "");
    cfg[json::json_pointer(pointer)] = value;
  }
  // Parsing validates every section.
  try {
    (void)cfg.at("lr_stage").get<LRTrainConfig>();
    (void)cfg.at("sr_stage").get<SRTrainConfig>();
    (void)cfg.at("degradation").get<DegradationSpec>();
    (void)cfg.at("synthesis").at("degradation").get<DegradationSpec>();
    (void)cfg.at("evaluation").at("perceptual").get<FeatureExtractorConfig>();
    provenance_from_name(cfg.at("synthesis").at("provenance").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.at("synthesis").at("scale").get<int>() < 1) throw ConfigError("synthesis.scale < 1");
  return cfg;
}

int run(const std::vector<std::string>& args) {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("sinesr");
    spdlog::set_default_logger(l);
    return l;
  }();
  (void)logger;

  Options opt;
  CLI::App app{"Two-stage real-world super-resolution toolkit", "sinesr"};
  app.require_subcommand(1);
  std::string keys = "\nConfiguration keys (defaults):\n";
  for (const auto& line : describe_config()) keys += "  " + line + "\n";
  app.footer(keys);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-lr", "train the degradation generator on HR and real LR images"},
      {"synth-pairs", "synthesize LR/HR training pairs and a manifest"},
      {"train-sr", "train the super-resolution generator on a pair manifest"},
      {"infer", "super-resolve an image or a directory"},
      {"evaluate", "score a model on a pair manifest (PSNR/SSIM/perceptual)"},
      {"degrade", "apply the classical degradation to an image or a directory"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "global random seed")->capture_default_str();
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_flag("--self-ensemble", opt.self_ensemble, "average the 8 dihedral predictions");
    sub->add_option("--device", opt.device, "compute device (cpu)")->capture_default_str();
    sub->add_option("--set", opt.overrides, "override a config key: section.key=value");
    if (name == "train-lr" || name == "train-sr") {
      sub->add_option("--resume", opt.resume, "checkpoint to resume from");
    }
    sub->callback([&opt, name = name] { opt.command = name; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), kExitConfig);
  }

  try {
    if (opt.device != "cpu") throw ConfigError("device '" + opt.device + "' unavailable (cpu only)");
    json file = json::object();
    if (!opt.config_path.empty()) {
      std::ifstream in(opt.config_path);
      if (!in) throw ConfigError("cannot read config " + opt.config_path);
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError(opt.config_path + ": " + e.what());
      }
    }
    const json cfg = resolve_config(file, opt.overrides);
    write_resolved(opt.out, cfg, opt);
    if (opt.command == "train-lr") return cmd_train_lr(cfg, opt);
    if (opt.command == "synth-pairs") return cmd_synth_pairs(cfg, opt);
    if (opt.command == "train-sr") return cmd_train_sr(cfg, opt);
    if (opt.command == "infer") return cmd_infer(cfg, opt);
    if (opt.command == "evaluate") return cmd_evaluate(cfg, opt);
    return cmd_degrade(cfg, opt);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const json::exception& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const std::invalid_argument& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const DataError& e) {
    return fail("data", e.what(), kExitData);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), kExitRuntime);
  }
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace sinesr::cli
