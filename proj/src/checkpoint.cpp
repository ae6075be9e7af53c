#include "sdtnet/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdtnet/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdtnet {

namespace {

void save_module(const torch::nn::Module& module, const std::string& path) {
  torch::serialize::OutputArchive archive;
  for (const auto& p : module.named_parameters()) archive.write(p.key(), p.value());
  for (const auto& b : module.named_buffers()) archive.write(b.key(), b.value(), /*is_buffer=*/true);
  archive.save_to(path);
}

std::shared_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params,
                                              const TrainingConfig& cfg) {
  auto options = torch::optim::AdamOptions(cfg.lr_max)
                     .betas(std::make_tuple(cfg.adam_beta1, cfg.adam_beta2))
                     .eps(cfg.adam_eps);
  return std::make_shared<torch::optim::Adam>(std::move(params), options);
}

void save_optimizer(const torch::optim::Adam& opt, const std::string& path) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  archive.save_to(path);
}

void load_optimizer(torch::optim::Adam& opt, const std::string& path) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
    opt.load(archive);
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot load optimizer state from " + path + ": " + e.what_without_backtrace());
  }
}

json split_to_json(const DatasetSplit& split) {
  return json{{"labelled", split.labelled},
              {"unlabelled", split.unlabelled},
              {"validation", split.validation},
              {"test", split.test}};
}

DatasetSplit split_from_json(const json& j) {
  DatasetSplit s;
  s.labelled = j.at("labelled").get<std::vector<std::string>>();
  s.unlabelled = j.at("unlabelled").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

}  // namespace

TrainingState make_training_state(const TrainingConfig& cfg, const DatasetSplit& split) {
  TrainingState state;
  state.config = cfg;
  state.split = split;
  state.raw = NetworkBundle(cfg.net);
  state.ema = NetworkBundle(cfg.net);
  {
    // shadow starts from the raw weights
    torch::NoGradGuard no_grad;
    auto sp = state.ema->parameters();
    const auto rp = state.raw->parameters();
    for (size_t i = 0; i < sp.size(); ++i) sp[i].copy_(rp[i]);
  }
  state.opt_main = make_adam(state.raw->generator_parameters(), cfg);
  state.opt_critic = make_adam(state.raw->discriminator_parameters(), cfg);
  return state;
}

void save_checkpoint(const TrainingState& state, const std::string& dir, bool ema_designated) {
  fs::create_directories(dir);
  save_module(*state.raw, (fs::path(dir) / "weights.pt").string());
  save_module(*state.ema, (fs::path(dir) / "ema.pt").string());
  save_optimizer(*state.opt_main, (fs::path(dir) / "optim_main.pt").string());
  save_optimizer(*state.opt_critic, (fs::path(dir) / "optim_critic.pt").string());

  // JSON has no infinity; an untouched best loss round-trips as a marker string
  const json best = std::isfinite(state.best_val_loss) ? json(state.best_val_loss) : json("inf");
  json counters = {{"epoch", state.epoch},
                   {"step", state.step},
                   {"best_val_loss", best},
                   {"evals_since_improvement", state.evals_since_improvement},
                   {"collapse_streak", state.collapse_streak}};
  std::ofstream(fs::path(dir) / "state.json") << counters.dump(2) << "\n";

  json manifest;
  manifest["format"] = 1;
  manifest["anatomy_channels"] = state.config.net.anatomy_channels;
  manifest["z_dim"] = state.config.net.z_dim;
  manifest["image_height"] = state.config.net.image_height;
  manifest["image_width"] = state.config.net.image_width;
  manifest["lambda0"] = state.config.weights.lambda0;
  manifest["lambda1"] = state.config.weights.lambda1;
  manifest["lambda2"] = state.config.weights.lambda2;
  manifest["lambda3"] = state.config.weights.lambda3;
  manifest["lambda_kl"] = state.config.weights.lambda_kl;
  manifest["ce_weight"] = state.config.weights.ce_weight;
  manifest["ema_decay"] = state.config.ema_decay;
  manifest["ema"] = ema_designated;
  manifest["run_id"] = state.config.run_id;
  manifest["config"] = config_to_text(state.config);
  manifest["split"] = split_to_json(state.split);
  std::ofstream(fs::path(dir) / "manifest.json") << manifest.dump(2) << "\n";
}

ManifestInfo read_manifest(const std::string& dir) {
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw CheckpointError("missing manifest.json under " + dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt manifest.json under " + dir + ": " + e.what());
  }

  ManifestInfo info;
  try {
    TrainingConfig cfg;
    std::stringstream ss(manifest.at("config").get<std::string>());
    std::string line;
    while (std::getline(ss, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(0, eq);
      auto value = line.substr(eq + 1);
      const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      key = trim(key);
      if (key.empty()) continue;
      apply_override(cfg, key, trim(value));
    }
    cfg.net.image_height = manifest.at("image_height").get<int64_t>();
    cfg.net.image_width = manifest.at("image_width").get<int64_t>();
    info.config = cfg;
    info.split = split_from_json(manifest.at("split"));
    info.ema_weights = manifest.at("ema").get<bool>();
    info.image_height = cfg.net.image_height;
    info.image_width = cfg.net.image_width;
  } catch (const json::exception& e) {
    throw CheckpointError("manifest.json under " + dir + " is incomplete: " + e.what());
  }
  return info;
}

void load_parameters_into(torch::nn::Module& module, const std::string& path) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot open parameter archive " + path + ": " + e.what_without_backtrace());
  }
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters()) {
    torch::Tensor stored;
    if (!archive.try_read(p.key(), stored))
      throw CheckpointError("parameter '" + p.key() + "' missing from " + path);
    if (stored.sizes() != p.value().sizes())
      throw CheckpointError("parameter '" + p.key() + "' has shape " +
                            c10::str(stored.sizes()) + " in " + path + ", expected " +
                            c10::str(p.value().sizes()));
    p.value().copy_(stored);
  }
  for (auto& b : module.named_buffers()) {
    torch::Tensor stored;
    if (archive.try_read(b.key(), stored, /*is_buffer=*/true)) b.value().copy_(stored);
  }
}

TrainingState load_checkpoint(const std::string& dir) {
  const auto info = read_manifest(dir);
  auto state = make_training_state(info.config, info.split);
  load_parameters_into(*state.raw, (fs::path(dir) / "weights.pt").string());
  load_parameters_into(*state.ema, (fs::path(dir) / "ema.pt").string());
  load_optimizer(*state.opt_main, (fs::path(dir) / "optim_main.pt").string());
  load_optimizer(*state.opt_critic, (fs::path(dir) / "optim_critic.pt").string());

  std::ifstream in(fs::path(dir) / "state.json");
  if (!in) throw CheckpointError("missing state.json under " + dir);
  json counters;
  try {
    in >> counters;
    state.epoch = counters.at("epoch").get<int64_t>();
    state.step = counters.at("step").get<int64_t>();
    const auto& best = counters.at("best_val_loss");
    state.best_val_loss =
        best.is_string() ? std::numeric_limits<double>::infinity() : best.get<double>();
    state.evals_since_improvement = counters.at("evals_since_improvement").get<int64_t>();
    state.collapse_streak = counters.at("collapse_streak").get<int64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt state.json under " + dir + ": " + e.what());
  }
  return state;
}

NetworkBundle load_eval_bundle(const std::string& dir) {
  const auto info = read_manifest(dir);
  NetworkBundle bundle(info.config.net);
  const auto file = info.ema_weights ? "ema.pt" : "weights.pt";
  load_parameters_into(*bundle, (fs::path(dir) / file).string());
  bundle->eval();
  return bundle;
}

}  // namespace sdtnet
