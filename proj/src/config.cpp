#include "sdtnet/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sdtnet/common.hpp"

namespace sdtnet {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const auto out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const auto out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected bool, got '" + v + "'");
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct KeyEntry {
  std::string key;
  std::string description;
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

const std::vector<KeyEntry>& schema() {
  static const std::vector<KeyEntry> entries = [] {
    std::vector<KeyEntry> e;
    auto add = [&e](std::string key, std::string desc, auto setter, auto getter) {
      e.push_back({std::move(key), std::move(desc), setter, getter});
    };

    add("data.root", "dataset directory",
        [](TrainingConfig& c, const std::string& v) { c.data_root = v; },
        [](const TrainingConfig& c) { return c.data_root; });
    add("data.val_subjects", "validation subject count",
        [](TrainingConfig& c, const std::string& v) { c.val_subjects = parse_int("data.val_subjects", v); },
        [](const TrainingConfig& c) { return std::to_string(c.val_subjects); });
    add("data.test_subjects", "test subject count",
        [](TrainingConfig& c, const std::string& v) { c.test_subjects = parse_int("data.test_subjects", v); },
        [](const TrainingConfig& c) { return std::to_string(c.test_subjects); });

    add("train.labels_fraction", "fraction of training subjects with labels",
        [](TrainingConfig& c, const std::string& v) { c.labels_fraction = parse_double("train.labels_fraction", v); },
        [](const TrainingConfig& c) { return fmt_double(c.labels_fraction); });
    add("train.batch_size", "items per stream per step",
        [](TrainingConfig& c, const std::string& v) { c.batch_size = parse_int("train.batch_size", v); },
        [](const TrainingConfig& c) { return std::to_string(c.batch_size); });
    add("train.max_epochs", "hard epoch limit",
        [](TrainingConfig& c, const std::string& v) { c.max_epochs = parse_int("train.max_epochs", v); },
        [](const TrainingConfig& c) { return std::to_string(c.max_epochs); });
    add("train.steps_per_epoch", "0 derives the count from the stream sizes",
        [](TrainingConfig& c, const std::string& v) { c.steps_per_epoch = parse_int("train.steps_per_epoch", v); },
        [](const TrainingConfig& c) { return std::to_string(c.steps_per_epoch); });
    add("train.lr_max", "learning-rate wave peak",
        [](TrainingConfig& c, const std::string& v) { c.lr_max = parse_double("train.lr_max", v); },
        [](const TrainingConfig& c) { return fmt_double(c.lr_max); });
    add("train.lr_min", "learning-rate wave trough",
        [](TrainingConfig& c, const std::string& v) { c.lr_min = parse_double("train.lr_min", v); },
        [](const TrainingConfig& c) { return fmt_double(c.lr_min); });
    add("train.lr_period_epochs", "triangular wave period",
        [](TrainingConfig& c, const std::string& v) { c.lr_period_epochs = parse_int("train.lr_period_epochs", v); },
        [](const TrainingConfig& c) { return std::to_string(c.lr_period_epochs); });
    add("train.ema_decay", "parameter moving-average decay",
        [](TrainingConfig& c, const std::string& v) { c.ema_decay = parse_double("train.ema_decay", v); },
        [](const TrainingConfig& c) { return fmt_double(c.ema_decay); });
    add("train.patience_evals", "validation evals without improvement before stopping",
        [](TrainingConfig& c, const std::string& v) { c.patience_evals = parse_int("train.patience_evals", v); },
        [](const TrainingConfig& c) { return std::to_string(c.patience_evals); });
    add("train.seed", "global seed",
        [](TrainingConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(parse_int("train.seed", v)); },
        [](const TrainingConfig& c) { return std::to_string(c.seed); });
    add("train.deterministic", "single-threaded bit-reproducible mode",
        [](TrainingConfig& c, const std::string& v) { c.deterministic = parse_bool("train.deterministic", v); },
        [](const TrainingConfig& c) { return c.deterministic ? "true" : "false"; });
    add("train.adam_beta1", "Adam beta1",
        [](TrainingConfig& c, const std::string& v) { c.adam_beta1 = parse_double("train.adam_beta1", v); },
        [](const TrainingConfig& c) { return fmt_double(c.adam_beta1); });
    add("train.adam_beta2", "Adam beta2",
        [](TrainingConfig& c, const std::string& v) { c.adam_beta2 = parse_double("train.adam_beta2", v); },
        [](const TrainingConfig& c) { return fmt_double(c.adam_beta2); });
    add("train.adam_eps", "Adam epsilon",
        [](TrainingConfig& c, const std::string& v) { c.adam_eps = parse_double("train.adam_eps", v); },
        [](const TrainingConfig& c) { return fmt_double(c.adam_eps); });

    add("loss.lambda0", "supervised term weight",
        [](TrainingConfig& c, const std::string& v) { c.weights.lambda0 = parse_double("loss.lambda0", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.lambda0); });
    add("loss.lambda1", "unsupervised term weight",
        [](TrainingConfig& c, const std::string& v) { c.weights.lambda1 = parse_double("loss.lambda1", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.lambda1); });
    add("loss.lambda2", "adversarial term weight",
        [](TrainingConfig& c, const std::string& v) { c.weights.lambda2 = parse_double("loss.lambda2", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.lambda2); });
    add("loss.lambda3", "transformer term weight",
        [](TrainingConfig& c, const std::string& v) { c.weights.lambda3 = parse_double("loss.lambda3", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.lambda3); });
    add("loss.lambda_kl", "KL weight inside the unsupervised term",
        [](TrainingConfig& c, const std::string& v) { c.weights.lambda_kl = parse_double("loss.lambda_kl", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.lambda_kl); });
    add("loss.ce_weight", "cross-entropy factor inside the supervised term",
        [](TrainingConfig& c, const std::string& v) { c.weights.ce_weight = parse_double("loss.ce_weight", v); },
        [](const TrainingConfig& c) { return fmt_double(c.weights.ce_weight); });

    add("model.image_size", "square input size; 0 infers from the dataset",
        [](TrainingConfig& c, const std::string& v) { c.image_size = parse_int("model.image_size", v); },
        [](const TrainingConfig& c) { return std::to_string(c.image_size); });
    add("model.anatomy_channels", "anatomy factor channels C_a",
        [](TrainingConfig& c, const std::string& v) { c.net.anatomy_channels = parse_int("model.anatomy_channels", v); },
        [](const TrainingConfig& c) { return std::to_string(c.net.anatomy_channels); });
    add("model.z_dim", "modality code length n_z",
        [](TrainingConfig& c, const std::string& v) { c.net.z_dim = parse_int("model.z_dim", v); },
        [](const TrainingConfig& c) { return std::to_string(c.net.z_dim); });
    add("model.anatomy_filters", "anatomy UNet stage widths (last = bottleneck)",
        [](TrainingConfig& c, const std::string& v) { c.net.anatomy_filters = parse_int_list("model.anatomy_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.anatomy_filters); });
    add("model.transformer_filters", "transformer UNet encoder widths (4 stages)",
        [](TrainingConfig& c, const std::string& v) { c.net.transformer_filters = parse_int_list("model.transformer_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.transformer_filters); });
    add("model.decoder_filters", "decoder block widths",
        [](TrainingConfig& c, const std::string& v) { c.net.decoder_filters = parse_int_list("model.decoder_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.decoder_filters); });
    add("model.segmentor_filters", "segmentor block widths",
        [](TrainingConfig& c, const std::string& v) { c.net.segmentor_filters = parse_int_list("model.segmentor_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.segmentor_filters); });
    add("model.discriminator_filters", "critic stage widths",
        [](TrainingConfig& c, const std::string& v) { c.net.discriminator_filters = parse_int_list("model.discriminator_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.discriminator_filters); });
    add("model.modality_filters", "modality encoder stage widths",
        [](TrainingConfig& c, const std::string& v) { c.net.modality_filters = parse_int_list("model.modality_filters", v); },
        [](const TrainingConfig& c) { return fmt_int_list(c.net.modality_filters); });

    add("aug.enable", "run-time augmentation on/off",
        [](TrainingConfig& c, const std::string& v) { c.augment = parse_bool("aug.enable", v); },
        [](const TrainingConfig& c) { return c.augment ? "true" : "false"; });
    add("aug.rotation_deg", "max |rotation| in degrees",
        [](TrainingConfig& c, const std::string& v) { c.aug.rotation_deg = parse_double("aug.rotation_deg", v); },
        [](const TrainingConfig& c) { return fmt_double(c.aug.rotation_deg); });
    add("aug.translate_frac", "max |shift| as a fraction of H/W",
        [](TrainingConfig& c, const std::string& v) { c.aug.translate_frac = parse_double("aug.translate_frac", v); },
        [](const TrainingConfig& c) { return fmt_double(c.aug.translate_frac); });
    add("aug.scale_min", "scale range lower bound",
        [](TrainingConfig& c, const std::string& v) { c.aug.scale_min = parse_double("aug.scale_min", v); },
        [](const TrainingConfig& c) { return fmt_double(c.aug.scale_min); });
    add("aug.scale_max", "scale range upper bound",
        [](TrainingConfig& c, const std::string& v) { c.aug.scale_max = parse_double("aug.scale_max", v); },
        [](const TrainingConfig& c) { return fmt_double(c.aug.scale_max); });

    add("run.id", "run identifier (empty derives one from the seed)",
        [](TrainingConfig& c, const std::string& v) { c.run_id = v; },
        [](const TrainingConfig& c) { return c.run_id; });
    add("run.dir", "root directory for runs (SDTNET_RUNS_DIR overrides)",
        [](TrainingConfig& c, const std::string& v) { c.runs_dir = v; },
        [](const TrainingConfig& c) { return c.runs_dir; });
    return e;
  }();
  return entries;
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(lr_min < lr_max)) throw ConfigError("train.lr_min must be below train.lr_max");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train.ema_decay must be in [0, 1)");
  if (patience_evals < 1) throw ConfigError("train.patience_evals must be >= 1");
  if (!(labels_fraction > 0.0 && labels_fraction <= 1.0))
    throw ConfigError("train.labels_fraction must be in (0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (lr_period_epochs < 1) throw ConfigError("train.lr_period_epochs must be >= 1");
  if (image_size != 0 && (image_size < 16 || image_size % 16 != 0))
    throw ConfigError("model.image_size must be 0 or a positive multiple of 16");
  if (weights.lambda0 < 0 || weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0 ||
      weights.lambda_kl < 0 || weights.ce_weight < 0)
    throw ConfigError("loss weights must be >= 0");
}

void apply_override(TrainingConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& entry : schema()) {
    if (entry.key == key) {
      entry.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_overrides(TrainingConfig& cfg, const std::vector<std::string>& key_value_pairs) {
  for (const auto& kv : key_value_pairs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + kv + "'");
    apply_override(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

TrainingConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  TrainingConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string config_help() {
  std::string out;
  for (const auto& entry : schema()) {
    TrainingConfig defaults;
    std::string line = "  " + entry.key;
    while (line.size() < 32) line += ' ';
    const auto def = entry.get(defaults);
    line += "[" + (def.empty() ? std::string("<empty>") : def) + "]  " + entry.description;
    out += line + "\n";
  }
  return out;
}

std::string config_to_text(const TrainingConfig& cfg) {
  std::string out;
  for (const auto& entry : schema()) out += entry.key + " = " + entry.get(cfg) + "\n";
  return out;
}

}  // namespace sdtnet
