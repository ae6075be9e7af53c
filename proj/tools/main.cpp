#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sdtnet/common.hpp"
#include "sdtnet/config.hpp"
#include "sdtnet/evaluation.hpp"
#include "sdtnet/phantom.hpp"
#include "sdtnet/png_io.hpp"
#include "sdtnet/training.hpp"

namespace fs = std::filesystem;
using namespace sdtnet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

torch::Tensor load_input_image(const std::string& path) {
  const auto img = read_png_gray16(path);
  auto frame = torch::empty({img.height, img.width}, torch::kFloat);
  auto* dst = frame.data_ptr<float>();
  for (size_t i = 0; i < img.pixels.size(); ++i) dst[i] = static_cast<float>(img.pixels[i]);
  return frame;
}

// Normalized ED frame of a subject (or a standalone 16-bit image).
torch::Tensor resolve_input_frame(const std::string& image_path, const std::string& data_root,
                                  const std::string& subject, int64_t frame_override) {
  if (!image_path.empty()) {
    const auto raw = load_input_image(image_path);
    return normalize_volume(raw.unsqueeze(0))[0];
  }
  if (data_root.empty() || subject.empty())
    throw ConfigError("give either --image or --data together with --subject");
  const auto seq = read_subject(data_root, subject);
  const auto vol = normalize_volume(seq.volume());
  const auto idx = frame_override >= 0 ? frame_override : seq.ed_index;
  if (idx >= seq.n_frames()) throw DataError("frame index out of range");
  return vol[idx];
}

void write_frame_png(const torch::Tensor& frame, const std::string& path) {
  const auto t = frame.squeeze().to(torch::kDouble);
  const double lo = t.min().item<double>();
  const double hi = t.max().item<double>();
  const double range = hi > lo ? hi - lo : 1.0;
  Gray16 img;
  img.height = static_cast<int>(t.size(0));
  img.width = static_cast<int>(t.size(1));
  img.pixels.resize(static_cast<size_t>(img.height) * img.width);
  const auto c = t.contiguous();
  const auto* src = c.data_ptr<double>();
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<uint16_t>(std::llround((src[i] - lo) / range * 65535.0));
  write_png_gray16(path, img);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdtnet: semi-supervised cardiac segmentation with a temporal transformer"};
  app.require_subcommand(1);

  // phantom
  auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic contracting dataset");
  int64_t ph_subjects = 20, ph_frames = 10, ph_size = 64;
  uint64_t ph_seed = 0;
  std::string ph_out;
  bool ph_force = false;
  cmd_phantom->add_option("--subjects", ph_subjects, "number of subjects");
  cmd_phantom->add_option("--frames", ph_frames, "frames per subject");
  cmd_phantom->add_option("--size", ph_size, "square image size (multiple of 16)");
  cmd_phantom->add_option("--seed", ph_seed, "generator seed");
  cmd_phantom->add_option("-o,--out", ph_out, "output dataset directory")->required();
  cmd_phantom->add_flag("--force", ph_force, "write into a non-empty directory");

  // train
  auto* cmd_train = app.add_subcommand("train", "train a model");
  cmd_train->footer("config keys (defaults in brackets):\n" + config_help());
  std::string tr_config, tr_data, tr_run_id, tr_runs_dir;
  std::vector<std::string> tr_sets;
  double tr_labels_fraction = -1.0;
  int64_t tr_seed = -1;
  double tr_lambda[4] = {-1.0, -1.0, -1.0, -1.0};
  cmd_train->add_option("-c,--config", tr_config, "config file (key = value lines)");
  cmd_train->add_option("-d,--data", tr_data, "dataset directory (sets data.root)");
  cmd_train->add_option("--labels_fraction", tr_labels_fraction, "labelled fraction override");
  cmd_train->add_option("--seed", tr_seed, "seed override");
  cmd_train->add_option("--lambda0", tr_lambda[0], "supervised weight override");
  cmd_train->add_option("--lambda1", tr_lambda[1], "unsupervised weight override");
  cmd_train->add_option("--lambda2", tr_lambda[2], "adversarial weight override");
  cmd_train->add_option("--lambda3", tr_lambda[3], "transformer weight override");
  cmd_train->add_option("-s,--set", tr_sets, "config override key=value (repeatable)");
  cmd_train->add_option("--run-id", tr_run_id, "run identifier (sets run.id)");
  cmd_train->add_option("--runs-dir", tr_runs_dir, "runs root (sets run.dir)");

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_compare, ev_out;
  cmd_eval->add_option("-k,--checkpoint", ev_ckpt, "checkpoint directory")->required();
  cmd_eval->add_option("-d,--data", ev_data, "dataset directory")->required();
  cmd_eval->add_option("-s,--split", ev_split, "subject group: test, validation, labelled, unlabelled, all");
  cmd_eval->add_option("--compare", ev_compare, "metrics.csv of another run for a paired Wilcoxon test");
  cmd_eval->add_option("-o,--out", ev_out, "report directory (default reports/<run_id>)");

  // synthesize
  auto* cmd_synth = app.add_subcommand("synthesize", "roll a sequence forward from an ED frame");
  std::string sy_ckpt, sy_image, sy_data, sy_subject, sy_out = ".";
  int64_t sy_frames = 7;
  cmd_synth->add_option("-k,--checkpoint", sy_ckpt, "checkpoint directory")->required();
  cmd_synth->add_option("-i,--image", sy_image, "input 16-bit grayscale PNG");
  cmd_synth->add_option("-d,--data", sy_data, "dataset directory");
  cmd_synth->add_option("--subject", sy_subject, "subject id within --data");
  cmd_synth->add_option("--frames", sy_frames, "frames to synthesize");
  cmd_synth->add_option("-o,--out", sy_out, "output directory");

  // factors
  auto* cmd_factors = app.add_subcommand("factors", "render the anatomy factor channels");
  std::string fa_ckpt, fa_image, fa_data, fa_subject, fa_out = "factors.png";
  int64_t fa_frame = -1;
  cmd_factors->add_option("-k,--checkpoint", fa_ckpt, "checkpoint directory")->required();
  cmd_factors->add_option("-i,--image", fa_image, "input 16-bit grayscale PNG");
  cmd_factors->add_option("-d,--data", fa_data, "dataset directory");
  cmd_factors->add_option("--subject", fa_subject, "subject id within --data");
  cmd_factors->add_option("--frame", fa_frame, "frame index (default: ED)");
  cmd_factors->add_option("-o,--out", fa_out, "output PNG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (cmd_phantom->parsed()) {
      const auto subjects = generate_phantom(ph_subjects, ph_frames, ph_size, ph_size, ph_seed);
      write_dataset(ph_out, subjects, ph_force);
      std::cout << "wrote " << subjects.size() << " subjects to " << ph_out << "\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      TrainingConfig cfg = tr_config.empty() ? TrainingConfig{} : parse_config_file(tr_config);
      if (!tr_data.empty()) cfg.data_root = tr_data;
      if (tr_labels_fraction >= 0) cfg.labels_fraction = tr_labels_fraction;
      if (tr_seed >= 0) cfg.seed = static_cast<uint64_t>(tr_seed);
      const char* lambda_keys[4] = {"loss.lambda0", "loss.lambda1", "loss.lambda2", "loss.lambda3"};
      for (int i = 0; i < 4; ++i)
        if (tr_lambda[i] >= 0) apply_override(cfg, lambda_keys[i], std::to_string(tr_lambda[i]));
      apply_overrides(cfg, tr_sets);
      if (!tr_run_id.empty()) cfg.run_id = tr_run_id;
      if (!tr_runs_dir.empty()) cfg.runs_dir = tr_runs_dir;
      if (const char* env = std::getenv("SDTNET_RUNS_DIR"); env && tr_runs_dir.empty())
        cfg.runs_dir = env;

      const auto result = train_from_root(cfg);
      std::cout << "run dir: " << result.run_dir << "\n"
                << "best checkpoint: " << result.best_checkpoint << "\n"
                << "best val seg loss: " << result.best_val_loss << "\n";
      if (result.collapse_warning) std::cout << "warning: critic loss collapsed during training\n";
      return 0;
    }

    if (cmd_eval->parsed()) {
      auto bundle = load_eval_bundle(ev_ckpt);
      const auto manifest = read_manifest(ev_ckpt);
      const auto dataset = read_dataset(ev_data);

      std::vector<std::string> subjects;
      if (ev_split == "test") subjects = manifest.split.test;
      else if (ev_split == "validation") subjects = manifest.split.validation;
      else if (ev_split == "labelled") subjects = manifest.split.labelled;
      else if (ev_split == "unlabelled") subjects = manifest.split.unlabelled;
      else if (ev_split == "all") {
        for (const auto& seq : dataset) subjects.push_back(seq.subject_id);
      } else {
        throw ConfigError("unknown split '" + ev_split + "'");
      }

      std::string out_dir = ev_out;
      if (out_dir.empty())
        out_dir = (fs::path("reports") / manifest.config.run_id).string();
      auto report = evaluate(bundle, dataset, subjects, out_dir);
      if (!ev_compare.empty()) {
        report.p_values = compare_metrics(report.rows, parse_metrics_csv(ev_compare));
        std::ofstream(fs::path(out_dir) / "summary.json") << report.summary_json() << "\n";
      }
      std::cout << "mean dice: " << report.mean_dice << " (n=" << report.per_subject.size()
                << " subjects)\n"
                << "report: " << out_dir << "\n";
      for (const auto& [cls, p] : report.p_values)
        std::cout << "wilcoxon p (" << cls << "): " << p << "\n";
      return 0;
    }

    if (cmd_synth->parsed()) {
      auto bundle = load_eval_bundle(sy_ckpt);
      const auto frame = resolve_input_frame(sy_image, sy_data, sy_subject, -1);
      const auto x = frame.unsqueeze(0).unsqueeze(0).to(torch::kFloat);
      const auto frames = synthesize_sequence(bundle, x, sy_frames);
      fs::create_directories(sy_out);
      for (size_t k = 0; k < frames.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.png", k);
        write_frame_png(frames[k], (fs::path(sy_out) / name).string());
      }
      std::cout << "wrote " << frames.size() << " frames to " << sy_out << "\n";
      return 0;
    }

    if (cmd_factors->parsed()) {
      auto bundle = load_eval_bundle(fa_ckpt);
      const auto frame = resolve_input_frame(fa_image, fa_data, fa_subject, fa_frame);
      const auto x = frame.unsqueeze(0).unsqueeze(0).to(torch::kFloat);
      torch::NoGradGuard no_grad;
      const auto s = bundle->anatomy_encode(x);
      render_factors(frame, s.squeeze(0), fa_out);
      std::cout << "wrote " << fa_out << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
