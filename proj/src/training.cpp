#include "sdtnet/training.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sdtnet/common.hpp"
#include "sdtnet/schedule.hpp"

namespace fs = std::filesystem;

namespace sdtnet {

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

struct FrameRef {
  size_t subject;
  int64_t frame;
};

struct HalfRef {
  size_t subject;
  ContractionSequence half;
};

// shuffled cycling cursor over a stream
struct Cursor {
  std::vector<size_t> order;
  size_t pos = 0;

  explicit Cursor(size_t n) {
    order.resize(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
  }
  void shuffle(Rng& rng) {
    if (order.size() > 1)
      for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(static_cast<int64_t>(i) + 1)]);
    pos = 0;
  }
  size_t next(Rng& rng) {
    if (pos >= order.size()) shuffle(rng);
    return order[pos++];
  }
};

torch::Tensor stack_images(const std::vector<torch::Tensor>& frames) {
  return torch::stack(frames, 0).unsqueeze(1).to(torch::kFloat);
}

}  // namespace

LossReport train_step(TrainingState& state, const std::optional<LabelledBatch>& labelled,
                      const std::optional<UnlabelledBatch>& unlabelled,
                      const std::optional<PairBatch>& pairs) {
  const auto& w = state.config.weights;
  auto& net = state.raw;
  net->train();

  LossReport report;
  report.step = state.step;
  report.epoch = state.epoch;

  const bool has_supervised = labelled.has_value() && w.lambda0 > 0;
  const bool has_unsup = w.lambda1 > 0 && (labelled || unlabelled);
  const bool has_adv = w.lambda2 > 0;
  const bool has_tr = w.lambda3 > 0 && pairs.has_value();
  TORCH_CHECK(labelled || unlabelled || pairs, "train_step: no batches given");
  if (has_adv)
    TORCH_CHECK(labelled && unlabelled,
                "train_step: adversarial term needs labelled masks and unlabelled images");

  // (1) critic step on real vs detached fake masks
  if (has_adv) {
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = net->segment(net->anatomy_encode(unlabelled->images));
    }
    const auto d_real = net->discriminate(foreground(labelled->masks));
    const auto d_fake = net->discriminate(foreground(fake));
    const auto critic = lsgan_losses(d_real, d_fake).critic;
    state.opt_critic->zero_grad();
    critic.backward();
    state.opt_critic->step();
    report.adv_critic = critic.item<double>();

    state.collapse_streak = report.adv_critic < 1e-4 ? state.collapse_streak + 1 : 0;
    if (state.collapse_streak >= 100) report.collapse_warning = true;
  }

  // (2) main step
  const auto zero = torch::zeros({}, torch::kFloat);
  auto l_s = zero, l_us = zero, l_adv = zero, l_tr = zero;

  torch::Tensor s_lab, s_unlab;
  if (labelled && (has_supervised || has_unsup)) s_lab = net->anatomy_encode(labelled->images);
  if (unlabelled && (has_unsup || has_adv)) s_unlab = net->anatomy_encode(unlabelled->images);

  if (has_supervised) {
    const auto terms = supervised_loss(labelled->masks, net->segment(s_lab), w.ce_weight);
    l_s = terms.total;
    report.dice = terms.dice.item<double>();
    report.ce = terms.ce.item<double>();
  }

  if (has_unsup) {
    std::vector<torch::Tensor> xs, ss;
    if (labelled) {
      xs.push_back(labelled->images);
      ss.push_back(s_lab);
    }
    if (unlabelled) {
      xs.push_back(unlabelled->images);
      ss.push_back(s_unlab);
    }
    const auto x = torch::cat(xs, 0);
    const auto s = torch::cat(ss, 0);
    const auto code = net->modality_encode(x, s);
    const auto recon = net->decode(s, code.sample);
    const auto z_hat = net->estimate_mi_code(recon);
    const auto terms =
        unsupervised_loss(x, recon, code.mean, code.log_variance, code.sample, z_hat, w.lambda_kl);
    l_us = terms.total;
    report.l1 = terms.l1.item<double>();
    report.kl = terms.kl.item<double>();
    report.mi = terms.mi_penalty.item<double>();
  }

  if (has_adv) {
    const auto d_fake = net->discriminate(foreground(net->segment(s_unlab)));
    l_adv = lsgan_losses(torch::ones_like(d_fake), d_fake).generator;
  }

  if (has_tr) {
    const auto s_source = net->anatomy_encode(pairs->source);
    torch::Tensor s_target;
    {
      torch::NoGradGuard no_grad;
      s_target = net->anatomy_encode(pairs->target);
    }
    const auto predicted = net->transform(s_source, pairs->t, pairs->dt);
    l_tr = transformer_loss(predicted.soft, s_target);
  }

  const auto total = total_loss(l_s, l_us, l_adv, l_tr, w, has_supervised);
  state.opt_main->zero_grad();
  if (total.requires_grad()) total.backward();
  state.opt_main->step();

  // (3) shadow update
  ema_update(*state.ema, *state.raw, state.config.ema_decay);

  report.supervised = l_s.item<double>();
  report.unsupervised = l_us.item<double>();
  report.adversarial = l_adv.item<double>();
  report.transformer = l_tr.item<double>();
  report.total = total.item<double>();
  ++state.step;
  return report;
}

double segmentation_loss(NetworkBundle& bundle, const torch::Tensor& images,
                         const torch::Tensor& masks, double ce_weight) {
  torch::NoGradGuard no_grad;
  bundle->eval();
  const int64_t n = images.size(0);
  const int64_t chunk = 16;
  double acc = 0.0;
  for (int64_t i = 0; i < n; i += chunk) {
    const auto len = std::min(chunk, n - i);
    const auto x = images.narrow(0, i, len);
    const auto y = masks.narrow(0, i, len);
    const auto pred = bundle->segment(bundle->anatomy_encode(x));
    const auto terms = supervised_loss(y, pred, ce_weight);
    acc += terms.total.item<double>() * static_cast<double>(len);
  }
  return acc / static_cast<double>(n);
}

TrainResult train(const std::vector<CineSequence>& dataset, TrainingConfig cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  if (cfg.deterministic) torch::set_num_threads(1);
  torch::manual_seed(cfg.seed);

  // resolve geometry and normalize volumes per subject
  const int64_t h = dataset.front().frames.front().size(0);
  const int64_t wdt = dataset.front().frames.front().size(1);
  if (cfg.image_size != 0 && (cfg.image_size != h || cfg.image_size != wdt))
    throw ConfigError("model.image_size differs from the dataset frame size");
  if (h % 16 != 0 || wdt % 16 != 0) throw DataError("train: frame size must be divisible by 16");
  cfg.net.image_height = h;
  cfg.net.image_width = wdt;

  std::vector<CineSequence> data;
  data.reserve(dataset.size());
  std::vector<std::string> ids;
  for (const auto& seq : dataset) {
    seq.validate();
    TORCH_CHECK(seq.frames.front().size(0) == h && seq.frames.front().size(1) == wdt,
                "train: subjects disagree on frame size");
    CineSequence norm = seq;
    const auto vol = normalize_volume(seq.volume());
    for (int64_t f = 0; f < seq.n_frames(); ++f) norm.frames[static_cast<size_t>(f)] = vol[f].clone();
    data.push_back(std::move(norm));
    ids.push_back(seq.subject_id);
  }

  const auto split = make_split(ids, cfg.val_subjects, cfg.test_subjects, cfg.labels_fraction,
                                cfg.seed);

  auto index_of = [&](const std::string& id) {
    return static_cast<size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
  };

  // streams
  std::vector<FrameRef> lab_frames, unlab_frames, val_frames;
  std::vector<HalfRef> halves;
  for (const auto& id : split.labelled) {
    const auto si = index_of(id);
    for (const auto& [f, _] : data[si].labels) lab_frames.push_back({si, f});
  }
  for (const auto& id : split.unlabelled) {
    const auto si = index_of(id);
    for (int64_t f = 0; f < data[si].n_frames(); ++f) unlab_frames.push_back({si, f});
  }
  if (unlab_frames.empty()) {
    // fully labelled pool: the unsupervised/adversarial streams see all training frames
    for (const auto& id : split.labelled) {
      const auto si = index_of(id);
      for (int64_t f = 0; f < data[si].n_frames(); ++f) unlab_frames.push_back({si, f});
    }
  }
  for (const auto& group : {split.labelled, split.unlabelled}) {
    for (const auto& id : group) {
      const auto si = index_of(id);
      const auto cs = split_cardiac_cycle(data[si]);
      halves.push_back({si, cs.first});
      if (cs.second) halves.push_back({si, *cs.second});
    }
  }
  for (const auto& id : split.validation) {
    const auto si = index_of(id);
    for (const auto phase : {data[si].ed_index, data[si].es_index})
      if (data[si].labels.count(phase)) val_frames.push_back({si, phase});
  }

  const auto& w = cfg.weights;
  const bool need_lab = w.lambda0 > 0 && !lab_frames.empty();
  const bool need_unlab = w.lambda1 > 0 || w.lambda2 > 0;
  const bool need_pairs = w.lambda3 > 0;
  if (w.lambda0 > 0 && lab_frames.empty())
    throw ConfigError("train: supervised loss enabled but no labelled frames");
  if (w.lambda2 > 0 && lab_frames.empty())
    throw ConfigError("train: adversarial loss needs ground-truth masks");
  if (need_pairs && halves.empty()) throw ConfigError("train: no half-cycles for the pair stream");
  if (val_frames.empty()) throw ConfigError("train: empty validation set");
  if (!need_lab && !need_unlab && !need_pairs)
    throw ConfigError("train: all loss terms disabled");

  int64_t steps_per_epoch = cfg.steps_per_epoch;
  if (steps_per_epoch <= 0) {
    const auto stream_max = std::max<size_t>(need_lab ? lab_frames.size() : 0,
                                             need_unlab ? unlab_frames.size() : 0);
    steps_per_epoch = std::max<int64_t>(
        1, static_cast<int64_t>((stream_max + cfg.batch_size - 1) / cfg.batch_size));
  }

  // run directory
  std::string run_id = cfg.run_id;
  if (run_id.empty()) run_id = "run-seed" + std::to_string(cfg.seed);
  fs::path run_dir = fs::path(cfg.runs_dir) / run_id;
  for (int k = 1; fs::exists(run_dir); ++k) run_dir = fs::path(cfg.runs_dir) / (run_id + "-" + std::to_string(k));
  fs::create_directories(run_dir);
  cfg.run_id = run_dir.filename().string();
  std::ofstream(run_dir / "config.txt") << config_to_text(cfg);

  auto state = make_training_state(cfg, split);

  std::ofstream log(run_dir / "log.csv");
  log << LossReport::csv_header() << "\n";
  std::ofstream val_log(run_dir / "val.csv");
  val_log << "epoch,val_seg_loss\n";

  // validation tensors are fixed across epochs
  std::vector<torch::Tensor> val_imgs, val_masks;
  for (const auto& ref : val_frames) {
    val_imgs.push_back(data[ref.subject].frames[static_cast<size_t>(ref.frame)]);
    val_masks.push_back(data[ref.subject].labels.at(ref.frame));
  }
  const auto val_x = stack_images(val_imgs);
  const auto val_y = onehot_from_labels(torch::stack(val_masks, 0));

  Rng master(cfg.seed);
  Rng aug_rng = master.fork(11);
  Rng batch_rng = master.fork(22);
  Rng pair_rng = master.fork(33);

  Cursor lab_cursor(lab_frames.size());
  Cursor unlab_cursor(unlab_frames.size());
  if (!lab_frames.empty()) lab_cursor.shuffle(batch_rng);
  if (!unlab_frames.empty()) unlab_cursor.shuffle(batch_rng);

  auto draw_labelled = [&]() -> LabelledBatch {
    std::vector<torch::Tensor> imgs, masks;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& ref = lab_frames[lab_cursor.next(batch_rng)];
      auto img = data[ref.subject].frames[static_cast<size_t>(ref.frame)].clone();
      auto lab = data[ref.subject].labels.at(ref.frame).clone();
      if (cfg.augment) augment_consistent({&img}, {&lab}, cfg.aug, aug_rng);
      imgs.push_back(img);
      masks.push_back(lab);
    }
    return {stack_images(imgs), onehot_from_labels(torch::stack(masks, 0))};
  };

  auto draw_unlabelled = [&]() -> UnlabelledBatch {
    std::vector<torch::Tensor> imgs;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& ref = unlab_frames[unlab_cursor.next(batch_rng)];
      auto img = data[ref.subject].frames[static_cast<size_t>(ref.frame)].clone();
      if (cfg.augment) augment_consistent({&img}, {}, cfg.aug, aug_rng);
      imgs.push_back(img);
    }
    return {stack_images(imgs)};
  };

  auto draw_pairs = [&]() -> PairBatch {
    std::vector<torch::Tensor> src, tgt;
    std::vector<double> ts, dts;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& ref = halves[pair_rng.uniform_int(static_cast<int64_t>(halves.size()))];
      auto pair = sample_phase_pair(data[ref.subject], ref.half, pair_rng);
      if (cfg.augment) augment_pair(pair, cfg.aug, aug_rng);
      src.push_back(pair.source_frame);
      tgt.push_back(pair.target_frame);
      ts.push_back(pair.t);
      dts.push_back(pair.dt);
    }
    return {stack_images(src), stack_images(tgt),
            torch::tensor(ts, torch::kFloat), torch::tensor(dts, torch::kFloat)};
  };

  TrainResult result;
  result.run_dir = run_dir.string();
  result.log_path = (run_dir / "log.csv").string();
  const auto best_dir = (run_dir / "best").string();
  const auto last_dir = (run_dir / "last").string();

  for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = triangular_lr(static_cast<double>(epoch), cfg.lr_max, cfg.lr_min,
                                    static_cast<double>(cfg.lr_period_epochs));
    set_lr(*state.opt_main, lr);
    set_lr(*state.opt_critic, lr);

    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      std::optional<LabelledBatch> lab;
      std::optional<UnlabelledBatch> unlab;
      std::optional<PairBatch> pairs;
      if (need_lab || (w.lambda2 > 0 && !lab_frames.empty())) lab = draw_labelled();
      if (need_unlab) unlab = draw_unlabelled();
      if (need_pairs) pairs = draw_pairs();
      const auto report = train_step(state, lab, unlab, pairs);
      result.collapse_warning = result.collapse_warning || report.collapse_warning;
      log << report.csv_row() << "\n";
    }
    log.flush();

    const double val_loss = segmentation_loss(state.ema, val_x, val_y, cfg.weights.ce_weight);
    val_log << epoch << "," << val_loss << "\n";
    val_log.flush();
    std::cout << "epoch " << epoch << " lr " << lr << " val_seg_loss " << val_loss << std::endl;

    result.epochs_run = epoch + 1;
    if (val_loss < state.best_val_loss - 1e-12) {
      state.best_val_loss = val_loss;
      state.evals_since_improvement = 0;
      save_checkpoint(state, best_dir, /*ema_designated=*/true);
    } else {
      ++state.evals_since_improvement;
      if (state.evals_since_improvement >= cfg.patience_evals) {
        result.early_stopped = true;
        break;
      }
    }
  }

  save_checkpoint(state, last_dir, /*ema_designated=*/true);
  if (!fs::exists(fs::path(best_dir) / "manifest.json"))
    save_checkpoint(state, best_dir, /*ema_designated=*/true);

  result.best_checkpoint = best_dir;
  result.last_checkpoint = last_dir;
  result.best_val_loss = state.best_val_loss;
  return result;
}

TrainResult train_from_root(TrainingConfig cfg) {
  if (cfg.data_root.empty()) throw ConfigError("train: data.root not set");
  return train(read_dataset(cfg.data_root), std::move(cfg));
}

}  // namespace sdtnet
