#include "sdtnet/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdtnet/common.hpp"
#include "sdtnet/png_io.hpp"
#include "sdtnet/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdtnet {

const std::array<const char*, 3> kForegroundClassNames = {"LV", "MYO", "RV"};

namespace {

std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Gray8 to_gray8(const torch::Tensor& img) {
  const auto t = img.to(torch::kDouble).contiguous();
  const double lo = t.min().item<double>();
  const double hi = t.max().item<double>();
  const double range = hi > lo ? hi - lo : 1.0;
  Gray8 out;
  out.height = static_cast<int>(t.size(0));
  out.width = static_cast<int>(t.size(1));
  out.pixels.resize(static_cast<size_t>(out.height) * out.width);
  const auto* src = t.data_ptr<double>();
  for (size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = static_cast<uint8_t>(std::llround((src[i] - lo) / range * 255.0));
  return out;
}

Gray8 labels_to_gray8(const torch::Tensor& labels) {
  const auto t = labels.to(torch::kLong).contiguous();
  Gray8 out;
  out.height = static_cast<int>(t.size(0));
  out.width = static_cast<int>(t.size(1));
  out.pixels.resize(static_cast<size_t>(out.height) * out.width);
  const auto* src = t.data_ptr<int64_t>();
  for (size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = static_cast<uint8_t>(src[i] * 85);
  return out;
}

Gray8 hstack(const std::vector<Gray8>& tiles) {
  Gray8 out;
  out.height = tiles.front().height;
  out.width = 0;
  for (const auto& t : tiles) out.width += t.width;
  out.pixels.assign(static_cast<size_t>(out.height) * out.width, 0);
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x)
        out.pixels[static_cast<size_t>(y) * out.width + x0 + x] =
            t.pixels[static_cast<size_t>(y) * t.width + x];
    x0 += t.width;
  }
  return out;
}

}  // namespace

std::array<double, 3> dice_score(const torch::Tensor& pred_labels,
                                 const torch::Tensor& gt_labels) {
  TORCH_CHECK(pred_labels.sizes() == gt_labels.sizes(), "dice_score: shape mismatch");
  std::array<double, 3> out{};
  for (int64_t cls = 1; cls <= 3; ++cls) {
    const auto a = pred_labels == cls;
    const auto b = gt_labels == cls;
    const double na = a.sum().item<double>();
    const double nb = b.sum().item<double>();
    const double inter = (a & b).sum().item<double>();
    out[static_cast<size_t>(cls - 1)] = (na + nb) == 0.0 ? 1.0 : 2.0 * inter / (na + nb);
  }
  return out;
}

std::string EvaluationReport::csv() const {
  std::string out = "subject,phase,class,dice\n";
  for (const auto& row : rows)
    out += row.subject + "," + row.phase + "," + row.cls + "," + fmt_g17(row.dice) + "\n";
  return out;
}

std::string EvaluationReport::summary_json() const {
  json j;
  j["mean_dice"] = mean_dice;
  j["std_over_subjects"] = std_over_subjects;
  j["per_class_mean"] = per_class_mean;
  j["per_subject"] = per_subject;
  if (!p_values.empty()) j["p_values"] = p_values;
  return j.dump(2);
}

EvaluationReport aggregate_rows(std::vector<DiceRow> rows) {
  EvaluationReport report;
  report.rows = std::move(rows);

  // phase level -> class level -> subject level
  std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
  for (const auto& row : report.rows) {
    auto& cell = acc[row.subject][row.cls];
    cell.first += row.dice;
    cell.second += 1;
  }
  std::map<std::string, std::pair<double, int>> class_acc;
  double sum_subj = 0.0, sum_subj_sq = 0.0;
  for (const auto& [subject, classes] : acc) {
    double subj_sum = 0.0;
    for (const auto& [cls, cell] : classes) {
      const double phase_mean = cell.first / cell.second;
      report.per_subject_class[subject][cls] = phase_mean;
      subj_sum += phase_mean;
      class_acc[cls].first += phase_mean;
      class_acc[cls].second += 1;
    }
    const double subj_mean = subj_sum / static_cast<double>(classes.size());
    report.per_subject[subject] = subj_mean;
    sum_subj += subj_mean;
    sum_subj_sq += subj_mean * subj_mean;
  }
  const double n = static_cast<double>(report.per_subject.size());
  if (n > 0) {
    report.mean_dice = sum_subj / n;
    report.std_over_subjects =
        n > 1 ? std::sqrt(std::max(0.0, (sum_subj_sq - n * report.mean_dice * report.mean_dice) /
                                            (n - 1.0)))
              : 0.0;
  }
  for (const auto& [cls, cell] : class_acc)
    report.per_class_mean[cls] = cell.first / cell.second;
  return report;
}

EvaluationReport evaluate(NetworkBundle& bundle, const std::vector<CineSequence>& dataset,
                          const std::vector<std::string>& subjects, const std::string& out_dir) {
  torch::NoGradGuard no_grad;
  bundle->eval();

  std::vector<DiceRow> rows;
  const bool emit = !out_dir.empty();
  if (emit) fs::create_directories(out_dir);

  bool any_frame = false;
  for (const auto& seq : dataset) {
    if (std::find(subjects.begin(), subjects.end(), seq.subject_id) == subjects.end()) continue;
    const auto vol = normalize_volume(seq.volume());
    for (const auto& [phase_name, idx] :
         std::vector<std::pair<std::string, int64_t>>{{"ED", seq.ed_index},
                                                      {"ES", seq.es_index}}) {
      const auto it = seq.labels.find(idx);
      if (it == seq.labels.end()) continue;
      any_frame = true;

      const auto x = vol[idx].unsqueeze(0).unsqueeze(0).to(torch::kFloat);
      const auto soft = bundle->segment(bundle->anatomy_encode(x));
      const auto pred = soft.argmax(1).squeeze(0);
      const auto scores = dice_score(pred, it->second);
      for (size_t c = 0; c < kForegroundClassNames.size(); ++c)
        rows.push_back({seq.subject_id, phase_name, kForegroundClassNames[c], scores[c]});

      if (emit) {
        const auto strip = hstack({to_gray8(vol[idx]), labels_to_gray8(it->second),
                                   labels_to_gray8(pred)});
        write_png_gray8((fs::path(out_dir) / (seq.subject_id + "_" + phase_name + ".png")).string(),
                        strip);
      }
    }
  }
  if (!any_frame) throw DataError("evaluate: no labelled ED/ES frames among the requested subjects");

  auto report = aggregate_rows(std::move(rows));
  if (emit) {
    std::ofstream(fs::path(out_dir) / "metrics.csv") << report.csv();
    std::ofstream(fs::path(out_dir) / "summary.json") << report.summary_json() << "\n";
  }
  return report;
}

std::vector<DiceRow> parse_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics csv: " + path);
  std::vector<DiceRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("subject,", 0) == 0) continue;
    }
    std::stringstream ss(line);
    DiceRow row;
    std::string dice;
    if (!std::getline(ss, row.subject, ',') || !std::getline(ss, row.phase, ',') ||
        !std::getline(ss, row.cls, ',') || !std::getline(ss, dice))
      throw DataError("malformed metrics row: " + line);
    row.dice = std::strtod(dice.c_str(), nullptr);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<std::string, double> compare_metrics(const std::vector<DiceRow>& ours,
                                              const std::vector<DiceRow>& theirs) {
  std::map<std::string, double> theirs_by_key;
  for (const auto& row : theirs)
    theirs_by_key[row.subject + "|" + row.phase + "|" + row.cls] = row.dice;

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> joined;
  for (const auto& row : ours) {
    const auto it = theirs_by_key.find(row.subject + "|" + row.phase + "|" + row.cls);
    if (it == theirs_by_key.end()) continue;
    joined[row.cls].first.push_back(row.dice);
    joined[row.cls].second.push_back(it->second);
    joined["ALL"].first.push_back(row.dice);
    joined["ALL"].second.push_back(it->second);
  }
  if (joined.empty()) throw DataError("compare_metrics: no rows join across the two reports");

  std::map<std::string, double> out;
  for (const auto& [cls, ab] : joined) out[cls] = wilcoxon_paired(ab.first, ab.second);
  return out;
}

std::vector<torch::Tensor> synthesize_sequence(NetworkBundle& bundle, const torch::Tensor& x_ed,
                                               int64_t n_frames) {
  TORCH_CHECK(n_frames >= 2, "synthesize_sequence: need at least two frames");
  torch::NoGradGuard no_grad;
  bundle->eval();
  validate_image_batch(x_ed);

  const auto s0 = bundle->anatomy_encode(x_ed);
  // inference conditions on the posterior mean, no sampling
  const auto z0 = bundle->modality_encode(x_ed, s0).mean;

  std::vector<torch::Tensor> frames;
  frames.push_back(bundle->decode(s0, z0));
  for (int64_t k = 1; k < n_frames; ++k) {
    const double dt = static_cast<double>(k) / static_cast<double>(n_frames - 1);
    const auto warped = bundle->transform(s0, 0.0, dt).hard;
    frames.push_back(bundle->decode(warped, z0));
  }
  return frames;
}

void render_factors(const torch::Tensor& image, const torch::Tensor& factors,
                    const std::string& path) {
  TORCH_CHECK(image.dim() == 2, "render_factors: image must be H×W");
  TORCH_CHECK(factors.dim() == 3 && factors.size(1) == image.size(0) &&
                  factors.size(2) == image.size(1),
              "render_factors: factors must be C×H×W matching the image");
  std::vector<Gray8> tiles;
  tiles.push_back(to_gray8(image));
  for (int64_t c = 0; c < factors.size(0); ++c) {
    Gray8 tile;
    tile.height = static_cast<int>(factors.size(1));
    tile.width = static_cast<int>(factors.size(2));
    tile.pixels.resize(static_cast<size_t>(tile.height) * tile.width);
    const auto ch = factors[c].to(torch::kDouble).contiguous();
    const auto* src = ch.data_ptr<double>();
    for (size_t i = 0; i < tile.pixels.size(); ++i)
      tile.pixels[i] = src[i] > 0.5 ? 255 : 0;
    tiles.push_back(std::move(tile));
  }
  write_png_gray8(path, hstack(tiles));
}

}  // namespace sdtnet
