#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "sdtnet/checkpoint.hpp"
#include "sdtnet/data.hpp"
#include "sdtnet/networks.hpp"

namespace sdtnet {

extern const std::array<const char*, 3> kForegroundClassNames;  // LV, MYO, RV

// 2|A∩B| / (|A|+|B|) per foreground class on integer label maps; the
// empty-vs-empty case scores 1.
std::array<double, 3> dice_score(const torch::Tensor& pred_labels,
                                 const torch::Tensor& gt_labels);

struct DiceRow {
  std::string subject;
  std::string phase;  // "ED" or "ES"
  std::string cls;    // "LV", "MYO", "RV"
  double dice = 0.0;
};

struct EvaluationReport {
  std::vector<DiceRow> rows;
  // aggregation order: mean over phases, then classes, then subjects
  std::map<std::string, std::map<std::string, double>> per_subject_class;
  std::map<std::string, double> per_subject;
  std::map<std::string, double> per_class_mean;
  double mean_dice = 0.0;
  double std_over_subjects = 0.0;
  std::map<std::string, double> p_values;  // filled by compare_with

  std::string csv() const;
  std::string summary_json() const;
};

EvaluationReport aggregate_rows(std::vector<DiceRow> rows);

// Segments every labelled ED/ES frame of the listed subjects with h(f_A(x)).
// Volumes are normalized here; when out_dir is set, metrics.csv, summary.json
// and overlay PNGs are written beneath it.
EvaluationReport evaluate(NetworkBundle& bundle, const std::vector<CineSequence>& dataset,
                          const std::vector<std::string>& subjects,
                          const std::string& out_dir = "");

std::vector<DiceRow> parse_metrics_csv(const std::string& path);

// Paired per-class Wilcoxon between two metrics.csv files (rows joined on
// subject/phase/class); includes an "ALL" entry over every joined row.
std::map<std::string, double> compare_metrics(const std::vector<DiceRow>& ours,
                                              const std::vector<DiceRow>& theirs);

// Fig.-4-style roll-out: z fixed from the ED frame, anatomy advanced by the
// transformer; element k of the result is the frame at phase k/(n_frames-1).
std::vector<torch::Tensor> synthesize_sequence(NetworkBundle& bundle, const torch::Tensor& x_ed,
                                               int64_t n_frames);

// Tiled strip [input | factor channels...], two gray levels per factor tile.
void render_factors(const torch::Tensor& image, const torch::Tensor& factors,
                    const std::string& path);

}  // namespace sdtnet
