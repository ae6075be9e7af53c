#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdtnet/rng.hpp"

namespace sdtnet {

// One subject's cine acquisition. Frames are float32 H×W, labels int64 H×W
// with values in {0=BG, 1=LV, 2=MYO, 3=RV}, keyed by frame index.
struct CineSequence {
  std::string subject_id;
  std::vector<torch::Tensor> frames;
  int64_t ed_index = 0;
  int64_t es_index = 0;
  std::map<int64_t, torch::Tensor> labels;

  int64_t n_frames() const { return static_cast<int64_t>(frames.size()); }
  torch::Tensor volume() const;  // stacked T×H×W
  void validate() const;
};

// Frame indices into the parent sequence, ordered most-dilated first and
// ending at end-systole.
struct ContractionSequence {
  std::string source_subject;
  std::vector<int64_t> frame_indices;
};

struct CycleSplit {
  ContractionSequence first;
  std::optional<ContractionSequence> second;
  bool dropped_second_half = false;
};

// (t, dt) conditioning plus the two frames they index.
struct PhasePair {
  double t = 0.0;
  double dt = 0.0;
  int64_t source_index = 0;  // frame index in the parent sequence
  int64_t target_index = 0;
  torch::Tensor source_frame;  // H×W float32
  torch::Tensor target_frame;
};

struct DatasetSplit {
  std::vector<std::string> labelled;
  std::vector<std::string> unlabelled;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  void validate() const;  // pairwise disjoint
};

struct AugmentRanges {
  double rotation_deg = 15.0;
  double translate_frac = 0.10;
  double scale_min = 0.9;
  double scale_max = 1.1;
  void validate(int64_t height, int64_t width) const;
};

struct AffineParams {
  double angle_deg = 0.0;
  double tx = 0.0;  // pixels, x = column axis
  double ty = 0.0;
  double scale = 1.0;
};

// Clip to [p5, p95], subtract the median of the clipped volume and divide by
// its interquartile range. Throws DataError when the IQR is zero.
torch::Tensor normalize_volume(const torch::Tensor& raw);

// ED..ES in natural order plus the reversed tail (N-1 .. ES). The second half
// is dropped (with a flag) when it would hold fewer than two frames.
CycleSplit split_cardiac_cycle(const CineSequence& seq);

// Uniform over all position pairs i < j of the half; t = i/(L-1), dt = (j-i)/(L-1).
PhasePair sample_phase_pair(const CineSequence& seq, const ContractionSequence& half, Rng& rng);

AffineParams draw_affine(const AugmentRanges& ranges, Rng& rng, int64_t height, int64_t width);

// Inverse-mapped affine warp about the image centre. Bilinear for intensities,
// nearest-neighbour when `nearest` is set (label maps). `img` is H×W.
torch::Tensor warp_affine(const torch::Tensor& img, const AffineParams& params, bool nearest,
                          double fill = 0.0);

// One transform per call, applied identically to every image (bilinear) and
// every mask (nearest-neighbour). Pair-consistency lives here: the transformer
// target must stay geometrically aligned with its source.
void augment_consistent(const std::vector<torch::Tensor*>& images,
                        const std::vector<torch::Tensor*>& masks, const AugmentRanges& ranges,
                        Rng& rng);

void augment_pair(PhasePair& pair, const AugmentRanges& ranges, Rng& rng);

// Subject-level labelled/unlabelled partition; labelled count = max(1, round(f·N)).
std::pair<std::vector<std::string>, std::vector<std::string>> subsample_labels(
    const std::vector<std::string>& pool, double fraction, uint64_t seed);

// Deterministic validation/test carve-out followed by the labelled subsample.
DatasetSplit make_split(const std::vector<std::string>& subjects, int64_t n_validation,
                        int64_t n_test, double labels_fraction, uint64_t seed);

// Dataset directory format: root/<subject>/frame_%03d.png (16-bit grayscale),
// root/<subject>/label_%03d.png (8-bit, only for labelled frames), meta.json.
void write_dataset(const std::string& root, const std::vector<CineSequence>& subjects,
                   bool force = false);
std::vector<std::string> list_subjects(const std::string& root);
CineSequence read_subject(const std::string& root, const std::string& subject_id);
std::vector<CineSequence> read_dataset(const std::string& root);

}  // namespace sdtnet
