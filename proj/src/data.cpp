#include "sdtnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sdtnet/common.hpp"

namespace sdtnet {

torch::Tensor CineSequence::volume() const {
  TORCH_CHECK(!frames.empty(), "empty sequence");
  return torch::stack(frames, 0);
}

void CineSequence::validate() const {
  TORCH_CHECK(!frames.empty(), "sequence ", subject_id, " has no frames");
  TORCH_CHECK(0 <= ed_index && ed_index < es_index && es_index < n_frames(),
              "sequence ", subject_id, ": need 0 <= ed < es < n_frames, got ed=", ed_index,
              " es=", es_index, " n=", n_frames());
  const auto h = frames[0].size(0);
  const auto w = frames[0].size(1);
  for (const auto& f : frames)
    TORCH_CHECK(f.dim() == 2 && f.size(0) == h && f.size(1) == w,
                "sequence ", subject_id, ": frames disagree on H×W");
  for (const auto& [idx, lab] : labels) {
    TORCH_CHECK(idx >= 0 && idx < n_frames(), "label index out of range in ", subject_id);
    TORCH_CHECK(lab.dim() == 2 && lab.size(0) == h && lab.size(1) == w,
                "label shape mismatch in ", subject_id);
    TORCH_CHECK(lab.min().item<int64_t>() >= 0 && lab.max().item<int64_t>() <= 3,
                "label values outside {0,1,2,3} in ", subject_id);
  }
}

void DatasetSplit::validate() const {
  const std::vector<const std::vector<std::string>*> groups = {&labelled, &unlabelled, &validation,
                                                               &test};
  std::set<std::string> seen;
  size_t total = 0;
  for (const auto* g : groups) {
    seen.insert(g->begin(), g->end());
    total += g->size();
  }
  if (seen.size() != total) throw ConfigError("dataset split groups overlap");
}

void AugmentRanges::validate(int64_t height, int64_t width) const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min))
    throw ConfigError("augmentation scale range invalid");
  if (!(translate_frac >= 0.0) || translate_frac >= 1.0)
    throw ConfigError("augmentation translation leaves an empty field of view");
  if (!std::isfinite(rotation_deg)) throw ConfigError("augmentation rotation invalid");
  if (height <= 0 || width <= 0) throw ConfigError("augmentation target has no pixels");
}

torch::Tensor normalize_volume(const torch::Tensor& raw) {
  TORCH_CHECK(raw.numel() > 0, "normalize_volume: empty input");
  auto v = raw.to(torch::kDouble);
  const auto p5 = torch::quantile(v.flatten(), 0.05).item<double>();
  const auto p95 = torch::quantile(v.flatten(), 0.95).item<double>();
  auto clipped = v.clamp(p5, p95);
  const auto med = torch::quantile(clipped.flatten(), 0.5).item<double>();
  const auto q25 = torch::quantile(clipped.flatten(), 0.25).item<double>();
  const auto q75 = torch::quantile(clipped.flatten(), 0.75).item<double>();
  const double iqr = q75 - q25;
  if (iqr <= 0.0) throw DataError("normalize_volume: degenerate input (zero interquartile range)");
  return ((clipped - med) / iqr).to(raw.scalar_type() == torch::kDouble ? torch::kDouble
                                                                        : torch::kFloat);
}

CycleSplit split_cardiac_cycle(const CineSequence& seq) {
  seq.validate();
  CycleSplit out;
  out.first.source_subject = seq.subject_id;
  for (int64_t i = seq.ed_index; i <= seq.es_index; ++i) out.first.frame_indices.push_back(i);

  ContractionSequence second;
  second.source_subject = seq.subject_id;
  for (int64_t i = seq.n_frames() - 1; i >= seq.es_index; --i) second.frame_indices.push_back(i);
  if (second.frame_indices.size() >= 2) {
    out.second = std::move(second);
  } else {
    out.dropped_second_half = true;
  }
  return out;
}

PhasePair sample_phase_pair(const CineSequence& seq, const ContractionSequence& half, Rng& rng) {
  const int64_t len = static_cast<int64_t>(half.frame_indices.size());
  TORCH_CHECK(len >= 2, "sample_phase_pair: half-cycle shorter than 2 frames");
  const int64_t n_pairs = len * (len - 1) / 2;
  int64_t k = rng.uniform_int(n_pairs);
  // decode k into positions i < j
  int64_t i = 0;
  int64_t row = len - 1;
  while (k >= row) {
    k -= row;
    --row;
    ++i;
  }
  const int64_t j = i + 1 + k;

  PhasePair pair;
  pair.t = static_cast<double>(i) / static_cast<double>(len - 1);
  pair.dt = static_cast<double>(j - i) / static_cast<double>(len - 1);
  pair.source_index = half.frame_indices[static_cast<size_t>(i)];
  pair.target_index = half.frame_indices[static_cast<size_t>(j)];
  pair.source_frame = seq.frames[static_cast<size_t>(pair.source_index)].clone();
  pair.target_frame = seq.frames[static_cast<size_t>(pair.target_index)].clone();
  return pair;
}

AffineParams draw_affine(const AugmentRanges& ranges, Rng& rng, int64_t height, int64_t width) {
  ranges.validate(height, width);
  AffineParams p;
  p.angle_deg = rng.uniform(-ranges.rotation_deg, ranges.rotation_deg);
  p.tx = rng.uniform(-ranges.translate_frac, ranges.translate_frac) * static_cast<double>(width);
  p.ty = rng.uniform(-ranges.translate_frac, ranges.translate_frac) * static_cast<double>(height);
  p.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
  return p;
}

torch::Tensor warp_affine(const torch::Tensor& img, const AffineParams& params, bool nearest,
                          double fill) {
  TORCH_CHECK(img.dim() == 2, "warp_affine expects H×W");
  const int64_t h = img.size(0);
  const int64_t w = img.size(1);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double rad = params.angle_deg * M_PI / 180.0;
  const double cosr = std::cos(rad);
  const double sinr = std::sin(rad);
  const double inv_scale = 1.0 / params.scale;

  const auto src = img.to(torch::kDouble).contiguous();
  const auto* in = src.data_ptr<double>();
  auto out = torch::empty({h, w}, torch::kDouble);
  auto* dst = out.data_ptr<double>();

  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      // invert: output pixel -> source coordinate
      const double dx = static_cast<double>(x) - cx - params.tx;
      const double dy = static_cast<double>(y) - cy - params.ty;
      const double sx = (cosr * dx + sinr * dy) * inv_scale + cx;
      const double sy = (-sinr * dx + cosr * dy) * inv_scale + cy;

      double value = fill;
      if (nearest) {
        const int64_t nx = static_cast<int64_t>(std::llround(sx));
        const int64_t ny = static_cast<int64_t>(std::llround(sy));
        if (nx >= 0 && nx < w && ny >= 0 && ny < h) value = in[ny * w + nx];
      } else {
        const int64_t x0 = static_cast<int64_t>(std::floor(sx));
        const int64_t y0 = static_cast<int64_t>(std::floor(sy));
        const double fx = sx - static_cast<double>(x0);
        const double fy = sy - static_cast<double>(y0);
        double acc = 0.0;
        for (int iy = 0; iy <= 1; ++iy) {
          for (int ix = 0; ix <= 1; ++ix) {
            const int64_t px = x0 + ix;
            const int64_t py = y0 + iy;
            const double wgt = (ix ? fx : 1.0 - fx) * (iy ? fy : 1.0 - fy);
            const double sample =
                (px >= 0 && px < w && py >= 0 && py < h) ? in[py * w + px] : fill;
            acc += wgt * sample;
          }
        }
        value = acc;
      }
      dst[y * w + x] = value;
    }
  }
  return out.to(img.scalar_type());
}

void augment_consistent(const std::vector<torch::Tensor*>& images,
                        const std::vector<torch::Tensor*>& masks, const AugmentRanges& ranges,
                        Rng& rng) {
  TORCH_CHECK(!images.empty() || !masks.empty(), "augment_consistent: nothing to transform");
  const torch::Tensor& ref = !images.empty() ? *images.front() : *masks.front();
  const int64_t h = ref.size(0);
  const int64_t w = ref.size(1);
  for (const auto* t : images) TORCH_CHECK((*t).size(0) == h && (*t).size(1) == w, "H×W mismatch");
  for (const auto* t : masks) TORCH_CHECK((*t).size(0) == h && (*t).size(1) == w, "H×W mismatch");

  const AffineParams p = draw_affine(ranges, rng, h, w);
  for (auto* t : images) *t = warp_affine(*t, p, /*nearest=*/false);
  for (auto* t : masks) *t = warp_affine(*t, p, /*nearest=*/true);
}

void augment_pair(PhasePair& pair, const AugmentRanges& ranges, Rng& rng) {
  augment_consistent({&pair.source_frame, &pair.target_frame}, {}, ranges, rng);
}

std::pair<std::vector<std::string>, std::vector<std::string>> subsample_labels(
    const std::vector<std::string>& pool, double fraction, uint64_t seed) {
  if (pool.empty()) throw ConfigError("subsample_labels: empty subject pool");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("subsample_labels: fraction must be in (0, 1]");

  std::vector<std::string> order(pool);
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  const auto n = static_cast<double>(order.size());
  const auto n_lab =
      std::max<int64_t>(1, static_cast<int64_t>(std::llround(fraction * n)));
  std::vector<std::string> labelled(order.begin(), order.begin() + n_lab);
  std::vector<std::string> unlabelled(order.begin() + n_lab, order.end());
  std::sort(labelled.begin(), labelled.end());
  std::sort(unlabelled.begin(), unlabelled.end());
  return {labelled, unlabelled};
}

DatasetSplit make_split(const std::vector<std::string>& subjects, int64_t n_validation,
                        int64_t n_test, double labels_fraction, uint64_t seed) {
  if (static_cast<int64_t>(subjects.size()) <= n_validation + n_test)
    throw ConfigError("make_split: no training subjects left after validation/test carve-out");
  if (n_validation <= 0) throw ConfigError("make_split: empty validation set");

  std::vector<std::string> order(subjects);
  std::sort(order.begin(), order.end());
  Rng rng = Rng(seed).fork(0x5e7);
  for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  DatasetSplit split;
  split.validation.assign(order.begin(), order.begin() + n_validation);
  split.test.assign(order.begin() + n_validation, order.begin() + n_validation + n_test);
  std::vector<std::string> train_pool(order.begin() + n_validation + n_test, order.end());
  std::tie(split.labelled, split.unlabelled) = subsample_labels(train_pool, labels_fraction, seed);
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  split.validate();
  return split;
}

}  // namespace sdtnet
