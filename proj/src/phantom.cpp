#include "sdtnet/phantom.hpp"

#include <cmath>

#include "sdtnet/common.hpp"

namespace sdtnet {

namespace {

struct SubjectGeometry {
  double cx, cy;           // LV centre
  double r0;               // LV radius at ED
  double contraction;      // ES radius = r0 * (1 - contraction)
  double ring_area;        // myocardium cross-section, kept constant over time
  double outer0;           // ring outer radius at ED
  double rv_radius;
  double rv_angle;
  double base[4];          // BG, LV, MYO, RV intensity levels
  double bias_x, bias_y;   // linear shading slopes
};

double lv_radius(const SubjectGeometry& g, int64_t frame, int64_t n_frames) {
  const double phase = static_cast<double>(frame) / static_cast<double>(n_frames - 1);
  return g.r0 * (1.0 - g.contraction * phase);
}

double outer_radius(const SubjectGeometry& g, double lv_r) {
  return std::sqrt(lv_r * lv_r + g.ring_area / M_PI);
}

}  // namespace

std::vector<CineSequence> generate_phantom(int64_t n_subjects, int64_t n_frames, int64_t height,
                                           int64_t width, uint64_t seed) {
  if (n_frames < 4) throw ConfigError("generate_phantom: need n_frames >= 4");
  if (height % 16 != 0 || width % 16 != 0)
    throw ConfigError("generate_phantom: H and W must be divisible by 16");
  if (n_subjects <= 0) throw ConfigError("generate_phantom: need at least one subject");

  const double m = static_cast<double>(std::min(height, width));
  Rng master(seed);

  std::vector<CineSequence> subjects;
  subjects.reserve(static_cast<size_t>(n_subjects));

  for (int64_t s = 0; s < n_subjects; ++s) {
    Rng rng = master.fork(static_cast<uint64_t>(s) + 1);

    SubjectGeometry g;
    g.cx = (static_cast<double>(width) - 1.0) / 2.0 + rng.uniform(-2.0, 2.0);
    g.cy = (static_cast<double>(height) - 1.0) / 2.0 + rng.uniform(-2.0, 2.0);
    g.r0 = rng.uniform(0.125, 0.17) * m;
    g.contraction = rng.uniform(0.35, 0.55);
    const double thickness = rng.uniform(0.04, 0.06) * m;
    const double outer0 = g.r0 + thickness;
    g.ring_area = M_PI * (outer0 * outer0 - g.r0 * g.r0);
    g.outer0 = outer0;
    g.rv_radius = rng.uniform(0.6, 0.8) * g.r0;
    g.rv_angle = rng.uniform(0.0, 2.0 * M_PI);
    g.base[0] = 0.15 + rng.uniform(-0.03, 0.03);
    g.base[1] = 0.95 + rng.uniform(-0.05, 0.05);
    g.base[2] = 0.45 + rng.uniform(-0.04, 0.04);
    g.base[3] = 0.85 + rng.uniform(-0.05, 0.05);
    g.bias_x = rng.uniform(-0.15, 0.15);
    g.bias_y = rng.uniform(-0.15, 0.15);

    // the ring is widest at ED; the RV crescent rides just outside it
    const double extent = outer_radius(g, g.r0) + 1.25 * g.rv_radius + 2.5;
    if (extent > m / 2.0 - 1.0)
      throw ConfigError("generate_phantom: geometry exceeds image bounds (increase image size)");

    CineSequence seq;
    char name[32];
    std::snprintf(name, sizeof(name), "subj_%03d", static_cast<int>(s));
    seq.subject_id = name;
    seq.ed_index = 0;
    seq.es_index = n_frames - 1;

    std::vector<torch::Tensor> raw_frames;
    for (int64_t f = 0; f < n_frames; ++f) {
      const double r = lv_radius(g, f, n_frames);
      const double outer = outer_radius(g, r);
      const double rv_cx = g.cx + (outer + 0.25 * g.rv_radius) * std::cos(g.rv_angle);
      const double rv_cy = g.cy + (outer + 0.25 * g.rv_radius) * std::sin(g.rv_angle);

      auto label = torch::zeros({height, width}, torch::kLong);
      auto image = torch::zeros({height, width}, torch::kDouble);
      auto* lab = label.data_ptr<int64_t>();
      auto* img = image.data_ptr<double>();

      for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
          const double dx = static_cast<double>(x) - g.cx;
          const double dy = static_cast<double>(y) - g.cy;
          const double d_lv = std::sqrt(dx * dx + dy * dy);
          int64_t cls = 0;
          if (d_lv <= r) {
            cls = 1;
          } else if (d_lv <= outer) {
            cls = 2;
          } else {
            const double rx = static_cast<double>(x) - rv_cx;
            const double ry = static_cast<double>(y) - rv_cy;
            if (std::sqrt(rx * rx + ry * ry) <= g.rv_radius) cls = 3;
          }
          lab[y * width + x] = cls;

          const double bias = 1.0 + g.bias_x * (static_cast<double>(x) - g.cx) / static_cast<double>(width) +
                              g.bias_y * (static_cast<double>(y) - g.cy) / static_cast<double>(height);
          img[y * width + x] = g.base[cls] * bias + 0.03 * rng.normal();
        }
      }
      raw_frames.push_back(image);
      seq.labels[f] = label;
    }

    auto normalized = normalize_volume(torch::stack(raw_frames, 0));
    for (int64_t f = 0; f < n_frames; ++f) seq.frames.push_back(normalized[f].clone());
    seq.validate();
    subjects.push_back(std::move(seq));
  }
  return subjects;
}

}  // namespace sdtnet
