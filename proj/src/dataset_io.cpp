#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sdtnet/common.hpp"
#include "sdtnet/data.hpp"
#include "sdtnet/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdtnet {

namespace {

std::string frame_name(const char* prefix, int64_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", prefix, static_cast<int>(idx));
  return buf;
}

Gray16 quantize16(const torch::Tensor& frame, double lo, double hi) {
  Gray16 img;
  img.height = static_cast<int>(frame.size(0));
  img.width = static_cast<int>(frame.size(1));
  img.pixels.resize(static_cast<size_t>(img.height) * img.width);
  const auto f = frame.to(torch::kDouble).contiguous();
  const auto* src = f.data_ptr<double>();
  const double range = hi > lo ? hi - lo : 1.0;
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double u = (src[i] - lo) / range;
    img.pixels[i] = static_cast<uint16_t>(std::llround(std::clamp(u, 0.0, 1.0) * 65535.0));
  }
  return img;
}

}  // namespace

void write_dataset(const std::string& root, const std::vector<CineSequence>& subjects,
                   bool force) {
  fs::path base(root);
  if (fs::exists(base) && !fs::is_empty(base) && !force)
    throw DataError("output directory exists and is not empty (use --force): " + root);
  fs::create_directories(base);

  for (const auto& seq : subjects) {
    seq.validate();
    const fs::path dir = base / seq.subject_id;
    fs::create_directories(dir);

    // single affine quantization per subject; the loader re-normalizes per
    // volume, which undoes any affine map of the stored intensities
    const auto vol = seq.volume().to(torch::kDouble);
    const double lo = vol.min().item<double>();
    const double hi = vol.max().item<double>();

    for (int64_t f = 0; f < seq.n_frames(); ++f) {
      write_png_gray16((dir / frame_name("frame", f)).string(), quantize16(seq.frames[f], lo, hi));
      const auto it = seq.labels.find(f);
      if (it != seq.labels.end()) {
        Gray8 lab;
        lab.height = static_cast<int>(it->second.size(0));
        lab.width = static_cast<int>(it->second.size(1));
        lab.pixels.resize(static_cast<size_t>(lab.height) * lab.width);
        const auto l = it->second.to(torch::kLong).contiguous();
        const auto* src = l.data_ptr<int64_t>();
        for (size_t i = 0; i < lab.pixels.size(); ++i)
          lab.pixels[i] = static_cast<uint8_t>(src[i]);
        write_png_gray8((dir / frame_name("label", f)).string(), lab);
      }
    }

    json meta = {{"ed_index", seq.ed_index}, {"es_index", seq.es_index}, {"n_frames", seq.n_frames()}};
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
}

std::vector<std::string> list_subjects(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("no subjects under " + root);
  return ids;
}

CineSequence read_subject(const std::string& root, const std::string& subject_id) {
  const fs::path dir = fs::path(root) / subject_id;
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("missing meta.json for subject " + subject_id);
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw DataError("bad meta.json for subject " + subject_id + ": " + e.what());
  }

  CineSequence seq;
  seq.subject_id = subject_id;
  seq.ed_index = meta.at("ed_index").get<int64_t>();
  seq.es_index = meta.at("es_index").get<int64_t>();
  const auto n_frames = meta.at("n_frames").get<int64_t>();

  for (int64_t f = 0; f < n_frames; ++f) {
    const auto img = read_png_gray16((dir / frame_name("frame", f)).string());
    auto frame = torch::empty({img.height, img.width}, torch::kFloat);
    auto* dst = frame.data_ptr<float>();
    for (size_t i = 0; i < img.pixels.size(); ++i) dst[i] = static_cast<float>(img.pixels[i]);
    seq.frames.push_back(frame);

    const fs::path lab_path = dir / frame_name("label", f);
    if (fs::exists(lab_path)) {
      const auto lab = read_png_gray8(lab_path.string());
      auto t = torch::empty({lab.height, lab.width}, torch::kLong);
      auto* ldst = t.data_ptr<int64_t>();
      for (size_t i = 0; i < lab.pixels.size(); ++i) ldst[i] = lab.pixels[i];
      seq.labels[f] = t;
    }
  }
  seq.validate();
  return seq;
}

std::vector<CineSequence> read_dataset(const std::string& root) {
  std::vector<CineSequence> out;
  for (const auto& id : list_subjects(root)) out.push_back(read_subject(root, id));
  return out;
}

}  // namespace sdtnet
