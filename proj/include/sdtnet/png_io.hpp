#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdtnet {

struct Gray16 {
  int height = 0;
  int width = 0;
  std::vector<uint16_t> pixels;  // row-major
};

struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;  // row-major
};

void write_png_gray16(const std::string& path, const Gray16& img);
Gray16 read_png_gray16(const std::string& path);

void write_png_gray8(const std::string& path, const Gray8& img);
Gray8 read_png_gray8(const std::string& path);

}  // namespace sdtnet
