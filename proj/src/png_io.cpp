#include "sdtnet/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>

#include "sdtnet/common.hpp"

namespace sdtnet {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_gray(const std::string& path, int h, int w, int bit_depth, const uint8_t* rows_base,
                size_t row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failure writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // pixels are host little-endian

  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(rows_base + static_cast<size_t>(y) * row_bytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_gray(const std::string& path, int expected_depth, int* h, int* w,
               std::vector<uint8_t>* out) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng failure reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != expected_depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": expected " + std::to_string(expected_depth) + "-bit grayscale");
  }
  if (depth == 16) png_set_swap(png);

  *h = static_cast<int>(png_get_image_height(png, info));
  *w = static_cast<int>(png_get_image_width(png, info));
  const size_t row_bytes = static_cast<size_t>(*w) * static_cast<size_t>(depth / 8);
  out->resize(static_cast<size_t>(*h) * row_bytes);

  std::vector<png_bytep> rows(static_cast<size_t>(*h));
  for (int y = 0; y < *h; ++y) rows[static_cast<size_t>(y)] = out->data() + static_cast<size_t>(y) * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_gray16(const std::string& path, const Gray16& img) {
  write_gray(path, img.height, img.width, 16,
             reinterpret_cast<const uint8_t*>(img.pixels.data()),
             static_cast<size_t>(img.width) * 2);
}

Gray16 read_png_gray16(const std::string& path) {
  Gray16 img;
  std::vector<uint8_t> raw;
  read_gray(path, 16, &img.height, &img.width, &raw);
  img.pixels.resize(static_cast<size_t>(img.height) * static_cast<size_t>(img.width));
  std::memcpy(img.pixels.data(), raw.data(), raw.size());
  return img;
}

void write_png_gray8(const std::string& path, const Gray8& img) {
  write_gray(path, img.height, img.width, 8, img.pixels.data(), static_cast<size_t>(img.width));
}

Gray8 read_png_gray8(const std::string& path) {
  Gray8 img;
  std::vector<uint8_t> raw;
  read_gray(path, 8, &img.height, &img.width, &raw);
  img.pixels = std::move(raw);
  return img;
}

}  // namespace sdtnet
