#pragma once

// 8-bit grayscale PNG rendering for display.  Needs libpng.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iaos/error.hpp"
#include "iaos/raster.hpp"

namespace iaos {

/// Min-max normalizes `img` to 0..255 (a constant image renders as 0).
inline Raster<std::uint8_t> normalize_8bit(const Image& img) {
  Raster<std::uint8_t> out(img.width(), img.height());
  if (img.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(img.values().begin(), img.values().end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (img[i] - lo) / range));
  return out;
}

/// Encodes an 8-bit grayscale raster as PNG bytes.  Output is deterministic.
inline std::string encode_png(const Raster<std::uint8_t>& gray) {
  require(!gray.empty(), "cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot create info");
  }
  std::string bytes;
  std::vector<png_bytep> rows(gray.height());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(
      png, &bytes,
      [](png_structp p, png_bytep data, png_size_t n) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(gray.width()), static_cast<png_uint_32>(gray.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (std::size_t y = 0; y < gray.height(); ++y)
    rows[y] = const_cast<png_bytep>(gray.row(y).data());
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

inline std::string render_png(const Image& img) { return encode_png(normalize_8bit(img)); }

/// Decodes an 8-bit grayscale PNG (as produced by encode_png).
inline Raster<std::uint8_t> decode_png(const std::string& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) throw IoError("png: cannot read header");
  image.format = PNG_FORMAT_GRAY;
  Raster<std::uint8_t> out(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, out.values().data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("png: cannot decode");
  }
  return out;
}

}  // namespace iaos
