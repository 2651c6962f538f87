#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "iaos/error.hpp"

namespace iaos {

/// Dense row-major 2-D raster.  Row index is image +y (down), column is +x.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Raster(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    require(data_.size() == width_ * height_, "raster data size does not match dimensions");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t y) { return {data_.data() + y * width_, width_}; }
  std::span<const T> row(std::size_t y) const { return {data_.data() + y * width_, width_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

using Image = Raster<double>;

/// Bilinear sample at continuous position (x, y).  Returns false if the
/// position lies outside [0, w-1] x [0, h-1] by more than a rounding margin.
template <typename T>
bool sample_bilinear(const Raster<T>& r, double x, double y, double& out) {
  constexpr double kMargin = 1e-9;
  const double xmax = static_cast<double>(r.width()) - 1.0;
  const double ymax = static_cast<double>(r.height()) - 1.0;
  if (!(x >= -kMargin && y >= -kMargin && x <= xmax + kMargin && y <= ymax + kMargin)) return false;
  x = std::clamp(x, 0.0, xmax);
  y = std::clamp(y, 0.0, ymax);
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, r.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, r.height() - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1.0 - fx) * r(x0, y0) + fx * r(x1, y0);
  const double bottom = (1.0 - fx) * r(x0, y1) + fx * r(x1, y1);
  out = (1.0 - fy) * top + fy * bottom;
  return true;
}

/// Bilinear sample treating everything outside the raster as zero.
template <typename T>
double sample_bilinear_zero(const Raster<T>& r, double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double fx = x - fx0;
  const double fy = y - fy0;
  const long x0 = static_cast<long>(fx0);
  const long y0 = static_cast<long>(fy0);
  const long w = static_cast<long>(r.width());
  const long h = static_cast<long>(r.height());
  auto at = [&](long xi, long yi) -> double {
    if (xi < 0 || yi < 0 || xi >= w || yi >= h) return 0.0;
    return r(static_cast<std::size_t>(xi), static_cast<std::size_t>(yi));
  };
  return (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) +
         fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
}

inline double sum(const Image& img) {
  return std::accumulate(img.values().begin(), img.values().end(), 0.0);
}

inline double mean(const Image& img) {
  require(!img.empty(), "mean of empty image");
  return sum(img) / static_cast<double>(img.size());
}

inline double max_value(const Image& img) {
  require(!img.empty(), "max of empty image");
  return *std::max_element(img.values().begin(), img.values().end());
}

inline double max_abs(const Image& img) {
  double m = 0.0;
  for (double v : img.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Index (x, y) of the largest value; first occurrence in raster order.
inline std::pair<std::size_t, std::size_t> argmax(const Image& img) {
  require(!img.empty(), "argmax of empty image");
  const auto it = std::max_element(img.values().begin(), img.values().end());
  const auto i = static_cast<std::size_t>(it - img.values().begin());
  return {i % img.width(), i / img.width()};
}

}  // namespace iaos
