#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "iaos/frame.hpp"
#include "iaos/raster.hpp"

namespace iaos::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("iaos_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(std::size_t w, std::size_t h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

/// Geometry whose ground sample distance is exactly `gsd` m/px (a 90 degree
/// field of view makes tan(fov/2) = 1).
inline Geometry unit_geometry(double gsd = 1.0, double resolution = 100.0) {
  return {gsd * resolution / 2.0, 90.0, resolution};
}

/// One bright pixel stepping by (step_x, step_y) integer pixels per frame on
/// a zero background, at 1 fps with a 1 m/px geometry.
inline FrameSequence moving_point(std::size_t w, std::size_t h, std::size_t n, long x0, long y0, long step_x,
                                  long step_y) {
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(w, h);
    img(static_cast<std::size_t>(x0 + step_x * static_cast<long>(i)),
        static_cast<std::size_t>(y0 + step_y * static_cast<long>(i))) = 1.0;
    frames.push_back({std::move(img), static_cast<double>(i), i});
  }
  return FrameSequence(std::move(frames), unit_geometry(), 1.0);
}

/// Unit disk of radius 0.3 n with a half-intensity inset disk.
inline Image disk_phantom(std::size_t n) {
  Image img(n, n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  const double nd = static_cast<double>(n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      if (std::hypot(dx, dy) < 0.3 * nd) img(x, y) = 1.0;
      if (std::hypot(dx - 0.12 * nd, dy + 0.08 * nd) < 0.07 * nd) img(x, y) = 0.5;
    }
  return img;
}

inline double psnr(const Image& a, const Image& b, double peak, double inscribed_fraction = 1.0) {
  const double cx = (static_cast<double>(a.width()) - 1.0) / 2.0, cy = (static_cast<double>(a.height()) - 1.0) / 2.0;
  const double r = inscribed_fraction * static_cast<double>(std::min(a.width(), a.height())) / 2.0;
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < a.height(); ++y)
    for (std::size_t x = 0; x < a.width(); ++x) {
      if (std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy) > r) continue;
      const double d = a(x, y) - b(x, y);
      se += d * d;
      ++n;
    }
  return 10.0 * std::log10(peak * peak / (se / static_cast<double>(n)));
}

}  // namespace iaos::testing
