#pragma once

// Parallel-beam Radon transform, angular band-stop filtering, and filtered
// back projection.
//
// Angle convention matches motion directions: sinogram angle phi integrates
// along u(phi) = (sin phi, cos phi) in image axes (x right, y down) and
// measures detector offset along n(phi) = (cos phi, -sin phi) from the image
// center.  A streak travelling in direction theta therefore collapses onto a
// single detector bin in the column phi = theta mod 180.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "iaos/error.hpp"
#include "iaos/frame.hpp"
#include "iaos/parallel.hpp"
#include "iaos/raster.hpp"

namespace iaos {

struct Sinogram {
  Image values;  // row = angle, column = detector bin
  std::vector<double> angles_deg;

  std::size_t angle_count() const { return angles_deg.size(); }
  std::size_t detector_count() const { return values.width(); }
  double detector_offset(std::size_t bin) const {
    return static_cast<double>(bin) - (static_cast<double>(detector_count()) - 1.0) / 2.0;
  }
};

/// 0, step, 2*step, ... below 180.
inline std::vector<double> angle_grid(double step_deg = 1.0) {
  require(step_deg > 0.0 && step_deg <= 180.0, "angle step must lie in (0, 180]");
  std::vector<double> a;
  for (std::size_t k = 0;; ++k) {
    const double v = static_cast<double>(k) * step_deg;
    if (v >= 180.0 - 1e-12) break;
    a.push_back(v);
  }
  return a;
}

/// Odd detector count covering the image diagonal.
inline std::size_t detector_count_for(std::size_t width, std::size_t height) {
  const double side = static_cast<double>(std::max(width, height));
  auto n = static_cast<std::size_t>(std::ceil(std::numbers::sqrt2 * side));
  if (n % 2 == 0) ++n;
  return n;
}

namespace detail {

inline void check_angles(const std::vector<double>& angles) {
  require(!angles.empty(), "radon needs at least one angle");
  for (std::size_t i = 0; i < angles.size(); ++i) {
    require(std::isfinite(angles[i]) && angles[i] >= 0.0 && angles[i] < 180.0, "angles must lie in [0, 180)");
    if (i > 0) require(angles[i] > angles[i - 1], "angle grid must be strictly increasing");
  }
}

}  // namespace detail

namespace detail {

// Cumulative detector footprint of a unit pixel at angle phi: the pixel
// square projects onto the detector axis as a trapezoid (box of width
// |cos| convolved with box of width |sin|) centered on the pixel.
class PixelFootprint {
 public:
  explicit PixelFootprint(double phi) {
    a_ = std::abs(std::cos(phi));
    b_ = std::abs(std::sin(phi));
    if (a_ < b_) std::swap(a_, b_);
    t1_ = (a_ - b_) / 2.0;
    t2_ = (a_ + b_) / 2.0;
  }
  double half_width() const { return t2_; }
  double cdf(double t) const {
    if (t <= -t2_) return 0.0;
    if (t >= t2_) return 1.0;
    if (b_ < 1e-12) return (t + t2_) / a_;
    if (t < -t1_) return (t + t2_) * (t + t2_) / (2.0 * a_ * b_);
    if (t <= t1_) return b_ / (2.0 * a_) + (t + t1_) / a_;
    return 1.0 - (t2_ - t) * (t2_ - t) / (2.0 * a_ * b_);
  }

 private:
  double a_ = 1.0, b_ = 0.0, t1_ = 0.5, t2_ = 0.5;
};

}  // namespace detail

/// Strip-integral projector: each pixel, treated as a unit square, splits
/// its value over detector bins by the exact overlap of its projected
/// footprint, so every projection conserves mass.
inline Sinogram radon(const Image& image, const std::vector<double>& angles_deg) {
  require(!image.empty(), "radon of an empty image");
  detail::check_angles(angles_deg);
  const std::size_t nd = detector_count_for(image.width(), image.height());
  const std::size_t na = angles_deg.size();
  Sinogram sino{Image(nd, na), angles_deg};
  const double cx = (static_cast<double>(image.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height()) - 1.0) / 2.0;
  const double center_bin = (static_cast<double>(nd) - 1.0) / 2.0;
  const long last_bin = static_cast<long>(nd) - 1;
  parallel_for(na, [&](std::size_t a) {
    const double phi = deg_to_rad(angles_deg[a]);
    const double nx = std::cos(phi), ny = -std::sin(phi);
    const detail::PixelFootprint fp(phi);
    auto proj = sino.values.row(a);
    for (std::size_t y = 0; y < image.height(); ++y) {
      const double ry = (static_cast<double>(y) - cy) * ny + center_bin;
      const auto row = image.row(y);
      for (std::size_t x = 0; x < image.width(); ++x) {
        const double v = row[x];
        if (v == 0.0) continue;
        const double pos = (static_cast<double>(x) - cx) * nx + ry;
        const long lo = std::max(0L, static_cast<long>(std::floor(pos - fp.half_width() + 0.5)));
        const long hi = std::min(last_bin, static_cast<long>(std::floor(pos + fp.half_width() + 0.5)));
        double below = lo == 0 ? 0.0 : fp.cdf(static_cast<double>(lo) - 0.5 - pos);
        for (long b = lo; b <= hi; ++b) {
          const double upto = b == hi ? 1.0 : fp.cdf(static_cast<double>(b) + 0.5 - pos);
          proj[static_cast<std::size_t>(b)] += (upto - below) * v;
          below = upto;
        }
      }
    }
  });
  return sino;
}

/// True if `angle` lies in the mod-180 interval [theta - u, theta + u].
inline bool in_stop_band(double angle_deg, double theta_deg, double uncertainty_deg) {
  double d = std::fmod(std::abs(angle_deg - theta_deg), 180.0);
  d = std::min(d, 180.0 - d);
  return d <= uncertainty_deg + 1e-9;
}

/// Zeroes every sinogram column within +-u of theta (mod 180).
inline Sinogram band_stop(Sinogram sino, double theta_deg, double uncertainty_deg) {
  require(uncertainty_deg >= 0.0 && uncertainty_deg < 90.0, "uncertainty must lie in [0, 90)");
  for (std::size_t a = 0; a < sino.angle_count(); ++a) {
    if (!in_stop_band(sino.angles_deg[a], theta_deg, uncertainty_deg)) continue;
    auto row = sino.values.row(a);
    std::fill(row.begin(), row.end(), 0.0);
  }
  return sino;
}

enum class RampWindow { kRamLak, kHann };

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Ramp filtering of projections through zero-padded FFTs.  The filter is the
// transform of the band-limited spatial ramp kernel (h[0] = 1/4,
// h[odd n] = -1/(pi n)^2), doubled.
class RampFilter {
 public:
  RampFilter(std::size_t detector_count, RampWindow window) : n_(detector_count) {
    padded_ = 64;
    while (padded_ < 2 * n_) padded_ *= 2;
    bins_ = padded_ / 2 + 1;
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * padded_));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins_));
    {
      std::lock_guard lock(fftw_planner_mutex());
      forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(padded_), in_, out_, FFTW_ESTIMATE);
      inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(padded_), out_, in_, FFTW_ESTIMATE);
    }
    // Spatial kernel, circularly wrapped, then transformed.
    std::fill(in_, in_ + padded_, 0.0);
    in_[0] = 0.25;
    for (std::size_t k = 1; k < padded_ / 2; k += 2) {
      const double v = -1.0 / (std::numbers::pi * std::numbers::pi * double(k) * double(k));
      in_[k] = v;
      in_[padded_ - k] = v;
    }
    fftw_execute(forward_);
    response_.resize(bins_);
    for (std::size_t k = 0; k < bins_; ++k) {
      double r = 2.0 * out_[k][0];
      if (window == RampWindow::kHann) r *= 0.5 * (1.0 + std::cos(std::numbers::pi * double(k) / double(bins_ - 1)));
      response_[k] = r;
    }
  }
  ~RampFilter() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RampFilter(const RampFilter&) = delete;
  RampFilter& operator=(const RampFilter&) = delete;

  void apply(std::span<const double> projection, std::span<double> filtered) {
    std::copy(projection.begin(), projection.end(), in_);
    std::fill(in_ + n_, in_ + padded_, 0.0);
    fftw_execute(forward_);
    for (std::size_t k = 0; k < bins_; ++k) {
      out_[k][0] *= response_[k];
      out_[k][1] *= response_[k];
    }
    fftw_execute(inverse_);
    const double norm = 1.0 / static_cast<double>(padded_);
    for (std::size_t i = 0; i < n_; ++i) filtered[i] = in_[i] * norm;
  }

 private:
  std::size_t n_;
  std::size_t padded_ = 0;
  std::size_t bins_ = 0;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
  std::vector<double> response_;
};

inline Image ramp_filter_all(const Sinogram& sino, RampWindow window) {
  Image q(sino.detector_count(), sino.angle_count());
  RampFilter filter(sino.detector_count(), window);
  for (std::size_t a = 0; a < sino.angle_count(); ++a) filter.apply(sino.values.row(a), q.row(a));
  return q;
}

// Linear-interpolated back projection of one filtered projection, added into `out`.
inline void back_project_row(std::span<const double> q, double angle_deg, Image& out, double scale,
                             std::size_t y_begin, std::size_t y_end) {
  const std::size_t nd = q.size();
  const double phi = deg_to_rad(angle_deg);
  const double nx = std::cos(phi), ny = -std::sin(phi);
  const double cx = (static_cast<double>(out.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(out.height()) - 1.0) / 2.0;
  const double center_bin = (static_cast<double>(nd) - 1.0) / 2.0;
  for (std::size_t y = y_begin; y < y_end; ++y) {
    const double ry = (static_cast<double>(y) - cy) * ny + center_bin;
    auto row = out.row(y);
    for (std::size_t x = 0; x < out.width(); ++x) {
      const double pos = (static_cast<double>(x) - cx) * nx + ry;
      if (pos < 0.0 || pos > static_cast<double>(nd - 1)) continue;
      const auto b = static_cast<std::size_t>(pos);
      const double w1 = pos - static_cast<double>(b);
      const double v = b + 1 < nd ? (1.0 - w1) * q[b] + w1 * q[b + 1] : q[b];
      row[x] += scale * v;
    }
  }
}

inline void back_project(const Image& filtered, const std::vector<double>& angles, const std::vector<bool>& keep,
                         Image& out, double scale) {
  const std::size_t rows_per_task = 16;
  const std::size_t tasks = (out.height() + rows_per_task - 1) / rows_per_task;
  parallel_for(tasks, [&](std::size_t t) {
    const std::size_t y0 = t * rows_per_task;
    const std::size_t y1 = std::min(out.height(), y0 + rows_per_task);
    for (std::size_t a = 0; a < angles.size(); ++a)
      if (keep.empty() || keep[a]) back_project_row(filtered.row(a), angles[a], out, scale, y0, y1);
  });
}

inline void sanitize(Image& img) {
  for (auto& v : img.values())
    if (!std::isfinite(v)) v = 0.0;
}

}  // namespace detail

struct ImageSize {
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Filtered back projection; output scaled by pi / (2 * n_angles).
inline Image fbp(const Sinogram& sino, ImageSize output_size, RampWindow window = RampWindow::kRamLak) {
  if (sino.angle_count() < 2) throw DomainError("filtered back projection needs at least two angles");
  require(output_size.width > 0 && output_size.height > 0, "fbp output size must be positive");
  const Image q = detail::ramp_filter_all(sino, window);
  Image out(output_size.width, output_size.height);
  const double scale = std::numbers::pi / (2.0 * static_cast<double>(sino.angle_count()));
  detail::back_project(q, sino.angles_deg, {}, out, scale);
  return out;
}

/// Suppresses image structure elongated along theta (+-u): fbp of the
/// band-stopped sinogram on the default 1 degree grid.
inline Image radon_filter_image(const Image& image, double theta_deg, double uncertainty_deg) {
  const auto angles = angle_grid(1.0);
  Image out = fbp(band_stop(radon(image, angles), theta_deg, uncertainty_deg), {image.width(), image.height()});
  detail::sanitize(out);
  return out;
}

/// Precomputes the ramp-filtered projections of one image so that
/// radon_filter_image can be evaluated for many candidate directions.
/// Results are the unfiltered reconstruction minus the back projection of
/// the stop band, cached per distinct band.  With `preserve_mean` the image
/// mean is removed before the transform and added back afterwards, so the
/// step at the image border does not leak direction-dependent artefacts
/// into the result.
class RadonFilterBank {
 public:
  explicit RadonFilterBank(const Image& image, bool preserve_mean = false, double angle_step_deg = 1.0)
      : width_(image.width()), height_(image.height()), angles_(angle_grid(angle_step_deg)) {
    offset_ = preserve_mean ? mean(image) : 0.0;
    Image centered = image;
    for (auto& v : centered.values()) v -= offset_;
    filtered_ = detail::ramp_filter_all(radon(centered, angles_), RampWindow::kRamLak);
    scale_ = std::numbers::pi / (2.0 * static_cast<double>(angles_.size()));
    full_ = Image(width_, height_, offset_);
    detail::back_project(filtered_, angles_, {}, full_, scale_);
  }

  const Image& unfiltered() const { return full_; }

  std::shared_ptr<const Image> filtered(double theta_deg, double uncertainty_deg) const {
    require(uncertainty_deg >= 0.0 && uncertainty_deg < 90.0, "uncertainty must lie in [0, 90)");
    std::vector<bool> band(angles_.size());
    for (std::size_t a = 0; a < angles_.size(); ++a) band[a] = in_stop_band(angles_[a], theta_deg, uncertainty_deg);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(band); it != cache_.end()) return it->second;
    }
    auto out = std::make_shared<Image>(full_);
    detail::back_project(filtered_, angles_, band, *out, -scale_);
    detail::sanitize(*out);
    std::lock_guard lock(mutex_);
    return cache_.emplace(std::move(band), std::move(out)).first->second;
  }

 private:
  std::size_t width_, height_;
  std::vector<double> angles_;
  Image filtered_;
  Image full_;
  double scale_ = 0.0;
  double offset_ = 0.0;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<bool>, std::shared_ptr<const Image>> cache_;
};

/// Debug dump: min-max normalized 16-bit PGM plus a JSON sidecar.
inline void dump_sinogram(const Sinogram& sino, const std::filesystem::path& pgm_path) {
  double lo = 0.0, hi = 0.0;
  if (!sino.values.empty()) {
    const auto [mn, mx] = std::minmax_element(sino.values.values().begin(), sino.values.values().end());
    lo = *mn;
    hi = *mx;
  }
  const double range = hi > lo ? hi - lo : 1.0;
  Image norm(sino.values.width(), sino.values.height());
  for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = (sino.values[i] - lo) / range;
  std::ofstream out(pgm_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + pgm_path.string());
  out << "P5\n" << norm.width() << ' ' << norm.height() << "\n65535\n";
  for (double v : norm.values()) {
    const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
    out.put(static_cast<char>(q >> 8)).put(static_cast<char>(q & 0xff));
  }
  nlohmann::json meta{{"angles_deg", sino.angles_deg},
                      {"detector_count", sino.detector_count()},
                      {"min", lo},
                      {"max", hi},
                      {"layout", "rows=angles, columns=detector bins"}};
  std::ofstream(std::filesystem::path(pgm_path).replace_extension(".json")) << meta.dump(2) << '\n';
}

}  // namespace iaos
