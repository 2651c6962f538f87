#pragma once

// Motion parameter estimation by maximizing the gray-level variance (GLV)
// of integral images with DIRECT.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/direct.hpp"
#include "iaos/error.hpp"
#include "iaos/frame.hpp"
#include "iaos/integrator.hpp"
#include "iaos/radon.hpp"

namespace iaos {

/// Inclusive pixel rectangle restricting where GLV is measured.
struct Roi {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains(std::size_t x, std::size_t y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Population variance of intensities over pixels where `valid` is nonzero
/// (all pixels when `valid` is null), optionally restricted to `roi`.
template <typename Mask = Raster<std::uint32_t>>
double glv(const Image& image, const Mask* valid = nullptr, const std::optional<Roi>& roi = std::nullopt) {
  if (valid && !valid->same_shape(image)) throw DimensionMismatch("glv: mask does not match image");
  auto use = [&](std::size_t x, std::size_t y) {
    if (roi && !roi->contains(x, y)) return false;
    return !valid || (*valid)(x, y) > 0;
  };
  // Sums run on values relative to the first valid pixel, so a constant
  // image scores exactly 0.
  std::size_t count = 0;
  double total = 0.0, shift = 0.0;
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      if (use(x, y)) {
        if (count == 0) shift = image(x, y);
        total += image(x, y) - shift;
        ++count;
      }
  if (count < 2) throw DomainError("glv needs at least two valid pixels");
  const double m = shift + total / static_cast<double>(count);
  double acc = 0.0;
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      if (use(x, y)) {
        const double d = image(x, y) - m;
        acc += d * d;
      }
  return acc / static_cast<double>(count);
}

inline double glv(const IntegralImage& integral, const std::optional<Roi>& roi = std::nullopt) {
  return glv(integral.pixels(), &integral.coverage(), roi);
}

struct SearchBounds {
  double theta_lo_deg = 0.0;
  double theta_hi_deg = 360.0;
  double speed_max_mps = 1.0;

  void validate() const {
    require(theta_lo_deg >= 0.0 && theta_hi_deg <= 360.0 && theta_lo_deg < theta_hi_deg,
            "theta bounds must satisfy 0 <= lo < hi <= 360");
    require(speed_max_mps > 0.0, "speed bound must be positive");
  }
  Box box() const { return {{theta_lo_deg, 0.0}, {theta_hi_deg, speed_max_mps}}; }
};

struct StepEstimate {
  std::size_t step = 0;  // frame index the step registers onto
  MotionParams params;
  double glv = 0.0;
  std::size_t evaluations = 0;
};

struct EstimationResult {
  MotionParams params;
  double objective = 0.0;
  std::size_t evaluations = 0;
  std::vector<StepEstimate> per_step;  // stepwise mode only
  MotionTrack track;
};

struct EstimatorOptions {
  std::size_t max_evals = 200;  // per optimization (per step in stepwise mode)
  double min_box_diag = 1e-3;
  std::optional<double> filter_u_deg;  // Radon band-stop half width; none disables filtering
  std::optional<Roi> roi;
  // GLV is measured where at least this fraction of the integrated frames
  // contributed; 1 compares every hypothesis over equally deep averages,
  // 0 accepts any pixel with coverage >= 1.
  double min_coverage_fraction = 0.0;
  // Stepwise mode: ignore a border as wide as the largest per-step shift the
  // bounds allow, so every candidate is scored on the same pixels.
  bool step_margin = true;
  // Gaussian sigma (px) applied to the integral before measuring GLV; 0
  // measures raw intensities.  Smoothing below the target scale removes
  // pixel noise, whose variance otherwise depends on the fractional part
  // of the candidate shift through the bilinear resampling.
  double glv_smoothing_px = 0.0;
  // Stepwise mode: bilinear resampling at fractional shifts blurs the
  // shifted integral by frac (1 - frac) px^2 per axis, which costs more GLV
  // than a half-pixel misregistration of a small target and so pulls
  // estimates onto integer shifts.  When set, every member of a candidate
  // average is blurred up to the same 0.25 px^2 per axis before scoring.
  bool match_interpolation_blur = true;
  std::size_t workers = 1;
};

namespace detail {

// Normalized separable Gaussian convolution restricted to `valid` pixels.
inline Image masked_gaussian(const Image& img, const Raster<std::uint8_t>& valid, double sigma) {
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (long i = -radius; i <= radius; ++i)
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  const long w = static_cast<long>(img.width()), h = static_cast<long>(img.height());
  Image num(img.width(), img.height()), den(img.width(), img.height());
  auto pass = [&](const Image& vin, const Image& win, Image& vout, Image& wout, bool along_x) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double sv = 0.0, sw = 0.0;
        for (long i = -radius; i <= radius; ++i) {
          const long xx = along_x ? x + i : x, yy = along_x ? y : y + i;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const auto px = static_cast<std::size_t>(xx), py = static_cast<std::size_t>(yy);
          const double kw = k[static_cast<std::size_t>(i + radius)];
          sv += kw * vin(px, py);
          sw += kw * win(px, py);
        }
        vout(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = sv;
        wout(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = sw;
      }
  };
  Image v0(img.width(), img.height()), w0(img.width(), img.height());
  for (std::size_t p = 0; p < img.size(); ++p) {
    w0[p] = valid[p] ? 1.0 : 0.0;
    v0[p] = valid[p] ? img[p] : 0.0;
  }
  Image v1(img.width(), img.height()), w1(img.width(), img.height());
  pass(v0, w0, v1, w1, true);
  pass(v1, w1, num, den, false);
  for (std::size_t p = 0; p < num.size(); ++p) num[p] = den[p] > 0.0 ? num[p] / den[p] : 0.0;
  return num;
}

// Symmetric 3-tap blur [v/2, 1 - v, v/2] (variance v) per axis with zero
// padding, applied in place to a sum and its weight.
inline void blur_weighted(Image& sum, Image& weight, double vx, double vy) {
  const std::size_t w = sum.width(), h = sum.height();
  auto along = [&](Image& img, double v, bool x_axis) {
    if (v <= 0.0) return;
    const Image src = img;
    const std::size_t n = x_axis ? w : h;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = x_axis ? x : y;
        double acc = (1.0 - v) * src(x, y);
        if (i > 0) acc += 0.5 * v * (x_axis ? src(x - 1, y) : src(x, y - 1));
        if (i + 1 < n) acc += 0.5 * v * (x_axis ? src(x + 1, y) : src(x, y + 1));
        img(x, y) = acc;
      }
  };
  for (Image* img : {&sum, &weight}) {
    along(*img, vx, true);
    along(*img, vy, false);
  }
}

// GLV over pixels whose sample weight reaches the coverage threshold; an
// empty region scores 0 (no usable integral).
template <typename Weight>
double thresholded_glv(const Image& mean, const Raster<Weight>& weight, double frames, const EstimatorOptions& o) {
  const double need = std::max(1.0, o.min_coverage_fraction * frames) - 1e-6;
  Raster<std::uint8_t> valid(mean.width(), mean.height());
  std::size_t count = 0;
  for (std::size_t p = 0; p < mean.size(); ++p)
    if (static_cast<double>(weight[p]) >= need) {
      valid[p] = 1;
      ++count;
    }
  if (count < 2) return 0.0;
  try {
    if (o.glv_smoothing_px > 0.0) return glv(masked_gaussian(mean, valid, o.glv_smoothing_px), &valid, o.roi);
    return glv(mean, &valid, o.roi);
  } catch (const DomainError&) {
    return 0.0;
  }
}

}  // namespace detail

inline void write_trace(std::ostream& out, const StepEstimate& s) {
  nlohmann::json j{{"step", s.step},
                   {"theta_deg", s.params.theta_deg()},
                   {"speed_mps", s.params.speed_mps()},
                   {"glv", s.glv},
                   {"evals", s.evaluations}};
  out << j.dump() << '\n';
}

inline nlohmann::json to_json(const EstimationResult& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.per_step)
    steps.push_back({{"step", s.step},
                     {"theta_deg", s.params.theta_deg()},
                     {"speed_mps", s.params.speed_mps()},
                     {"glv", s.glv},
                     {"evals", s.evaluations}});
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : r.track.segments())
    segs.push_back({{"first", s.first},
                    {"last", s.last},
                    {"theta_deg", s.params.theta_deg()},
                    {"speed_mps", s.params.speed_mps()}});
  return {{"theta_deg", r.params.theta_deg()},
          {"speed_mps", r.params.speed_mps()},
          {"glv", r.objective},
          {"evaluations", r.evaluations},
          {"per_step", steps},
          {"track", segs}};
}

/// GLV of the integral of `frames` under constant motion `params`,
/// optionally Radon-filtered (mean preserving) at the motion direction.
inline double constant_motion_objective(const FrameSequence& frames, const MotionParams& params,
                                        const EstimatorOptions& options = {}) {
  const auto track = MotionTrack::constant(frames.size(), params);
  const auto offsets = registration_offsets(frames, track, frames.size() - 1);
  std::vector<const Image*> ptrs;
  for (const auto& f : frames.frames()) ptrs.push_back(&f.pixels);
  Image mean;
  Raster<std::uint32_t> coverage;
  average_registered(ptrs, offsets, mean, coverage);
  if (options.filter_u_deg)
    mean = *RadonFilterBank(mean, true).filtered(params.theta_deg(), *options.filter_u_deg);
  return detail::thresholded_glv(mean, coverage, static_cast<double>(frames.size()), options);
}

/// Constant (theta, s) maximizing the GLV of the integral over `bounds`.
inline EstimationResult estimate_constant(const FrameSequence& frames, const SearchBounds& bounds,
                                          const EstimatorOptions& options = {}) {
  if (frames.size() < 2) throw DomainError("motion estimation needs at least two frames");
  bounds.validate();
  auto objective = [&](std::span<const double> x) {
    return constant_motion_objective(frames, MotionParams(x[0], x[1]), options);
  };
  const auto r = direct_optimize(objective, bounds.box(),
                                 {options.max_evals, options.min_box_diag, 1e-4, options.workers});
  EstimationResult out;
  out.params = MotionParams(r.x[0], r.x[1]);
  out.objective = r.value;
  out.evaluations = r.evaluations;
  out.track = MotionTrack::constant(frames.size(), out.params);
  return out;
}

/// Frame-by-frame estimation: at step i the running integral of frames
/// 0..i-1 is shifted by the candidate displacement and averaged (true
/// running mean) with frame i, Radon-filtered at the candidate direction.
/// The optimum extends the piecewise motion track and the running integral.
inline EstimationResult estimate_stepwise(const FrameSequence& frames, const SearchBounds& bounds,
                                          const EstimatorOptions& options = {}) {
  if (frames.size() < 2) throw DomainError("stepwise estimation needs at least two frames");
  bounds.validate();
  const double gsd = frames.geometry().gsd_m_per_px();
  const std::size_t w = frames.width(), h = frames.height();

  auto make_bank = [&](std::size_t i) -> std::unique_ptr<RadonFilterBank> {
    if (!options.filter_u_deg) return nullptr;
    return std::make_unique<RadonFilterBank>(frames[i].pixels, true);
  };
  auto member_for = [&](std::size_t i, const RadonFilterBank* bank, double theta) -> std::shared_ptr<const Image> {
    if (!bank) return std::make_shared<const Image>(frames[i].pixels);
    return bank->filtered(theta, *options.filter_u_deg);
  };

  EstimationResult out;
  std::unique_ptr<RadonFilterBank> first_bank = make_bank(0);
  IntegralImage running;
  Image prev_sum, prev_weight;

  for (std::size_t i = 1; i < frames.size(); ++i) {
    const double dt = frames[i].timestamp - frames[i - 1].timestamp;
    const auto bank = make_bank(i);
    const bool first_step = i == 1;

    auto combined = [&](double theta, double speed, Image& mean, Image& weight) {
      const Displacement d = displacement(MotionParams(theta, speed), dt, gsd);
      Image s, c;
      if (first_step) {
        const auto f0 = member_for(0, first_bank.get(), theta);
        translate_weighted(*f0, Image(w, h, 1.0), d, s, c);
      } else {
        translate_weighted(prev_sum, prev_weight, d, s, c);
      }
      const auto fi = member_for(i, bank.get(), theta);
      mean = Image(w, h);
      weight = Image(w, h);
      if (options.match_interpolation_blur) {
        constexpr double kFull = 0.25;
        const double fx = detail::axis_shift(d.dx).frac, fy = detail::axis_shift(d.dy).frac;
        detail::blur_weighted(s, c, kFull - fx * (1.0 - fx), kFull - fy * (1.0 - fy));
        Image fs = *fi, fw(w, h, 1.0);
        detail::blur_weighted(fs, fw, kFull, kFull);
        for (std::size_t p = 0; p < mean.size(); ++p) {
          weight[p] = c[p] + fw[p];
          mean[p] = weight[p] > 0.0 ? (s[p] + fs[p]) / weight[p] : 0.0;
        }
        return;
      }
      for (std::size_t p = 0; p < mean.size(); ++p) {
        weight[p] = c[p] + 1.0;
        mean[p] = (s[p] + (*fi)[p]) / weight[p];
      }
    };
    EstimatorOptions step_options = options;
    if (options.step_margin) {
      const auto m = static_cast<std::size_t>(std::ceil(speed_to_px_per_s(bounds.speed_max_mps, gsd) * dt));
      Roi r = options.roi.value_or(Roi{0, 0, w - 1, h - 1});
      r = {std::max(r.x0, m), std::max(r.y0, m), std::min(r.x1, w - 1 - std::min(m, w - 1)),
           std::min(r.y1, h - 1 - std::min(m, h - 1))};
      if (2 * m + 2 <= std::min(w, h) && r.x0 <= r.x1 && r.y0 <= r.y1) step_options.roi = r;
    }
    auto objective = [&](std::span<const double> x) {
      Image mean, weight;
      combined(x[0], x[1], mean, weight);
      return detail::thresholded_glv(mean, weight, static_cast<double>(i + 1), step_options);
    };

    const auto r = direct_optimize(objective, bounds.box(),
                                   {options.max_evals, options.min_box_diag, 1e-4, options.workers});
    const MotionParams best(r.x[0], r.x[1]);
    out.per_step.push_back({i, best, r.value, r.evaluations});
    out.evaluations += r.evaluations;
    if (first_step) {
      out.track.extend(best);
      running = IntegralImage({{member_for(0, first_bank.get(), best.theta_deg()), {}}}, frames[0].timestamp);
      first_bank.reset();
    }
    out.track.extend(best);
    running = incremental_update(running, member_for(i, bank.get(), best.theta_deg()), frames[i].timestamp, best, gsd);
    std::tie(prev_sum, prev_weight) = running.sum_and_weight();
  }
  out.params = out.per_step.back().params;
  out.objective = out.per_step.back().glv;
  return out;
}

struct MotionSummary {
  double theta_deg = 0.0;  // circular mean direction
  double speed_mps = 0.0;  // arithmetic mean speed
};

/// Speed-independent circular mean direction and mean speed of steps in
/// frame range [first, last].
inline MotionSummary summarize_steps(const std::vector<StepEstimate>& steps, std::size_t first, std::size_t last) {
  double sx = 0.0, sy = 0.0, speed = 0.0;
  std::size_t n = 0;
  for (const auto& s : steps) {
    if (s.step < first || s.step > last) continue;
    sx += std::sin(deg_to_rad(s.params.theta_deg()));
    sy += std::cos(deg_to_rad(s.params.theta_deg()));
    speed += s.params.speed_mps();
    ++n;
  }
  require(n > 0, "no steps in the requested range");
  return {normalize_deg(rad_to_deg(std::atan2(sx, sy))), speed / static_cast<double>(n)};
}

}  // namespace iaos
