#pragma once

// Shift-and-average registration of frames along a motion hypothesis.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "iaos/error.hpp"
#include "iaos/frame.hpp"
#include "iaos/raster.hpp"

namespace iaos {

struct Displacement {
  double dx = 0.0;
  double dy = 0.0;

  Displacement operator+(const Displacement& o) const { return {dx + o.dx, dy + o.dy}; }
  Displacement operator-(const Displacement& o) const { return {dx - o.dx, dy - o.dy}; }
  Displacement operator-() const { return {-dx, -dy}; }
};

/// Image-plane displacement (x right, y down) of a target moving with
/// `params` for `dt` seconds.
inline Displacement displacement(const MotionParams& params, double dt, double gsd_m_per_px) {
  if (!std::isfinite(dt)) throw DomainError("dt must be finite");
  const double v = speed_to_px_per_s(params.speed_mps(), gsd_m_per_px);
  const double theta = deg_to_rad(params.theta_deg());
  return {v * dt * std::sin(theta), v * dt * std::cos(theta)};
}

namespace detail {

// Shifts within this distance of an integer are treated as integer so that
// trigonometric round-off does not turn exact shifts into interpolation.
inline constexpr double kSnap = 1e-9;

struct AxisShift {
  long offset = 0;    // source index = dest index + offset (+1 for the second tap)
  double frac = 0.0;  // weight of the second tap; 0 means single tap
};

inline AxisShift axis_shift(double shift) {
  const double src = -shift;
  double whole = std::floor(src);
  double frac = src - whole;
  if (frac < kSnap) {
    frac = 0.0;
  } else if (frac > 1.0 - kSnap) {
    frac = 0.0;
    whole += 1.0;
  }
  return {static_cast<long>(whole), frac};
}

// Destination index range [lo, hi) whose taps all fall inside [0, n).
inline std::pair<long, long> valid_range(const AxisShift& s, long n) {
  const long last_tap = s.frac > 0.0 ? 1 : 0;
  const long lo = std::max(0L, -s.offset);
  const long hi = std::min(n, n - s.offset - last_tap);
  return {lo, std::max(lo, hi)};
}

}  // namespace detail

/// Adds `src` translated by (dx, dy) into `sum` and `weight` * 1 into
/// `count` wherever the bilinear footprint lies fully inside `src`.
template <typename Count>
void accumulate_shifted(const Image& src, Displacement shift, Image& sum, Raster<Count>& count,
                        double weight = 1.0) {
  if (!src.same_shape(sum) || !src.same_shape(count)) throw DimensionMismatch("accumulate_shifted: shape mismatch");
  const long w = static_cast<long>(src.width());
  const long h = static_cast<long>(src.height());
  const auto sx = detail::axis_shift(shift.dx);
  const auto sy = detail::axis_shift(shift.dy);
  const auto [x_lo, x_hi] = detail::valid_range(sx, w);
  const auto [y_lo, y_hi] = detail::valid_range(sy, h);
  const double wx1 = sx.frac, wx0 = 1.0 - sx.frac;
  const double wy1 = sy.frac, wy0 = 1.0 - sy.frac;
  for (long y = y_lo; y < y_hi; ++y) {
    const auto r0 = src.row(static_cast<std::size_t>(y + sy.offset));
    const auto r1 = sy.frac > 0.0 ? src.row(static_cast<std::size_t>(y + sy.offset + 1)) : r0;
    auto out = sum.row(static_cast<std::size_t>(y));
    auto cnt = count.row(static_cast<std::size_t>(y));
    for (long x = x_lo; x < x_hi; ++x) {
      const auto xs = static_cast<std::size_t>(x + sx.offset);
      double v;
      if (sx.frac > 0.0) {
        v = wy0 * (wx0 * r0[xs] + wx1 * r0[xs + 1]) + wy1 * (wx0 * r1[xs] + wx1 * r1[xs + 1]);
      } else {
        v = wy0 * r0[xs] + wy1 * r1[xs];
      }
      out[static_cast<std::size_t>(x)] += weight * v;
      cnt[static_cast<std::size_t>(x)] += static_cast<Count>(weight);
    }
  }
}

/// Translates `src` by `shift` with zero fill; also returns the bilinear
/// transport of a sample-weight raster.  Used to move a running sum.
inline void translate_weighted(const Image& src_sum, const Image& src_weight, Displacement shift, Image& out_sum,
                               Image& out_weight) {
  out_sum = Image(src_sum.width(), src_sum.height());
  out_weight = Image(src_sum.width(), src_sum.height());
  const long w = static_cast<long>(src_sum.width());
  const long h = static_cast<long>(src_sum.height());
  const auto sx = detail::axis_shift(shift.dx);
  const auto sy = detail::axis_shift(shift.dy);
  const auto [x_lo, x_hi] = detail::valid_range(sx, w);
  const auto [y_lo, y_hi] = detail::valid_range(sy, h);
  const double wx1 = sx.frac, wx0 = 1.0 - sx.frac;
  const double wy1 = sy.frac, wy0 = 1.0 - sy.frac;
  for (long y = y_lo; y < y_hi; ++y) {
    const auto ys = static_cast<std::size_t>(y + sy.offset);
    const auto ys1 = sy.frac > 0.0 ? ys + 1 : ys;
    const auto s0 = src_sum.row(ys), s1 = src_sum.row(ys1);
    const auto c0 = src_weight.row(ys), c1 = src_weight.row(ys1);
    auto os = out_sum.row(static_cast<std::size_t>(y));
    auto oc = out_weight.row(static_cast<std::size_t>(y));
    for (long x = x_lo; x < x_hi; ++x) {
      const auto xs = static_cast<std::size_t>(x + sx.offset);
      const auto xs1 = sx.frac > 0.0 ? xs + 1 : xs;
      os[static_cast<std::size_t>(x)] =
          wy0 * (wx0 * s0[xs] + wx1 * s0[xs1]) + wy1 * (wx0 * s1[xs] + wx1 * s1[xs1]);
      oc[static_cast<std::size_t>(x)] =
          wy0 * (wx0 * c0[xs] + wx1 * c0[xs1]) + wy1 * (wx0 * c1[xs] + wx1 * c1[xs1]);
    }
  }
}

/// Coverage-weighted mean of `frames[i]` translated by `offsets[i]`, summed
/// in index order.  Pixels no frame covers are 0 with coverage 0.
inline void average_registered(std::span<const Image* const> frames, std::span<const Displacement> offsets,
                               Image& mean, Raster<std::uint32_t>& coverage) {
  if (frames.empty() || frames.size() != offsets.size()) throw DomainError("average_registered: bad inputs");
  const Image& first = *frames.front();
  mean = Image(first.width(), first.height());
  coverage = Raster<std::uint32_t>(first.width(), first.height());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i]->same_shape(first)) throw DimensionMismatch("registered frames differ in size");
    accumulate_shifted(*frames[i], offsets[i], mean, coverage);
  }
  for (std::size_t i = 0; i < mean.size(); ++i)
    mean[i] = coverage[i] > 0 ? mean[i] / static_cast<double>(coverage[i]) : 0.0;
}

/// Per-pixel mean of registered frames plus the number of frames that
/// contributed a valid sample to each pixel.
class IntegralImage {
 public:
  struct Member {
    std::shared_ptr<const Image> frame;
    Displacement offset;  // shift applied to the frame to register it onto the reference
  };

  IntegralImage() = default;

  /// Averages `members` in order; pixels with zero coverage are set to 0.
  explicit IntegralImage(std::vector<Member> members, double reference_timestamp = 0.0)
      : members_(std::move(members)), reference_timestamp_(reference_timestamp) {
    if (members_.empty()) throw DomainError("integral needs at least one frame");
    std::vector<const Image*> frames;
    std::vector<Displacement> offsets;
    for (const auto& m : members_) {
      frames.push_back(m.frame.get());
      offsets.push_back(m.offset);
    }
    average_registered(frames, offsets, pixels_, coverage_);
  }

  const Image& pixels() const { return pixels_; }
  const Raster<std::uint32_t>& coverage() const { return coverage_; }
  std::size_t n_frames() const { return members_.size(); }
  const std::vector<Member>& members() const { return members_; }
  double reference_timestamp() const { return reference_timestamp_; }
  std::size_t width() const { return pixels_.width(); }
  std::size_t height() const { return pixels_.height(); }

  /// Running sum and coverage as real rasters (sum = mean * coverage).
  std::pair<Image, Image> sum_and_weight() const {
    Image s(width(), height()), c(width(), height());
    for (std::size_t i = 0; i < s.size(); ++i) {
      c[i] = static_cast<double>(coverage_[i]);
      s[i] = pixels_[i] * c[i];
    }
    return {std::move(s), std::move(c)};
  }

 private:
  std::vector<Member> members_;
  Image pixels_;
  Raster<std::uint32_t> coverage_;
  double reference_timestamp_ = 0.0;
};

/// Offsets registering every frame onto `reference_index` under `track`.
inline std::vector<Displacement> registration_offsets(const FrameSequence& frames, const MotionTrack& track,
                                                      std::size_t reference_index) {
  const std::size_t n = frames.size();
  const double gsd = frames.geometry().gsd_m_per_px();
  auto step = [&](std::size_t i) {  // motion from frame i-1 to frame i
    return displacement(track.params_at(i), frames[i].timestamp - frames[i - 1].timestamp, gsd);
  };
  std::vector<Displacement> offsets(n);
  for (std::size_t j = reference_index; j-- > 0;) offsets[j] = offsets[j + 1] + step(j + 1);
  for (std::size_t j = reference_index + 1; j < n; ++j) offsets[j] = offsets[j - 1] - step(j);
  return offsets;
}

/// Registers all frames onto the reference frame (latest by default) and averages them.
inline IntegralImage integrate(const FrameSequence& frames, const MotionTrack& track,
                               std::optional<std::size_t> reference_index = std::nullopt) {
  if (frames.size() == 0) throw DomainError("cannot integrate an empty sequence");
  if (track.frame_count() != frames.size()) throw DomainError("motion track does not cover the sequence");
  const std::size_t ref = reference_index.value_or(frames.size() - 1);
  if (ref >= frames.size()) throw DomainError("reference index out of range");
  const auto offsets = registration_offsets(frames, track, ref);
  std::vector<IntegralImage::Member> members;
  members.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    members.push_back({std::make_shared<const Image>(frames[i].pixels), offsets[i]});
  return IntegralImage(std::move(members), frames[ref].timestamp);
}

/// Moves the registration of `current` onto `next_frame` under `params`
/// (target displacement over the frame gap) and folds the frame in.
inline IntegralImage incremental_update(const IntegralImage& current, std::shared_ptr<const Image> next_frame,
                                        double next_timestamp, const MotionParams& params, double gsd_m_per_px) {
  if (!next_frame->same_shape(current.pixels())) throw DimensionMismatch("incremental_update: frame size mismatch");
  const Displacement d = displacement(params, next_timestamp - current.reference_timestamp(), gsd_m_per_px);
  std::vector<IntegralImage::Member> members = current.members();
  for (auto& m : members) m.offset = m.offset + d;
  members.push_back({std::move(next_frame), {}});
  return IntegralImage(std::move(members), next_timestamp);
}

inline IntegralImage incremental_update(const IntegralImage& current, const Frame& next_frame,
                                        const MotionParams& params, double gsd_m_per_px) {
  return incremental_update(current, std::make_shared<const Image>(next_frame.pixels), next_frame.timestamp, params,
                            gsd_m_per_px);
}

}  // namespace iaos
