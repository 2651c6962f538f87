#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "iaos/error.hpp"
#include "iaos/raster.hpp"

namespace iaos {

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle in degrees to [0, 360).
inline double normalize_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

/// Smallest absolute difference between two directions, in [0, 180].
inline double angular_distance_deg(double a, double b) {
  const double d = std::abs(normalize_deg(a) - normalize_deg(b));
  return d > 180.0 ? 360.0 - d : d;
}

inline double ground_sample_distance(double altitude_m, double fov_deg, double resolution_px) {
  if (!(altitude_m >= 0.0) || !std::isfinite(altitude_m)) throw DomainError("altitude must be >= 0");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw DomainError("fov_deg must lie in (0, 180)");
  if (!(resolution_px > 0.0) || !std::isfinite(resolution_px)) throw DomainError("resolution must be positive");
  return 2.0 * altitude_m * std::tan(deg_to_rad(fov_deg) / 2.0) / resolution_px;
}

inline double speed_to_px_per_s(double speed_mps, double gsd_m_per_px) {
  if (!(gsd_m_per_px > 0.0)) throw DomainError("ground sample distance must be positive");
  return speed_mps / gsd_m_per_px;
}

struct Geometry {
  double altitude_m = 35.0;
  double fov_deg = 36.0;
  double resolution_px = 1024.0;

  double gsd_m_per_px() const { return ground_sample_distance(altitude_m, fov_deg, resolution_px); }
};

/// Target motion hypothesis.  Direction is clockwise from image +y (down).
class MotionParams {
 public:
  MotionParams() = default;
  MotionParams(double theta_deg, double speed_mps) : theta_deg_(normalize_deg(theta_deg)), speed_mps_(speed_mps) {
    if (!std::isfinite(theta_deg) || !std::isfinite(speed_mps)) throw DomainError("motion parameters must be finite");
    if (speed_mps < 0.0) throw DomainError("speed must be >= 0");
  }

  double theta_deg() const { return theta_deg_; }
  double speed_mps() const { return speed_mps_; }

  bool operator==(const MotionParams&) const = default;

 private:
  double theta_deg_ = 0.0;
  double speed_mps_ = 0.0;
};

/// Inclusive frame interval [first, last] moving with constant parameters.
struct MotionSegment {
  std::size_t first = 0;
  std::size_t last = 0;
  MotionParams params;
};

/// Piecewise-constant motion over frame indices.  The transition from frame
/// i-1 to frame i uses the parameters of the segment containing i.
class MotionTrack {
 public:
  MotionTrack() = default;
  explicit MotionTrack(std::vector<MotionSegment> segments) : segments_(std::move(segments)) { validate(); }

  static MotionTrack constant(std::size_t n_frames, MotionParams params) {
    require(n_frames >= 1, "track needs at least one frame");
    return MotionTrack({{0, n_frames - 1, params}});
  }

  const std::vector<MotionSegment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }
  std::size_t frame_count() const { return segments_.empty() ? 0 : segments_.back().last + 1; }

  const MotionParams& params_at(std::size_t frame) const {
    for (const auto& s : segments_)
      if (frame >= s.first && frame <= s.last) return s.params;
    throw DomainError("frame index outside motion track");
  }

  /// Appends one frame moving with `params`; merges into the last segment when equal.
  void extend(MotionParams params) {
    if (segments_.empty()) {
      segments_.push_back({0, 0, params});
      return;
    }
    auto& back = segments_.back();
    if (back.params == params) {
      ++back.last;
    } else {
      segments_.push_back({back.last + 1, back.last + 1, params});
    }
  }

 private:
  void validate() const {
    std::size_t next = 0;
    for (const auto& s : segments_) {
      if (s.first != next || s.last < s.first) throw DomainError("motion track segments must partition the frame range");
      next = s.last + 1;
    }
  }

  std::vector<MotionSegment> segments_;
};

struct Frame {
  Image pixels;
  double timestamp = 0.0;
  std::size_t index = 0;
};

class FrameSequence {
 public:
  FrameSequence() = default;
  FrameSequence(std::vector<Frame> frames, Geometry geometry, double fps)
      : frames_(std::move(frames)), geometry_(geometry), fps_(fps) {
    validate();
  }

  const std::vector<Frame>& frames() const { return frames_; }
  const Frame& operator[](std::size_t i) const { return frames_[i]; }
  std::size_t size() const { return frames_.size(); }
  const Geometry& geometry() const { return geometry_; }
  double fps() const { return fps_; }
  std::size_t width() const { return frames_.front().pixels.width(); }
  std::size_t height() const { return frames_.front().pixels.height(); }

  /// Contiguous subrange [first, last], re-indexed from zero; timestamps are kept.
  FrameSequence slice(std::size_t first, std::size_t last) const {
    require(first <= last && last < frames_.size(), "invalid frame window");
    std::vector<Frame> sub(frames_.begin() + static_cast<std::ptrdiff_t>(first),
                           frames_.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    for (std::size_t i = 0; i < sub.size(); ++i) sub[i].index = i;
    return FrameSequence(std::move(sub), geometry_, fps_);
  }

 private:
  void validate() const {
    if (frames_.empty()) throw DomainError("frame sequence must contain at least one frame");
    const auto& first = frames_.front().pixels;
    if (first.width() == 0 || first.height() == 0) throw DomainError("frames must be non-empty");
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const auto& f = frames_[i];
      if (!f.pixels.same_shape(first)) throw DimensionMismatch("frame " + std::to_string(i) + " has different dimensions");
      for (double v : f.pixels.values())
        if (!std::isfinite(v)) throw DomainError("frame " + std::to_string(i) + " has non-finite pixels");
      if (i > 0 && !(f.timestamp > frames_[i - 1].timestamp))
        throw NonMonotoneTimestamps("timestamps must strictly increase (frame " + std::to_string(i) + ")");
    }
  }

  std::vector<Frame> frames_;
  Geometry geometry_;
  double fps_ = 1.0;
};

}  // namespace iaos
