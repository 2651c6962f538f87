#pragma once

// Moving-target detection and tracking over single frames or integral
// images: per-pixel Gaussian-mixture background subtraction, morphological
// cleanup, 8-connected blob analysis and constant-velocity Kalman tracks
// with greedy gated association.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/error.hpp"
#include "iaos/frame.hpp"
#include "iaos/integrator.hpp"
#include "iaos/motion_estimator.hpp"
#include "iaos/parallel.hpp"
#include "iaos/raster.hpp"

namespace iaos {

using Mask = Raster<std::uint8_t>;

struct GmmConfig {
  std::size_t components = 3;
  double learning_rate = 0.01;
  double background_ratio = 0.7;  // T: cumulative weight treated as background
  double match_sigma = 2.5;
  double initial_variance = 1e-3;
  double variance_floor = 1e-5;
};

/// Per-pixel mixture of Gaussians updated with the Stauffer-Grimson
/// recursion.  Components of a pixel are kept sorted by weight / sigma.
class GmmModel {
 public:
  struct Component {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;
  };

  GmmModel() = default;
  GmmModel(std::size_t width, std::size_t height, GmmConfig config = {})
      : width_(width), height_(height), config_(config), comps_(width * height * config.components) {
    require(config.components >= 1, "gmm needs at least one component");
    require(config.learning_rate > 0.0 && config.learning_rate < 1.0, "gmm learning rate must lie in (0, 1)");
    require(config.background_ratio > 0.0 && config.background_ratio <= 1.0, "background ratio must lie in (0, 1]");
    require(config.variance_floor > 0.0, "gmm variance floor must be positive");
  }

  /// Seeds every pixel with one full-weight component centered on `image`,
  /// with per-pixel `variance` if given, else the configured initial variance.
  void initialize(const Image& image, const Image* variance = nullptr) {
    check(image);
    if (variance) check(*variance);
    for (std::size_t p = 0; p < image.size(); ++p) {
      auto* c = pixel(p);
      for (std::size_t k = 0; k < config_.components; ++k) c[k] = {};
      const double v = variance ? (*variance)[p] : config_.initial_variance;
      c[0] = {1.0, image[p], std::max(v, config_.variance_floor)};
    }
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const GmmConfig& config() const { return config_; }
  std::span<const Component> components(std::size_t x, std::size_t y) const {
    return {pixel(y * width_ + x), config_.components};
  }

  /// Updates the model with `frame` and returns its foreground mask.  The
  /// first frame of an uninitialized model seeds it and yields no foreground.
  Mask update(const Image& frame) {
    check(frame);
    Mask fg(width_, height_);
    if (!initialized_) {
      initialize(frame);
      return fg;
    }
    const std::size_t rows_per_task = 32;
    parallel_for((height_ + rows_per_task - 1) / rows_per_task, [&](std::size_t t) {
      const std::size_t y1 = std::min(height_, (t + 1) * rows_per_task);
      for (std::size_t p = t * rows_per_task * width_; p < y1 * width_; ++p) fg[p] = update_pixel(pixel(p), frame[p]);
    });
    return fg;
  }

 private:
  Component* pixel(std::size_t p) { return comps_.data() + p * config_.components; }
  const Component* pixel(std::size_t p) const { return comps_.data() + p * config_.components; }

  void check(const Image& frame) const {
    if (frame.width() != width_ || frame.height() != height_) throw DimensionMismatch("gmm: frame size mismatch");
  }

  static double rank(const Component& c) { return c.weight > 0.0 ? c.weight / std::sqrt(c.variance) : -1.0; }

  std::uint8_t update_pixel(Component* c, double x) const {
    const std::size_t K = config_.components;
    const double a = config_.learning_rate;
    std::size_t matched = K;
    for (std::size_t k = 0; k < K; ++k) {
      if (c[k].weight <= 0.0) continue;
      const double d = x - c[k].mean;
      if (d * d <= config_.match_sigma * config_.match_sigma * c[k].variance) {
        matched = k;
        break;
      }
    }
    for (std::size_t k = 0; k < K; ++k) c[k].weight *= 1.0 - a;
    if (matched < K) {
      auto& m = c[matched];
      m.weight += a;
      m.mean += a * (x - m.mean);
      const double d = x - m.mean;
      m.variance = std::max(config_.variance_floor, (1.0 - a) * m.variance + a * d * d);
    } else {
      matched = K - 1;  // lowest-ranked slot
      c[matched] = {a, x, std::max(config_.initial_variance, config_.variance_floor)};
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += c[k].weight;
    for (std::size_t k = 0; k < K; ++k) c[k].weight /= total;

    // Insertion sort by rank, tracking where the matched component lands.
    for (std::size_t k = 1; k < K; ++k)
      for (std::size_t j = k; j > 0 && rank(c[j]) > rank(c[j - 1]); --j) {
        std::swap(c[j], c[j - 1]);
        if (matched == j) matched = j - 1;
        else if (matched == j - 1) matched = j;
      }
    double cumulative = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (k == matched) return 0;
      cumulative += c[k].weight;
      if (cumulative > config_.background_ratio) break;
    }
    return 1;
  }

  std::size_t width_ = 0, height_ = 0;
  GmmConfig config_;
  std::vector<Component> comps_;
  bool initialized_ = false;
};

inline Mask gmm_update(GmmModel& model, const Image& frame) { return model.update(frame); }

namespace detail {

// Digital disk: offsets with dx^2 + dy^2 <= (r + 1/2)^2, so radius 1 is the 3x3 square.
inline std::vector<std::pair<long, long>> disk_offsets(std::size_t radius) {
  const long r = static_cast<long>(radius);
  const double lim = (static_cast<double>(r) + 0.5) * (static_cast<double>(r) + 0.5);
  std::vector<std::pair<long, long>> out;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dx * dx + dy * dy) <= lim) out.push_back({dx, dy});
  return out;
}

// Binary erosion (erode = true) or dilation; pixels beyond the border are
// ignored, so a set region touching the border is not eroded from outside.
inline Mask morph(const Mask& in, std::size_t radius, bool erode) {
  if (radius == 0) return in;
  const auto se = disk_offsets(radius);
  const long w = static_cast<long>(in.width()), h = static_cast<long>(in.height());
  Mask out(in.width(), in.height());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      bool v = erode;
      for (const auto& [dx, dy] : se) {
        const long xx = x + dx, yy = y + dy;
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const bool s = in(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy)) != 0;
        if (erode && !s) {
          v = false;
          break;
        }
        if (!erode && s) {
          v = true;
          break;
        }
      }
      out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = v ? 1 : 0;
    }
  return out;
}

}  // namespace detail

/// Opening with a disk of `open_radius`, then closing with `close_radius`.
inline Mask clean_mask(const Mask& mask, std::size_t open_radius, std::size_t close_radius) {
  Mask m = detail::morph(detail::morph(mask, open_radius, true), open_radius, false);
  return detail::morph(detail::morph(m, close_radius, false), close_radius, true);
}

struct Detection {
  double x = 0.0, y = 0.0;  // centroid px
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounding box
  std::size_t area = 0;
  std::size_t frame = 0;
};

/// 8-connected components of `mask` with at least `min_area` pixels, in
/// raster order of their first pixel.
inline std::vector<Detection> detect_blobs(const Mask& mask, std::size_t min_area, std::size_t frame = 0) {
  const std::size_t w = mask.width(), h = mask.height();
  Raster<std::uint8_t> seen(w, h);
  std::vector<Detection> out;
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t sy = 0; sy < h; ++sy)
    for (std::size_t sx = 0; sx < w; ++sx) {
      if (!mask(sx, sy) || seen(sx, sy)) continue;
      Detection d{0.0, 0.0, sx, sy, sx, sy, 0, frame};
      double sum_x = 0.0, sum_y = 0.0;
      stack.assign(1, {sx, sy});
      seen(sx, sy) = 1;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        ++d.area;
        sum_x += static_cast<double>(x);
        sum_y += static_cast<double>(y);
        d.x0 = std::min(d.x0, x);
        d.x1 = std::max(d.x1, x);
        d.y0 = std::min(d.y0, y);
        d.y1 = std::max(d.y1, y);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
            if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) continue;
            const auto ux = static_cast<std::size_t>(nx), uy = static_cast<std::size_t>(ny);
            if (mask(ux, uy) && !seen(ux, uy)) {
              seen(ux, uy) = 1;
              stack.push_back({ux, uy});
            }
          }
      }
      if (d.area < min_area) continue;
      d.x = sum_x / static_cast<double>(d.area);
      d.y = sum_y / static_cast<double>(d.area);
      out.push_back(d);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Kalman tracking

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<std::array<double, 4>, 4>;

struct KalmanConfig {
  double process_noise = 1.0;      // white acceleration spectral density, px^2/s^3
  double measurement_sigma = 1.5;  // px
  double initial_speed_sigma = 20.0;  // px/s
  double gate_sigma = 3.0;         // Mahalanobis gate
  std::size_t confirm_hits = 3;    // M
  std::size_t confirm_window = 5;  // N
  std::size_t max_misses = 5;
};

struct TrackPoint {
  std::size_t frame = 0;
  double x = 0.0, y = 0.0;
  bool measured = false;
};

struct Track {
  std::size_t id = 0;
  Vec4 state{};  // x, y, vx, vy
  Mat4 covariance{};
  std::size_t age = 0;  // frames since creation, including the first
  std::size_t misses = 0;
  std::size_t hits = 0;
  bool confirmed = false;
  std::vector<TrackPoint> history;
};

namespace detail {

inline Mat4 multiply(const Mat4& a, const Mat4& b) {
  Mat4 r{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

inline Mat4 transpose(const Mat4& a) {
  Mat4 r{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) r[i][j] = a[j][i];
  return r;
}

inline void symmetrize(Mat4& p) {
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) p[i][j] = p[j][i] = 0.5 * (p[i][j] + p[j][i]);
}

// Innovation covariance S = H P H^T + R for H selecting (x, y).
inline std::array<double, 4> innovation(const Track& t, double r2) {
  return {t.covariance[0][0] + r2, t.covariance[0][1], t.covariance[1][0], t.covariance[1][1] + r2};
}

inline double mahalanobis2(const Track& t, const Detection& d, double r2) {
  const auto s = innovation(t, r2);
  const double det = s[0] * s[3] - s[1] * s[2];
  const double ex = d.x - t.state[0], ey = d.y - t.state[1];
  return (s[3] * ex * ex - (s[1] + s[2]) * ex * ey + s[0] * ey * ey) / det;
}

}  // namespace detail

/// Constant-velocity prediction over `dt` seconds.
inline void kalman_predict(Track& t, double dt, const KalmanConfig& c) {
  Mat4 f{};
  for (std::size_t i = 0; i < 4; ++i) f[i][i] = 1.0;
  f[0][2] = f[1][3] = dt;
  Vec4 x{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) x[i] += f[i][j] * t.state[j];
  t.state = x;
  Mat4 p = detail::multiply(detail::multiply(f, t.covariance), detail::transpose(f));
  const double q = c.process_noise;
  for (std::size_t a = 0; a < 2; ++a) {
    p[a][a] += q * dt * dt * dt / 3.0;
    p[a][a + 2] += q * dt * dt / 2.0;
    p[a + 2][a] += q * dt * dt / 2.0;
    p[a + 2][a + 2] += q * dt;
  }
  detail::symmetrize(p);
  t.covariance = p;
}

/// Joseph-form measurement update with a position observation.
inline void kalman_update(Track& t, double mx, double my, const KalmanConfig& c) {
  const double r2 = c.measurement_sigma * c.measurement_sigma;
  const auto s = detail::innovation(t, r2);
  const double det = s[0] * s[3] - s[1] * s[2];
  const std::array<double, 4> si{s[3] / det, -s[1] / det, -s[2] / det, s[0] / det};
  const Mat4& p = t.covariance;
  // K = P H^T S^-1 (4x2)
  std::array<std::array<double, 2>, 4> k{};
  for (std::size_t i = 0; i < 4; ++i) {
    k[i][0] = p[i][0] * si[0] + p[i][1] * si[2];
    k[i][1] = p[i][0] * si[1] + p[i][1] * si[3];
  }
  const double ex = mx - t.state[0], ey = my - t.state[1];
  for (std::size_t i = 0; i < 4; ++i) t.state[i] += k[i][0] * ex + k[i][1] * ey;
  Mat4 a{};  // I - K H
  for (std::size_t i = 0; i < 4; ++i) {
    a[i][i] = 1.0;
    a[i][0] -= k[i][0];
    a[i][1] -= k[i][1];
  }
  Mat4 np = detail::multiply(detail::multiply(a, p), detail::transpose(a));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) np[i][j] += r2 * (k[i][0] * k[j][0] + k[i][1] * k[j][1]);
  detail::symmetrize(np);
  t.covariance = np;
}

/// Track set with greedy gated nearest-neighbour association.
class MultiTracker {
 public:
  explicit MultiTracker(KalmanConfig config = {}) : config_(config) {}

  const std::vector<Track>& tracks() const { return tracks_; }
  const std::vector<Track>& retired() const { return retired_; }
  const KalmanConfig& config() const { return config_; }

  /// Predicts all tracks by `dt`, associates `detections` of `frame`, and
  /// spawns, confirms and deletes tracks.
  void step(const std::vector<Detection>& detections, double dt, std::size_t frame) {
    if (!(dt > 0.0)) throw DomainError("track_step needs dt > 0");
    const double r2 = config_.measurement_sigma * config_.measurement_sigma;
    for (auto& t : tracks_) kalman_predict(t, dt, config_);

    struct Pair {
      double distance;
      std::size_t track_id;
      std::size_t track, detection;
    };
    std::vector<Pair> pairs;
    const double gate2 = config_.gate_sigma * config_.gate_sigma;
    for (std::size_t ti = 0; ti < tracks_.size(); ++ti)
      for (std::size_t di = 0; di < detections.size(); ++di) {
        const double m2 = detail::mahalanobis2(tracks_[ti], detections[di], r2);
        if (m2 <= gate2) pairs.push_back({std::sqrt(m2), tracks_[ti].id, ti, di});
      }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      if (a.track_id != b.track_id) return a.track_id < b.track_id;
      return a.detection < b.detection;
    });
    std::vector<bool> track_used(tracks_.size()), det_used(detections.size());
    for (const auto& p : pairs) {
      if (track_used[p.track] || det_used[p.detection]) continue;
      track_used[p.track] = det_used[p.detection] = true;
      auto& t = tracks_[p.track];
      kalman_update(t, detections[p.detection].x, detections[p.detection].y, config_);
      ++t.hits;
      t.misses = 0;
    }
    for (std::size_t ti = 0; ti < tracks_.size(); ++ti) {
      auto& t = tracks_[ti];
      ++t.age;
      if (!track_used[ti]) ++t.misses;
      if (!t.confirmed && t.age <= config_.confirm_window && t.hits >= config_.confirm_hits) t.confirmed = true;
      t.history.push_back({frame, t.state[0], t.state[1], track_used[ti]});
    }
    std::vector<Track> kept;
    for (auto& t : tracks_) {
      const bool expired = !t.confirmed && t.age >= config_.confirm_window;
      if (t.misses > config_.max_misses || expired) retired_.push_back(std::move(t));
      else kept.push_back(std::move(t));
    }
    tracks_ = std::move(kept);
    for (std::size_t di = 0; di < detections.size(); ++di)
      if (!det_used[di]) spawn(detections[di], frame);
  }

  /// All tracks ever created, ordered by id.
  std::vector<Track> all_tracks() const {
    std::vector<Track> all = retired_;
    all.insert(all.end(), tracks_.begin(), tracks_.end());
    std::sort(all.begin(), all.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
    return all;
  }

 private:
  void spawn(const Detection& d, std::size_t frame) {
    Track t;
    t.id = next_id_++;
    t.state = {d.x, d.y, 0.0, 0.0};
    const double r2 = config_.measurement_sigma * config_.measurement_sigma;
    const double v2 = config_.initial_speed_sigma * config_.initial_speed_sigma;
    t.covariance = {{{r2, 0, 0, 0}, {0, r2, 0, 0}, {0, 0, v2, 0}, {0, 0, 0, v2}}};
    t.age = 1;
    t.hits = 1;
    t.confirmed = config_.confirm_hits <= 1;
    t.history.push_back({frame, d.x, d.y, true});
    tracks_.push_back(std::move(t));
  }

  KalmanConfig config_;
  std::vector<Track> tracks_;
  std::vector<Track> retired_;
  std::size_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Pipeline

enum class TrackingMode { kSingle, kIntegral };

struct TrackerConfig {
  GmmConfig gmm;
  std::size_t open_radius = 1;
  std::size_t close_radius = 1;
  std::size_t min_blob_area = 12;
  // The background is seeded with the per-pixel temporal median of the first
  // warmup_frames images, which removes a target that keeps moving; those
  // images only train the model and are not tracked.
  std::size_t warmup_frames = 9;
  KalmanConfig kalman;
  // Integral mode only.
  SearchBounds bounds;
  EstimatorOptions estimator;
  double min_coverage_fraction = 0.5;  // foreground only where this share of frames contributed

  /// Defaults tuned for raw frames.
  static TrackerConfig single_frame() { return {}; }
  /// Defaults tuned for integral images.
  static TrackerConfig integral() {
    TrackerConfig c;
    c.estimator.filter_u_deg = 15.0;
    // With the band-stop filter active the noise equalization costs more
    // steps than it saves on occluded scenes.
    c.estimator.match_interpolation_blur = false;
    return c;
  }
};

struct FrameRecord {
  std::size_t frame = 0;
  std::size_t track_id = 0;
  double x = 0.0, y = 0.0;
  bool confirmed = false;
};

struct TrackingResult {
  TrackingMode mode = TrackingMode::kSingle;
  std::vector<std::vector<Detection>> detections;  // per processed image
  std::vector<std::size_t> frame_indices;          // source frame of each processed image
  std::vector<Track> tracks;                       // every track ever created
  std::vector<FrameRecord> records;                // per frame and live track
  std::optional<EstimationResult> estimation;      // integral mode
};

struct RobustBackground {
  Image median;
  Image variance;  // (1.4826 MAD)^2, a variance estimate insensitive to a passing target
};

/// Per-pixel temporal median (lower median for even counts) and robust spread.
inline RobustBackground temporal_background(std::span<const Image* const> images) {
  require(!images.empty(), "background of no images");
  RobustBackground out{Image(images.front()->width(), images.front()->height()),
                       Image(images.front()->width(), images.front()->height())};
  std::vector<double> v(images.size());
  const auto mid = static_cast<long>((v.size() - 1) / 2);
  for (std::size_t p = 0; p < out.median.size(); ++p) {
    for (std::size_t k = 0; k < images.size(); ++k) v[k] = (*images[k])[p];
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double m = v[static_cast<std::size_t>(mid)];
    for (auto& x : v) x = std::abs(x - m);
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double s = 1.4826 * v[static_cast<std::size_t>(mid)];
    out.median[p] = m;
    out.variance[p] = s * s;
  }
  return out;
}

namespace detail {

inline TrackingResult run_tracker(const std::vector<const Image*>& images, const std::vector<std::size_t>& indices,
                                  const std::vector<double>& times, const TrackerConfig& config,
                                  const std::vector<const IntegralImage*>& integrals = {}) {
  TrackingResult out;
  GmmModel gmm(images.front()->width(), images.front()->height(), config.gmm);
  MultiTracker tracker(config.kalman);
  double last_time = 0.0;
  bool have_time = false;
  const auto warm = std::span(images).first(std::clamp<std::size_t>(config.warmup_frames, 1, images.size()));
  const auto bg = temporal_background(warm);
  gmm.initialize(bg.median, warm.size() >= 3 ? &bg.variance : nullptr);
  for (std::size_t k = 0; k < images.size(); ++k) {
    Mask raw = gmm.update(*images[k]);
    if (k < config.warmup_frames) continue;
    if (!integrals.empty()) {
      const auto& cov = integrals[k]->coverage();
      const double need = config.min_coverage_fraction * static_cast<double>(integrals[k]->n_frames());
      for (std::size_t p = 0; p < raw.size(); ++p)
        if (static_cast<double>(cov[p]) < need) raw[p] = 0;
    }
    const Mask clean = clean_mask(raw, config.open_radius, config.close_radius);
    auto dets = detect_blobs(clean, config.min_blob_area, indices[k]);
    const double dt = have_time ? times[k] - last_time : 1.0;
    tracker.step(dets, dt, indices[k]);
    last_time = times[k];
    have_time = true;
    for (const auto& t : tracker.tracks())
      out.records.push_back({indices[k], t.id, t.state[0], t.state[1], t.confirmed});
    out.detections.push_back(std::move(dets));
    out.frame_indices.push_back(indices[k]);
  }
  out.tracks = tracker.all_tracks();
  return out;
}

}  // namespace detail

/// Runs the detection and tracking pipeline.  Integral mode first estimates
/// the piecewise motion stepwise and then tracks in the stream of running
/// integrals, each registered onto its latest frame, so track coordinates
/// refer to that frame directly.
inline TrackingResult track_sequence(const FrameSequence& frames, TrackingMode mode,
                                     const TrackerConfig& config = {}) {
  if (frames.size() < config.warmup_frames + 2) throw DomainError("tracking needs at least warm-up + 2 frames");
  std::vector<const Image*> images;
  std::vector<std::size_t> indices;
  std::vector<double> times;
  std::vector<IntegralImage> integrals;
  std::vector<const IntegralImage*> integral_ptrs;
  std::optional<EstimationResult> estimation;
  if (mode == TrackingMode::kSingle) {
    for (const auto& f : frames.frames()) {
      images.push_back(&f.pixels);
      indices.push_back(f.index);
      times.push_back(f.timestamp);
    }
  } else {
    estimation = estimate_stepwise(frames, config.bounds, config.estimator);
    const double gsd = frames.geometry().gsd_m_per_px();
    integrals.reserve(frames.size());
    integrals.push_back(IntegralImage({{std::make_shared<const Image>(frames[0].pixels), {}}}, frames[0].timestamp));
    for (std::size_t i = 1; i < frames.size(); ++i)
      integrals.push_back(incremental_update(integrals.back(), frames[i], estimation->track.params_at(i), gsd));
    for (std::size_t i = 0; i < frames.size(); ++i) {
      integral_ptrs.push_back(&integrals[i]);
      images.push_back(&integrals[i].pixels());
      indices.push_back(frames[i].index);
      times.push_back(frames[i].timestamp);
    }
  }
  auto out = detail::run_tracker(images, indices, times, config, integral_ptrs);
  out.mode = mode;
  out.estimation = std::move(estimation);
  return out;
}

struct TrackingMetrics {
  std::size_t false_positives = 0;
  std::size_t detections = 0;
  std::size_t confirmed_tracks = 0;
  double rmse_px = 0.0;  // over confirmed-track points; NaN when there are none
};

/// Scores a tracking result against per-frame ground-truth centers.  A
/// detection is a false positive when no truth lies within `gate_px`.
inline TrackingMetrics evaluate_tracking(const TrackingResult& r,
                                         const std::vector<std::pair<double, double>>& truth, double gate_px) {
  TrackingMetrics m;
  for (const auto& dets : r.detections)
    for (const auto& d : dets) {
      ++m.detections;
      if (d.frame >= truth.size() ||
          std::hypot(d.x - truth[d.frame].first, d.y - truth[d.frame].second) > gate_px)
        ++m.false_positives;
    }
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& t : r.tracks) {
    if (!t.confirmed) continue;
    ++m.confirmed_tracks;
    for (const auto& p : t.history) {
      if (p.frame >= truth.size()) continue;
      const double ex = p.x - truth[p.frame].first, ey = p.y - truth[p.frame].second;
      acc += ex * ex + ey * ey;
      ++n;
    }
  }
  m.rmse_px = n ? std::sqrt(acc / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

inline nlohmann::json to_json(const TrackingMetrics& m) {
  nlohmann::json j{{"false_positives", m.false_positives},
                   {"detections", m.detections},
                   {"confirmed_tracks", m.confirmed_tracks}};
  j["rmse_px"] = std::isfinite(m.rmse_px) ? nlohmann::json(m.rmse_px) : nlohmann::json(nullptr);
  return j;
}

inline void write_track_lines(std::ostream& out, const TrackingResult& r) {
  for (const auto& rec : r.records)
    out << nlohmann::json{{"frame", rec.frame},
                          {"track_id", rec.track_id},
                          {"x_px", rec.x},
                          {"y_px", rec.y},
                          {"confirmed", rec.confirmed}}
               .dump()
        << '\n';
}

}  // namespace iaos
