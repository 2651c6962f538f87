#pragma once

// Synthetic occluded sequences with ground-truth target motion: per-frame
// background noise, a Gaussian target blob moving along a piecewise-linear
// track, and a static field of opaque occluder disks on top whose
// intensities vary per recording.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/error.hpp"
#include "iaos/frame.hpp"
#include "iaos/integrator.hpp"
#include "iaos/parallel.hpp"
#include "iaos/sequence_io.hpp"

namespace iaos {

struct TargetLeg {
  std::size_t frames = 1;  // number of frame transitions moving with `params`
  MotionParams params;
};

struct SceneConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  Geometry geometry{35.0, 36.0, 64.0};
  double duration_s = 8.0;
  double fps = 1.0;

  double target_radius_px = 4.0;
  double target_intensity = 0.6;  // peak amplitude added to the background
  double start_x = 32.0;
  double start_y = 32.0;
  std::vector<TargetLeg> legs;  // consumed in order; the last leg extends to the end
  double target_shape_jitter = 0.0;  // relative per-frame radius jitter

  double occluder_density = 0.5;
  double occluder_radius_min = 2.0;
  double occluder_radius_max = 4.0;
  double occluder_mu = 0.4;
  double occluder_var = 0.0;
  double occluder_jitter_px = 0.0;
  std::optional<std::size_t> occluder_count;  // fixes the disk count, bypassing calibration

  double background_mu = 0.2;
  double background_var = 0.0001;

  std::uint64_t seed = 1;

  std::size_t frame_count() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration_s * fps)));
  }

  MotionTrack track() const {
    const std::size_t n = frame_count();
    require(!legs.empty(), "scene needs at least one motion leg");
    MotionTrack t;
    t.extend(legs.front().params);  // frame 0
    std::size_t leg = 0, used = 0;
    for (std::size_t i = 1; i < n; ++i) {
      while (leg + 1 < legs.size() && used >= legs[leg].frames) {
        ++leg;
        used = 0;
      }
      t.extend(legs[leg].params);
      ++used;
    }
    return t;
  }

  void validate() const {
    require(width > 0 && height > 0, "scene size must be positive");
    require(fps > 0.0 && duration_s > 0.0, "duration and fps must be positive");
    require(occluder_density >= 0.0 && occluder_density <= 1.0, "occluder density must lie in [0, 1]");
    require(occluder_radius_min > 0.0 && occluder_radius_min <= occluder_radius_max, "bad occluder radius range");
    require(occluder_var >= 0.0 && background_var >= 0.0, "variances must be >= 0");
    if (target_radius_px >= static_cast<double>(std::min(width, height)))
      throw DomainError("target radius must be smaller than the image");
    require(target_radius_px > 0.0, "target radius must be positive");
  }
};

struct Disk {
  double x = 0.0, y = 0.0, r = 0.0;
};

struct GroundTruth {
  std::vector<std::pair<double, double>> centers_px;
  MotionTrack track;
  double empirical_D = 0.0;
  std::size_t occluder_count = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

enum : std::uint64_t { kOccluderStream = 1, kFrameStream = 2, kProbeStream = 3, kJitterStream = 4 };

// Disk centers cover the image plus a margin so coverage is uniform up to the borders.
inline std::vector<Disk> occluder_field(const SceneConfig& c, std::size_t count, std::uint64_t seed) {
  auto rng = stream(seed, kOccluderStream);
  const double m = c.occluder_radius_max;
  std::uniform_real_distribution<double> ux(-m, static_cast<double>(c.width) - 1.0 + m);
  std::uniform_real_distribution<double> uy(-m, static_cast<double>(c.height) - 1.0 + m);
  std::uniform_real_distribution<double> ur(c.occluder_radius_min, c.occluder_radius_max);
  std::vector<Disk> disks(count);
  for (auto& d : disks) {
    d.x = ux(rng);
    d.y = uy(rng);
    d.r = ur(rng);
  }
  return disks;
}

// Per-pixel index of the topmost covering disk plus one (0 = uncovered).
inline Raster<std::uint32_t> rasterize(const std::vector<Disk>& disks, std::size_t w, std::size_t h,
                                       const std::vector<std::pair<double, double>>* offsets = nullptr) {
  Raster<std::uint32_t> owner(w, h);
  for (std::size_t k = 0; k < disks.size(); ++k) {
    double cx = disks[k].x, cy = disks[k].y;
    if (offsets) {
      cx += (*offsets)[k].first;
      cy += (*offsets)[k].second;
    }
    const double r = disks[k].r;
    const long x0 = std::max(0L, static_cast<long>(std::ceil(cx - r)));
    const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::floor(cx + r)));
    const long y0 = std::max(0L, static_cast<long>(std::ceil(cy - r)));
    const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::floor(cy + r)));
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        if (dx * dx + dy * dy <= r * r) owner(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = k + 1;
      }
  }
  return owner;
}

inline double covered_fraction(const Raster<std::uint32_t>& owner) {
  std::size_t n = 0;
  for (auto v : owner.values()) n += v > 0;
  return static_cast<double>(n) / static_cast<double>(owner.size());
}

inline bool full_cover(const SceneConfig& c) { return c.occluder_density >= 1.0 - 1e-12; }

}  // namespace detail

/// Disk count whose Boolean-model coverage matches the requested density,
/// refined against measured coverage over a few seeds.
inline std::size_t calibrate_occluder_count(const SceneConfig& c) {
  if (c.occluder_count) return *c.occluder_count;
  const double D = std::min(c.occluder_density, 0.995);
  if (D <= 0.0) return 0;
  const double rmin = c.occluder_radius_min, rmax = c.occluder_radius_max;
  const double mean_area = std::numbers::pi * (rmin * rmin + rmin * rmax + rmax * rmax) / 3.0;
  const double plane = (static_cast<double>(c.width) + 2.0 * rmax) * (static_cast<double>(c.height) + 2.0 * rmax);
  double count = -std::log(1.0 - D) * plane / mean_area;
  for (int iter = 0; iter < 4; ++iter) {
    // Enough realizations that about 10^6 pixels back each coverage measurement.
    const int kSeeds = std::max(4, static_cast<int>(std::ceil(1e6 / static_cast<double>(c.width * c.height))));
    double measured = 0.0;
    for (int s = 0; s < kSeeds; ++s)
      measured += detail::covered_fraction(detail::rasterize(
          detail::occluder_field(c, static_cast<std::size_t>(std::llround(count)), 0xca11b0000ULL + s), c.width,
          c.height));
    measured /= kSeeds;
    if (std::abs(measured - D) < 0.002 || measured <= 0.0 || measured >= 1.0) break;
    count *= std::log(1.0 - D) / std::log(1.0 - measured);
  }
  return static_cast<std::size_t>(std::llround(count));
}

/// Fraction of `probe_points` random positions covered by occluders, averaged over `seeds`.
inline double measure_density(const SceneConfig& c, std::size_t probe_points, const std::vector<std::uint64_t>& seeds) {
  require(probe_points >= 100, "measure_density needs at least 100 probes");
  require(!seeds.empty(), "measure_density needs at least one seed");
  if (detail::full_cover(c) && !c.occluder_count) return 1.0;
  const std::size_t count = calibrate_occluder_count(c);
  double total = 0.0;
  for (auto seed : seeds) {
    const auto owner = detail::rasterize(detail::occluder_field(c, count, seed), c.width, c.height);
    auto rng = detail::stream(seed, detail::kProbeStream);
    std::uniform_int_distribution<std::size_t> px(0, c.width - 1), py(0, c.height - 1);
    std::size_t hit = 0;
    for (std::size_t p = 0; p < probe_points; ++p) hit += owner(px(rng), py(rng)) > 0;
    total += static_cast<double>(hit) / static_cast<double>(probe_points);
  }
  return total / static_cast<double>(seeds.size());
}

/// Ground-truth target centers: start position plus accumulated track displacements.
inline std::vector<std::pair<double, double>> target_centers(const SceneConfig& c) {
  const auto track = c.track();
  const double gsd = c.geometry.gsd_m_per_px();
  std::vector<std::pair<double, double>> centers{{c.start_x, c.start_y}};
  for (std::size_t i = 1; i < c.frame_count(); ++i) {
    const auto d = displacement(track.params_at(i), 1.0 / c.fps, gsd);
    centers.push_back({centers.back().first + d.dx, centers.back().second + d.dy});
  }
  return centers;
}

inline std::pair<FrameSequence, GroundTruth> simulate(const SceneConfig& c) {
  c.validate();
  const std::size_t n = c.frame_count();
  GroundTruth truth;
  truth.track = c.track();
  truth.centers_px = target_centers(c);

  std::size_t inside = 0;
  for (const auto& [x, y] : truth.centers_px)
    inside += x >= 0.0 && y >= 0.0 && x <= static_cast<double>(c.width) - 1.0 && y <= static_cast<double>(c.height) - 1.0;
  if (static_cast<double>(inside) < 0.8 * static_cast<double>(n))
    truth.warnings.push_back("target is inside the image for fewer than 80% of frames");

  const bool full = detail::full_cover(c) && !c.occluder_count;
  const std::size_t count = calibrate_occluder_count(c);
  const auto disks = detail::occluder_field(c, count, c.seed);
  truth.occluder_count = count;
  truth.empirical_D = full ? 1.0 : detail::covered_fraction(detail::rasterize(disks, c.width, c.height));

  std::vector<Frame> frames(n);
  parallel_for(n, [&](std::size_t i) {
    auto rng = detail::stream(c.seed, detail::kFrameStream, i);
    std::normal_distribution<double> noise(0.0, std::sqrt(c.background_var));
    Image img(c.width, c.height, c.background_mu);
    if (c.background_var > 0.0)
      for (auto& v : img.values()) v += noise(rng);

    double radius = c.target_radius_px;
    if (c.target_shape_jitter > 0.0) {
      std::uniform_real_distribution<double> j(-c.target_shape_jitter, c.target_shape_jitter);
      radius *= 1.0 + j(rng);
    }
    const double sigma = radius / 2.0;
    const auto [tx, ty] = truth.centers_px[i];
    const double reach = 4.0 * sigma;
    const long x0 = std::max(0L, static_cast<long>(std::floor(tx - reach)));
    const long x1 = std::min(static_cast<long>(c.width) - 1, static_cast<long>(std::ceil(tx + reach)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(ty - reach)));
    const long y1 = std::min(static_cast<long>(c.height) - 1, static_cast<long>(std::ceil(ty + reach)));
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) - tx, dy = static_cast<double>(y) - ty;
        img(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) +=
            c.target_intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }

    // Occluder geometry is static; each element's intensity is drawn afresh
    // per recording, as O_i in the occlusion model.
    std::normal_distribution<double> occ(c.occluder_mu, std::sqrt(c.occluder_var));
    auto occluder_value = [&] { return c.occluder_var > 0.0 ? occ(rng) : c.occluder_mu; };
    if (full) {
      for (auto& v : img.values()) v = occluder_value();
    } else if (!disks.empty()) {
      std::vector<double> values(disks.size());
      for (auto& v : values) v = occluder_value();
      std::vector<std::pair<double, double>> offsets;
      if (c.occluder_jitter_px > 0.0) {
        auto jrng = detail::stream(c.seed, detail::kJitterStream, i);
        std::uniform_real_distribution<double> j(-c.occluder_jitter_px, c.occluder_jitter_px);
        offsets.resize(disks.size());
        for (auto& o : offsets) o = {j(jrng), j(jrng)};
      }
      const auto owner = detail::rasterize(disks, c.width, c.height, offsets.empty() ? nullptr : &offsets);
      for (std::size_t p = 0; p < img.size(); ++p)
        if (owner[p] > 0) img[p] = values[owner[p] - 1];
    }
    for (auto& v : img.values()) v = quantize16(v);
    frames[i] = Frame{std::move(img), static_cast<double>(i) / c.fps, i};
  });
  return {FrameSequence(std::move(frames), c.geometry, c.fps), std::move(truth)};
}

inline nlohmann::json ground_truth_json(const GroundTruth& t) {
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& [x, y] : t.centers_px) centers.push_back({x, y});
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : t.track.segments())
    segs.push_back({{"first", s.first},
                    {"last", s.last},
                    {"theta_deg", s.params.theta_deg()},
                    {"speed_mps", s.params.speed_mps()}});
  return {{"per_frame_centers_px", centers},
          {"track_segments", segs},
          {"empirical_D", t.empirical_D},
          {"occluder_count", t.occluder_count},
          {"warnings", t.warnings}};
}

/// Writes the sequence container plus ground_truth.json.
inline void save_scene(const FrameSequence& seq, const GroundTruth& truth, const std::filesystem::path& dir) {
  save_sequence(seq, dir, "synthetic occluded scene");
  std::ofstream out(dir / "ground_truth.json");
  if (!out) throw IoError("cannot write ground truth in " + dir.string());
  out << ground_truth_json(truth).dump(2) << '\n';
}

inline GroundTruth load_ground_truth(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ground_truth.json");
  if (!in) throw MissingFile("missing ground_truth.json in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  GroundTruth t;
  for (const auto& c : j.at("per_frame_centers_px")) t.centers_px.push_back({c[0].get<double>(), c[1].get<double>()});
  std::vector<MotionSegment> segs;
  for (const auto& s : j.at("track_segments"))
    segs.push_back({s.at("first").get<std::size_t>(), s.at("last").get<std::size_t>(),
                    MotionParams(s.at("theta_deg").get<double>(), s.at("speed_mps").get<double>())});
  t.track = MotionTrack(std::move(segs));
  t.empirical_D = j.value("empirical_D", 0.0);
  return t;
}

/// Parses a scene config; absent keys keep their defaults.
inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.geometry.resolution_px = static_cast<double>(c.width);
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    c.geometry.altitude_m = g.value("altitude_m", c.geometry.altitude_m);
    c.geometry.fov_deg = g.value("fov_deg", c.geometry.fov_deg);
    c.geometry.resolution_px = g.value("resolution_px", c.geometry.resolution_px);
  }
  c.duration_s = j.value("duration_s", c.duration_s);
  c.fps = j.value("fps", c.fps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("target")) {
    const auto& t = j["target"];
    c.target_radius_px = t.value("radius_px", c.target_radius_px);
    c.target_intensity = t.value("intensity", c.target_intensity);
    c.target_shape_jitter = t.value("shape_jitter", c.target_shape_jitter);
    if (t.contains("start_px")) {
      c.start_x = t["start_px"][0].get<double>();
      c.start_y = t["start_px"][1].get<double>();
    }
    if (t.contains("legs")) {
      for (const auto& l : t["legs"])
        c.legs.push_back({l.value("frames", std::size_t{1}),
                          MotionParams(l.at("theta_deg").get<double>(), l.at("speed_mps").get<double>())});
    } else {
      c.legs.push_back({c.frame_count(), MotionParams(t.value("theta_deg", 0.0), t.value("speed_mps", 0.0))});
    }
  }
  if (c.legs.empty()) c.legs.push_back({c.frame_count(), MotionParams{}});
  if (j.contains("occluders")) {
    const auto& o = j["occluders"];
    c.occluder_density = o.value("density", c.occluder_density);
    if (o.contains("radius_px")) {
      c.occluder_radius_min = o["radius_px"][0].get<double>();
      c.occluder_radius_max = o["radius_px"][1].get<double>();
    }
    c.occluder_mu = o.value("mu", c.occluder_mu);
    c.occluder_var = o.value("var", c.occluder_var);
    c.occluder_jitter_px = o.value("jitter_px", c.occluder_jitter_px);
    if (o.contains("count")) c.occluder_count = o["count"].get<std::size_t>();
  }
  if (j.contains("background")) {
    c.background_mu = j["background"].value("mu", c.background_mu);
    c.background_var = j["background"].value("var", c.background_var);
  }
  c.validate();
  return c;
}

}  // namespace iaos
