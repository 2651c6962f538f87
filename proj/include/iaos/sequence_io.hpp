#pragma once

// On-disk sequence container: a directory holding frame_%06d.pgm (16-bit P5)
// and manifest.json {fps, altitude_m, fov_deg, resolution_px, timestamps?, notes?}.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/error.hpp"
#include "iaos/frame.hpp"

namespace iaos {

class MissingFile : public IoError {
 public:
  using IoError::IoError;
};

namespace fs = std::filesystem;

inline constexpr double kPgmMax = 65535.0;

/// Rounds an intensity onto the 16-bit storage grid, clamped to [0, 1].
inline double quantize16(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * kPgmMax) / kPgmMax;
}

inline void write_pgm16(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  std::vector<unsigned char> buf(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * kPgmMax));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

/// Reads binary PGM (P5), 8- or 16-bit, normalized to [0, 1].
inline Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> t;
    return t;
  };
  if (token() != "P5") throw IoError(path.string() + ": not a binary PGM");
  std::size_t w = 0, h = 0;
  long maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval <= 0 || maxval > 65535) throw IoError(path.string() + ": bad PGM header");
  in.get();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(w * h * bpp);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated PGM data");
  Image img(w, h);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bpp == 2 ? (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1] : buf[i];
    img[i] = static_cast<double>(v) * scale;
  }
  return img;
}

inline std::string frame_filename(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%06zu.pgm", index);
  return name;
}

inline nlohmann::json manifest_json(const FrameSequence& seq, const std::string& notes = {}) {
  nlohmann::json j;
  j["fps"] = seq.fps();
  j["altitude_m"] = seq.geometry().altitude_m;
  j["fov_deg"] = seq.geometry().fov_deg;
  j["resolution_px"] = seq.geometry().resolution_px;
  j["frame_count"] = seq.size();
  std::vector<double> ts;
  for (const auto& f : seq.frames()) ts.push_back(f.timestamp);
  j["timestamps"] = ts;
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

inline void save_sequence(const FrameSequence& seq, const fs::path& dir, const std::string& notes = {}) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < seq.size(); ++i) write_pgm16(dir / frame_filename(i), seq[i].pixels);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest_json(seq, notes).dump(2) << '\n';
}

/// Accepts a manifest.json path or the directory containing it.
inline FrameSequence load_sequence(const fs::path& manifest_path) {
  const fs::path manifest = fs::is_directory(manifest_path) ? manifest_path / "manifest.json" : manifest_path;
  const fs::path dir = manifest.parent_path();
  std::ifstream in(manifest);
  if (!in) throw MissingFile("missing manifest: " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + manifest.string() + ": " + e.what());
  }

  Geometry geo;
  double fps = 1.0;
  try {
    fps = j.at("fps").get<double>();
    geo.altitude_m = j.at("altitude_m").get<double>();
    geo.fov_deg = j.at("fov_deg").get<double>();
    geo.resolution_px = j.at("resolution_px").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + manifest.string() + " lacks a required field: " + e.what());
  }
  if (!(fps > 0.0)) throw DomainError("fps must be positive");
  (void)geo.gsd_m_per_px();

  std::vector<double> timestamps;
  if (j.contains("timestamps")) timestamps = j["timestamps"].get<std::vector<double>>();

  std::size_t count = 0;
  if (j.contains("frame_count")) {
    count = j["frame_count"].get<std::size_t>();
  } else if (!timestamps.empty()) {
    count = timestamps.size();
  } else {
    while (fs::exists(dir / frame_filename(count))) ++count;
  }
  if (count == 0) throw MissingFile("no frames found in " + dir.string());
  if (!timestamps.empty() && timestamps.size() != count)
    throw IoError("manifest timestamps do not match frame count");

  std::vector<Frame> frames;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const fs::path p = dir / frame_filename(i);
    if (!fs::exists(p)) throw MissingFile("missing frame file: " + p.string());
    Frame f;
    f.pixels = read_pgm(p);
    f.index = i;
    f.timestamp = timestamps.empty() ? static_cast<double>(i) / fps : timestamps[i];
    frames.push_back(std::move(f));
  }
  return FrameSequence(std::move(frames), geo, fps);
}

}  // namespace iaos
