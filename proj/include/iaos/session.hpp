#pragma once

// Transport-independent HTTP session logic: requests in, responses out.
// iaos/http_server.hpp binds these handlers to a real socket.

#include <charconv>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <system_error>
#include <thread>
#include <tuple>
#include <utility>

#include <nlohmann/json.hpp>

#include "iaos/frame.hpp"
#include "iaos/integrator.hpp"
#include "iaos/motion_estimator.hpp"
#include "iaos/png.hpp"
#include "iaos/radon.hpp"

namespace iaos {

struct Request {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

inline constexpr const char* kRenderNote =
    "frames and integrals render as 8-bit grayscale PNG, min-max normalized per image; display only, "
    "analysis keeps full precision";

/// Parameters of one /integral request.  Window is inclusive.
struct IntegralKey {
  double theta_deg = 0.0;
  double speed_mps = 0.0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::optional<double> filter_u_deg;

  auto tie() const { return std::tie(theta_deg, speed_mps, from, to, filter_u_deg); }
  bool operator<(const IntegralKey& o) const { return tie() < o.tie(); }
};

struct RenderedIntegral {
  std::string png;
  double glv = 0.0;
};

/// Integral of frames [from, to] under constant motion, registered onto
/// `to`, optionally band-stop filtered at the motion direction.  GLV is
/// the estimator objective for the same window and parameters.
inline RenderedIntegral render_integral(const FrameSequence& seq, const IntegralKey& key) {
  const FrameSequence window = seq.slice(key.from, key.to);
  const MotionParams params(key.theta_deg, key.speed_mps);
  const IntegralImage integral = integrate(window, MotionTrack::constant(window.size(), params));
  EstimatorOptions opts;
  opts.filter_u_deg = key.filter_u_deg;
  std::shared_ptr<const Image> shown;
  if (key.filter_u_deg) shown = RadonFilterBank(integral.pixels(), true).filtered(key.theta_deg, *key.filter_u_deg);
  const Image& image = shown ? *shown : integral.pixels();
  return {render_png(image),
          detail::thresholded_glv(image, integral.coverage(), static_cast<double>(window.size()), opts)};
}

enum class JobStatus { kRunning, kDone, kFailed };

struct EstimationJob {
  std::size_t id = 0;
  std::string mode;
  JobStatus status = JobStatus::kRunning;
  std::optional<EstimationResult> result;
  std::string error;
};

class SessionState {
 public:
  explicit SessionState(FrameSequence seq) : seq_(std::move(seq)) {}
  ~SessionState() { wait_for_job(); }
  SessionState(const SessionState&) = delete;
  SessionState& operator=(const SessionState&) = delete;

  const FrameSequence& sequence() const { return seq_; }

  RenderedIntegral integral(const IntegralKey& key) {
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    RenderedIntegral r = render_integral(seq_, key);  // computed unlocked; duplicates are identical
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(key, std::move(r)).first->second;
  }

  std::size_t cache_size() const {
    std::lock_guard lock(cache_mutex_);
    return cache_.size();
  }

  const std::string& frame_png(std::size_t i) {
    std::lock_guard lock(cache_mutex_);
    auto it = frame_cache_.find(i);
    if (it == frame_cache_.end()) it = frame_cache_.emplace(i, render_png(seq_[i].pixels)).first;
    return it->second;
  }

  /// Starts a background estimation; nullopt if one is already running.
  std::optional<std::size_t> start_job(std::string mode, SearchBounds bounds, EstimatorOptions options) {
    std::lock_guard lock(job_mutex_);
    if (running_) return std::nullopt;
    if (worker_.joinable()) worker_.join();
    const std::size_t id = ++next_id_;
    jobs_[id] = {id, mode, JobStatus::kRunning, std::nullopt, {}};
    running_ = true;
    worker_ = std::thread([this, id, mode = std::move(mode), bounds, options] {
      std::optional<EstimationResult> result;
      std::string error;
      try {
        result = mode == "constant" ? estimate_constant(seq_, bounds, options) : estimate_stepwise(seq_, bounds, options);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(job_mutex_);
      auto& job = jobs_[id];
      job.result = std::move(result);
      job.error = std::move(error);
      job.status = job.result ? JobStatus::kDone : JobStatus::kFailed;
      if (job.result) last_result_ = job.result;
      running_ = false;
    });
    return id;
  }

  std::optional<EstimationJob> job(std::size_t id) const {
    std::lock_guard lock(job_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<EstimationResult> last_result() const {
    std::lock_guard lock(job_mutex_);
    return last_result_;
  }

  void wait_for_job() {
    std::thread t;
    {
      std::lock_guard lock(job_mutex_);
      t = std::move(worker_);
    }
    if (t.joinable()) t.join();
  }

 private:
  const FrameSequence seq_;

  mutable std::mutex cache_mutex_;
  std::map<IntegralKey, RenderedIntegral> cache_;
  std::map<std::size_t, std::string> frame_cache_;

  mutable std::mutex job_mutex_;
  std::map<std::size_t, EstimationJob> jobs_;
  std::optional<EstimationResult> last_result_;
  std::size_t next_id_ = 0;
  bool running_ = false;
  std::thread worker_;
};

namespace detail {

class BadRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Response json_response(int status, const nlohmann::json& j) { return {status, "application/json", j.dump(), {}}; }
inline Response error_response(int status, const std::string& msg) { return json_response(status, {{"error", msg}}); }

inline double parse_double(const std::string& s, const std::string& name) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v))
    throw BadRequest("parameter '" + name + "' is not a number: '" + s + "'");
  return v;
}

inline std::size_t parse_index(const std::string& s, const std::string& name) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size())
    throw BadRequest("parameter '" + name + "' is not an index: '" + s + "'");
  return v;
}

inline const std::string* find(const Request& r, const std::string& key) {
  auto it = r.query.find(key);
  return it == r.query.end() ? nullptr : &it->second;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json trace_json(const EstimationResult& r, const FrameSequence& seq) {
  nlohmann::json lines = nlohmann::json::array();
  if (r.per_step.empty()) {
    lines.push_back({{"step", seq.size() - 1},
                     {"theta_deg", r.params.theta_deg()},
                     {"speed_mps", r.params.speed_mps()},
                     {"glv", r.objective},
                     {"evals", r.evaluations}});
  } else {
    for (const auto& s : r.per_step)
      lines.push_back({{"step", s.step},
                       {"theta_deg", s.params.theta_deg()},
                       {"speed_mps", s.params.speed_mps()},
                       {"glv", s.glv},
                       {"evals", s.evaluations}});
  }
  return lines;
}

inline Response handle_meta(SessionState& s) {
  const auto& seq = s.sequence();
  std::vector<double> ts;
  for (const auto& f : seq.frames()) ts.push_back(f.timestamp);
  return json_response(200, {{"width", seq.width()},
                             {"height", seq.height()},
                             {"frame_count", seq.size()},
                             {"fps", seq.fps()},
                             {"altitude_m", seq.geometry().altitude_m},
                             {"fov_deg", seq.geometry().fov_deg},
                             {"resolution_px", seq.geometry().resolution_px},
                             {"gsd_m_per_px", seq.geometry().gsd_m_per_px()},
                             {"timestamps", ts},
                             {"render", kRenderNote}});
}

inline Response handle_frame(SessionState& s, const std::string& index) {
  const std::size_t i = parse_index(index, "frame");
  if (i >= s.sequence().size()) return error_response(404, "frame " + index + " out of range");
  return {200, "image/png", s.frame_png(i), {}};
}

inline Response handle_integral(SessionState& s, const Request& r) {
  const std::size_t n = s.sequence().size();
  IntegralKey key;
  const auto* theta = find(r, "theta");
  const auto* speed = find(r, "speed");
  if (!theta || !speed) throw BadRequest("theta and speed are required");
  key.theta_deg = parse_double(*theta, "theta");
  key.speed_mps = parse_double(*speed, "speed");
  if (key.speed_mps < 0.0) throw BadRequest("speed must be >= 0");
  key.theta_deg = normalize_deg(key.theta_deg);
  key.from = find(r, "from") ? parse_index(*find(r, "from"), "from") : 0;
  key.to = find(r, "to") ? parse_index(*find(r, "to"), "to") : n - 1;
  if (key.from > key.to) throw BadRequest("from must not exceed to");
  if (key.to >= n) return error_response(404, "frame window exceeds the sequence");
  if (const auto* u = find(r, "filter_u"); u && !u->empty()) {
    const double v = parse_double(*u, "filter_u");
    if (v < 0.0 || v >= 90.0) throw BadRequest("filter_u must lie in [0, 90)");
    key.filter_u_deg = v;
  }
  const auto rendered = s.integral(key);
  return {200, "image/png", rendered.png, {{"X-GLV", format_double(rendered.glv)}}};
}

inline SearchBounds parse_bounds(const nlohmann::json& b) {
  SearchBounds out;
  if (b.is_array()) {
    if (b.size() != 3) throw BadRequest("bounds must be [theta_lo, theta_hi, speed_max]");
    out = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>()};
  } else if (b.is_object()) {
    out.theta_lo_deg = b.value("theta_lo", out.theta_lo_deg);
    out.theta_hi_deg = b.value("theta_hi", out.theta_hi_deg);
    out.speed_max_mps = b.value("speed_max", out.speed_max_mps);
  } else {
    throw BadRequest("bounds must be an array or object");
  }
  try {
    out.validate();
  } catch (const DomainError& e) {
    throw BadRequest(e.what());
  }
  return out;
}

inline Response handle_post_estimate(SessionState& s, const Request& r) {
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(r.body);
  } catch (const nlohmann::json::exception&) {
    throw BadRequest("request body is not JSON");
  }
  if (!body.is_object()) throw BadRequest("request body must be an object");
  SearchBounds bounds;
  EstimatorOptions options;
  std::string mode;
  try {
    mode = body.value("mode", std::string("constant"));
    if (body.contains("bounds")) bounds = parse_bounds(body["bounds"]);
    options.max_evals = body.value("max_evals", options.max_evals);
    if (body.contains("filter_u") && !body["filter_u"].is_null()) options.filter_u_deg = body["filter_u"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw BadRequest(std::string("bad estimate request: ") + e.what());
  }
  if (mode != "constant" && mode != "stepwise") throw BadRequest("mode must be constant or stepwise");
  if (options.max_evals < 1) throw BadRequest("max_evals must be >= 1");
  if (s.sequence().size() < 2) throw BadRequest("estimation needs at least two frames");
  options.workers = worker_count();
  const auto id = s.start_job(mode, bounds, options);
  if (!id) return error_response(409, "estimation already running");
  return json_response(202, {{"job_id", *id}, {"status", "running"}});
}

inline Response handle_get_estimate(SessionState& s, const std::string& id_text) {
  const std::size_t id = parse_index(id_text, "job");
  const auto job = s.job(id);
  if (!job) return error_response(404, "no estimation job " + id_text);
  nlohmann::json j{{"job_id", job->id}, {"mode", job->mode}};
  switch (job->status) {
    case JobStatus::kRunning:
      j["status"] = "running";
      j["trace"] = nlohmann::json::array();
      break;
    case JobStatus::kDone:
      j["status"] = "done";
      j["trace"] = trace_json(*job->result, s.sequence());
      j["result"] = to_json(*job->result);
      break;
    case JobStatus::kFailed:
      j["status"] = "failed";
      j["trace"] = nlohmann::json::array();
      j["error"] = job->error;
      break;
  }
  return json_response(200, j);
}

}  // namespace detail

/// Routes one request.  GET responses depend only on the loaded sequence
/// and the request.
inline Response handle(SessionState& s, const Request& r) {
  using namespace detail;
  try {
    const std::string& p = r.path;
    if (r.method == "GET") {
      if (p == "/meta") return handle_meta(s);
      if (p.rfind("/frame/", 0) == 0) return handle_frame(s, p.substr(7));
      if (p == "/integral") return handle_integral(s, r);
      if (p.rfind("/estimate/", 0) == 0) return handle_get_estimate(s, p.substr(10));
    } else if (r.method == "POST" && p == "/estimate") {
      return handle_post_estimate(s, r);
    }
    return error_response(404, "no route for " + r.method + " " + p);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const DomainError& e) {
    return error_response(400, e.what());
  }
}

}  // namespace iaos
