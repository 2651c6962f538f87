// iaos command-line driver.  Exit codes: 0 ok, 1 domain or I/O error, 2 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/http_server.hpp"
#include "iaos/integrator.hpp"
#include "iaos/motion_estimator.hpp"
#include "iaos/occlusion_stats.hpp"
#include "iaos/parallel.hpp"
#include "iaos/radon.hpp"
#include "iaos/scene_sim.hpp"
#include "iaos/sequence_io.hpp"
#include "iaos/session.hpp"
#include "iaos/tracker.hpp"

namespace fs = std::filesystem;
using namespace iaos;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<double> split_numbers(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

SearchBounds parse_bounds(const std::string& text) {
  const auto v = split_numbers(text, ',');
  if (v.size() != 3) throw UsageError("--bounds expects theta_lo,theta_hi,speed_max");
  SearchBounds b{v[0], v[1], v[2]};
  b.validate();
  return b;
}

// "D=0:0.25:1,N=1,10": comma-separated values, a key= prefix starts a new
// axis, lo:step:hi expands to an inclusive range.
std::map<std::string, std::vector<double>> parse_grid(const std::string& text) {
  std::map<std::string, std::vector<double>> grid;
  std::string key;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (const auto eq = item.find('='); eq != std::string::npos) {
      key = item.substr(0, eq);
      item = item.substr(eq + 1);
      if (key != "D" && key != "N") throw UsageError("grid axes are D and N, got '" + key + "'");
    }
    if (key.empty()) throw UsageError("grid value before any axis name");
    const auto parts = split_numbers(item, ':');
    auto& axis = grid[key];
    if (parts.size() == 1) {
      axis.push_back(parts[0]);
    } else if (parts.size() == 3) {
      const double lo = parts[0], step = parts[1], hi = parts[2];
      if (!(step > 0.0) || hi < lo) throw UsageError("range '" + item + "' needs step > 0 and hi >= lo");
      const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
      for (std::size_t k = 0; k <= n; ++k) axis.push_back(lo + static_cast<double>(k) * step);
    } else {
      throw UsageError("grid entry '" + item + "' must be a value or lo:step:hi");
    }
  }
  return grid;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

int run_simulate(const std::string& config_path, const std::string& outdir) {
  std::ifstream in(config_path);
  if (!in) throw MissingFile("missing config: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed config " + config_path + ": " + e.what());
  }
  const auto [seq, truth] = simulate(scene_config_from_json(j));
  save_scene(seq, truth, outdir);
  for (const auto& w : truth.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "wrote " << seq.size() << " frames to " << outdir << " (empirical D " << truth.empirical_D << ")\n";
  return 0;
}

struct IntegrateArgs {
  std::string seq, out;
  double theta = 0.0, speed = 0.0;
  std::optional<double> filter_u;
  std::optional<std::size_t> from, to;
};

int run_integrate(const IntegrateArgs& a) {
  const auto full = load_sequence(a.seq);
  const std::size_t from = a.from.value_or(0), to = a.to.value_or(full.size() - 1);
  const auto seq = full.slice(from, to);
  const MotionParams params(a.theta, a.speed);
  const auto integral = integrate(seq, MotionTrack::constant(seq.size(), params));
  if (a.filter_u) {
    write_pgm16(a.out, *RadonFilterBank(integral.pixels(), true).filtered(a.theta, *a.filter_u));
  } else {
    write_pgm16(a.out, integral.pixels());
  }
  std::cout << "glv " << glv(integral) << '\n';
  return 0;
}

struct EstimateArgs {
  std::string seq, out, mode = "constant", bounds = "0,360,1", trace;
  std::size_t max_evals = 200;
  double min_box_diag = 1e-5;
  double glv_smoothing = 0.0;
  std::optional<double> filter_u;
};

int run_estimate(const EstimateArgs& a) {
  const auto seq = load_sequence(a.seq);
  const auto bounds = parse_bounds(a.bounds);
  EstimatorOptions opts;
  opts.max_evals = a.max_evals;
  opts.min_box_diag = a.min_box_diag;
  opts.filter_u_deg = a.filter_u;
  opts.glv_smoothing_px = a.glv_smoothing;
  opts.workers = worker_count();
  const auto r = a.mode == "constant" ? estimate_constant(seq, bounds, opts) : estimate_stepwise(seq, bounds, opts);
  write_json(a.out, to_json(r));
  if (!a.trace.empty()) {
    auto out = open_out(a.trace);
    for (const auto& s : r.per_step) write_trace(out, s);
    if (r.per_step.empty()) write_trace(out, {seq.size() - 1, r.params, r.objective, r.evaluations});
  }
  std::cout << "theta " << r.params.theta_deg() << " deg, speed " << r.params.speed_mps() << " m/s, glv " << r.objective
            << ", " << r.evaluations << " evaluations\n";
  return 0;
}

struct TrackArgs {
  std::string seq, out, mode = "single", bounds = "0,360,1", metrics;
  std::optional<std::size_t> warmup;
  std::optional<double> filter_u;
  double gate = 10.0;
};

int run_track(const TrackArgs& a) {
  const auto seq = load_sequence(a.seq);
  const bool integral = a.mode == "integral";
  TrackerConfig config = integral ? TrackerConfig::integral() : TrackerConfig::single_frame();
  // Short sequences keep at least two tracked frames.
  if (a.warmup) {
    config.warmup_frames = *a.warmup;
  } else if (seq.size() < config.warmup_frames + 2) {
    config.warmup_frames = seq.size() >= 3 ? seq.size() - 2 : 1;
  }
  if (integral) {
    config.bounds = parse_bounds(a.bounds);
    if (a.filter_u) config.estimator.filter_u_deg = *a.filter_u;
    config.estimator.workers = worker_count();
  }
  const auto result = track_sequence(seq, integral ? TrackingMode::kIntegral : TrackingMode::kSingle, config);
  {
    auto out = open_out(a.out);
    write_track_lines(out, result);
  }
  const fs::path dir = fs::is_directory(a.seq) ? fs::path(a.seq) : fs::path(a.seq).parent_path();
  if (fs::exists(dir / "ground_truth.json")) {
    const auto metrics = evaluate_tracking(result, load_ground_truth(dir).centers_px, a.gate);
    const auto j = to_json(metrics);
    if (!a.metrics.empty()) write_json(a.metrics, j);
    std::cout << j.dump() << '\n';
  } else if (!a.metrics.empty()) {
    throw MissingFile("--metrics needs ground_truth.json next to the sequence");
  }
  return 0;
}

struct StatsArgs {
  std::string grid = "D=0:0.25:1,N=1,2,10,100", out;
  std::size_t trials = 100000;
  std::uint64_t seed = 1;
  double mu_o = 0.8, sigma2_o = 0.01, mu_s = 0.3, sigma2_s = 0.0025;
};

int run_stats(const StatsArgs& a) {
  auto grid = parse_grid(a.grid);
  if (grid["D"].empty() || grid["N"].empty()) throw UsageError("--grid needs both D and N values");
  std::vector<std::size_t> ns;
  for (double n : grid["N"]) {
    if (n < 1.0 || n != std::floor(n)) throw UsageError("N values must be positive integers");
    ns.push_back(static_cast<std::size_t>(n));
  }
  const OcclusionModel base{0.0, a.mu_o, a.sigma2_o, a.mu_s, a.sigma2_s, 1};
  const auto rows = stats_sweep(base, grid["D"], ns, a.trials, a.seed);
  write_json(a.out, {{"model", {{"mu_o", a.mu_o}, {"sigma2_o", a.sigma2_o}, {"mu_s", a.mu_s}, {"sigma2_s", a.sigma2_s}}},
                     {"trials", a.trials},
                     {"seed", a.seed},
                     {"rows", to_json(rows)}});
  std::cout << "wrote " << rows.size() << " rows to " << a.out << '\n';
  return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const std::string& seq_path, const std::string& host, int port) {
  SessionState session(load_sequence(seq_path));
  httplib::Server server;
  install_routes(server, session);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  if (!server.bind_to_port(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  std::cout << "serving " << session.sequence().size() << " frames on http://" << host << ':' << port << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integral imaging of occluded moving targets"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  auto* sim = app.add_subcommand("simulate", "Render a synthetic occluded scene");
  sim->add_option("config", sim_config, "Scene config JSON")->required();
  sim->add_option("outdir", sim_out, "Output sequence directory")->required();

  IntegrateArgs ia;
  auto* integ = app.add_subcommand("integrate", "Integral image under constant motion");
  integ->add_option("seq", ia.seq, "Sequence directory or manifest")->required();
  integ->add_option("--theta", ia.theta, "Direction, degrees clockwise from +y")->required();
  integ->add_option("--speed", ia.speed, "Speed, m/s")->required()->check(CLI::NonNegativeNumber);
  integ->add_option("--filter-u", ia.filter_u, "Band-stop half width, degrees");
  integ->add_option("--from", ia.from, "First frame (default 0)");
  integ->add_option("--to", ia.to, "Last frame (default last)");
  integ->add_option("-o,--output", ia.out, "Output PGM")->required();

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate motion by GLV maximization");
  est->add_option("seq", ea.seq, "Sequence directory or manifest")->required();
  est->add_option("--mode", ea.mode)->check(CLI::IsMember({"constant", "stepwise"}))->capture_default_str();
  est->add_option("--bounds", ea.bounds, "theta_lo,theta_hi,speed_max")->capture_default_str();
  est->add_option("--max-evals", ea.max_evals, "Objective budget per optimization")->capture_default_str();
  est->add_option("--min-box-diag", ea.min_box_diag, "DIRECT stopping box size")->capture_default_str();
  est->add_option("--filter-u", ea.filter_u, "Band-stop half width, degrees");
  est->add_option("--glv-smoothing", ea.glv_smoothing, "Gaussian sigma (px) applied before GLV")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  est->add_option("--trace", ea.trace, "Per-step trace, JSON lines");
  est->add_option("-o,--output", ea.out, "Result JSON")->required();

  TrackArgs ta;
  auto* trk = app.add_subcommand("track", "Detect and track targets");
  trk->add_option("seq", ta.seq, "Sequence directory or manifest")->required();
  trk->add_option("--mode", ta.mode)->check(CLI::IsMember({"single", "integral"}))->capture_default_str();
  trk->add_option("--bounds", ta.bounds, "Integral mode search bounds")->capture_default_str();
  trk->add_option("--filter-u", ta.filter_u, "Integral mode band-stop half width");
  trk->add_option("--warmup", ta.warmup, "Background training frames (default 9, fewer on short sequences)");
  trk->add_option("--gate", ta.gate, "False-positive distance, px")->capture_default_str();
  trk->add_option("--metrics", ta.metrics, "Metrics JSON (needs ground_truth.json)");
  trk->add_option("-o,--output", ta.out, "Track JSON lines")->required();

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "Occlusion variance: closed form vs Monte Carlo");
  st->add_option("--grid", sa.grid, "Axes, e.g. D=0:0.25:1,N=1,10")->capture_default_str();
  st->add_option("--trials", sa.trials, "Monte Carlo trials per point")->capture_default_str();
  st->add_option("--seed", sa.seed)->capture_default_str();
  st->add_option("--mu-o", sa.mu_o)->capture_default_str();
  st->add_option("--var-o", sa.sigma2_o)->capture_default_str();
  st->add_option("--mu-s", sa.mu_s)->capture_default_str();
  st->add_option("--var-s", sa.sigma2_s)->capture_default_str();
  st->add_option("-o,--output", sa.out, "Report JSON")->required();

  std::string serve_seq, host = "127.0.0.1";
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "HTTP session service");
  srv->add_option("seq", serve_seq, "Sequence directory or manifest")->required();
  srv->add_option("--port", port)->capture_default_str()->check(CLI::Range(0, 65535));
  srv->add_option("--host", host)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "iaos: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*sim) return run_simulate(sim_config, sim_out);
    if (*integ) return run_integrate(ia);
    if (*est) return run_estimate(ea);
    if (*trk) return run_track(ta);
    if (*st) return run_stats(sa);
    if (*srv) return run_serve(serve_seq, host, port);
  } catch (const UsageError& e) {
    std::cerr << "iaos: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "iaos: error: " << msg << '\n';
    return 1;
  }
  return 2;
}
