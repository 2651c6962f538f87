#include <gtest/gtest.h>

#include <httplib.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "iaos/scene_sim.hpp"
#include "iaos/sequence_io.hpp"
#include "support.hpp"

using namespace iaos;
using iaos::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = IAOS_CLI;
const fs::path kDemo = IAOS_DEMO_DIR;

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  TempDir tmp;
  const std::string cmd =
      kCli.string() + " " + args + " >" + (tmp / "out").string() + " 2>" + (tmp / "err").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(tmp / "out"), slurp(tmp / "err")};
}

std::string demo_seq() { return (kDemo / "seq").string(); }

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Law of total variance over the number of occluded frames k ~ Bin(N, D):
// given k, I = (sum of k occluder draws + (N - k) S) / N with S shared.
double variance_by_total_law(double D, double N, double mu_o, double s2_o, double mu_s, double s2_s) {
  const double var_k = N * D * (1 - D);
  const double e_free_sq = var_k + (N - N * D) * (N - N * D);
  const double within = N * D * s2_o + e_free_sq * s2_s;
  const double between = (mu_o - mu_s) * (mu_o - mu_s) * var_k;
  return (within + between) / (N * N);
}

// An ephemeral port that was free a moment ago.
int free_port() {
  const int fd = socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t len = sizeof(addr);
  int port = -1;
  if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0 &&
      getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0)
    port = ntohs(addr.sin_port);
  close(fd);
  return port;
}

}  // namespace

TEST(Cli, SimulateReproducesTheBundledDemo) {
  TempDir tmp;
  const auto r = run("simulate " + (kDemo / "scene.json").string() + " " + (tmp / "seq").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote 8 frames"), std::string::npos);
  for (std::size_t i = 0; i < 8; ++i)
    EXPECT_EQ(slurp(tmp / "seq" / frame_filename(i)), slurp(kDemo / "seq" / frame_filename(i))) << i;
  const auto truth = load_ground_truth(tmp / "seq");
  EXPECT_EQ(truth.centers_px.size(), 8u);
  EXPECT_NEAR(truth.empirical_D, 0.5, 0.05);
}

TEST(Cli, IntegrateOneFrameIsTheFrame) {
  TempDir tmp;
  const auto single = load_sequence(kDemo / "seq").slice(5, 5);
  save_sequence(single, tmp / "one");
  const auto r = run("integrate " + (tmp / "one").string() + " --theta 37 --speed 0.8 -o " + (tmp / "i.pgm").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(tmp / "i.pgm"), slurp(tmp / "one" / frame_filename(0)));
  EXPECT_EQ(slurp(tmp / "i.pgm"), slurp(kDemo / "seq" / frame_filename(5)));

  const auto w = run("integrate " + demo_seq() + " --theta 37 --speed 0.8 --from 5 --to 5 -o " +
                     (tmp / "w.pgm").string());
  ASSERT_EQ(w.code, 0) << w.err;
  EXPECT_EQ(slurp(tmp / "w.pgm"), slurp(kDemo / "seq" / frame_filename(5)));
}

TEST(Cli, IntegrateFullAndFiltered) {
  TempDir tmp;
  const auto a = run("integrate " + demo_seq() + " --theta 118 --speed 0.5 -o " + (tmp / "a.pgm").string());
  const auto b = run("integrate " + demo_seq() + " --theta 118 --speed 0.5 --filter-u 15 -o " + (tmp / "b.pgm").string());
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const Image ia = read_pgm(tmp / "a.pgm"), ib = read_pgm(tmp / "b.pgm");
  EXPECT_EQ(ia.width(), 64u);
  EXPECT_EQ(ib.height(), 64u);
  EXPECT_NE(ia, ib);
  EXPECT_EQ(a.out.rfind("glv ", 0), 0u);
}

TEST(Cli, EstimateConstantRecoversTheDemoMotion) {
  TempDir tmp;
  const auto r = run("estimate " + demo_seq() + " --mode constant --bounds 0,360,1 -o " + (tmp / "r.json").string() +
                     " --trace " + (tmp / "t.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(tmp / "r.json"));
  const auto truth = load_ground_truth(kDemo / "seq").track.params_at(1);
  EXPECT_LE(angular_distance_deg(j["theta_deg"].get<double>(), truth.theta_deg()), 3.0);
  EXPECT_LE(std::abs(j["speed_mps"].get<double>() / truth.speed_mps() - 1.0), 0.10);
  EXPECT_LE(j["evaluations"].get<std::size_t>(), 400u);
  EXPECT_EQ(line_count(slurp(tmp / "t.jsonl")), 1u);
}

TEST(Cli, EstimateStepwiseWritesOneTraceLinePerStep) {
  TempDir tmp;
  const auto r = run("estimate " + demo_seq() + " --mode stepwise --bounds 90,150,1 --max-evals 100 -o " +
                     (tmp / "r.json").string() + " --trace " + (tmp / "t.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(tmp / "r.json"));
  EXPECT_EQ(j["per_step"].size(), 7u);
  std::istringstream lines(slurp(tmp / "t.jsonl"));
  std::string line;
  std::size_t step = 1;
  while (std::getline(lines, line)) {
    const auto s = nlohmann::json::parse(line);
    EXPECT_EQ(s["step"], step++);
    EXPECT_LE(s["evals"].get<std::size_t>(), 100u);
  }
  EXPECT_EQ(step, 8u);
}

TEST(Cli, EstimateWithGlvSmoothing) {
  TempDir tmp;
  const auto plain = run("estimate " + demo_seq() + " -o " + (tmp / "a.json").string());
  const auto smooth = run("estimate " + demo_seq() + " --glv-smoothing 1.5 -o " + (tmp / "b.json").string());
  ASSERT_EQ(plain.code, 0) << plain.err;
  ASSERT_EQ(smooth.code, 0) << smooth.err;
  const auto a = nlohmann::json::parse(slurp(tmp / "a.json")), b = nlohmann::json::parse(slurp(tmp / "b.json"));
  EXPECT_NE(a.at("glv").get<double>(), b.at("glv").get<double>());  // smoothed variance is a different number
  EXPECT_LE(angular_distance_deg(b["theta_deg"].get<double>(), 118.0), 3.0);
  EXPECT_EQ(run("estimate " + demo_seq() + " --glv-smoothing -1 -o x.json").code, 2);
}

TEST(Cli, TrackBothModes) {
  TempDir tmp;
  for (const std::string& mode : std::vector<std::string>{"single", "integral"}) {
    const auto out = tmp / (mode + ".jsonl");
    const auto metrics = tmp / (mode + ".json");
    const auto r = run("track " + demo_seq() + " --mode " + mode + " --bounds 90,150,1 --metrics " + metrics.string() +
                       " -o " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = nlohmann::json::parse(slurp(metrics));
    for (const char* key : {"false_positives", "confirmed_tracks", "rmse_px", "detections"})
      EXPECT_TRUE(m.contains(key)) << key;
    EXPECT_EQ(nlohmann::json::parse(r.out), m);
    std::istringstream lines(slurp(out));
    std::string line;
    while (std::getline(lines, line)) {
      const auto rec = nlohmann::json::parse(line);
      for (const char* key : {"frame", "track_id", "x_px", "y_px", "confirmed"}) EXPECT_TRUE(rec.contains(key)) << key;
      EXPECT_LT(rec["frame"].get<std::size_t>(), 8u);
    }
  }
}

TEST(Cli, StatsMatchesTheTotalVarianceLaw) {
  TempDir tmp;
  const auto r = run("stats --grid D=0:0.25:1,N=1,10 --trials 20000 -o " + (tmp / "s.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(tmp / "s.json"));
  const auto& rows = j["rows"];
  ASSERT_EQ(rows.size(), 10u);
  std::set<std::pair<double, int>> seen;
  for (const auto& row : rows) {
    const double D = row["D"], N = row["N"];
    seen.insert({D, static_cast<int>(N)});
    EXPECT_NEAR(row["analytic"].get<double>(), variance_by_total_law(D, N, 0.8, 0.01, 0.3, 0.0025), 1e-12)
        << D << " " << N;
    EXPECT_GE(row["mc_se"].get<double>(), 0.0);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_TRUE(seen.count({0.75, 10}));
}

TEST(Cli, StatsSpotValue) {
  TempDir tmp;
  const auto r = run("stats --grid D=0.5,N=10 --trials 1000 -o " + (tmp / "s.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(nlohmann::json::parse(slurp(tmp / "s.json"))["rows"][0]["analytic"].get<double>(), 0.0074375, 1e-15);
}

TEST(Cli, ServeAnswersAndStopsOnSigterm) {
  const int port = free_port();
  ASSERT_GT(port, 0);
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const std::string p = std::to_string(port);
    const std::string seq = demo_seq();
    execl(kCli.c_str(), "iaos", "serve", seq.c_str(), "--port", p.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  httplib::Client client("127.0.0.1", port);
  httplib::Result meta;
  for (int k = 0; k < 100 && !meta; ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    meta = client.Get("/meta");
  }
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, 200);
  EXPECT_EQ(nlohmann::json::parse(meta->body)["frame_count"], 8);
  auto frame = client.Get("/frame/0");
  ASSERT_TRUE(frame);
  EXPECT_EQ(frame->get_header_value("Content-Type"), "image/png");
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  for (const std::string& args : std::vector<std::string>{"", "frobnicate", "estimate " + demo_seq() + " -o x.json --bogus",
                                 "estimate " + demo_seq() + " -o x.json --bounds 10,20",
                                 "estimate " + demo_seq() + " -o x.json --mode sideways",
                                 "integrate " + demo_seq() + " --theta 1 --speed -1 -o x.pgm",
                                 "stats --grid Q=1 -o x.json", "stats --grid D=0:0:1,N=1 -o x.json"}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 2) << args;
    EXPECT_FALSE(r.err.empty()) << args;
  }
}

TEST(Cli, DomainAndIoErrorsExitOneWithOneLine) {
  TempDir tmp;
  const auto single = load_sequence(kDemo / "seq").slice(0, 0);
  save_sequence(single, tmp / "one");
  for (const std::string& args : std::vector<std::string>
       {"integrate /no/such/dir --theta 1 --speed 1 -o x.pgm", "simulate /no/such/config.json " + (tmp / "o").string(),
        "estimate " + (tmp / "one").string() + " -o " + (tmp / "r.json").string(),
        "estimate " + demo_seq() + " --bounds 10,5,1 -o " + (tmp / "r.json").string(),
        "track " + (tmp / "one").string() + " -o " + (tmp / "t.jsonl").string()}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 1) << args;
    EXPECT_EQ(line_count(r.err), 1u) << args << ": " << r.err;
    EXPECT_EQ(r.err.rfind("iaos: error: ", 0), 0u) << r.err;
  }
}
