#pragma once

// Statistical occlusion model: each pixel of recording i is
//   I_i = Z_i O_i + (1 - Z_i) S,   Z_i ~ Bernoulli(D),
// with occluder O_i (mu_o, sigma2_o) drawn per recording and the target
// signal S (mu_s, sigma2_s) shared by all N recordings of the integral.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "iaos/error.hpp"
#include "iaos/parallel.hpp"

namespace iaos {

struct OcclusionModel {
  double D = 0.0;
  double mu_o = 0.0;
  double sigma2_o = 0.0;
  double mu_s = 0.0;
  double sigma2_s = 0.0;
  std::size_t N = 1;

  void validate() const {
    require(D >= 0.0 && D <= 1.0, "occlusion probability must lie in [0, 1]");
    require(sigma2_o >= 0.0 && sigma2_s >= 0.0, "variances must be >= 0");
    require(N >= 1, "N must be >= 1");
  }
};

inline double single_mean(const OcclusionModel& m) {
  m.validate();
  return m.D * m.mu_o + (1.0 - m.D) * m.mu_s;
}

inline double single_second_moment(const OcclusionModel& m) {
  m.validate();
  return m.D * (m.mu_o * m.mu_o + m.sigma2_o) + (1.0 - m.D) * (m.mu_s * m.mu_s + m.sigma2_s);
}

inline double single_variance(const OcclusionModel& m) {
  m.validate();
  const double dm = m.mu_o - m.mu_s;
  return m.D * (1.0 - m.D) * dm * dm + m.D * m.sigma2_o + (1.0 - m.D) * m.sigma2_s;
}

inline double integral_mean(const OcclusionModel& m) { return single_mean(m); }

/// Closed-form variance of an N-frame integral.
inline double integral_variance(const OcclusionModel& m) {
  const double n = static_cast<double>(m.N);
  const double q = 1.0 - m.D;
  return single_variance(m) / n + q * q * (1.0 - 1.0 / n) * m.sigma2_s;
}

/// E[I^2] from the pairwise moments: N diagonal terms E[I_i^2] and N(N-1)
/// cross terms E[I_i I_j], which share S.
inline double integral_second_moment(const OcclusionModel& m) {
  m.validate();
  const double n = static_cast<double>(m.N);
  const double D = m.D, q = 1.0 - m.D;
  const double diagonal = D * (m.sigma2_o + m.mu_o * m.mu_o) + q * (m.sigma2_s + m.mu_s * m.mu_s);
  const double cross = D * D * m.mu_o * m.mu_o + 2.0 * D * q * m.mu_o * m.mu_s + q * q * (m.sigma2_s + m.mu_s * m.mu_s);
  return (n * diagonal + n * (n - 1.0) * cross) / (n * n);
}

enum class SampleDistribution { kNormal, kUniform };

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

namespace detail {

// Moment-matched draw: normal, or uniform on mean +- sqrt(3 var).
inline double draw(std::mt19937_64& rng, SampleDistribution dist, double mean, double var) {
  if (var == 0.0) return mean;
  if (dist == SampleDistribution::kNormal) return std::normal_distribution<double>(mean, std::sqrt(var))(rng);
  const double half = std::sqrt(3.0 * var);
  return std::uniform_real_distribution<double>(mean - half, mean + half)(rng);
}

inline constexpr std::size_t kTrialsPerChunk = 1 << 16;

}  // namespace detail

/// Simulates integral pixels directly from the occlusion model and returns
/// their unbiased sample variance with a jackknife standard error.  Trials
/// are split into fixed chunks with their own seed streams, so the result
/// depends only on (model, trials, seed).
inline MonteCarloEstimate monte_carlo_variance(const OcclusionModel& model, std::size_t trials, std::uint64_t seed,
                                               SampleDistribution dist = SampleDistribution::kNormal) {
  model.validate();
  if (trials < 1000) throw DomainError("monte_carlo_variance needs at least 1000 trials");
  std::vector<double> samples(trials);
  const std::size_t chunks = (trials + detail::kTrialsPerChunk - 1) / detail::kTrialsPerChunk;
  parallel_for(chunks, [&](std::size_t c) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c), 0x1a05u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t begin = c * detail::kTrialsPerChunk;
    const std::size_t end = std::min(trials, begin + detail::kTrialsPerChunk);
    for (std::size_t t = begin; t < end; ++t) {
      const double s = detail::draw(rng, dist, model.mu_s, model.sigma2_s);
      double acc = 0.0;
      for (std::size_t i = 0; i < model.N; ++i) {
        const bool occluded = unit(rng) < model.D;
        // O_i only matters where Z_i = 1; skipping the unused draw leaves the law of I unchanged.
        acc += occluded ? detail::draw(rng, dist, model.mu_o, model.sigma2_o) : s;
      }
      samples[t] = acc / static_cast<double>(model.N);
    }
  });

  // Centering on the first sample keeps the sums exact for constant data.
  const double shift = samples[0];
  for (double& v : samples) v -= shift;
  const double n = static_cast<double>(trials);
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double& v : samples) {
    v -= mean;
    ss += v * v;
  }
  const double variance = ss / (n - 1.0);
  // Leave-one-out variances: SS_(i) = SS - d_i^2 n / (n - 1).
  double loo_mean = 0.0;
  for (double d : samples) loo_mean += (ss - d * d * n / (n - 1.0)) / (n - 2.0);
  loo_mean /= n;
  double jack = 0.0;
  for (double d : samples) {
    const double e = (ss - d * d * n / (n - 1.0)) / (n - 2.0) - loo_mean;
    jack += e * e;
  }
  return {variance, std::sqrt((n - 1.0) / n * jack)};
}

struct StatsRow {
  double D = 0.0;
  std::size_t N = 1;
  double analytic = 0.0;
  double mc_estimate = 0.0;
  double mc_se = 0.0;
};

/// Sweeps D x N over a base model, pairing the closed form with Monte Carlo.
inline std::vector<StatsRow> stats_sweep(const OcclusionModel& base, const std::vector<double>& d_values,
                                         const std::vector<std::size_t>& n_values, std::size_t trials,
                                         std::uint64_t seed) {
  std::vector<StatsRow> rows;
  std::uint64_t stream = 0;
  for (double d : d_values)
    for (std::size_t n : n_values) {
      OcclusionModel m = base;
      m.D = d;
      m.N = n;
      const auto mc = monte_carlo_variance(m, trials, seed + stream++);
      rows.push_back({d, n, integral_variance(m), mc.estimate, mc.standard_error});
    }
  return rows;
}

inline nlohmann::json to_json(const std::vector<StatsRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"D", r.D}, {"N", r.N}, {"analytic", r.analytic}, {"mc_estimate", r.mc_estimate}, {"mc_se", r.mc_se}});
  return out;
}

}  // namespace iaos
