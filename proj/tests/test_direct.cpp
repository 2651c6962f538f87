#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "iaos/direct.hpp"

using namespace iaos;

namespace {

const Box kUnit{{0, 0}, {1, 1}};

double quadratic(std::span<const double> x) { return -((x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 0.7) * (x[1] - 0.7)); }

// Two Gaussian bumps; the global one at (0.8, 0.2) is 10% higher.
double two_peaks(std::span<const double> x) {
  auto bump = [&](double cx, double cy, double h) {
    const double d2 = (x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy);
    return h * std::exp(-d2 / (2 * 0.05 * 0.05));
  };
  return bump(0.45, 0.55, 1.0) + bump(0.8, 0.2, 1.1);
}

// The 2-D Branin function negated; three global minima of 0.397887.
double branin(std::span<const double> x) {
  const double a = 1, b = 5.1 / (4 * M_PI * M_PI), c = 5 / M_PI, r = 6, s = 10, t = 1 / (8 * M_PI);
  const double y = x[1] - b * x[0] * x[0] + c * x[0] - r;
  return -(a * y * y + s * (1 - t) * std::cos(x[0]) + s);
}

}  // namespace

TEST(Direct, QuadraticToOnePercent) {
  const auto r = direct_optimize(quadratic, kUnit, {200, 1e-6});
  EXPECT_LE(r.evaluations, 200u);
  EXPECT_LE(std::abs(r.x[0] - 0.3), 0.01);
  EXPECT_LE(std::abs(r.x[1] - 0.7), 0.01);
  EXPECT_EQ(r.history.size(), r.evaluations);
}

TEST(Direct, ShiftedBoxQuadratic) {
  const Box box{{-5, 100}, {15, 300}};
  auto f = [](std::span<const double> x) { return -(std::pow((x[0] - 2.2) / 20, 2) + std::pow((x[1] - 251) / 200, 2)); };
  const auto r = direct_optimize(f, box, {200, 1e-6});
  EXPECT_LE(std::abs(r.x[0] - 2.2) / 20, 0.01);
  EXPECT_LE(std::abs(r.x[1] - 251) / 200, 0.01);
}

TEST(Direct, BraninReachesAGlobalMinimum) {
  const auto r = direct_optimize(branin, {{-5, 0}, {10, 15}}, {200, 1e-6});
  EXPECT_NEAR(-r.value, 0.397887, 0.01);
}

TEST(Direct, ConstantReturnsCenter) {
  const auto r = direct_optimize([](std::span<const double>) { return 4.5; }, {{0, 10}, {2, 30}}, {100});
  EXPECT_EQ(r.x, (std::vector<double>{1, 20}));
  EXPECT_EQ(r.value, 4.5);
}

TEST(Direct, FindsTheHigherOfTwoPeaks) {
  const auto r = direct_optimize(two_peaks, kUnit, {500, 1e-6});
  EXPECT_LE(r.evaluations, 500u);
  EXPECT_NEAR(r.x[0], 0.8, 0.01);
  EXPECT_NEAR(r.x[1], 0.2, 0.01);
  EXPECT_GT(r.value, 1.05);
}

TEST(Direct, StopsOnSmallBox) {
  const auto r = direct_optimize(quadratic, kUnit, {100000, 1e-2});
  EXPECT_LT(r.evaluations, 2000u);
  EXPECT_LE(std::abs(r.x[0] - 0.3), 0.02);
}

TEST(Direct, DeterministicAcrossRunsAndWorkers) {
  const auto a = direct_optimize(two_peaks, kUnit, {300, 1e-6, 1e-4, 1});
  for (std::size_t workers : {1u, 3u, 8u}) {
    const auto b = direct_optimize(two_peaks, kUnit, {300, 1e-6, 1e-4, workers});
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) {
      EXPECT_EQ(a.history[k].x, b.history[k].x);
      EXPECT_EQ(a.history[k].value, b.history[k].value);
    }
    EXPECT_EQ(a.x, b.x);
  }
}

TEST(Direct, Errors) {
  EXPECT_THROW(direct_optimize([](std::span<const double>) { return std::nan(""); }, kUnit), DomainError);
  EXPECT_THROW(direct_optimize(
                   [](std::span<const double> x) { return x[0] > 0.6 ? INFINITY : 0.0; }, kUnit, {50}),
               DomainError);
  EXPECT_THROW(direct_optimize(quadratic, kUnit, {2}), DomainError);
  EXPECT_THROW(direct_optimize(quadratic, {{0, 1}, {1, 1}}), DomainError);
  EXPECT_THROW(direct_optimize(quadratic, {{0}, {1, 1}}), DomainError);
}

TEST(Direct, BeatsRandomSearchAtEqualBudget) {
  for (auto* f : {&quadratic, &two_peaks})
    for (std::size_t budget : {50u, 200u}) {
      const auto r = direct_optimize(*f, kUnit, {budget, 1e-9});
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0, 1);
        double best = -INFINITY;
        for (std::size_t k = 0; k < budget; ++k) {
          const std::array<double, 2> x{u(rng), u(rng)};
          best = std::max(best, (*f)(x));
        }
        EXPECT_GE(r.value, best) << budget << " " << seed;
      }
    }
}
