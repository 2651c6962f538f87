#pragma once

// DIRECT (DIviding RECTangles) deterministic global search over a box.
//
// The box is mapped to the unit hypercube.  Every rectangle is stored by
// its center and a per-dimension trisection level (side = 3^-level).  Each
// iteration selects the potentially optimal rectangles, i.e. those on the
// lower-right convex hull of (center-to-vertex distance, value) that can
// improve on the incumbent by at least eps * |f_min| for some Lipschitz
// constant, then trisects them along their longest sides.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "iaos/error.hpp"
#include "iaos/parallel.hpp"

namespace iaos {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dims() const { return lower.size(); }
};

struct DirectOptions {
  std::size_t max_evals = 200;
  double min_box_diag = 1e-3;  // normalized units
  double epsilon = 1e-4;
  std::size_t workers = 1;  // concurrent objective evaluations per iteration
};

struct DirectSample {
  std::vector<double> x;
  double value = 0.0;
};

struct DirectResult {
  std::vector<double> x;
  double value = 0.0;           // objective at x (maximized)
  std::size_t evaluations = 0;
  std::size_t iterations = 0;
  std::vector<DirectSample> history;  // every sample in evaluation order
};

namespace detail {

struct DirectRect {
  std::vector<double> center;  // unit-cube coordinates
  std::vector<int> level;
  double value = 0.0;  // minimized value (negated objective)
  double diameter = 0.0;
};

inline double rect_diameter(const std::vector<int>& level) {
  double s = 0.0;
  for (int l : level) s += std::pow(3.0, -2.0 * l);
  return 0.5 * std::sqrt(s);
}

// Indices of potentially optimal rectangles, in ascending diameter order.
inline std::vector<std::size_t> potentially_optimal(const std::vector<DirectRect>& rects, double f_min,
                                                    double epsilon) {
  // Lowest value per size class; first created rectangle wins ties.
  std::map<std::vector<int>, std::size_t> best_per_class;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    auto key = rects[i].level;
    std::sort(key.begin(), key.end());
    auto [it, inserted] = best_per_class.emplace(std::move(key), i);
    if (!inserted && rects[i].value < rects[it->second].value) it->second = i;
  }
  std::vector<std::size_t> cand;
  for (const auto& [key, idx] : best_per_class) cand.push_back(idx);
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    if (rects[a].diameter != rects[b].diameter) return rects[a].diameter < rects[b].diameter;
    return a < b;
  });

  std::vector<std::size_t> selected;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cand.size(); ++j) {
    const auto& rj = rects[cand[j]];
    double k_low = -inf, k_high = inf;
    bool dominated = false;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (i == j) continue;
      const auto& ri = rects[cand[i]];
      const double dd = rj.diameter - ri.diameter;
      if (dd > 0.0) {
        k_low = std::max(k_low, (rj.value - ri.value) / dd);
      } else if (dd < 0.0) {
        k_high = std::min(k_high, (ri.value - rj.value) / -dd);
      } else if (ri.value < rj.value) {
        dominated = true;
      }
    }
    if (dominated || k_low > k_high || k_high <= 0.0) continue;
    if (k_high < inf) {
      const double threshold = f_min - epsilon * std::abs(f_min);
      if (rj.value - k_high * rj.diameter > threshold + 1e-15 * std::abs(threshold)) continue;
    }
    selected.push_back(cand[j]);
  }
  return selected;
}

}  // namespace detail

/// Maximizes `objective` over `box`.  Deterministic; with workers > 1 the
/// samples of one iteration are evaluated concurrently but processed in a
/// fixed order, so results do not depend on the worker count.
inline DirectResult direct_optimize(const std::function<double(std::span<const double>)>& objective,
                                    const Box& box, const DirectOptions& options = {}) {
  const std::size_t n = box.dims();
  require(n >= 1 && box.upper.size() == n, "direct_optimize: malformed box");
  for (std::size_t d = 0; d < n; ++d) require(box.lower[d] < box.upper[d], "direct_optimize: empty box side");
  require(options.max_evals >= 3, "direct_optimize: max_evals must be >= 3");

  auto to_box = [&](const std::vector<double>& u) {
    std::vector<double> x(n);
    for (std::size_t d = 0; d < n; ++d) x[d] = box.lower[d] + u[d] * (box.upper[d] - box.lower[d]);
    return x;
  };

  DirectResult result;
  std::size_t best_rect = 0;
  std::vector<detail::DirectRect> rects;

  auto evaluate_batch = [&](const std::vector<std::vector<double>>& points) {
    std::vector<std::vector<double>> xs(points.size());
    std::vector<double> values(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) xs[k] = to_box(points[k]);
    parallel_for(
        points.size(), [&](std::size_t k) { values[k] = objective(xs[k]); }, options.workers);
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (!std::isfinite(values[k])) throw DomainError("direct_optimize: objective returned a non-finite value");
      result.history.push_back({xs[k], values[k]});
    }
    result.evaluations += points.size();
    return values;
  };

  {
    detail::DirectRect root{std::vector<double>(n, 0.5), std::vector<int>(n, 0), 0.0, 0.0};
    root.value = -evaluate_batch({root.center})[0];
    root.diameter = detail::rect_diameter(root.level);
    rects.push_back(std::move(root));
  }

  while (result.evaluations + 2 <= options.max_evals) {
    if (2.0 * rects[best_rect].diameter < options.min_box_diag) break;
    ++result.iterations;
    const auto selected = detail::potentially_optimal(rects, rects[best_rect].value, options.epsilon);

    // Gather the sample pairs of every selected rectangle that fits the budget.
    struct Plan {
      std::size_t rect;
      std::vector<std::size_t> dims;
    };
    std::vector<Plan> plans;
    std::vector<std::vector<double>> points;
    std::size_t budget = options.max_evals - result.evaluations;
    for (std::size_t idx : selected) {
      const auto& r = rects[idx];
      const int min_level = *std::min_element(r.level.begin(), r.level.end());
      Plan plan{idx, {}};
      for (std::size_t d = 0; d < n; ++d)
        if (r.level[d] == min_level) plan.dims.push_back(d);
      if (2 * plan.dims.size() > budget) break;
      budget -= 2 * plan.dims.size();
      const double delta = std::pow(3.0, -(min_level + 1));
      for (std::size_t d : plan.dims) {
        auto lo = r.center, hi = r.center;
        lo[d] -= delta;
        hi[d] += delta;
        points.push_back(std::move(lo));
        points.push_back(std::move(hi));
      }
      plans.push_back(std::move(plan));
    }
    if (plans.empty()) break;

    const auto values = evaluate_batch(points);
    std::size_t k = 0;
    for (const auto& plan : plans) {
      struct Side {
        std::size_t dim;
        double w;
        std::size_t lo_k;
      };
      std::vector<Side> sides;
      for (std::size_t d : plan.dims) {
        sides.push_back({d, std::min(-values[k], -values[k + 1]), k});
        k += 2;
      }
      std::stable_sort(sides.begin(), sides.end(), [](const Side& a, const Side& b) { return a.w < b.w; });
      auto level = rects[plan.rect].level;
      for (const auto& s : sides) {
        ++level[s.dim];
        for (std::size_t off = 0; off < 2; ++off) {
          detail::DirectRect child{points[s.lo_k + off], level, -values[s.lo_k + off], detail::rect_diameter(level)};
          rects.push_back(std::move(child));
          if (rects.back().value < rects[best_rect].value) best_rect = rects.size() - 1;
        }
      }
      rects[plan.rect].level = level;
      rects[plan.rect].diameter = detail::rect_diameter(level);
    }
  }

  result.x = to_box(rects[best_rect].center);
  result.value = -rects[best_rect].value;
  return result;
}

}  // namespace iaos
