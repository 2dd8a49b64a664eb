#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace signrec::detail {

// Points stored row-major, one row of `dim` coordinates per point.
struct WeightedPoints {
  std::size_t dim = 0;
  std::vector<double> coords;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(coords).subspan(i * dim, dim);
  }
};

inline double scaled_distance2(std::span<const double> a, std::span<const double> b,
                               std::span<const double> inv_scale) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff * inv_scale[d];
  }
  return acc;
}

// Weighted k-means with farthest-point seeding. The first centre is drawn from
// `seed`; the rest are chosen deterministically. Returns one cluster index per
// point; every cluster in [0, k) is non-empty when k <= number of points.
inline std::vector<std::size_t> kmeans(const WeightedPoints& pts, std::span<const double> inv_scale,
                                       std::size_t k, std::uint64_t seed,
                                       std::size_t max_iterations = 50) {
  const std::size_t n = pts.size();
  const std::size_t dim = pts.dim;
  std::vector<std::size_t> assign(n, 0);
  if (n == 0 || k <= 1) return assign;
  k = std::min(k, n);

  std::vector<double> centres(k * dim);
  auto centre = [&](std::size_t c) { return std::span<double>(centres).subspan(c * dim, dim); };
  std::mt19937_64 rng(seed);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = first;
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(pts.row(chosen).begin(), dim, centre(c).begin());
    double best = -1.0;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], scaled_distance2(pts.row(i), centre(c), inv_scale));
      if (nearest[i] > best) {
        best = nearest[i];
        next = i;
      }
    }
    chosen = next;
  }

  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = scaled_distance2(pts.row(i), centre(c), inv_scale);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (assign[i] != arg) changed = true;
      assign[i] = arg;
      dist[i] = best;
    }
    // Empty clusters take the point currently farthest from its centre.
    std::vector<double> mass(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++count[assign[i]];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (count[assign[i]] > 1 && dist[i] > fd) {
          fd = dist[i];
          far = i;
        }
      --count[assign[far]];
      assign[far] = c;
      count[c] = 1;
      dist[far] = 0.0;
      changed = true;
    }
    if (!changed) break;
    std::fill(centres.begin(), centres.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::max(pts.weights[i], 1e-12);
      mass[assign[i]] += w;
      auto c = centre(assign[i]);
      const auto r = pts.row(i);
      for (std::size_t d = 0; d < dim; ++d) c[d] += w * r[d];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (double& x : centre(c)) x /= mass[c];
  }
  return assign;
}

}  // namespace signrec::detail
