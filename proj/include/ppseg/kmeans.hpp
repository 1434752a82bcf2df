#ifndef PPSEG_KMEANS_HPP
#define PPSEG_KMEANS_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace ppseg {

template <std::size_t D>
using Feature = std::array<double, D>;

template <std::size_t D>
struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Feature<D>> centroids;
  std::vector<double> objective;  ///< within-cluster sum of squares after each update
  int iterations = 0;
};

template <std::size_t D>
double squared_distance(const Feature<D>& a, const Feature<D>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

/// Sum over points of the squared distance to their assigned centroid.
template <std::size_t D>
double kmeans_objective(std::span<const Feature<D>> x, const std::vector<int>& assignment,
                        const std::vector<Feature<D>>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += squared_distance(x[i], centroids[assignment[i]]);
  return s;
}

template <std::size_t D>
std::size_t count_distinct(std::span<const Feature<D>> x, std::size_t stop_at) {
  std::vector<Feature<D>> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size() && n < stop_at; ++i)
    if (sorted[i] != sorted[i - 1]) ++n;
  return n;
}

/// Lloyd's algorithm from a seeded k-means++ start. Runs until the
/// assignment is a fixed point or `max_iterations` updates have been made.
/// Ties in assignment go to the lowest cluster index; an emptied cluster
/// keeps its previous centroid.
template <std::size_t D>
KMeansResult<D> kmeans(std::span<const Feature<D>> x, int k, std::uint64_t seed,
                       int max_iterations = 300) {
  if (k < 1) throw DegenerateInput("kmeans: k must be >= 1");
  if (count_distinct<D>(x, static_cast<std::size_t>(k)) < static_cast<std::size_t>(k))
    throw DegenerateInput("kmeans: fewer distinct feature vectors than clusters");

  const std::size_t n = x.size();
  Rng rng(seed);
  KMeansResult<D> res;

  // k-means++ seeding.
  res.centroids.push_back(x[rng.below(n)]);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(x[i], res.centroids.back()));
      total += best[i];
    }
    double target = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] <= 0.0) continue;
      pick = i;
      target -= best[i];
      if (target < 0.0) break;
    }
    res.centroids.push_back(x[pick]);
  }

  auto assign = [&](std::vector<int>& a) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int arg = 0;
      double dmin = squared_distance(x[i], res.centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(x[i], res.centroids[c]);
        if (d < dmin) {
          dmin = d;
          arg = c;
        }
      }
      if (a[i] != arg) {
        a[i] = arg;
        changed = true;
      }
    }
    return changed;
  };

  res.assignment.assign(n, -1);
  assign(res.assignment);
  for (;;) {
    std::vector<Feature<D>> sum(static_cast<std::size_t>(k), Feature<D>{});
    std::vector<std::size_t> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = res.assignment[i];
      for (std::size_t d = 0; d < D; ++d) sum[c][d] += x[i][d];
      ++cnt[c];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[c] > 0)
        for (std::size_t d = 0; d < D; ++d) res.centroids[c][d] = sum[c][d] / cnt[c];
    ++res.iterations;
    res.objective.push_back(kmeans_objective<D>(x, res.assignment, res.centroids));
    if (res.iterations >= max_iterations) break;
    if (!assign(res.assignment)) break;
  }
  return res;
}

}  // namespace ppseg

#endif  // PPSEG_KMEANS_HPP
