#ifndef PPSEG_DISTANCE_HPP
#define PPSEG_DISTANCE_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "raster.hpp"

namespace ppseg {

namespace detail {

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
/// All finite inputs are integers below 2^53, so outputs are exact.
inline void edt_1d(const double* f, double* out, int n, std::vector<int>& v,
                   std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s <= z[k] && k > 0)
        --k;
      else
        break;
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = static_cast<double>(q - v[j]);
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance to the nearest nonzero pixel of `seeds`.
/// Pixels are +inf when there is no seed at all.
template <class T, class Tag>
Raster<double, DistanceTag> squared_distance_transform(const Raster<T, Tag>& seeds) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int h = seeds.height(), w = seeds.width();
  DistanceMap sq(h, w, kInf);
  std::vector<double> in(static_cast<std::size_t>(std::max(h, w))),
      out(static_cast<std::size_t>(std::max(h, w)));
  std::vector<int> v;
  std::vector<double> z;
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) in[r] = seeds(r, c) ? 0.0 : kInf;
    detail::edt_1d(in.data(), out.data(), h, v, z);
    for (int r = 0; r < h; ++r) sq(r, c) = out[r];
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) in[c] = sq(r, c);
    detail::edt_1d(in.data(), out.data(), w, v, z);
    for (int c = 0; c < w; ++c) sq(r, c) = out[c];
  }
  return sq;
}

/// Exact Euclidean distance to the nearest seed pixel.
template <class T, class Tag>
DistanceMap distance_transform(const Raster<T, Tag>& seeds) {
  bool any = false;
  for (auto v : seeds)
    if (v) {
      any = true;
      break;
    }
  if (!any) throw EmptySeeds("distance_transform");
  DistanceMap d = squared_distance_transform(seeds);
  for (auto& x : d) x = std::sqrt(x);
  return d;
}

/// Seeds given as points are rounded to the nearest pixel first.
inline BinaryMap rasterize_points(const PointSet& points, int height, int width) {
  BinaryMap m(height, width, 0);
  for (const auto& p : points) {
    const auto [r, c] = to_pixel(p, height, width);
    m(r, c) = 1;
  }
  return m;
}

inline DistanceMap distance_transform(const PointSet& points, int height, int width) {
  if (points.empty()) throw EmptySeeds("distance_transform");
  return distance_transform(rasterize_points(points, height, width));
}

}  // namespace ppseg

#endif  // PPSEG_DISTANCE_HPP
