#ifndef PPSEG_TESTS_ORACLES_HPP
#define PPSEG_TESTS_ORACLES_HPP

// Naive reference implementations. Written for clarity, not speed, and
// sharing no code with the library beyond the raster container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <ppseg/raster.hpp>

namespace oracle {

using namespace ppseg;

inline DistanceMap edt(const BinaryMap& seeds) {
  DistanceMap d(seeds.height(), seeds.width(), std::numeric_limits<double>::infinity());
  for (int r = 0; r < seeds.height(); ++r)
    for (int c = 0; c < seeds.width(); ++c)
      for (int sr = 0; sr < seeds.height(); ++sr)
        for (int sc = 0; sc < seeds.width(); ++sc)
          if (seeds(sr, sc)) {
            const double dd = std::sqrt(double((r - sr) * (r - sr) + (c - sc) * (c - sc)));
            d(r, c) = std::min(d(r, c), dd);
          }
  return d;
}

/// Union-find over adjacent foreground pairs, then ids by first pixel.
inline InstanceLabelMap components(const BinaryMap& m, bool eight) {
  const int h = m.height(), w = m.width();
  std::vector<int> parent(m.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (!eight && dr != 0 && dc != 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
          if (m(r, c) && m(rr, cc)) parent[find(r * w + c)] = find(rr * w + cc);
        }
  InstanceLabelMap out(h, w, 0);
  std::vector<int> id(m.size(), 0);
  int next = 0;
  for (int i = 0; i < static_cast<int>(m.size()); ++i) {
    if (!m[i]) continue;
    const int root = find(i);
    if (!id[root]) id[root] = ++next;
    out[i] = id[root];
  }
  return out;
}

inline Raster<std::int32_t> voronoi(const PointSet& pts, int h, int w) {
  Raster<std::int32_t> out(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (int s = 0; s < static_cast<int>(pts.size()); ++s) {
        const double d = (r - pts[s].row) * (r - pts[s].row) + (c - pts[s].col) * (c - pts[s].col);
        if (d < best) {
          best = d;
          out(r, c) = s;
        }
      }
    }
  return out;
}

inline int max_id(const InstanceLabelMap& m) { return *std::max_element(m.begin(), m.end()); }

inline double area(const InstanceLabelMap& m, int id) {
  return static_cast<double>(std::count(m.begin(), m.end(), id));
}

inline double overlap(const InstanceLabelMap& a, int ia, const InstanceLabelMap& b, int ib) {
  double n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] == ia && b[i] == ib;
  return n;
}

inline double aji(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  const int ng = max_id(gt), np = max_id(pred);
  std::vector<bool> used(np + 1, false);
  double inter = 0, uni = 0;
  for (int g = 1; g <= ng; ++g) {
    const double ag = area(gt, g);
    int best = 0;
    double best_j = -1, best_i = 0, best_u = 0;
    for (int s = 1; s <= np; ++s) {
      if (used[s]) continue;
      const double o = overlap(gt, g, pred, s);
      if (o == 0) continue;
      const double u = ag + area(pred, s) - o;
      if (o / u > best_j) {
        best_j = o / u;
        best = s;
        best_i = o;
        best_u = u;
      }
    }
    if (best) {
      used[best] = true;
      inter += best_i;
      uni += best_u;
    } else {
      uni += ag;
    }
  }
  for (int s = 1; s <= np; ++s)
    if (!used[s]) uni += area(pred, s);
  return inter / uni;
}

inline double directed_dice(const InstanceLabelMap& from, const InstanceLabelMap& to, bool gate) {
  const int nf = max_id(from), nt = max_id(to);
  double total = 0;
  for (int k = 1; k <= nf; ++k) total += area(from, k);
  if (total == 0) return 0;
  double s = 0;
  for (int k = 1; k <= nf; ++k) {
    const double ak = area(from, k);
    int best = 0;
    double best_o = 0;
    for (int j = 1; j <= nt; ++j) {
      const double o = overlap(from, k, to, j);
      if (o > best_o) {
        best_o = o;
        best = j;
      }
    }
    if (!best) continue;
    if (gate && !(best_o > 0.5 * ak)) continue;
    s += ak / total * 2 * best_o / (ak + area(to, best));
  }
  return s;
}

inline double object_dice(const InstanceLabelMap& gt, const InstanceLabelMap& pred, bool gate) {
  return 0.5 * directed_dice(gt, pred, gate) + 0.5 * directed_dice(pred, gt, gate);
}

struct Pixel {
  double accuracy, f1;
};

inline Pixel pixel_stats(const BinaryMap& pred, const BinaryMap& gt) {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gt[i]) ++tp;
    if (!pred[i] && !gt[i]) ++tn;
    if (pred[i] && !gt[i]) ++fp;
    if (!pred[i] && gt[i]) ++fn;
  }
  const double f1 = (tp + fp + fn) == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
  return {(tp + tn) / (tp + tn + fp + fn), f1};
}

struct Match {
  int tp, fp, fn;
  double dist_sum;
  std::vector<std::pair<int, int>> pairs;
};

/// Repeatedly takes the closest remaining (gt, det) pair within the radius.
inline Match match(const PointSet& gt, const PointSet& det, double radius) {
  std::vector<bool> ug(gt.size()), ud(det.size());
  Match m{0, 0, 0, 0.0, {}};
  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    int bg = -1, bd = -1;
    for (int g = 0; g < static_cast<int>(gt.size()); ++g)
      for (int d = 0; d < static_cast<int>(det.size()); ++d) {
        if (ug[g] || ud[d]) continue;
        const double dist = std::hypot(gt[g].row - det[d].row, gt[g].col - det[d].col);
        if (dist <= radius && dist < best) {
          best = dist;
          bg = g;
          bd = d;
        }
      }
    if (bg < 0) break;
    ug[bg] = ud[bd] = true;
    ++m.tp;
    m.dist_sum += best;
    m.pairs.push_back({bg, bd});
  }
  m.fp = static_cast<int>(std::count(ud.begin(), ud.end(), false));
  m.fn = static_cast<int>(std::count(ug.begin(), ug.end(), false));
  return m;
}

// ---- random instances

inline BinaryMap random_mask(std::mt19937_64& rng, int h, int w, double density) {
  std::bernoulli_distribution bit(density);
  BinaryMap m(h, w, 0);
  for (auto& v : m) v = bit(rng);
  return m;
}

/// Up to `max_objects` random discs and rectangles painted over each other.
inline InstanceLabelMap random_instances(std::mt19937_64& rng, int h, int w, int max_objects) {
  InstanceLabelMap m(h, w, 0);
  std::uniform_int_distribution<int> count(1, max_objects), row(0, h - 1), col(0, w - 1),
      size(1, std::max(2, std::min(h, w) / 3)), kind(0, 1);
  const int n = count(rng);
  for (int id = 1; id <= n; ++id) {
    const int r0 = row(rng), c0 = col(rng), s = size(rng);
    const bool disc = kind(rng);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const bool in = disc ? (r - r0) * (r - r0) + (c - c0) * (c - c0) <= s * s
                             : std::abs(r - r0) <= s && std::abs(c - c0) <= s / 2 + 1;
        if (in) m(r, c) = id;
      }
  }
  return m;
}

inline PointSet random_points(std::mt19937_64& rng, int n, double h, double w) {
  std::uniform_real_distribution<double> ur(0.0, h - 1.0), uc(0.0, w - 1.0);
  PointSet p;
  for (int i = 0; i < n; ++i) p.push_back({ur(rng), uc(rng)});
  return p;
}

inline PointSet random_pixel_points(std::mt19937_64& rng, int n, int h, int w) {
  std::uniform_int_distribution<int> ur(0, h - 1), uc(0, w - 1);
  PointSet p;
  for (int i = 0; i < n; ++i) p.push_back({double(ur(rng)), double(uc(rng))});
  return p;
}

inline ImageRGB random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageRGB im(h, w);
  for (auto& px : im)
    for (auto& v : px) v = u(rng);
  return im;
}

}  // namespace oracle

#endif  // PPSEG_TESTS_ORACLES_HPP
