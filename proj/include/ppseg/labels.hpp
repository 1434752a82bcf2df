#ifndef PPSEG_LABELS_HPP
#define PPSEG_LABELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "distance.hpp"
#include "kmeans.hpp"
#include "morphology.hpp"
#include "raster.hpp"

namespace ppseg {

/// Raster Voronoi diagram of a point set.
struct VoronoiPartition {
  Raster<std::int32_t> cell_index;  ///< index of the nearest seed
  BinaryMap edge_mask;              ///< one-pixel-wide cell boundaries
};

namespace detail {

/// Exact nearest-seed lookup with ties resolved to the lowest seed index.
/// Seeds are bucketed on a square grid and rings of buckets are scanned until
/// no unscanned bucket can hold a seed at distance <= the current best.
class NearestSeed {
 public:
  NearestSeed(const PointSet& seeds, int height, int width) : seeds_(seeds) {
    const double area = static_cast<double>(height) * width;
    bucket_ = std::max(1.0, std::sqrt(area / static_cast<double>(seeds.size())));
    rows_ = static_cast<int>(std::ceil(height / bucket_)) + 1;
    cols_ = static_cast<int>(std::ceil(width / bucket_)) + 1;
    buckets_.resize(static_cast<std::size_t>(rows_) * cols_);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto [br, bc] = bucket_of(seeds[s].row, seeds[s].col);
      buckets_[static_cast<std::size_t>(br) * cols_ + bc].push_back(static_cast<int>(s));
    }
  }

  int operator()(double r, double c) const {
    const auto [br, bc] = bucket_of(r, c);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    const int max_ring = std::max(rows_, cols_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      if (best >= 0) {
        const double reach = (ring - 1) * bucket_;
        if (reach > 0.0 && reach * reach > best_d) break;
      }
      for (int rr = br - ring; rr <= br + ring; ++rr) {
        if (rr < 0 || rr >= rows_) continue;
        const bool edge_row = rr == br - ring || rr == br + ring;
        for (int cc = bc - ring; cc <= bc + ring; cc += (edge_row ? 1 : 2 * ring)) {
          if (cc >= 0 && cc < cols_)
            for (int s : buckets_[static_cast<std::size_t>(rr) * cols_ + cc]) {
              const double dr = r - seeds_[s].row, dc = c - seeds_[s].col;
              const double d = dr * dr + dc * dc;
              if (d < best_d || (d == best_d && s < best)) {
                best_d = d;
                best = s;
              }
            }
          if (ring == 0) break;
        }
      }
    }
    return best;
  }

 private:
  std::pair<int, int> bucket_of(double r, double c) const {
    const int br = std::clamp(static_cast<int>(std::floor(r / bucket_)), 0, rows_ - 1);
    const int bc = std::clamp(static_cast<int>(std::floor(c / bucket_)), 0, cols_ - 1);
    return {br, bc};
  }

  const PointSet& seeds_;
  double bucket_ = 1.0;
  int rows_ = 0, cols_ = 0;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace detail

/// Nearest-seed partition. A pixel is an edge pixel when one of its
/// 4-neighbors belongs to a higher-index cell, which keeps the boundary one
/// pixel wide, on the lower-index side.
inline VoronoiPartition voronoi_partition(const PointSet& points, int height, int width) {
  if (points.empty()) throw EmptySeeds("voronoi_partition");
  VoronoiPartition vp{Raster<std::int32_t>(height, width, 0), BinaryMap(height, width, 0)};
  const detail::NearestSeed nearest(points, height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) vp.cell_index(r, c) = nearest(r, c);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const auto own = vp.cell_index(r, c);
      detail::for_each_neighbor(Connectivity::kFour, r, c, height, width, [&](int rr, int cc) {
        if (vp.cell_index(rr, cc) > own) vp.edge_mask(r, c) = 1;
      });
    }
  return vp;
}

/// Voronoi point-edge label: edges are background, points dilated by a
/// radius-2 disk are nucleus (nucleus wins on overlap), the rest is ignored.
inline TriStateLabelMap voronoi_label(const PointSet& points, int height, int width,
                                      const VoronoiPartition& vp) {
  TriStateLabelMap label(height, width, kIgnoreLabel);
  for (std::size_t i = 0; i < label.size(); ++i)
    if (vp.edge_mask[i]) label[i] = kBackground;
  const BinaryMap nuclei = dilated_points(points, height, width, 2);
  for (std::size_t i = 0; i < label.size(); ++i)
    if (nuclei[i]) label[i] = kNucleus;
  return label;
}

inline TriStateLabelMap voronoi_label(const PointSet& points, int height, int width) {
  return voronoi_label(points, height, width, voronoi_partition(points, height, width));
}

using PixelFeature = Feature<4>;

inline constexpr double kDistanceClip = 20.0;

/// Per-pixel (clipped distance / clip, r, g, b), all in [0,1].
inline std::vector<PixelFeature> pixel_features(const ImageRGB& image, const PointSet& points,
                                                double clip = kDistanceClip) {
  if (points.empty()) throw EmptySeeds("pixel_features");
  const DistanceMap d = distance_transform(points, image.height(), image.width());
  std::vector<PixelFeature> f(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    f[i] = {std::min(d[i], clip) / clip, image[i][0], image[i][1], image[i][2]};
  return f;
}

struct ClusterLabelOptions {
  std::uint64_t seed = 0;
  int point_radius = 2;   ///< dilation applied to points for the overlap counts
  int refine_radius = 1;  ///< opening radius used inside each Voronoi cell
  double clip = kDistanceClip;
};

/// Indices of the nucleus / background / ignored clusters of a 3-way k-means.
struct ClusterRoles {
  int nucleus = 0;
  int background = 1;
  int ignored = 2;
};

/// Nucleus = most dilated-point pixels, ties to the smaller mean distance
/// feature. Background = fewest dilated-point pixels among the other two,
/// ties to the larger mean distance feature.
inline ClusterRoles assign_cluster_roles(const std::vector<std::size_t>& overlap,
                                         const std::vector<PixelFeature>& centroids) {
  auto nucleus_better = [&](int a, int b) {
    if (overlap[a] != overlap[b]) return overlap[a] > overlap[b];
    return centroids[a][0] < centroids[b][0];
  };
  auto tied = [&](int a, int b) {
    return overlap[a] == overlap[b] && centroids[a][0] == centroids[b][0];
  };
  ClusterRoles roles;
  int nuc = 0;
  for (int c = 1; c < 3; ++c)
    if (nucleus_better(c, nuc)) nuc = c;
  for (int c = 0; c < 3; ++c)
    if (c != nuc && tied(c, nuc)) throw AmbiguousAssignment("cluster_label: nucleus cluster tie");
  int a = (nuc + 1) % 3, b = (nuc + 2) % 3;
  if (tied(a, b)) throw AmbiguousAssignment("cluster_label: background cluster tie");
  // The background candidate is the one the nucleus ordering ranks last.
  const int bg = nucleus_better(a, b) ? b : a;
  roles.nucleus = nuc;
  roles.background = bg;
  roles.ignored = 3 - nuc - bg;
  return roles;
}

/// Cluster label: 3-way k-means on (clipped distance, color), roles from the
/// overlap with dilated points, then a per-cell opening of the nucleus set so
/// that neighboring cells never merge. Voronoi edges are forced to
/// background.
inline TriStateLabelMap cluster_label(const ImageRGB& image, const PointSet& points,
                                      const VoronoiPartition& vp,
                                      const ClusterLabelOptions& opt = {}) {
  const int h = image.height(), w = image.width();
  const auto features = pixel_features(image, points, opt.clip);
  const auto km = kmeans<4>(features, 3, opt.seed);

  const BinaryMap dots = dilated_points(points, h, w, opt.point_radius);
  std::vector<std::size_t> overlap(3, 0);
  for (std::size_t i = 0; i < dots.size(); ++i)
    if (dots[i]) ++overlap[km.assignment[i]];
  const ClusterRoles roles = assign_cluster_roles(overlap, km.centroids);

  // Opening restricted to each Voronoi cell.
  const auto disk = disk_offsets(opt.refine_radius);
  BinaryMap nucleus(h, w, 0);
  for (std::size_t i = 0; i < nucleus.size(); ++i) nucleus[i] = km.assignment[i] == roles.nucleus;
  BinaryMap eroded(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!nucleus(r, c)) continue;
      const auto cell = vp.cell_index(r, c);
      bool keep = true;
      for (const auto& o : disk) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (!nucleus.contains(rr, cc)) continue;
        if (!nucleus(rr, cc) || vp.cell_index(rr, cc) != cell) {
          keep = false;
          break;
        }
      }
      eroded(r, c) = keep;
    }
  BinaryMap opened(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!eroded(r, c)) continue;
      const auto cell = vp.cell_index(r, c);
      for (const auto& o : disk) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (opened.contains(rr, cc) && vp.cell_index(rr, cc) == cell) opened(rr, cc) = 1;
      }
    }

  TriStateLabelMap label(h, w, kIgnoreLabel);
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (opened[i])
      label[i] = kNucleus;
    else if (km.assignment[i] == roles.background)
      label[i] = kBackground;
    if (vp.edge_mask[i]) label[i] = kBackground;
  }
  return label;
}

inline TriStateLabelMap cluster_label(const ImageRGB& image, const PointSet& points,
                                      const ClusterLabelOptions& opt = {}) {
  return cluster_label(image, points, voronoi_partition(points, image.height(), image.width()),
                       opt);
}

}  // namespace ppseg

#endif  // PPSEG_LABELS_HPP
