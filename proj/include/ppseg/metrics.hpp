#ifndef PPSEG_METRICS_HPP
#define PPSEG_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "components.hpp"
#include "morphology.hpp"
#include "raster.hpp"

namespace ppseg {

struct MatchPair {
  int gt;
  int det;
  double distance;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> fp;  ///< unmatched detection indices, ascending
  std::vector<int> fn;  ///< unmatched ground-truth indices, ascending
  double radius = 0.0;
};

/// Greedy one-to-one matching within `radius`, resolving candidates by
/// ascending (distance, gt index, det index).
inline MatchResult match_detections(const PointSet& gt, const PointSet& det, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kUsage, "match_detections: radius must be > 0");
  std::vector<std::tuple<double, int, int>> cand;
  for (int g = 0; g < static_cast<int>(gt.size()); ++g)
    for (int d = 0; d < static_cast<int>(det.size()); ++d) {
      const double dist = std::hypot(gt[g].row - det[d].row, gt[g].col - det[d].col);
      if (dist <= radius) cand.emplace_back(dist, g, d);
    }
  std::sort(cand.begin(), cand.end());
  std::vector<char> gt_used(gt.size(), 0), det_used(det.size(), 0);
  MatchResult m;
  m.radius = radius;
  for (const auto& [dist, g, d] : cand) {
    if (gt_used[g] || det_used[d]) continue;
    gt_used[g] = det_used[d] = 1;
    m.pairs.push_back({g, d, dist});
  }
  for (int d = 0; d < static_cast<int>(det.size()); ++d)
    if (!det_used[d]) m.fp.push_back(d);
  for (int g = 0; g < static_cast<int>(gt.size()); ++g)
    if (!gt_used[g]) m.fn.push_back(g);
  return m;
}

struct DetectionStats {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::optional<double> mu_d, sigma_d;  ///< absent without true positives
};

/// Pooled precision / recall / F1 and the population mean and standard
/// deviation of true-positive distances. Empty ratios are reported as 0.
inline DetectionStats detection_stats(std::span<const MatchResult> pool) {
  DetectionStats s;
  std::vector<double> dist;
  for (const auto& m : pool) {
    s.tp += m.pairs.size();
    s.fp += m.fp.size();
    s.fn += m.fn.size();
    for (const auto& p : m.pairs) dist.push_back(p.distance);
  }
  if (s.tp + s.fp + s.fn == 0) throw DegenerateInput("detection_stats: no points in the pool");
  const double tp = static_cast<double>(s.tp);
  if (s.tp + s.fp > 0) s.precision = tp / static_cast<double>(s.tp + s.fp);
  if (s.tp + s.fn > 0) s.recall = tp / static_cast<double>(s.tp + s.fn);
  s.f1 = 2.0 * tp / (2.0 * tp + static_cast<double>(s.fp + s.fn));
  if (!dist.empty()) {
    double mean = 0.0;
    for (double d : dist) mean += d;
    mean /= static_cast<double>(dist.size());
    double var = 0.0;
    for (double d : dist) var += (d - mean) * (d - mean);
    s.mu_d = mean;
    s.sigma_d = std::sqrt(var / static_cast<double>(dist.size()));
  }
  return s;
}

inline DetectionStats detection_stats(const MatchResult& m) {
  return detection_stats(std::span<const MatchResult>(&m, 1));
}

struct PixelStats {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Pixel accuracy and foreground F1 (1 when both maps are empty).
inline PixelStats pixel_stats(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_shape(pred, gt, "pixel_stats");
  std::size_t agree = 0, inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    agree += p == g;
    inter += p && g;
    np += p;
    ng += g;
  }
  PixelStats s;
  s.accuracy = pred.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(pred.size());
  s.f1 = np + ng == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
  return s;
}

namespace detail {

/// Object areas and the sparse overlap table of two instance maps.
struct OverlapTable {
  std::vector<std::size_t> area_a, area_b;          ///< index 0 = background
  std::vector<std::map<int, std::size_t>> a_to_b;   ///< per a-id: b-id -> overlap
  std::vector<std::map<int, std::size_t>> b_to_a;
};

inline OverlapTable overlap_table(const InstanceLabelMap& a, const InstanceLabelMap& b) {
  require_same_shape(a, b, "overlap_table");
  OverlapTable t;
  t.area_a = instance_areas(a);
  t.area_b = instance_areas(b);
  t.a_to_b.resize(t.area_a.size());
  t.b_to_a.resize(t.area_b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > 0 && b[i] > 0) {
      ++t.a_to_b[a[i]][b[i]];
      ++t.b_to_a[b[i]][a[i]];
    }
  return t;
}

/// Area-weighted directed Dice: each object of the first map against its
/// maximum-overlap partner (ties to the lowest id).
inline double directed_dice(const std::vector<std::size_t>& area_from,
                            const std::vector<std::size_t>& area_to,
                            const std::vector<std::map<int, std::size_t>>& overlaps,
                            bool gate) {
  double total_area = 0.0;
  for (std::size_t k = 1; k < area_from.size(); ++k) total_area += static_cast<double>(area_from[k]);
  if (total_area == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 1; k < area_from.size(); ++k) {
    int best = 0;
    std::size_t best_ov = 0;
    for (const auto& [id, ov] : overlaps[k])
      if (ov > best_ov) {
        best_ov = ov;
        best = id;
      }
    if (best == 0) continue;
    if (gate && 2 * best_ov <= area_from[k]) continue;
    const double dice = 2.0 * static_cast<double>(best_ov) /
                        static_cast<double>(area_from[k] + area_to[static_cast<std::size_t>(best)]);
    sum += static_cast<double>(area_from[k]) / total_area * dice;
  }
  return sum;
}

}  // namespace detail

/// Object-level Dice. With `gate`, a pair only counts when the overlap is
/// more than half of the object being matched.
inline double object_dice(const InstanceLabelMap& gt, const InstanceLabelMap& pred,
                          bool gate = true) {
  const auto t = detail::overlap_table(gt, pred);
  if (t.area_a.size() <= 1) throw EmptyGroundTruth("object_dice");
  return 0.5 * detail::directed_dice(t.area_a, t.area_b, t.a_to_b, gate) +
         0.5 * detail::directed_dice(t.area_b, t.area_a, t.b_to_a, gate);
}

/// Aggregated Jaccard Index. Ground-truth objects are visited in id order,
/// each taking the unused prediction of highest Jaccard (ties to the lowest
/// id); predictions never taken are added to the union.
inline double aji(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  const auto t = detail::overlap_table(gt, pred);
  if (t.area_a.size() <= 1) throw EmptyGroundTruth("aji");
  std::vector<char> used(t.area_b.size(), 0);
  double inter = 0.0, uni = 0.0;
  for (std::size_t g = 1; g < t.area_a.size(); ++g) {
    const double ag = static_cast<double>(t.area_a[g]);
    int best = 0;
    double best_j = -1.0, best_ov = 0.0, best_u = 0.0;
    for (const auto& [id, ov] : t.a_to_b[g]) {
      if (used[static_cast<std::size_t>(id)]) continue;
      const double o = static_cast<double>(ov);
      const double u = ag + static_cast<double>(t.area_b[static_cast<std::size_t>(id)]) - o;
      const double j = o / u;
      if (j > best_j) {
        best_j = j;
        best = id;
        best_ov = o;
        best_u = u;
      }
    }
    if (best == 0) {
      uni += ag;
      continue;
    }
    used[static_cast<std::size_t>(best)] = 1;
    inter += best_ov;
    uni += best_u;
  }
  for (std::size_t s = 1; s < t.area_b.size(); ++s)
    if (!used[s]) uni += static_cast<double>(t.area_b[s]);
  return inter / uni;
}

struct DifficultyStats {
  double nuclei_bg_diff = 0.0;
  double nuclei_std = 0.0;
};

inline constexpr int kAnnulusRadius = 3;

/// Area-weighted nucleus-minus-surrounding luminance contrast, and the
/// area-weighted within-nucleus luminance standard deviation. The
/// surrounding of a nucleus is every non-nucleus pixel within distance 3.
inline DifficultyStats dataset_difficulty(const ImageRGB& image, const InstanceLabelMap& gt,
                                          int annulus = kAnnulusRadius) {
  require_same_shape(image, gt, "dataset_difficulty");
  const auto areas = instance_areas(gt);
  const std::size_t n = areas.size();
  if (n <= 1) throw EmptyGroundTruth("dataset_difficulty");
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] > 0) {
      const double l = luminance(image[i]);
      sum[gt[i]] += l;
      sq[gt[i]] += l * l;
    }

  // Annulus sums: each background pixel counts once per nucleus within reach.
  std::vector<double> bg_sum(n, 0.0);
  std::vector<std::size_t> bg_count(n, 0);
  const auto disk = disk_offsets(annulus);
  std::vector<int> seen;
  for (int r = 0; r < gt.height(); ++r)
    for (int c = 0; c < gt.width(); ++c) {
      if (gt(r, c) != 0) continue;
      seen.clear();
      for (const auto& o : disk) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (!gt.contains(rr, cc)) continue;
        const int id = gt(rr, cc);
        if (id > 0 && std::find(seen.begin(), seen.end(), id) == seen.end()) seen.push_back(id);
      }
      const double l = luminance(image(r, c));
      for (int id : seen) {
        bg_sum[static_cast<std::size_t>(id)] += l;
        ++bg_count[static_cast<std::size_t>(id)];
      }
    }

  DifficultyStats out;
  double total = 0.0, total_bg = 0.0;
  for (std::size_t k = 1; k < n; ++k) total += static_cast<double>(areas[k]);
  for (std::size_t k = 1; k < n; ++k)
    if (bg_count[k] > 0) total_bg += static_cast<double>(areas[k]);
  for (std::size_t k = 1; k < n; ++k) {
    const double a = static_cast<double>(areas[k]);
    if (a == 0.0) continue;
    const double mean = sum[k] / a;
    out.nuclei_std += a / total * std::sqrt(std::max(0.0, sq[k] / a - mean * mean));
    if (bg_count[k] > 0)
      out.nuclei_bg_diff += a / total_bg * (mean - bg_sum[k] / static_cast<double>(bg_count[k]));
  }
  return out;
}

/// One row of evaluation output; absent entries were not computed.
struct MetricsReport {
  std::optional<double> precision, recall, f1, mu_d, sigma_d;
  std::optional<double> pixel_acc, pixel_f1, dice_obj, aji;
  std::optional<double> nuclei_bg_diff, nuclei_std;

  /// (name, value) pairs in the canonical field order.
  std::vector<std::pair<std::string, std::optional<double>>> fields() const {
    return {{"precision", precision}, {"recall", recall},       {"f1", f1},
            {"mu_d", mu_d},           {"sigma_d", sigma_d},     {"pixel_acc", pixel_acc},
            {"pixel_f1", pixel_f1},   {"dice_obj", dice_obj},   {"aji", aji},
            {"nuclei_bg_diff", nuclei_bg_diff}, {"nuclei_std", nuclei_std}};
  }

  void set_detection(const DetectionStats& s) {
    precision = s.precision;
    recall = s.recall;
    f1 = s.f1;
    mu_d = s.mu_d;
    sigma_d = s.sigma_d;
  }
};

}  // namespace ppseg

#endif  // PPSEG_METRICS_HPP
