#ifndef PPSEG_DETECTION_HPP
#define PPSEG_DETECTION_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "components.hpp"
#include "distance.hpp"
#include "raster.hpp"

namespace ppseg {

/// Stage-1 supervision parameters. Defaults are the lung-cancer settings
/// (r1 = 8, r2 = 2 r1, sigma = 2, foreground weight 10, background
/// thresholds 0.1 / 0.7, three self-training rounds).
struct DetectionConfig {
  double r1 = 8.0;             ///< average nuclear radius
  double r2 = 16.0;            ///< outer radius of the background band
  double sigma = 2.0;          ///< Gaussian bandwidth
  double w_pos = 10.0;         ///< weight of pixels with mask value > 0
  double w_bg = 1.0;           ///< weight of background pixels
  double prob_threshold = 0.5; ///< binarization level for detection extraction
  double bg_low = 0.1;
  double bg_high = 0.7;
  int rounds = 3;

  void validate() const {
    if (!(r1 > 0.0 && r1 < r2)) throw Error(ErrorKind::kUsage, "DetectionConfig: need 0 < r1 < r2");
    if (!(sigma > 0.0)) throw Error(ErrorKind::kUsage, "DetectionConfig: sigma must be > 0");
    if (!(bg_low >= 0.0 && bg_low < bg_high && bg_high <= 1.0))
      throw Error(ErrorKind::kUsage, "DetectionConfig: need 0 <= bg_low < bg_high <= 1");
    if (!(prob_threshold > 0.0 && prob_threshold < 1.0))
      throw Error(ErrorKind::kUsage, "DetectionConfig: prob_threshold must be in (0,1)");
    if (rounds < 0) throw Error(ErrorKind::kUsage, "DetectionConfig: rounds must be >= 0");
  }
};

/// Extended Gaussian mask: exp(-D^2 / 2 sigma^2) for D in [0, r1), 0 for
/// D in [r1, r2), kIgnore beyond.
inline RegressionMask extended_gaussian_mask(const PointSet& points, int height, int width,
                                             const DetectionConfig& cfg) {
  if (points.empty()) throw EmptySeeds("extended_gaussian_mask");
  const DistanceMap dist = distance_transform(points, height, width);
  RegressionMask m(height, width, kIgnore);
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = dist[i];
    if (d < cfg.r1)
      m[i] = std::exp(-d * d * inv);
    else if (d < cfg.r2)
      m[i] = 0.0;
  }
  return m;
}

/// Plain Gaussian mask: every pixel outside the bumps is background. This is
/// the baseline that treats all unlabeled nuclei as background.
inline RegressionMask gaussian_mask(const PointSet& points, int height, int width,
                                    const DetectionConfig& cfg) {
  if (points.empty()) throw EmptySeeds("gaussian_mask");
  const DistanceMap dist = distance_transform(points, height, width);
  RegressionMask m(height, width, 0.0);
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (dist[i] < cfg.r1) m[i] = std::exp(-dist[i] * dist[i] * inv);
  return m;
}

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  ///< d loss / d p_i for every pixel
};

/// Weighted MSE over non-ignored pixels, averaged by their count.
inline LossResult weighted_mse_loss(const ProbabilityMap& prob, const RegressionMask& mask,
                                    const DetectionConfig& cfg) {
  require_same_shape(prob, mask, "weighted_mse_loss");
  std::size_t support = 0;
  for (double m : mask)
    if (m != kIgnore) ++support;
  if (support == 0) throw EmptySupport("weighted_mse_loss");
  const double inv_n = 1.0 / static_cast<double>(support);
  LossResult out;
  out.grad.assign(prob.size(), 0.0);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double m = mask[i];
    if (m == kIgnore) continue;
    const double w = m > 0.0 ? cfg.w_pos : cfg.w_bg;
    const double e = prob[i] - m;
    out.loss += w * e * e;
    out.grad[i] = 2.0 * w * e * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

/// Threshold at >= `threshold`, 8-connected components, centroids in id order.
inline PointSet extract_detections(const ProbabilityMap& prob, double threshold) {
  BinaryMap fg(prob.height(), prob.width(), 0);
  for (std::size_t i = 0; i < prob.size(); ++i) fg[i] = prob[i] >= threshold;
  return component_centroids(connected_components(fg, Connectivity::kEight));
}

/// Self-training mask update. Pixels within r2 of an ORIGINAL labeled point
/// keep their extended-Gaussian value; beyond it a pixel becomes background
/// when p < bg_low, or when p > bg_high inside an 8-connected {p > bg_high}
/// component larger than pi r1^2; everything else stays ignored.
inline RegressionMask propagate_background(const ProbabilityMap& prob, const PointSet& points,
                                           const DetectionConfig& cfg) {
  if (points.empty()) throw EmptySeeds("propagate_background");
  const int h = prob.height(), w = prob.width();
  const DistanceMap dist = distance_transform(points, h, w);
  const RegressionMask base = extended_gaussian_mask(points, h, w, cfg);

  BinaryMap high(h, w, 0);
  for (std::size_t i = 0; i < prob.size(); ++i) high[i] = prob[i] > cfg.bg_high;
  const InstanceLabelMap comps = connected_components(high, Connectivity::kEight);
  const auto areas = instance_areas(comps);
  const double nucleus_area = std::numbers::pi * cfg.r1 * cfg.r1;

  RegressionMask out(h, w, kIgnore);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dist[i] < cfg.r2) {
      out[i] = base[i];
    } else if (prob[i] < cfg.bg_low) {
      out[i] = 0.0;
    } else if (high[i] && static_cast<double>(areas[comps[i]]) > nucleus_area) {
      out[i] = 0.0;
    }
  }
  return out;
}

}  // namespace ppseg

#endif  // PPSEG_DETECTION_HPP
