#ifndef PPSEG_LOSSES_HPP
#define PPSEG_LOSSES_HPP

#include <algorithm>
#include <cmath>

#include "detection.hpp"
#include "raster.hpp"

namespace ppseg {

inline constexpr double kLogEpsilon = 1e-7;

/// Binary cross entropy over non-ignored pixels, averaged by their count.
inline LossResult masked_cross_entropy(const ProbabilityMap& prob, const TriStateLabelMap& label) {
  require_same_shape(prob, label, "masked_cross_entropy");
  std::size_t support = 0;
  for (auto t : label)
    if (t != kIgnoreLabel) ++support;
  if (support == 0) throw EmptySupport("masked_cross_entropy");
  const double inv_n = 1.0 / static_cast<double>(support);
  LossResult out;
  out.grad.assign(prob.size(), 0.0);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const auto t = label[i];
    if (t == kIgnoreLabel) continue;
    const double y = std::clamp(prob[i], kLogEpsilon, 1.0 - kLogEpsilon);
    if (t == kNucleus) {
      out.loss -= std::log(y);
      out.grad[i] = -inv_n / y;
    } else {
      out.loss -= std::log(1.0 - y);
      out.grad[i] = inv_n / (1.0 - y);
    }
  }
  out.loss *= inv_n;
  return out;
}

/// alpha * L_vor + (1 - alpha) * L_cluster. A side with zero weight is not
/// evaluated, so an all-ignored label is allowed there.
inline LossResult combined_ce(const ProbabilityMap& prob, const TriStateLabelMap& vor,
                              const TriStateLabelMap& cluster, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::kUsage, "combined_ce: alpha not in [0,1]");
  LossResult out;
  out.grad.assign(prob.size(), 0.0);
  auto add = [&](const TriStateLabelMap& label, double weight) {
    if (weight == 0.0) return;
    const LossResult part = masked_cross_entropy(prob, label);
    out.loss += weight * part.loss;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += weight * part.grad[i];
  };
  add(vor, alpha);
  add(cluster, 1.0 - alpha);
  return out;
}

}  // namespace ppseg

#endif  // PPSEG_LOSSES_HPP
