#ifndef PPSEG_SELF_TRAINING_HPP
#define PPSEG_SELF_TRAINING_HPP

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "detection.hpp"

namespace ppseg {

enum class SelfTrainStrategy {
  kBackground,  ///< grow the background set (ST-bg)
  kNuclei,      ///< add detected nuclei as new Gaussian centers (ST-nu)
};

/// Where each round's training starts from.
enum class WarmStart { kInitial, kPrevious, kCold };

/// A detection trainer owns the training images. `train` fits a model to one
/// mask per image, starting from `init` (or a fresh model when null);
/// `predict` returns the probability map of image `i`.
template <class T>
concept DetectionTrainer =
    requires(T& t, const typename T::Model& m, std::span<const RegressionMask> masks,
             std::size_t i) {
      { t.train(masks, &m) } -> std::same_as<typename T::Model>;
      { t.predict(m, i) } -> std::same_as<ProbabilityMap>;
      { t.image_count() } -> std::convertible_to<std::size_t>;
    };

template <class Model>
struct SelfTrainResult {
  Model model;
  std::vector<PointSet> detections;               ///< final detections per image
  std::vector<std::vector<RegressionMask>> masks;  ///< masks[round][image]
};

/// Union of two point sets with exact duplicates removed; order preserved.
inline PointSet merge_points(const PointSet& a, const PointSet& b) {
  PointSet out = a;
  for (const auto& p : b)
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  return out;
}

/// Runs `cfg.rounds` rounds of self-training from `initial`. The labeled
/// points per image are never modified; the masks are rebuilt from them every
/// round.
template <DetectionTrainer Trainer>
SelfTrainResult<typename Trainer::Model> self_train(Trainer& trainer,
                                                    const typename Trainer::Model& initial,
                                                    const std::vector<PointSet>& labeled,
                                                    const DetectionConfig& cfg,
                                                    SelfTrainStrategy strategy,
                                                    WarmStart warm = WarmStart::kInitial) {
  using Model = typename Trainer::Model;
  const std::size_t n = trainer.image_count();
  if (labeled.size() != n) throw ShapeMismatch("self_train: one point set per image required");

  SelfTrainResult<Model> result{initial, {}, {}};
  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<RegressionMask> masks;
    masks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ProbabilityMap prob = trainer.predict(result.model, i);
      if (strategy == SelfTrainStrategy::kBackground) {
        masks.push_back(propagate_background(prob, labeled[i], cfg));
      } else {
        const PointSet found = extract_detections(prob, cfg.prob_threshold);
        masks.push_back(extended_gaussian_mask(merge_points(labeled[i], found), prob.height(),
                                               prob.width(), cfg));
      }
    }
    const Model* start = nullptr;
    if (warm == WarmStart::kInitial) start = &initial;
    if (warm == WarmStart::kPrevious) start = &result.model;
    Model next = trainer.train(masks, start);
    result.model = std::move(next);
    result.masks.push_back(std::move(masks));
  }
  result.detections.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    result.detections.push_back(
        extract_detections(trainer.predict(result.model, i), cfg.prob_threshold));
  return result;
}

}  // namespace ppseg

#endif  // PPSEG_SELF_TRAINING_HPP
