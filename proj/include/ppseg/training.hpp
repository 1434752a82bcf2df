#ifndef PPSEG_TRAINING_HPP
#define PPSEG_TRAINING_HPP

#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "crf.hpp"
#include "detection.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "self_training.hpp"

namespace ppseg {

struct TrainConfig {
  AdamConfig adam{};
  int epochs = 100;
  std::uint64_t seed = 0;  ///< weight init and per-epoch image order
  int hidden = 16;
  bool shuffle = true;

  void validate() const {
    if (!(adam.learning_rate > 0.0)) throw Error(ErrorKind::kUsage, "TrainConfig: learning_rate must be > 0");
    if (epochs < 0) throw Error(ErrorKind::kUsage, "TrainConfig: epochs must be >= 0");
  }

  static TrainConfig detection() { return with_epochs(80); }
  static TrainConfig segmentation() { return with_epochs(100); }
  /// Fine-tuning: 20 epochs at a tenth of the base learning rate.
  static TrainConfig finetune(const TrainConfig& base = segmentation()) {
    TrainConfig c = base;
    c.epochs = 20;
    c.adam.learning_rate = base.adam.learning_rate / 10.0;
    return c;
  }

 private:
  static TrainConfig with_epochs(int e) {
    TrainConfig c;
    c.epochs = e;
    return c;
  }
};

/// Per-epoch mean training loss and, when validating, validation loss.
struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
};

/// Generic full-image training loop: one Adam step per image per epoch.
/// `loss(i, prob)` returns the loss and d loss / d prob for image i. With a
/// validation function the model with the lowest validation loss is kept
/// (epoch 0 = the starting model).
template <class LossFn, class ValFn = std::nullptr_t>
PixelModel fit(PixelModel model, std::span<const FeatureMap> features, LossFn&& loss,
               const TrainConfig& cfg, TrainLog* log = nullptr, ValFn&& validate = nullptr) {
  cfg.validate();
  constexpr bool kValidate = !std::is_same_v<std::decay_t<ValFn>, std::nullptr_t>;
  AdamState state(model.params().size());
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  PixelModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  if constexpr (kValidate) {
    best_val = validate(model);
    if (log) {
      log->val_loss.push_back(best_val);
      log->best_epoch = 0;
    }
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle)
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    double total = 0.0;
    std::vector<double> act;
    for (std::size_t i : order) {
      const ProbabilityMap prob = forward(model, features[i], &act);
      const LossResult l = loss(i, prob);
      total += l.loss;
      const std::vector<double> g = backward(model, features[i], l.grad, &act);
      adam_step(model.params(), state, g, cfg.adam);
    }
    if (log) log->train_loss.push_back(features.empty() ? 0.0 : total / features.size());
    if constexpr (kValidate) {
      const double v = validate(model);
      if (log) log->val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best = model;
        if (log) log->best_epoch = epoch + 1;
      }
    }
  }
  if constexpr (kValidate) return best;
  return model;
}

inline std::vector<FeatureMap> featurize_all(std::span<const ImageRGB> images) {
  std::vector<FeatureMap> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(featurize(im));
  return out;
}

/// Optional held-out data for model selection in detection training.
struct DetectionValidation {
  std::span<const FeatureMap> features;
  std::span<const RegressionMask> masks;
};

/// Minimizes the weighted MSE against one regression mask per image. `init`
/// selects the starting weights; null starts from a seeded initialization.
inline PixelModel train_detection(std::span<const FeatureMap> features,
                                  std::span<const RegressionMask> masks,
                                  const DetectionConfig& det, const TrainConfig& cfg,
                                  const PixelModel* init = nullptr, TrainLog* log = nullptr,
                                  std::optional<DetectionValidation> val = std::nullopt) {
  if (features.empty()) throw EmptySupport("train_detection: no images");
  if (masks.size() != features.size()) throw ShapeMismatch("train_detection");
  PixelModel start = init ? *init : PixelModel::initialized(cfg.hidden, cfg.seed);
  auto loss = [&](std::size_t i, const ProbabilityMap& p) { return weighted_mse_loss(p, masks[i], det); };
  if (!val) return fit(std::move(start), features, loss, cfg, log);
  if (val->masks.size() != val->features.size()) throw ShapeMismatch("train_detection: validation");
  auto vloss = [&](const PixelModel& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < val->features.size(); ++i)
      s += weighted_mse_loss(forward(m, val->features[i]), val->masks[i], det).loss;
    return s;
  };
  return fit(std::move(start), features, loss, cfg, log, vloss);
}

/// Minimizes alpha * CE(Voronoi) + (1 - alpha) * CE(cluster).
inline PixelModel train_segmentation(std::span<const FeatureMap> features,
                                     std::span<const TriStateLabelMap> vor,
                                     std::span<const TriStateLabelMap> cluster, double alpha,
                                     const TrainConfig& cfg, const PixelModel* init = nullptr,
                                     TrainLog* log = nullptr) {
  if (features.empty()) throw EmptySupport("train_segmentation: no images");
  if (vor.size() != features.size() || cluster.size() != features.size())
    throw ShapeMismatch("train_segmentation");
  PixelModel start = init ? *init : PixelModel::initialized(cfg.hidden, cfg.seed);
  auto loss = [&](std::size_t i, const ProbabilityMap& p) {
    return combined_ce(p, vor[i], cluster[i], alpha);
  };
  return fit(std::move(start), features, loss, cfg, log);
}

/// Continues training `model` with the CE loss plus beta times the relaxed
/// dense-CRF pairwise loss. `images` supply the bilateral features.
inline PixelModel finetune_crf(const PixelModel& model, std::span<const ImageRGB> images,
                               std::span<const FeatureMap> features,
                               std::span<const TriStateLabelMap> vor,
                               std::span<const TriStateLabelMap> cluster, double alpha,
                               const CrfParams& crf, const TrainConfig& cfg,
                               AffinityMode mode = AffinityMode::kFiltered,
                               TrainLog* log = nullptr) {
  if (images.size() != features.size() || vor.size() != features.size() ||
      cluster.size() != features.size())
    throw ShapeMismatch("finetune_crf");
  std::vector<AffinityOperator> ops;
  std::vector<std::vector<double>> ones;
  if (crf.beta != 0.0) {
    ops.reserve(images.size());
    for (const auto& im : images) {
      ops.emplace_back(im, crf, mode);
      ones.push_back(ops.back().apply(std::vector<double>(im.size(), 1.0)));
    }
  }
  auto loss = [&](std::size_t i, const ProbabilityMap& p) {
    if (crf.beta == 0.0) return combined_ce(p, vor[i], cluster[i], alpha);
    return crf_total_loss(p, vor[i], cluster[i], alpha, ops[i], crf.beta, &ones[i]);
  };
  return fit(model, features, loss, cfg, log);
}

/// Adapts the detection trainer to the self-training loop.
class PixelDetectionTrainer {
 public:
  using Model = PixelModel;

  PixelDetectionTrainer(std::span<const FeatureMap> features, DetectionConfig det,
                        TrainConfig cfg, std::optional<DetectionValidation> val = std::nullopt)
      : features_(features), det_(det), cfg_(cfg), val_(val) {}

  PixelModel train(std::span<const RegressionMask> masks, const PixelModel* init) {
    return train_detection(features_, masks, det_, cfg_, init, nullptr, val_);
  }
  ProbabilityMap predict(const PixelModel& m, std::size_t i) const { return forward(m, features_[i]); }
  std::size_t image_count() const noexcept { return features_.size(); }

 private:
  std::span<const FeatureMap> features_;
  DetectionConfig det_;
  TrainConfig cfg_;
  std::optional<DetectionValidation> val_;
};

static_assert(DetectionTrainer<PixelDetectionTrainer>);

}  // namespace ppseg

#endif  // PPSEG_TRAINING_HPP
