#ifndef PPSEG_PIPELINE_HPP
#define PPSEG_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "color.hpp"
#include "components.hpp"
#include "crf.hpp"
#include "detection.hpp"
#include "labels.hpp"
#include "metrics.hpp"
#include "self_training.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace ppseg {

/// Images with their ground truth. `centers` are the detection ground truth
/// (bounding-box centers of the instances).
struct Split {
  std::vector<ImageRGB> images;
  std::vector<InstanceLabelMap> instances;
  std::vector<PointSet> centers;

  std::size_t size() const noexcept { return images.size(); }
};

struct Benchmark {
  Split train, val, test;
};

struct BenchmarkConfig {
  SynthConfig synth{};
  int train = 20;
  int val = 5;
  int test = 5;
  std::uint64_t seed = 1;
};

/// Seed of the k-th synthetic image of a benchmark.
inline std::uint64_t image_seed(std::uint64_t base, int k) {
  return base * 1000003ULL + static_cast<std::uint64_t>(k);
}

inline Benchmark make_benchmark(const BenchmarkConfig& cfg) {
  Benchmark b;
  int k = 0;
  for (auto [split, n] : {std::pair{&b.train, cfg.train}, {&b.val, cfg.val}, {&b.test, cfg.test}})
    for (int i = 0; i < n; ++i) {
      SynthConfig sc = cfg.synth;
      sc.seed = image_seed(cfg.seed, k++);
      SynthSample s = generate(sc);
      split->images.push_back(std::move(s.image));
      split->instances.push_back(std::move(s.instances));
      split->centers.push_back(std::move(s.centers));
    }
  return b;
}

inline void normalize_split(Split& split, const ColorStats& reference) {
  for (auto& im : split.images) im = reinhard_normalize(im, reference);
}

/// Normalizes every split against the first training image.
inline ColorStats normalize_benchmark(Benchmark& b) {
  const ColorStats ref = compute_color_stats(b.train.images.front());
  normalize_split(b.train, ref);
  normalize_split(b.val, ref);
  normalize_split(b.test, ref);
  return ref;
}

/// Partial annotation of every image of a split; image i uses seed
/// (seed, i).
inline std::vector<PointSet> partial_points(const Split& split, double ratio, std::uint64_t seed) {
  std::vector<PointSet> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    out.push_back(sample_partial_points(split.centers[i], ratio, image_seed(seed, static_cast<int>(i))));
  return out;
}

enum class DetectionStrategy { kGM, kExtGM, kSTnu, kSTbg };

inline const char* strategy_name(DetectionStrategy s) {
  switch (s) {
    case DetectionStrategy::kGM: return "GM";
    case DetectionStrategy::kExtGM: return "ext-GM";
    case DetectionStrategy::kSTnu: return "ST-nu";
    case DetectionStrategy::kSTbg: return "ST-bg";
  }
  return "?";
}

struct PipelineConfig {
  DetectionConfig detection{5.0, 10.0, 2.5};
  double match_radius = 5.0;
  double ratio = 0.1;
  std::uint64_t point_seed = 0;
  TrainConfig det_train = TrainConfig::detection();
  TrainConfig seg_train = TrainConfig::segmentation();
  TrainConfig ft_train = TrainConfig::finetune();
  WarmStart warm = WarmStart::kPrevious;
  double alpha = 0.5;
  CrfParams crf{};
  std::uint64_t cluster_seed = 0;
  double seg_threshold = 0.5;
  std::size_t min_instance_area = 0;
  bool normalize = true;
  /// Keep the detection model with the lowest validation loss instead of
  /// the last one.
  bool select_on_validation = false;
};

/// Pre-computed features of a benchmark.
struct BenchmarkFeatures {
  std::vector<FeatureMap> train, val, test;

  explicit BenchmarkFeatures(const Benchmark& b)
      : train(featurize_all(b.train.images)),
        val(featurize_all(b.val.images)),
        test(featurize_all(b.test.images)) {}
};

inline std::vector<RegressionMask> detection_masks(const Split& split,
                                                   const std::vector<PointSet>& points,
                                                   const DetectionConfig& cfg, bool extended) {
  std::vector<RegressionMask> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const int h = split.images[i].height(), w = split.images[i].width();
    out.push_back(extended ? extended_gaussian_mask(points[i], h, w, cfg)
                           : gaussian_mask(points[i], h, w, cfg));
  }
  return out;
}

inline std::vector<PointSet> detect_all(const PixelModel& model, std::span<const FeatureMap> features,
                                        double threshold) {
  std::vector<PointSet> out;
  for (const auto& f : features) out.push_back(extract_detections(forward(model, f), threshold));
  return out;
}

inline DetectionStats evaluate_detection(const std::vector<PointSet>& detections,
                                         const std::vector<PointSet>& gt, double radius) {
  std::vector<MatchResult> pool;
  for (std::size_t i = 0; i < gt.size(); ++i) pool.push_back(match_detections(gt[i], detections[i], radius));
  return detection_stats(pool);
}

struct DetectionOutcome {
  PixelModel model;
  DetectionStats test;
};

/// Trains a detector with one strategy. Self-training variants start from
/// the ext-GM model (passed in `initial` when already trained).
inline DetectionOutcome run_detection(const Benchmark& b, const BenchmarkFeatures& f,
                                      const PipelineConfig& cfg, DetectionStrategy strategy,
                                      const PixelModel* initial = nullptr) {
  const auto train_pts = partial_points(b.train, cfg.ratio, cfg.point_seed);
  const auto val_pts = partial_points(b.val, cfg.ratio, cfg.point_seed + 1);
  const bool extended = strategy != DetectionStrategy::kGM;
  const auto val_masks = detection_masks(b.val, val_pts, cfg.detection, extended);
  std::optional<DetectionValidation> val;
  if (cfg.select_on_validation) val = DetectionValidation{f.val, val_masks};
  PixelModel model;
  if (initial && extended) {
    model = *initial;
  } else {
    const auto masks = detection_masks(b.train, train_pts, cfg.detection, extended);
    model = train_detection(f.train, masks, cfg.detection, cfg.det_train, nullptr, nullptr, val);
  }
  if (strategy == DetectionStrategy::kSTbg || strategy == DetectionStrategy::kSTnu) {
    PixelDetectionTrainer trainer(f.train, cfg.detection, cfg.det_train, val);
    const auto st = strategy == DetectionStrategy::kSTbg ? SelfTrainStrategy::kBackground
                                                         : SelfTrainStrategy::kNuclei;
    model = self_train(trainer, model, train_pts, cfg.detection, st, cfg.warm).model;
  }
  DetectionOutcome out{model, {}};
  out.test = evaluate_detection(detect_all(model, f.test, cfg.detection.prob_threshold), b.test.centers,
                                cfg.match_radius);
  return out;
}

struct SegLabels {
  std::vector<TriStateLabelMap> voronoi, cluster;
};

inline SegLabels make_seg_labels(const std::vector<ImageRGB>& images,
                                 const std::vector<PointSet>& points, std::uint64_t seed) {
  SegLabels out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int h = images[i].height(), w = images[i].width();
    const auto vp = voronoi_partition(points[i], h, w);
    out.voronoi.push_back(voronoi_label(points[i], h, w, vp));
    ClusterLabelOptions opt;
    opt.seed = image_seed(seed, static_cast<int>(i));
    out.cluster.push_back(cluster_label(images[i], points[i], vp, opt));
  }
  return out;
}

/// Thresholded foreground split into 8-connected instances.
inline InstanceLabelMap segment_instances(const ProbabilityMap& prob, double threshold,
                                          std::size_t min_area = 0) {
  BinaryMap fg(prob.height(), prob.width(), 0);
  for (std::size_t i = 0; i < prob.size(); ++i) fg[i] = prob[i] >= threshold;
  InstanceLabelMap inst = connected_components(fg, Connectivity::kEight);
  return min_area > 0 ? remove_small_instances(inst, min_area) : inst;
}

inline BinaryMap foreground(const InstanceLabelMap& labels) {
  BinaryMap fg(labels.height(), labels.width(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) fg[i] = labels[i] > 0;
  return fg;
}

/// Segmentation metrics of one image.
inline MetricsReport segmentation_report(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  MetricsReport r;
  const PixelStats ps = pixel_stats(foreground(pred), foreground(gt));
  r.pixel_acc = ps.accuracy;
  r.pixel_f1 = ps.f1;
  r.dice_obj = object_dice(gt, pred);
  r.aji = aji(gt, pred);
  return r;
}

/// Mean of each present field over the reports.
inline MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  auto fields = out.fields();
  std::vector<double> sum(fields.size(), 0.0);
  std::vector<std::size_t> cnt(fields.size(), 0);
  for (const auto& r : reports) {
    const auto f = r.fields();
    for (std::size_t k = 0; k < f.size(); ++k)
      if (f[k].second) {
        sum[k] += *f[k].second;
        ++cnt[k];
      }
  }
  std::vector<std::optional<double>> v(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k)
    if (cnt[k]) v[k] = sum[k] / static_cast<double>(cnt[k]);
  out.precision = v[0];
  out.recall = v[1];
  out.f1 = v[2];
  out.mu_d = v[3];
  out.sigma_d = v[4];
  out.pixel_acc = v[5];
  out.pixel_f1 = v[6];
  out.dice_obj = v[7];
  out.aji = v[8];
  out.nuclei_bg_diff = v[9];
  out.nuclei_std = v[10];
  return out;
}

inline MetricsReport evaluate_segmentation(const PixelModel& model, const Split& split,
                                           std::span<const FeatureMap> features,
                                           double threshold, std::size_t min_area = 0) {
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < split.size(); ++i)
    reports.push_back(segmentation_report(
        split.instances[i], segment_instances(forward(model, features[i]), threshold, min_area)));
  return mean_report(reports);
}

}  // namespace ppseg

#endif  // PPSEG_PIPELINE_HPP
