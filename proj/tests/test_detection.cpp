#include <gtest/gtest.h>

#include <ppseg/detection.hpp>
#include <ppseg/self_training.hpp>

#include "oracles.hpp"

using namespace ppseg;

namespace {

DetectionConfig lc() { return DetectionConfig{}; }

double fd_check(const ProbabilityMap& p, const RegressionMask& m, const DetectionConfig& cfg) {
  const auto res = weighted_mse_loss(p, m, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-6;
    ProbabilityMap a = p, b = p;
    a[i] += h;
    b[i] -= h;
    const double fd = (weighted_mse_loss(a, m, cfg).loss - weighted_mse_loss(b, m, cfg).loss) / (2 * h);
    worst = std::max(worst, std::abs(fd - res.grad[i]) / std::max(1e-8, std::abs(fd) + std::abs(res.grad[i])));
  }
  return worst;
}

}  // namespace

TEST(ExtendedMask, CaseValues) {
  const auto cfg = lc();
  EXPECT_EQ(cfg.r1, 8.0);
  EXPECT_EQ(cfg.r2, 16.0);
  EXPECT_EQ(cfg.sigma, 2.0);
  const auto m = extended_gaussian_mask(PointSet{{0, 0}}, 30, 30, cfg);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_NEAR(m(0, 2), 0.60653065971263342, 1e-15);
  EXPECT_EQ(m(0, 10), 0.0);
  EXPECT_EQ(m(0, 20), kIgnore);
  // Half-open intervals: exactly r1 is background, exactly r2 is ignored.
  EXPECT_EQ(m(0, 8), 0.0);
  EXPECT_EQ(m(0, 16), kIgnore);
  EXPECT_GT(m(0, 7), 0.0);
}

TEST(ExtendedMask, EmptyPointsThrow) {
  EXPECT_THROW(extended_gaussian_mask({}, 5, 5, lc()), EmptySeeds);
}

TEST(GaussianMask, NoIgnoredPixels) {
  const auto m = gaussian_mask(PointSet{{5, 5}}, 30, 30, lc());
  for (double v : m) EXPECT_GE(v, 0.0);
  EXPECT_EQ(m(25, 25), 0.0);
}

TEST(WeightedMse, Examples) {
  const auto cfg = lc();
  ProbabilityMap p(1, 1, 0.5);
  RegressionMask m(1, 1, 1.0);
  EXPECT_DOUBLE_EQ(weighted_mse_loss(p, m, cfg).loss, 2.5);

  ProbabilityMap p2(1, 2, 1.0);
  RegressionMask m2(1, 2, 0.0);
  m2[0] = 1.0;
  EXPECT_DOUBLE_EQ(weighted_mse_loss(p2, m2, cfg).loss, 0.5);

  RegressionMask m3(1, 2, 0.3);
  ProbabilityMap p3(1, 2, 0.3);
  const auto r = weighted_mse_loss(p3, m3, cfg);
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad) EXPECT_EQ(g, 0.0);
}

TEST(WeightedMse, IgnoredPixelsHaveNoGradient) {
  RegressionMask m(2, 2, kIgnore);
  m[0] = 0.5;
  ProbabilityMap p(2, 2, 0.9);
  const auto r = weighted_mse_loss(p, m, lc());
  EXPECT_EQ(r.grad[1], 0.0);
  EXPECT_EQ(r.grad[3], 0.0);
  EXPECT_THROW(weighted_mse_loss(p, RegressionMask(2, 2, kIgnore), lc()), EmptySupport);
}

TEST(WeightedMse, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 20; ++t) {
    ProbabilityMap p(8, 8);
    for (auto& v : p) v = u(rng);
    const auto m = extended_gaussian_mask(oracle::random_points(rng, 2, 8, 8), 8, 8,
                                          DetectionConfig{2.0, 4.0, 1.0});
    EXPECT_LE(fd_check(p, m, lc()), 1e-4);
  }
}

TEST(Extraction, EmptyMapGivesNothing) {
  EXPECT_TRUE(extract_detections(ProbabilityMap(10, 10, 0.0), 0.5).empty());
}

TEST(Extraction, BumpCentroid) {
  const auto m = extended_gaussian_mask(PointSet{{20, 30}}, 50, 50, lc());
  ProbabilityMap p(50, 50, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::max(0.0, m[i]);
  const auto d = extract_detections(p, 0.5);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_LE(std::hypot(d[0].row - 20, d[0].col - 30), 0.5);
}

TEST(Extraction, TwoBumps) {
  const auto m = extended_gaussian_mask(PointSet{{10, 10}, {30, 35}}, 50, 50, lc());
  ProbabilityMap p(50, 50, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::max(0.0, m[i]);
  EXPECT_EQ(extract_detections(p, 0.5).size(), 2u);
}

TEST(Propagation, PaperRules) {
  const auto cfg = lc();
  const int h = 60, w = 60;
  ProbabilityMap p(h, w, 0.5);
  p(50, 5) = 0.05;
  // 300 px high-probability block and a 50 px one, both beyond r2 of (2,2).
  for (int r = 30; r < 45; ++r)
    for (int c = 30; c < 50; ++c) p(r, c) = 0.8;
  for (int r = 50; r < 55; ++r)
    for (int c = 40; c < 50; ++c) p(r, c) = 0.8;
  const auto m = propagate_background(p, PointSet{{2, 2}}, cfg);
  EXPECT_EQ(m(50, 5), 0.0);
  EXPECT_EQ(m(20, 50), kIgnore);
  EXPECT_EQ(m(35, 35), 0.0);
  EXPECT_EQ(m(52, 45), kIgnore);
  // Near the labeled point the mask is the extended Gaussian, whatever p is.
  const auto base = extended_gaussian_mask(PointSet{{2, 2}}, h, w, cfg);
  EXPECT_EQ(m(2, 2), 1.0);
  EXPECT_EQ(m(2, 12), base(2, 12));
}

TEST(Propagation, BandIndependentOfModel) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto cfg = lc();
  const PointSet pts{{10, 10}, {40, 30}};
  const auto base = extended_gaussian_mask(pts, 50, 50, cfg);
  for (int t = 0; t < 5; ++t) {
    ProbabilityMap p(50, 50);
    for (auto& v : p) v = u(rng);
    const auto m = propagate_background(p, pts, cfg);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (base[i] != kIgnore) ASSERT_EQ(m[i], base[i]);
  }
}

namespace {

// Model = constant probability; training records the masks it saw.
struct FakeTrainer {
  using Model = double;
  int h = 40, w = 40;
  std::size_t n = 2;
  std::vector<std::vector<RegressionMask>> seen;
  std::vector<const double*> starts;

  double train(std::span<const RegressionMask> masks, const double* init) {
    seen.emplace_back(masks.begin(), masks.end());
    starts.push_back(init);
    return (init ? *init : 0.0) + 0.01;
  }
  ProbabilityMap predict(const double& m, std::size_t) const { return ProbabilityMap(h, w, m); }
  std::size_t image_count() const { return n; }
};

}  // namespace

TEST(SelfTraining, ZeroRoundsReturnsInitial) {
  FakeTrainer t;
  DetectionConfig cfg = lc();
  cfg.rounds = 0;
  const auto res = self_train(t, 0.42, {{{5, 5}}, {{20, 20}}}, cfg, SelfTrainStrategy::kBackground);
  EXPECT_EQ(res.model, 0.42);
  EXPECT_TRUE(t.seen.empty());
}

TEST(SelfTraining, RoundsAndWarmStart) {
  FakeTrainer t;
  DetectionConfig cfg = lc();
  const std::vector<PointSet> pts{{{5, 5}}, {{20, 20}}};
  const auto res = self_train(t, 0.05, pts, cfg, SelfTrainStrategy::kBackground, WarmStart::kInitial);
  ASSERT_EQ(t.seen.size(), 3u);
  ASSERT_EQ(res.masks.size(), 3u);
  for (const double* s : t.starts) EXPECT_EQ(*s, 0.05);
  // p = 0.05 < 0.1 everywhere, so everything beyond r2 becomes background.
  for (const auto& m : res.masks[0]) EXPECT_EQ(std::count(m.begin(), m.end(), kIgnore), 0);

  FakeTrainer cold;
  self_train(cold, 0.05, pts, cfg, SelfTrainStrategy::kBackground, WarmStart::kCold);
  for (const double* s : cold.starts) EXPECT_EQ(s, nullptr);
}

TEST(SelfTraining, NucleiStrategyAddsDetections) {
  struct BumpTrainer : FakeTrainer {
    ProbabilityMap predict(const double&, std::size_t) const {
      ProbabilityMap p(h, w, 0.0);
      p(30, 30) = 0.9;
      return p;
    }
  } t;
  DetectionConfig cfg = lc();
  cfg.rounds = 1;
  const auto res = self_train(t, 0.0, {{{5, 5}}, {{5, 5}}}, cfg, SelfTrainStrategy::kNuclei);
  EXPECT_EQ(res.masks[0][0](30, 30), 1.0);
  EXPECT_EQ(res.masks[0][0](5, 5), 1.0);
}

TEST(SelfTraining, MergePointsDropsDuplicates) {
  const auto m = merge_points({{1, 1}, {2, 2}}, {{2, 2}, {3, 3}});
  EXPECT_EQ(m, (PointSet{{1, 1}, {2, 2}, {3, 3}}));
}
