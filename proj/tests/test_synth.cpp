#include <gtest/gtest.h>

#include <set>

#include <ppseg/metrics.hpp>
#include <ppseg/synth.hpp>

using namespace ppseg;

TEST(Synth, DeterministicPerSeed) {
  SynthConfig cfg;
  cfg.seed = 42;
  const auto a = generate(cfg), b = generate(cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.instances, b.instances);
  EXPECT_EQ(a.centers, b.centers);
  cfg.seed = 43;
  EXPECT_FALSE(generate(cfg).image == a.image);
}

TEST(Synth, CountsAndGroundTruth) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const auto s = generate(cfg);
    const int n = instance_count(s.instances);
    EXPECT_GE(n, cfg.min_count);
    EXPECT_LE(n, cfg.max_count);
    EXPECT_EQ(s.centroids, component_centroids(s.instances));
    EXPECT_EQ(s.centers, bounding_box_centers(s.instances));
    ASSERT_EQ(s.centers.size(), static_cast<std::size_t>(n));
    // Every id is present, ids are in first-pixel order.
    std::vector<int> first;
    for (auto id : s.instances)
      if (id > 0 && std::find(first.begin(), first.end(), id) == first.end()) first.push_back(id);
    for (int k = 0; k < n; ++k) EXPECT_EQ(first[k], k + 1);
    for (const auto& px : s.image)
      for (double v : px) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Synth, CentroidInsideBoundingBoxAndNearCenter) {
  SynthConfig cfg;
  cfg.seed = 5;
  const auto s = generate(cfg);
  for (std::size_t k = 0; k < s.centers.size(); ++k) {
    const auto& c = s.centroids[k];
    const auto& b = s.centers[k];
    EXPECT_LE(std::hypot(c.row - b.row, c.col - b.col), 1.0);
    int r0 = 1 << 30, r1 = -1, c0 = 1 << 30, c1 = -1;
    for (int r = 0; r < s.instances.height(); ++r)
      for (int col = 0; col < s.instances.width(); ++col)
        if (s.instances(r, col) == static_cast<int>(k) + 1) {
          r0 = std::min(r0, r);
          r1 = std::max(r1, r);
          c0 = std::min(c0, col);
          c1 = std::max(c1, col);
        }
    EXPECT_TRUE(c.row >= r0 && c.row <= r1 && c.col >= c0 && c.col <= c1);
  }
}

TEST(Synth, NoiselessNucleiHaveBaseColor) {
  SynthConfig cfg;
  cfg.noise_std = 0.0;
  cfg.color_jitter = 0.0;
  cfg.seed = 7;
  const auto s = generate(cfg);
  for (std::size_t i = 0; i < s.image.size(); ++i)
    if (s.instances[i] > 0) { EXPECT_EQ(s.image[i], cfg.nucleus_color); }
}

TEST(Synth, MeasuredContrast) {
  SynthConfig cfg;
  cfg.nucleus_color = {0.3, 0.3, 0.3};
  cfg.background_color = {0.8, 0.8, 0.8};
  cfg.min_clutter = cfg.max_clutter = 0;
  cfg.seed = 9;
  const auto s = generate(cfg);
  EXPECT_NEAR(dataset_difficulty(s.image, s.instances).nuclei_bg_diff, -0.5, 0.05);
}

TEST(Synth, InfeasiblePackingFails) {
  SynthConfig cfg;
  cfg.height = cfg.width = 20;
  cfg.min_count = cfg.max_count = 40;
  cfg.min_clutter = cfg.max_clutter = 0;
  EXPECT_THROW(generate(cfg), PackingFailure);
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig cfg;
  cfg.min_radius = 1.0;
  EXPECT_THROW(generate(cfg), Error);
  cfg = SynthConfig{};
  cfg.min_separation = 0.5;
  EXPECT_THROW(generate(cfg), Error);
}

TEST(PartialPoints, Counts) {
  PointSet pts;
  for (int i = 0; i < 600; ++i) pts.push_back({double(i), 0.0});
  EXPECT_EQ(sample_partial_points(pts, 1.0, 0), pts);
  EXPECT_EQ(sample_partial_points(pts, 0.1, 0).size(), 60u);
  EXPECT_EQ(sample_partial_points(PointSet(pts.begin(), pts.begin() + 3), 0.01, 0).size(), 1u);
  EXPECT_THROW(sample_partial_points(pts, 0.0, 0), Error);
}

TEST(PartialPoints, OrderPreservedAndSeedsDiffer) {
  PointSet pts;
  for (int i = 0; i < 40; ++i) pts.push_back({double(i), 1.0});
  std::set<std::vector<double>> subsets;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = sample_partial_points(pts, 0.1, seed);
    std::vector<double> rows;
    for (const auto& p : s) rows.push_back(p.row);
    EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
    subsets.insert(rows);
  }
  EXPECT_EQ(subsets.size(), 10u);
}
