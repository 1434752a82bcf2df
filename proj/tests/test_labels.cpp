#include <gtest/gtest.h>

#include <ppseg/labels.hpp>

#include "oracles.hpp"

using namespace ppseg;

TEST(Voronoi, TwoSeedsEdgeColumn) {
  const auto vp = voronoi_partition({{5, 2}, {5, 8}}, 11, 11);
  for (int r = 0; r < 11; ++r) {
    EXPECT_EQ(vp.cell_index(r, 5), 0);
    EXPECT_EQ(vp.cell_index(r, 6), 1);
    for (int c = 0; c < 11; ++c) EXPECT_EQ(vp.edge_mask(r, c), c == 5 ? 1 : 0);
  }
}

TEST(Voronoi, SingleSeedHasNoEdges) {
  const auto vp = voronoi_partition({{3, 3}}, 9, 9);
  EXPECT_EQ(std::count(vp.edge_mask.begin(), vp.edge_mask.end(), 1), 0);
}

TEST(Voronoi, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + t % 12;
    const auto pts = t % 2 ? oracle::random_points(rng, n, 32, 32) : oracle::random_pixel_points(rng, n, 32, 32);
    EXPECT_EQ(voronoi_partition(pts, 32, 32).cell_index, oracle::voronoi(pts, 32, 32));
  }
}

TEST(Voronoi, EdgesSeparateEveryPairOfCells) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const auto pts = oracle::random_points(rng, 8, 30, 30);
    const auto vp = voronoi_partition(pts, 30, 30);
    for (int r = 0; r < 30; ++r)
      for (int c = 0; c + 1 < 30; ++c) {
        const auto a = vp.cell_index(r, c), b = vp.cell_index(r, c + 1);
        if (a == b) continue;
        // Exactly one side of a horizontal cell change is an edge: the lower index.
        EXPECT_TRUE((a < b && vp.edge_mask(r, c)) || (b < a && vp.edge_mask(r, c + 1)));
      }
  }
}

TEST(VoronoiLabel, SingleSeed) {
  const auto l = voronoi_label({{10, 10}}, 21, 21);
  EXPECT_EQ(std::count(l.begin(), l.end(), kNucleus), 13);
  EXPECT_EQ(std::count(l.begin(), l.end(), kBackground), 0);
  EXPECT_EQ(std::count(l.begin(), l.end(), kIgnoreLabel), 21 * 21 - 13);
}

TEST(VoronoiLabel, TwoSeeds) {
  const auto l = voronoi_label({{5, 2}, {5, 8}}, 11, 11);
  EXPECT_EQ(std::count(l.begin(), l.end(), kNucleus), 26);
  for (int r = 0; r < 11; ++r) EXPECT_EQ(l(r, 5), kBackground);
}

TEST(VoronoiLabel, ValuesAreTriState) {
  std::mt19937_64 rng(2);
  const auto l = voronoi_label(oracle::random_points(rng, 10, 25, 25), 25, 25);
  for (auto v : l) EXPECT_TRUE(v == kIgnoreLabel || v == kBackground || v == kNucleus);
}

TEST(PixelFeatures, ClippedDistance) {
  ImageRGB im(1, 50, Rgb{0.1, 0.2, 0.3});
  const auto f = pixel_features(im, {{0, 0}});
  EXPECT_EQ(f[0][0], 0.0);
  EXPECT_EQ(f[40][0], 1.0);
  EXPECT_EQ(f[10][0], 0.5);
  EXPECT_EQ(f[10][3], 0.3);
}

TEST(KMeans, SingleClusterIsMean) {
  std::vector<Feature<2>> x{{0, 0}, {2, 4}, {4, 2}};
  const auto r = kmeans<2>(x, 1, 0);
  EXPECT_DOUBLE_EQ(r.centroids[0][0], 2.0);
  EXPECT_DOUBLE_EQ(r.centroids[0][1], 2.0);
}

TEST(KMeans, IdenticalFeaturesAreDegenerate) {
  std::vector<Feature<2>> x(5, Feature<2>{1, 1});
  EXPECT_THROW(kmeans<2>(x, 2, 0), DegenerateInput);
}

TEST(KMeans, RecoversBlobsAndGlobalOptimum) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.05);
  const std::array<Feature<2>, 3> centers{{{0, 0}, {5, 0}, {0, 5}}};
  std::vector<Feature<2>> x;
  for (int i = 0; i < 12; ++i) x.push_back({centers[i % 3][0] + n(rng), centers[i % 3][1] + n(rng)});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = kmeans<2>(x, 3, seed);
    for (int i = 0; i < 12; ++i) EXPECT_EQ(r.assignment[i], r.assignment[i % 3]);
    // Exhaustive search over all 3^12 labelings.
    double best = 1e300;
    std::vector<int> a(12);
    for (int code = 0; code < 531441; ++code) {
      int c = code;
      for (int i = 0; i < 12; ++i, c /= 3) a[i] = c % 3;
      double obj = 0;
      for (int k = 0; k < 3; ++k) {
        double sx = 0, sy = 0, cnt = 0;
        for (int i = 0; i < 12; ++i)
          if (a[i] == k) sx += x[i][0], sy += x[i][1], ++cnt;
        if (!cnt) continue;
        for (int i = 0; i < 12; ++i)
          if (a[i] == k) obj += std::pow(x[i][0] - sx / cnt, 2) + std::pow(x[i][1] - sy / cnt, 2);
      }
      best = std::min(best, obj);
    }
    EXPECT_NEAR(r.objective.back(), best, 1e-12);
  }
}

TEST(KMeans, ObjectiveNonIncreasing) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Feature<4>> x(400);
  for (auto& f : x)
    for (auto& v : f) v = u(rng);
  const auto r = kmeans<4>(x, 3, 1);
  for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-12);
}

TEST(ClusterRoles, TieBreaks) {
  std::vector<PixelFeature> cent{{0.5, 0, 0, 0}, {0.1, 0, 0, 0}, {0.9, 0, 0, 0}};
  auto r = assign_cluster_roles({5, 5, 0}, cent);
  EXPECT_EQ(r.nucleus, 1);
  EXPECT_EQ(r.background, 2);
  EXPECT_EQ(r.ignored, 0);
  r = assign_cluster_roles({9, 0, 0}, cent);
  EXPECT_EQ(r.nucleus, 0);
  EXPECT_EQ(r.background, 2);
  std::vector<PixelFeature> same{{0.5, 0, 0, 0}, {0.5, 0, 0, 0}, {0.9, 0, 0, 0}};
  EXPECT_THROW(assign_cluster_roles({3, 3, 0}, same), AmbiguousAssignment);
}

namespace {

struct DiskScene {
  ImageRGB image;
  InstanceLabelMap gt;
  PointSet points;
};

DiskScene disk_scene() {
  DiskScene s{ImageRGB(64, 64, Rgb{0.8, 0.8, 0.8}), InstanceLabelMap(64, 64, 0), {}};
  const PointSet centers{{12, 12}, {12, 40}, {30, 24}, {48, 12}, {50, 48}, {28, 52}};
  int id = 0;
  for (const auto& p : centers) {
    ++id;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (std::hypot(r - p.row, c - p.col) <= 5.0) {
          s.image(r, c) = {0.2, 0.2, 0.2};
          s.gt(r, c) = id;
        }
  }
  s.points = centers;
  return s;
}

}  // namespace

TEST(ClusterLabel, RecoversDarkDisks) {
  const auto s = disk_scene();
  const auto l = cluster_label(s.image, s.points);
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const bool a = l[i] == kNucleus, b = s.gt[i] > 0;
    inter += a && b;
    uni += a || b;
  }
  EXPECT_GE(inter / uni, 0.7);
  for (const auto& p : s.points) EXPECT_EQ(l(int(p.row), int(p.col)), kNucleus);
}

TEST(ClusterLabel, CellsNeverMerge) {
  // Two touching dark blobs; their nucleus sets must stay in their own cells.
  ImageRGB im(20, 30, Rgb{0.8, 0.8, 0.8});
  for (int r = 5; r < 15; ++r)
    for (int c = 5; c < 25; ++c) im(r, c) = {0.2, 0.2, 0.2};
  const PointSet pts{{10, 9}, {10, 20}};
  const auto vp = voronoi_partition(pts, 20, 30);
  const auto l = cluster_label(im, pts, vp);
  BinaryMap nuc(20, 30, 0);
  for (std::size_t i = 0; i < l.size(); ++i) nuc[i] = l[i] == kNucleus;
  const auto cc = connected_components(nuc, Connectivity::kEight);
  for (std::size_t i = 0; i < cc.size(); ++i)
    for (std::size_t j = 0; j < cc.size(); ++j)
      if (cc[i] && cc[i] == cc[j]) { ASSERT_EQ(vp.cell_index[i], vp.cell_index[j]); }
  EXPECT_GE(instance_count(cc), 2);
}
