#include <gtest/gtest.h>

#include <ppseg/crf.hpp>
#include <ppseg/losses.hpp>

#include "oracles.hpp"

using namespace ppseg;

namespace {

TriStateLabelMap random_label(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> u(-1, 1);
  TriStateLabelMap l(h, w);
  for (auto& v : l) v = static_cast<std::int8_t>(u(rng));
  l[0] = kNucleus;
  return l;
}

ProbabilityMap random_prob(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  ProbabilityMap p(h, w);
  for (auto& v : p) v = u(rng);
  return p;
}

template <class F>
double max_rel_fd_error(const ProbabilityMap& p, F&& f, const std::vector<double>& grad) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-6;
    ProbabilityMap a = p, b = p;
    a[i] += h;
    b[i] -= h;
    const double fd = (f(a) - f(b)) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    if (scale > 1e-10) worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST(MaskedCE, Examples) {
  ProbabilityMap p(1, 1, 0.5);
  TriStateLabelMap t(1, 1, kNucleus);
  EXPECT_NEAR(masked_cross_entropy(p, t).loss, std::log(2.0), 1e-15);

  ProbabilityMap q(1, 2);
  q[0] = 1e-7;
  q[1] = 1 - 1e-7;
  TriStateLabelMap l(1, 2);
  l[0] = kBackground;
  l[1] = kNucleus;
  EXPECT_LE(masked_cross_entropy(q, l).loss, 1e-6);

  EXPECT_THROW(masked_cross_entropy(p, TriStateLabelMap(1, 1, kIgnoreLabel)), EmptySupport);
}

TEST(MaskedCE, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_prob(rng, 8, 8);
    const auto l = random_label(rng, 8, 8);
    const auto r = masked_cross_entropy(p, l);
    EXPECT_LE(max_rel_fd_error(p, [&](const ProbabilityMap& x) { return masked_cross_entropy(x, l).loss; }, r.grad), 1e-4);
  }
}

TEST(CombinedCE, Endpoints) {
  std::mt19937_64 rng(2);
  const auto p = random_prob(rng, 6, 6);
  const auto v = random_label(rng, 6, 6), c = random_label(rng, 6, 6);
  const auto a = combined_ce(p, v, c, 1.0), b = masked_cross_entropy(p, v);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_NO_THROW(combined_ce(p, v, TriStateLabelMap(6, 6, kIgnoreLabel), 1.0));
  EXPECT_THROW(combined_ce(p, v, c, 1.5), Error);
}

TEST(CombinedCE, LinearCombination) {
  ProbabilityMap p(1, 2);
  p[0] = std::exp(-1.0);
  p[1] = std::exp(-3.0);
  TriStateLabelMap v(1, 2, kIgnoreLabel), c(1, 2, kIgnoreLabel);
  v[0] = kNucleus;
  c[1] = kNucleus;
  EXPECT_NEAR(combined_ce(p, v, c, 0.5).loss, 2.0, 1e-12);
}

TEST(CombinedCE, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_prob(rng, 8, 8);
    const auto v = random_label(rng, 8, 8), c = random_label(rng, 8, 8);
    const double alpha = 0.05 * t;
    const auto r = combined_ce(p, v, c, alpha);
    EXPECT_LE(max_rel_fd_error(p, [&](const ProbabilityMap& x) { return combined_ce(x, v, c, alpha).loss; }, r.grad), 1e-4);
  }
}

TEST(Affinity, ZeroInZeroOut) {
  std::mt19937_64 rng(4);
  const auto im = oracle::random_image(rng, 6, 6);
  for (auto mode : {AffinityMode::kExact, AffinityMode::kFiltered}) {
    AffinityOperator op(im, CrfParams{}, mode);
    for (double u : op.apply(std::vector<double>(36, 0.0))) EXPECT_EQ(u, 0.0);
  }
}

TEST(Affinity, TwoPixelHandExpansion) {
  ImageRGB im(1, 2);
  im[0] = {0.1, 0.2, 0.3};
  im[1] = {0.3, 0.1, 0.4};
  const CrfParams p = CrfParams::bilateral(9.0, 0.2, 0.001);
  AffinityOperator op(im, p, AffinityMode::kExact);
  const double d2 = 1.0 / 81.0 + (0.04 + 0.01 + 0.01) / 0.04;
  const double w12 = std::exp(-0.5 * d2);
  const auto u = op.apply(std::vector<double>{2.0, 3.0});
  EXPECT_NEAR(u[0], w12 * 3.0, 1e-15);
  EXPECT_NEAR(u[1], w12 * 2.0, 1e-15);
  EXPECT_EQ(op.weight(0, 1), op.weight(1, 0));
  EXPECT_EQ(op.weight(0, 0), 0.0);
}

TEST(Affinity, FilteredAgreesWithExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    const auto im = oracle::random_image(rng, 32, 32);
    std::vector<double> v(im.size());
    for (auto& x : v) x = u(rng);
    AffinityOperator ex(im, CrfParams{}, AffinityMode::kExact);
    AffinityOperator fi(im, CrfParams{}, AffinityMode::kFiltered);
    const auto a = ex.apply(v), b = fi.apply(v);
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i]) > 1e-6) worst = std::max(worst, std::abs(b[i] - a[i]) / std::abs(a[i]));
    EXPECT_LE(worst, 0.05);
  }
}

TEST(Affinity, SpatialOnlyKernelAndMultipleTerms) {
  std::mt19937_64 rng(6);
  const auto im = oracle::random_image(rng, 12, 12);
  CrfParams p;
  p.kernels = {GaussianKernel{1.0, 3.0, 0.3}, GaussianKernel{0.5, 2.0, 0.0}};
  AffinityOperator ex(im, p, AffinityMode::kExact);
  const double w = std::exp(-0.5 * (1.0 / 9.0 + [&] {
                     double s = 0;
                     for (int k = 0; k < 3; ++k) s += std::pow((im[0][k] - im[1][k]) / 0.3, 2);
                     return s;
                   }())) + 0.5 * std::exp(-0.5 * 0.25);
  EXPECT_NEAR(ex.weight(0, 1), w, 1e-15);
  AffinityOperator fi(im, p, AffinityMode::kFiltered);
  std::vector<double> ones(im.size(), 1.0);
  const auto a = ex.apply(ones), b = fi.apply(ones);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i], 0.05 * a[i]);
}

TEST(Affinity, PermutohedralBackendIsUsable) {
  std::mt19937_64 rng(7);
  const auto im = oracle::random_image(rng, 16, 16);
  FilterOptions opt;
  opt.backend = FilterBackend::kPermutohedral;
  AffinityOperator ex(im, CrfParams{}, AffinityMode::kExact);
  AffinityOperator pl(im, CrfParams{}, AffinityMode::kFiltered, opt);
  std::vector<double> ones(im.size(), 1.0);
  const auto a = ex.apply(ones), b = pl.apply(ones);
  double mean_rel = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mean_rel += std::abs(b[i] - a[i]) / a[i] / a.size();
  EXPECT_LE(mean_rel, 0.5);
}

TEST(PairLoss, ConstantLabelsCostNothing) {
  std::mt19937_64 rng(8);
  const auto im = oracle::random_image(rng, 6, 6);
  AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
  EXPECT_NEAR(crf_pair_loss(ProbabilityMap(6, 6, 1.0), op).loss, 0.0, 1e-12);
  EXPECT_EQ(crf_pair_loss(ProbabilityMap(6, 6, 0.0), op).loss, 0.0);
}

TEST(PairLoss, TwoPixels) {
  std::mt19937_64 rng(9);
  const auto im = oracle::random_image(rng, 1, 2);
  AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
  ProbabilityMap y(1, 2);
  y[0] = 1.0;
  y[1] = 0.0;
  EXPECT_NEAR(crf_pair_loss(y, op).loss, op.weight(0, 1), 1e-15);
}

TEST(PairLoss, MatchesDoubleSum) {
  std::mt19937_64 rng(10);
  const auto im = oracle::random_image(rng, 5, 5);
  const auto y = random_prob(rng, 5, 5);
  AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
  double want = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j) want += y[i] * (1 - y[j]) * op.weight(i, j);
  EXPECT_NEAR(crf_pair_loss(y, op).loss, want, 1e-12);
}

TEST(PairLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto im = oracle::random_image(rng, 8, 8);
    const auto y = random_prob(rng, 8, 8);
    AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
    const auto r = crf_pair_loss(y, op);
    EXPECT_LE(max_rel_fd_error(y, [&](const ProbabilityMap& x) { return crf_pair_loss(x, op).loss; }, r.grad), 1e-4);
  }
}

TEST(TotalLoss, BetaZeroIsCombinedCE) {
  std::mt19937_64 rng(12);
  const auto im = oracle::random_image(rng, 6, 6);
  const auto y = random_prob(rng, 6, 6);
  const auto v = random_label(rng, 6, 6), c = random_label(rng, 6, 6);
  AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
  const auto a = crf_total_loss(y, v, c, 0.5, op, 0.0), b = combined_ce(y, v, c, 0.5);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(TotalLoss, PairTermScale) {
  std::mt19937_64 rng(13);
  const auto im = oracle::random_image(rng, 6, 6);
  const auto y = random_prob(rng, 6, 6);
  const auto v = random_label(rng, 6, 6), c = random_label(rng, 6, 6);
  CrfParams mean = CrfParams{}, raw = CrfParams{};
  raw.mean_pair = false;
  AffinityOperator om(im, mean, AffinityMode::kExact), orw(im, raw, AffinityMode::kExact);
  const double ce = combined_ce(y, v, c, 0.5).loss, pair = crf_pair_loss(y, om).loss;
  EXPECT_NEAR(crf_total_loss(y, v, c, 0.5, om, 0.001).loss, ce + 0.001 * pair / 36.0, 1e-12);
  EXPECT_NEAR(crf_total_loss(y, v, c, 0.5, orw, 0.001).loss, ce + 0.001 * pair, 1e-12);
  const auto r = crf_total_loss(y, v, c, 0.5, om, 0.3);
  EXPECT_LE(max_rel_fd_error(y, [&](const ProbabilityMap& x) { return crf_total_loss(x, v, c, 0.5, om, 0.3).loss; }, r.grad), 1e-4);
}

TEST(CrfDefaults, TunedValues) {
  const CrfParams p;
  ASSERT_EQ(p.kernels.size(), 1u);
  EXPECT_EQ(p.kernels[0].sigma_pq, 9.0);
  EXPECT_EQ(p.kernels[0].sigma_rgb, 0.2);
  EXPECT_EQ(p.beta, 0.001);
  const auto mo = CrfParams::bilateral(9.0, 0.1, 0.005);
  EXPECT_EQ(mo.kernels[0].sigma_rgb, 0.1);
  EXPECT_EQ(mo.beta, 0.005);
}

TEST(MeanField, ZeroWeightsGiveUnary) {
  std::mt19937_64 rng(14);
  const auto im = oracle::random_image(rng, 5, 5);
  CrfParams p;
  p.kernels[0].weight = 0.0;
  AffinityOperator op(im, p, AffinityMode::kExact);
  const auto unary = random_prob(rng, 5, 5);
  const auto y = mean_field_refine(ProbabilityMap(5, 5, 0.5), op, unary, 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], unary[i], 1e-12);
}

TEST(MeanField, ZeroIterationsReturnsInput) {
  std::mt19937_64 rng(15);
  const auto im = oracle::random_image(rng, 4, 4);
  AffinityOperator op(im, CrfParams{}, AffinityMode::kExact);
  const auto y0 = random_prob(rng, 4, 4);
  EXPECT_EQ(mean_field_refine(y0, op, y0, 0), y0);
}

TEST(MeanField, SmoothsIsolatedFlips) {
  const ImageRGB im(8, 8, Rgb{0.5, 0.5, 0.5});
  AffinityOperator op(im, CrfParams::bilateral(2.0, 0.2, 0.0), AffinityMode::kExact);
  ProbabilityMap unary(8, 8, 0.8);
  for (int r = 0; r < 8; r += 3)
    for (int c = (r / 3) % 2; c < 8; c += 3) unary(r, c) = 0.3;
  const auto y = mean_field_refine(unary, op, unary, 5);
  for (double v : y) EXPECT_GT(v, 0.5);
}
