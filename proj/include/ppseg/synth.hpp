#ifndef PPSEG_SYNTH_HPP
#define PPSEG_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "components.hpp"
#include "raster.hpp"
#include "rng.hpp"

namespace ppseg {

struct SynthConfig {
  int height = 128;
  int width = 128;
  int min_count = 36;
  int max_count = 44;
  double min_radius = 4.0;       ///< semi-major axis range
  double max_radius = 6.0;
  double min_axis_ratio = 0.7;   ///< minor / major
  double max_axis_ratio = 1.0;
  Rgb nucleus_color{0.35, 0.25, 0.55};
  Rgb background_color{0.85, 0.75, 0.82};
  double color_jitter = 0.05;    ///< per-object uniform shift of each channel
  double noise_std = 0.04;       ///< per-pixel Gaussian noise
  double min_separation = 6.0;   ///< between object centers
  /// Large dark blobs that are not nuclei (debris, pigment).
  int min_clutter = 3;
  int max_clutter = 6;
  double min_clutter_radius = 7.0;
  double max_clutter_radius = 10.0;
  Rgb clutter_color{0.2, 0.1, 0.35};
  std::uint64_t seed = 0;

  void validate() const {
    if (height < 1 || width < 1) throw Error(ErrorKind::kUsage, "SynthConfig: empty image");
    if (min_count < 1 || max_count < min_count) throw Error(ErrorKind::kUsage, "SynthConfig: bad count range");
    if (min_radius < 2.0 || max_radius < min_radius) throw Error(ErrorKind::kUsage, "SynthConfig: radii must be >= 2");
    if (!(min_axis_ratio > 0.0) || max_axis_ratio > 1.0 || max_axis_ratio < min_axis_ratio)
      throw Error(ErrorKind::kUsage, "SynthConfig: bad axis-ratio range");
    if (min_separation < 1.0) throw Error(ErrorKind::kUsage, "SynthConfig: separation must be >= 1");
    if (min_clutter < 0 || max_clutter < min_clutter) throw Error(ErrorKind::kUsage, "SynthConfig: bad clutter range");
    if (max_clutter > 0 && (min_clutter_radius < 1.0 || max_clutter_radius < min_clutter_radius))
      throw Error(ErrorKind::kUsage, "SynthConfig: bad clutter radius range");
    if (color_jitter < 0.0 || noise_std < 0.0) throw Error(ErrorKind::kUsage, "SynthConfig: negative noise");
  }
};

struct SynthSample {
  ImageRGB image;
  InstanceLabelMap instances;
  PointSet centroids;  ///< area centroids, in id order
  PointSet centers;    ///< bounding-box centers, in id order (detection ground truth)
};

inline constexpr int kMaxRejections = 10000;

namespace detail {

struct Ellipse {
  double row, col, a, b, theta;

  bool inside(double r, double c) const {
    const double dr = r - row, dc = c - col;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double u = dc * ct + dr * st, v = -dc * st + dr * ct;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

inline constexpr int kSuper = 4;

/// Fraction of a pixel's 4x4 subsamples inside the ellipse.
inline double coverage(const Ellipse& e, int r, int c) {
  int hits = 0;
  for (int i = 0; i < kSuper; ++i)
    for (int j = 0; j < kSuper; ++j)
      hits += e.inside(r - 0.5 + (i + 0.5) / kSuper, c - 0.5 + (j + 0.5) / kSuper);
  return static_cast<double>(hits) / (kSuper * kSuper);
}

}  // namespace detail

/// Draws non-overlapping ellipses (a nucleus owns the pixels whose centers it
/// covers), blends partial coverage into the neighboring background pixels,
/// adds clamped Gaussian noise. Fully determined by `cfg.seed`.
inline SynthSample generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int h = cfg.height, w = cfg.width;
  const int count = cfg.min_count + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_count - cfg.min_count + 1)));
  const int clutter = cfg.min_clutter + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_clutter - cfg.min_clutter + 1)));

  Raster<std::int32_t> owner(h, w, 0);  // >0 nucleus id, <0 clutter id
  std::vector<detail::Ellipse> shapes;
  std::vector<Rgb> colors;
  int rejections = 0;

  auto jittered = [&](const Rgb& base) {
    Rgb c = base;
    for (auto& v : c) v = std::clamp(v + cfg.color_jitter * rng.uniform(-1.0, 1.0), 0.0, 1.0);
    return c;
  };

  auto place = [&](double rmin, double rmax, double ratio_min, double ratio_max, int id) {
    for (;;) {
      const double a = rng.uniform(rmin, rmax);
      const double b = a * rng.uniform(ratio_min, ratio_max);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double row = rng.uniform(0.0, h - 1.0), col = rng.uniform(0.0, w - 1.0);
      const detail::Ellipse e{row, col, a, b, theta};
      bool ok = true;
      for (const auto& s : shapes)
        if (std::hypot(s.row - row, s.col - col) < cfg.min_separation) ok = false;
      std::vector<std::size_t> pix;
      const int r0 = std::max(0, static_cast<int>(std::floor(row - a))), r1 = std::min(h - 1, static_cast<int>(std::ceil(row + a)));
      const int c0 = std::max(0, static_cast<int>(std::floor(col - a))), c1 = std::min(w - 1, static_cast<int>(std::ceil(col + a)));
      for (int r = r0; ok && r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          if (e.inside(r, c)) {
            if (owner(r, c) != 0) {
              ok = false;
              break;
            }
            pix.push_back(owner.index(r, c));
          }
      if (ok && !pix.empty()) {
        for (auto i : pix) owner[i] = id;
        shapes.push_back(e);
        return;
      }
      if (++rejections >= kMaxRejections)
        throw PackingFailure("generate: could not place objects after 10000 rejections");
    }
  };

  for (int k = 1; k <= clutter; ++k) {
    place(cfg.min_clutter_radius, cfg.max_clutter_radius, 0.6, 1.0, -k);
    colors.push_back(jittered(cfg.clutter_color));
  }
  for (int k = 1; k <= count; ++k) {
    place(cfg.min_radius, cfg.max_radius, cfg.min_axis_ratio, cfg.max_axis_ratio, k);
    colors.push_back(jittered(cfg.nucleus_color));
  }
  auto shape_of = [&](int id) -> std::size_t {
    return id < 0 ? static_cast<std::size_t>(-id - 1) : static_cast<std::size_t>(clutter + id - 1);
  };

  SynthSample s;
  s.image = ImageRGB(h, w, cfg.background_color);
  s.instances = InstanceLabelMap(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int id = owner(r, c);
      if (id != 0) {
        s.image(r, c) = colors[shape_of(id)];
        if (id > 0) s.instances(r, c) = id;
        continue;
      }
      // Anti-aliased rim: blend every object that partially covers the pixel.
      Rgb px = cfg.background_color;
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        const auto& e = shapes[k];
        if (std::abs(e.row - r) > e.a + 1.0 || std::abs(e.col - c) > e.a + 1.0) continue;
        const double f = detail::coverage(e, r, c);
        for (int ch = 0; ch < 3; ++ch) px[ch] = (1.0 - f) * px[ch] + f * colors[k][ch];
      }
      s.image(r, c) = px;
    }
  if (cfg.noise_std > 0.0)
    for (auto& px : s.image)
      for (auto& v : px) v = std::clamp(v + cfg.noise_std * rng.normal(), 0.0, 1.0);

  // Ids in raster-scan order of first pixel.
  std::vector<std::int32_t> remap(static_cast<std::size_t>(count) + 1, 0);
  std::int32_t next = 0;
  for (auto& id : s.instances) {
    if (id == 0) continue;
    auto& m = remap[static_cast<std::size_t>(id)];
    if (m == 0) m = ++next;
    id = m;
  }
  s.centroids = component_centroids(s.instances);
  s.centers = bounding_box_centers(s.instances);
  return s;
}

/// Uniform random subset of round(ratio * N) points (at least one), in the
/// original order.
inline PointSet sample_partial_points(const PointSet& points, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorKind::kUsage, "sample_partial_points: ratio not in (0,1]");
  if (points.empty()) return {};
  const std::size_t n = points.size();
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n))), 1, n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  PointSet out;
  out.reserve(k);
  for (auto i : idx) out.push_back(points[i]);
  return out;
}

}  // namespace ppseg

#endif  // PPSEG_SYNTH_HPP
