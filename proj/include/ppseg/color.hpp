#ifndef PPSEG_COLOR_HPP
#define PPSEG_COLOR_HPP

#include <algorithm>
#include <array>
#include <cmath>

#include "raster.hpp"

namespace ppseg {

/// Per-channel mean and standard deviation in the l-alpha-beta space.
struct ColorStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

namespace color {

using Mat3 = std::array<std::array<double, 3>, 3>;

// RGB -> LMS cone response (Reinhard et al., 2001).
inline constexpr Mat3 kRgbToLms = {{{0.3811, 0.5783, 0.0402},
                                    {0.1967, 0.7244, 0.0782},
                                    {0.0241, 0.1288, 0.8444}}};

constexpr Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

inline constexpr Mat3 kLmsToRgb = inverse(kRgbToLms);

// Floor applied to LMS before the logarithm (pure black has no log).
inline constexpr double kLmsFloor = 1e-6;

inline std::array<double, 3> mat_vec(const Mat3& m, const std::array<double, 3>& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

/// RGB in [0,1] -> decorrelated l-alpha-beta.
inline std::array<double, 3> rgb_to_lab(const Rgb& rgb) {
  auto lms = mat_vec(kRgbToLms, rgb);
  for (auto& x : lms) x = std::log10(std::max(x, kLmsFloor));
  const double s3 = 1.0 / std::sqrt(3.0), s6 = 1.0 / std::sqrt(6.0), s2 = 1.0 / std::sqrt(2.0);
  return {s3 * (lms[0] + lms[1] + lms[2]), s6 * (lms[0] + lms[1] - 2.0 * lms[2]),
          s2 * (lms[0] - lms[1])};
}

inline Rgb lab_to_rgb(const std::array<double, 3>& lab) {
  const double a = lab[0] * std::sqrt(3.0) / 3.0;
  const double b = lab[1] * std::sqrt(6.0) / 6.0;
  const double c = lab[2] * std::sqrt(2.0) / 2.0;
  std::array<double, 3> lms = {a + b + c, a + b - c, a - 2.0 * b};
  for (auto& x : lms) x = std::pow(10.0, x);
  return mat_vec(kLmsToRgb, lms);
}

}  // namespace color

inline ColorStats compute_color_stats(const ImageRGB& image) {
  if (image.empty()) throw DegenerateImage("compute_color_stats: empty image");
  ColorStats s;
  const double n = static_cast<double>(image.size());
  for (const auto& px : image) {
    const auto lab = color::rgb_to_lab(px);
    for (int k = 0; k < 3; ++k) s.mean[k] += lab[k];
  }
  for (auto& m : s.mean) m /= n;
  for (const auto& px : image) {
    const auto lab = color::rgb_to_lab(px);
    for (int k = 0; k < 3; ++k) s.stddev[k] += (lab[k] - s.mean[k]) * (lab[k] - s.mean[k]);
  }
  for (auto& v : s.stddev) v = std::sqrt(v / n);
  for (int k = 0; k < 3; ++k)
    if (!(s.stddev[k] > 1e-12)) throw DegenerateImage("compute_color_stats");
  return s;
}

/// Reinhard transfer: match the image's lab moments to `reference`, then
/// clamp back into [0,1].
inline ImageRGB reinhard_normalize(const ImageRGB& image, const ColorStats& reference) {
  for (double sd : reference.stddev)
    if (!(sd > 0.0)) throw DegenerateImage("reinhard_normalize: reference");
  const ColorStats src = compute_color_stats(image);
  ImageRGB out(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) {
    auto lab = color::rgb_to_lab(image[i]);
    for (int k = 0; k < 3; ++k)
      lab[k] = (lab[k] - src.mean[k]) * (reference.stddev[k] / src.stddev[k]) + reference.mean[k];
    auto rgb = color::lab_to_rgb(lab);
    for (auto& v : rgb) v = std::clamp(v, 0.0, 1.0);
    out[i] = rgb;
  }
  return out;
}

}  // namespace ppseg

#endif  // PPSEG_COLOR_HPP
