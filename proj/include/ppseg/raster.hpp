#ifndef PPSEG_RASTER_HPP
#define PPSEG_RASTER_HPP

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace ppseg {

/// Dense row-major 2D array. `Tag` distinguishes rasters that share an element
/// type but carry different meaning (a probability map is not a distance map).
template <class T, class Tag = void>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
    assert(height >= 0 && width >= 0);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  bool contains(int r, int c) const noexcept {
    return r >= 0 && c >= 0 && r < height_ && c < width_;
  }
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c);
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <class U, class OtherTag>
  bool same_shape(const Raster<U, OtherTag>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  /// Reinterpret the same pixels under another tag.
  template <class OtherTag>
  Raster<T, OtherTag> retag() const {
    Raster<T, OtherTag> out(height_, width_);
    std::copy(data_.begin(), data_.end(), out.begin());
    return out;
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Rgb = std::array<double, 3>;

struct ColorTag {};
struct BinaryTag {};
struct DistanceTag {};
struct InstanceTag {};
struct MaskTag {};
struct ProbabilityTag {};
struct TriStateTag {};

/// Color image, channels in [0,1].
using ImageRGB = Raster<Rgb, ColorTag>;
/// Foreground = 1, background = 0.
using BinaryMap = Raster<std::uint8_t, BinaryTag>;
/// Euclidean distance in pixels.
using DistanceMap = Raster<double, DistanceTag>;
/// 0 = background, k >= 1 = instance id.
using InstanceLabelMap = Raster<std::int32_t, InstanceTag>;
/// Regression target in [0,1], kIgnore where unlabeled.
using RegressionMask = Raster<double, MaskTag>;
/// Per-pixel nucleus probability in [0,1].
using ProbabilityMap = Raster<double, ProbabilityTag>;
/// kBackground / kNucleus / kIgnoreLabel.
using TriStateLabelMap = Raster<std::int8_t, TriStateTag>;

inline constexpr double kIgnore = -1.0;
inline constexpr std::int8_t kBackground = 0;
inline constexpr std::int8_t kNucleus = 1;
inline constexpr std::int8_t kIgnoreLabel = -1;

/// (row, col) in pixel units; real-valued coordinates are allowed.
struct Point {
  double row = 0.0;
  double col = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using PointSet = std::vector<Point>;

/// Nearest pixel to a real-valued point, clamped into the raster.
inline std::pair<int, int> to_pixel(const Point& p, int height, int width) {
  int r = static_cast<int>(std::lround(p.row));
  int c = static_cast<int>(std::lround(p.col));
  r = r < 0 ? 0 : (r >= height ? height - 1 : r);
  c = c < 0 ? 0 : (c >= width ? width - 1 : c);
  return {r, c};
}

inline double luminance(const Rgb& px) { return (px[0] + px[1] + px[2]) / 3.0; }

template <class A, class TA, class B, class TB>
void require_same_shape(const Raster<A, TA>& a, const Raster<B, TB>& b, const char* where) {
  if (!a.same_shape(b)) throw ShapeMismatch(where);
}

}  // namespace ppseg

#endif  // PPSEG_RASTER_HPP
