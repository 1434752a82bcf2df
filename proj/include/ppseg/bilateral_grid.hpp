#ifndef PPSEG_BILATERAL_GRID_HPP
#define PPSEG_BILATERAL_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace ppseg {

/// Dense D-dimensional lattice for the Gauss transform
///   out_i = sum_j exp(-|fi - fj|^2 / 2) in_j
/// with features already divided by their bandwidths.
///
/// Values are splatted with quadratic B-spline weights, blurred with a
/// separable sampled Gaussian, and sliced with the same weights. The B-spline
/// adds a position-independent variance of h^2/4 per side, so the blur uses
/// variance 1 - h^2/2 and the composite kernel matches the target's first two
/// moments everywhere. Spacing h is in bandwidth units (h < sqrt(2)).
template <int D>
class BilateralGrid {
 public:
  static constexpr int kTaps = 3;

  BilateralGrid(std::span<const std::array<double, D>> features, double spacing)
      : n_points_(features.size()) {
    for (int k = 0; k < D; ++k) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& f : features) {
        lo = std::min(lo, f[k]);
        hi = std::max(hi, f[k]);
      }
      if (features.empty()) lo = hi = 0.0;
      h_[k] = spacing;
      lo_[k] = lo - spacing;
      dims_[k] = static_cast<int>(std::lround((hi - lo_[k]) / spacing)) + 2;
    }
    total_ = 1;
    for (int k = D - 1; k >= 0; --k) {
      stride_[k] = total_;
      total_ *= static_cast<std::size_t>(dims_[k]);
    }

    norm_ = 1.0;
    for (int k = 0; k < D; ++k) {
      const double s = std::sqrt(1.0 / (h_[k] * h_[k]) - 0.5);
      radius_[k] = static_cast<int>(std::ceil(4.0 * s));
      kernel_[k].resize(static_cast<std::size_t>(2 * radius_[k] + 1));
      double mass = 0.0;
      for (int i = -radius_[k]; i <= radius_[k]; ++i) {
        const double v = std::exp(-0.5 * i * i / (s * s));
        kernel_[k][static_cast<std::size_t>(i + radius_[k])] = v;
        mass += v;
      }
      // Scale so a uniform density maps to the continuous Gaussian mass.
      norm_ *= std::sqrt(2.0 * std::numbers::pi) / (mass * h_[k]);
    }

    base_.resize(n_points_);
    weights_.resize(n_points_);
    self_.resize(n_points_);
    for (std::size_t p = 0; p < n_points_; ++p) {
      std::size_t base = 0;
      double self = norm_;
      for (int k = 0; k < D; ++k) {
        const double x = (features[p][k] - lo_[k]) / h_[k];
        const int b = static_cast<int>(std::lround(x));
        const double t = x - b;
        auto& w = weights_[p][k];
        w = {0.5 * (0.5 - t) * (0.5 - t), 0.75 - t * t, 0.5 * (0.5 + t) * (0.5 + t)};
        base += static_cast<std::size_t>(b - 1) * stride_[k];
        double s = 0.0;
        for (int a = 0; a < kTaps; ++a)
          for (int c = 0; c < kTaps; ++c)
            s += w[a] * w[c] * kernel_[k][static_cast<std::size_t>(radius_[k] + std::abs(a - c))];
        self *= s;
      }
      base_[p] = base;
      self_[p] = self;
    }
  }

  std::size_t cell_count() const noexcept { return total_; }

  /// Response of point i to itself; subtract self_response(i) * in_i to
  /// exclude the diagonal consistently with the approximation.
  double self_response(std::size_t i) const { return self_[i]; }

  void filter(std::span<const double> in, std::span<double> out) const {
    std::vector<double> grid(total_, 0.0), tmp(total_, 0.0);
    for (std::size_t p = 0; p < n_points_; ++p)
      visit_support(p, [&](std::size_t idx, double w) { grid[idx] += w * in[p]; });
    for (int k = 0; k < D; ++k) {
      blur_axis(k, grid, tmp);
      std::swap(grid, tmp);
    }
    for (std::size_t p = 0; p < n_points_; ++p) {
      double s = 0.0;
      visit_support(p, [&](std::size_t idx, double w) { s += w * grid[idx]; });
      out[p] = s * norm_;
    }
  }

 private:
  template <class Fn>
  void visit_support(std::size_t p, Fn&& fn) const {
    visit_dim<0>(base_[p], 1.0, weights_[p], fn);
  }

  template <int K, class Fn>
  void visit_dim(std::size_t idx, double w, const std::array<std::array<double, kTaps>, D>& wt,
                 Fn& fn) const {
    for (int a = 0; a < kTaps; ++a) {
      const std::size_t i = idx + static_cast<std::size_t>(a) * stride_[K];
      const double ww = w * wt[K][static_cast<std::size_t>(a)];
      if constexpr (K + 1 == D)
        fn(i, ww);
      else
        visit_dim<K + 1>(i, ww, wt, fn);
    }
  }

  void blur_axis(int k, const std::vector<double>& src, std::vector<double>& dst) const {
    const std::size_t inner = stride_[k];
    const std::size_t n = static_cast<std::size_t>(dims_[k]);
    const std::size_t outer = total_ / (inner * n);
    const int r = radius_[k];
    const auto& kern = kernel_[k];
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t off = o * n * inner;
      for (std::size_t i = 0; i < n; ++i) {
        double* d = &dst[off + i * inner];
        const std::size_t j0 = i >= static_cast<std::size_t>(r) ? i - r : 0;
        const std::size_t j1 = std::min(n - 1, i + static_cast<std::size_t>(r));
        for (std::size_t j = j0; j <= j1; ++j) {
          const double kv = kern[j + r - i];
          const double* s = &src[off + j * inner];
          for (std::size_t q = 0; q < inner; ++q) d[q] += kv * s[q];
        }
      }
    }
  }

  std::size_t n_points_;
  std::array<double, D> h_{};
  std::array<double, D> lo_{};
  std::array<int, D> dims_{};
  std::array<std::size_t, D> stride_{};
  std::size_t total_ = 0;
  std::array<int, D> radius_{};
  std::array<std::vector<double>, D> kernel_;
  double norm_ = 1.0;
  std::vector<std::size_t> base_;
  std::vector<std::array<std::array<double, kTaps>, D>> weights_;
  std::vector<double> self_;
};

/// Cell count a grid would allocate for the given features and spacing.
template <int D>
std::size_t bilateral_grid_cells(std::span<const std::array<double, D>> features, double spacing) {
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& f : features) {
      lo = std::min(lo, f[k]);
      hi = std::max(hi, f[k]);
    }
    if (features.empty()) lo = hi = 0.0;
    total *= static_cast<std::size_t>(std::lround((hi - lo + spacing) / spacing) + 2);
  }
  return total;
}

}  // namespace ppseg

#endif  // PPSEG_BILATERAL_GRID_HPP
