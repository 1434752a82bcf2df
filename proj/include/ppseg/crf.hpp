#ifndef PPSEG_CRF_HPP
#define PPSEG_CRF_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "bilateral_grid.hpp"
#include "losses.hpp"
#include "permutohedral.hpp"
#include "raster.hpp"

namespace ppseg {

/// One Gaussian kernel of the affinity. A non-positive sigma_rgb drops the
/// color term, giving a purely spatial smoothness kernel.
struct GaussianKernel {
  double weight = 1.0;
  double sigma_pq = 9.0;
  double sigma_rgb = 0.2;
};

/// Dense-CRF parameters. The default is a single bilateral kernel with the
/// lung-cancer tuned bandwidths. With `mean_pair` the training loss uses the
/// pairwise term divided by the pixel count, on the same per-pixel scale as
/// the cross entropy.
struct CrfParams {
  std::vector<GaussianKernel> kernels{GaussianKernel{}};
  double beta = 0.001;
  bool mean_pair = true;

  static CrfParams bilateral(double sigma_pq, double sigma_rgb, double beta) {
    return CrfParams{{GaussianKernel{1.0, sigma_pq, sigma_rgb}}, beta, true};
  }

  void validate() const {
    if (kernels.empty()) throw Error(ErrorKind::kUsage, "CrfParams: need at least one kernel");
    for (const auto& k : kernels)
      if (!(k.sigma_pq > 0.0)) throw Error(ErrorKind::kUsage, "CrfParams: sigma_pq must be > 0");
    if (!(beta >= 0.0)) throw Error(ErrorKind::kUsage, "CrfParams: beta must be >= 0");
  }
};

enum class AffinityMode { kExact, kFiltered };

/// Lattice used by filtered mode. kAuto picks the dense grid unless it would
/// exceed the cell budget, then falls back to the sparse permutohedral lattice.
enum class FilterBackend { kAuto, kGrid, kPermutohedral };

struct FilterOptions {
  FilterBackend backend = FilterBackend::kAuto;
  double grid_spacing = 0.7;             ///< in bandwidth units
  std::size_t max_grid_cells = 8u << 20;
};

/// The symmetric affinity W_ij = sum_m w_m exp(-|f~i - f~j|^2 / 2) over
/// bilateral features f~ = (p/s_pq, q/s_pq, r/s_rgb, g/s_rgb, b/s_rgb), with
/// the diagonal excluded. Immutable after construction.
class AffinityOperator {
 public:
  AffinityOperator(const ImageRGB& image, CrfParams params, AffinityMode mode,
                   FilterOptions options = {})
      : height_(image.height()), width_(image.width()), params_(std::move(params)), mode_(mode) {
    params_.validate();
    const std::size_t n = image.size();
    for (const auto& k : params_.kernels) {
      Term term;
      term.weight = k.weight;
      term.spatial_only = !(k.sigma_rgb > 0.0);
      if (term.spatial_only) {
        std::vector<std::array<double, 2>> f(n);
        for (int r = 0; r < height_; ++r)
          for (int c = 0; c < width_; ++c)
            f[image.index(r, c)] = {r / k.sigma_pq, c / k.sigma_pq};
        build<2>(term, std::move(f), options);
      } else {
        std::vector<std::array<double, 5>> f(n);
        for (int r = 0; r < height_; ++r)
          for (int c = 0; c < width_; ++c) {
            const auto& px = image(r, c);
            f[image.index(r, c)] = {r / k.sigma_pq, c / k.sigma_pq, px[0] / k.sigma_rgb,
                                    px[1] / k.sigma_rgb, px[2] / k.sigma_rgb};
          }
        build<5>(term, std::move(f), options);
      }
      terms_.push_back(std::move(term));
    }
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  AffinityMode mode() const noexcept { return mode_; }
  const CrfParams& params() const noexcept { return params_; }

  /// Single entry W_ij (exact), i != j.
  double weight(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    double w = 0.0;
    for (const auto& t : terms_) w += t.weight * std::visit([&](const auto& f) {
      return std::exp(-0.5 * sqdist(f[i], f[j]));
    }, t.features);
    return w;
  }

  /// u_i = sum_{j != i} W_ij v_j.
  std::vector<double> apply(std::span<const double> v) const {
    if (v.size() != size()) throw ShapeMismatch("affinity_apply");
    std::vector<double> u(size(), 0.0);
    std::vector<double> part(size());
    for (const auto& t : terms_) {
      if (mode_ == AffinityMode::kExact)
        std::visit([&](const auto& f) { exact_apply(f, v, part); }, t.features);
      else
        filtered_apply(t, v, part);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += t.weight * part[i];
    }
    return u;
  }

 private:
  template <int D>
  using Features = std::vector<std::array<double, D>>;

  struct Term {
    double weight = 1.0;
    bool spatial_only = false;
    std::variant<Features<2>, Features<5>> features;
    std::shared_ptr<const void> lattice;  // BilateralGrid<D> or PermutohedralLattice<D>
    bool use_grid = true;
  };

  template <std::size_t D>
  static double sqdist(const std::array<double, D>& a, const std::array<double, D>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
  }

  template <int D>
  void build(Term& term, Features<D> f, const FilterOptions& options) {
    if (mode_ == AffinityMode::kFiltered) {
      bool grid = options.backend != FilterBackend::kPermutohedral;
      if (options.backend == FilterBackend::kAuto)
        grid = bilateral_grid_cells<D>(f, options.grid_spacing) <= options.max_grid_cells;
      term.use_grid = grid;
      if (grid)
        term.lattice = std::make_shared<const BilateralGrid<D>>(f, options.grid_spacing);
      else
        term.lattice = std::make_shared<const PermutohedralLattice<D>>(f);
    }
    term.features = std::move(f);
  }

  template <std::size_t D>
  void exact_apply(const std::vector<std::array<double, D>>& f, std::span<const double> v,
                   std::vector<double>& out) const {
    const std::size_t n = f.size();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        s += std::exp(-0.5 * sqdist(f[i], f[j])) * v[j];
      }
      out[i] = s;
    }
  }

  template <int D>
  void filtered_apply_d(const Term& t, std::span<const double> v, std::vector<double>& out) const {
    if (t.use_grid) {
      const auto& g = *static_cast<const BilateralGrid<D>*>(t.lattice.get());
      g.filter(v, out);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= g.self_response(i) * v[i];
    } else {
      const auto& l = *static_cast<const PermutohedralLattice<D>*>(t.lattice.get());
      l.filter(v, out);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= v[i];
    }
  }

  void filtered_apply(const Term& t, std::span<const double> v, std::vector<double>& out) const {
    if (t.spatial_only)
      filtered_apply_d<2>(t, v, out);
    else
      filtered_apply_d<5>(t, v, out);
  }

  int height_ = 0;
  int width_ = 0;
  CrfParams params_;
  AffinityMode mode_;
  std::vector<Term> terms_;
};

/// Relaxed Potts pairwise loss sum_{i != j} y_i (1 - y_j) W_ij and its
/// gradient u - 2 W y, where u = W 1. `ones_response` may carry a cached
/// W 1 for repeated evaluation on the same image.
inline LossResult crf_pair_loss(const ProbabilityMap& prob, const AffinityOperator& op,
                                const std::vector<double>* ones_response = nullptr) {
  if (prob.size() != op.size()) throw ShapeMismatch("crf_pair_loss");
  std::vector<double> ones_local;
  if (ones_response == nullptr) {
    ones_local = op.apply(std::vector<double>(prob.size(), 1.0));
    ones_response = &ones_local;
  }
  const auto& u = *ones_response;
  const std::vector<double> wy = op.apply(prob.pixels());
  LossResult out;
  out.grad.resize(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    out.loss += prob[i] * (u[i] - wy[i]);
    out.grad[i] = u[i] - 2.0 * wy[i];
  }
  return out;
}

/// Cross-entropy term plus beta times the relaxed pairwise term (divided by
/// the pixel count when the operator's params set `mean_pair`).
inline LossResult crf_total_loss(const ProbabilityMap& prob, const TriStateLabelMap& vor,
                                 const TriStateLabelMap& cluster, double alpha,
                                 const AffinityOperator& op, double beta,
                                 const std::vector<double>* ones_response = nullptr) {
  LossResult out = combined_ce(prob, vor, cluster, alpha);
  if (beta == 0.0) return out;
  const LossResult pair = crf_pair_loss(prob, op, ones_response);
  const double scale =
      op.params().mean_pair ? beta / static_cast<double>(prob.size()) : beta;
  out.loss += scale * pair.loss;
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += scale * pair.grad[i];
  return out;
}

/// Binary mean-field inference with Potts compatibility. `unary` holds the
/// per-pixel nucleus probability defining the unary energies -log p; `prob`
/// is the initial marginal. Each iteration sets
///   y_i <- softmax(-U_i(1) - m_i(1), -U_i(0) - m_i(0)),
/// with messages m_i(1) = sum_j W_ij (1 - y_j) and m_i(0) = sum_j W_ij y_j.
inline ProbabilityMap mean_field_refine(const ProbabilityMap& prob, const AffinityOperator& op,
                                        const ProbabilityMap& unary, int iterations) {
  require_same_shape(prob, unary, "mean_field_refine");
  if (prob.size() != op.size()) throw ShapeMismatch("mean_field_refine");
  ProbabilityMap y = prob;
  if (iterations <= 0) return y;
  const std::vector<double> u = op.apply(std::vector<double>(prob.size(), 1.0));
  for (int it = 0; it < iterations; ++it) {
    const std::vector<double> wy = op.apply(y.pixels());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double p = std::clamp(unary[i], kLogEpsilon, 1.0 - kLogEpsilon);
      const double e1 = std::log(p) - (u[i] - wy[i]);
      const double e0 = std::log(1.0 - p) - wy[i];
      y[i] = 1.0 / (1.0 + std::exp(e0 - e1));
    }
  }
  return y;
}

}  // namespace ppseg

#endif  // PPSEG_CRF_HPP
