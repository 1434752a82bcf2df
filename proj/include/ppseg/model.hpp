#ifndef PPSEG_MODEL_HPP
#define PPSEG_MODEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "raster.hpp"
#include "rng.hpp"

namespace ppseg {

inline constexpr int kFeatureCount = 9;
inline constexpr int kFeatureWindow = 5;

using PixelVector = std::array<double, kFeatureCount>;
struct FeatureTag {};
using FeatureMap = Raster<PixelVector, FeatureTag>;

/// Per-pixel features: (r, g, b, 5x5 mean r, g, b, 5x5 std of luminance,
/// row / (H-1), col / (W-1)). Windows replicate edge pixels at the border.
inline FeatureMap featurize(const ImageRGB& image) {
  const int h = image.height(), w = image.width();
  const int half = kFeatureWindow / 2;
  const double inv_n = 1.0 / (kFeatureWindow * kFeatureWindow);
  FeatureMap out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::array<double, 3> sum{};
      double lsum = 0.0, lsq = 0.0;
      for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
          const auto& px = image(std::clamp(r + dr, 0, h - 1), std::clamp(c + dc, 0, w - 1));
          for (int k = 0; k < 3; ++k) sum[k] += px[k];
          const double l = luminance(px);
          lsum += l;
          lsq += l * l;
        }
      const double lmean = lsum * inv_n;
      auto& f = out(r, c);
      const auto& px = image(r, c);
      f[0] = px[0];
      f[1] = px[1];
      f[2] = px[2];
      for (int k = 0; k < 3; ++k) f[3 + k] = sum[k] * inv_n;
      f[6] = std::sqrt(std::max(0.0, lsq * inv_n - lmean * lmean));
      f[7] = h > 1 ? static_cast<double>(r) / (h - 1) : 0.0;
      f[8] = w > 1 ? static_cast<double>(c) / (w - 1) : 0.0;
    }
  return out;
}

/// Two-layer perceptron 9 -> H (tanh) -> 1 (sigmoid). Parameters live in one
/// flat vector laid out as [W1 (H x 9, row-major), b1 (H), w2 (H), b2].
class PixelModel {
 public:
  PixelModel() : PixelModel(16) {}
  explicit PixelModel(int hidden)
      : hidden_(hidden), params_(static_cast<std::size_t>(hidden) * (kFeatureCount + 2) + 1, 0.0) {
    if (hidden < 1) throw Error(ErrorKind::kUsage, "PixelModel: hidden size must be >= 1");
  }

  /// Uniform weights in +-1/sqrt(fan_in), zero biases.
  static PixelModel initialized(int hidden, std::uint64_t seed) {
    PixelModel m(hidden);
    Rng rng(seed);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(kFeatureCount));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& x : m.w1()) x = rng.uniform(-a1, a1);
    for (double& x : m.w2()) x = rng.uniform(-a2, a2);
    return m;
  }

  int hidden() const noexcept { return hidden_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::span<double> w1() noexcept { return params().subspan(0, w1_size()); }
  std::span<double> b1() noexcept { return params().subspan(w1_size(), hidden_); }
  std::span<double> w2() noexcept { return params().subspan(w1_size() + hidden_, hidden_); }
  double& b2() noexcept { return params_.back(); }
  std::span<const double> w1() const noexcept { return params().subspan(0, w1_size()); }
  std::span<const double> b1() const noexcept { return params().subspan(w1_size(), hidden_); }
  std::span<const double> w2() const noexcept {
    return params().subspan(w1_size() + hidden_, hidden_);
  }
  double b2() const noexcept { return params_.back(); }

  /// Output for one feature vector; `act` receives the hidden activations.
  double predict(const PixelVector& x, double* act) const {
    const auto W1 = w1();
    const auto B1 = b1();
    const auto W2 = w2();
    double o = b2();
    for (int j = 0; j < hidden_; ++j) {
      double z = B1[j];
      const double* row = &W1[static_cast<std::size_t>(j) * kFeatureCount];
      for (int k = 0; k < kFeatureCount; ++k) z += row[k] * x[k];
      const double a = std::tanh(z);
      if (act) act[j] = a;
      o += W2[j] * a;
    }
    return 1.0 / (1.0 + std::exp(-o));
  }

  friend bool operator==(const PixelModel&, const PixelModel&) = default;

 private:
  std::size_t w1_size() const noexcept { return static_cast<std::size_t>(hidden_) * kFeatureCount; }

  int hidden_;
  std::vector<double> params_;
};

/// Per-pixel probabilities. When `act` is given it receives the hidden
/// activations (pixel-major), which backward() can reuse.
inline ProbabilityMap forward(const PixelModel& model, const FeatureMap& features,
                              std::vector<double>* act = nullptr) {
  ProbabilityMap out(features.height(), features.width());
  const auto hn = static_cast<std::size_t>(model.hidden());
  if (act) act->resize(features.size() * hn);
  for (std::size_t i = 0; i < features.size(); ++i)
    out[i] = model.predict(features[i], act ? act->data() + i * hn : nullptr);
  return out;
}

/// Gradient of sum_i upstream_i * y_i with respect to the flat parameters.
/// `act` may carry the activations from forward() on the same inputs.
inline std::vector<double> backward(const PixelModel& model, const FeatureMap& features,
                                    std::span<const double> upstream,
                                    const std::vector<double>* act = nullptr) {
  if (upstream.size() != features.size()) throw ShapeMismatch("backward");
  const int hn = model.hidden();
  const auto hs = static_cast<std::size_t>(hn);
  if (act && act->size() != features.size() * hs) throw ShapeMismatch("backward: activations");
  const auto W2 = model.w2();
  std::vector<double> grad(model.params().size(), 0.0);
  double* gw1 = grad.data();
  double* gb1 = gw1 + static_cast<std::size_t>(hn) * kFeatureCount;
  double* gw2 = gb1 + hn;
  double& gb2 = grad.back();
  std::vector<double> local(hs);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (upstream[i] == 0.0) continue;
    const auto& x = features[i];
    const double* a = local.data();
    double y;
    if (act) {
      a = act->data() + i * hs;
      double o = model.b2();
      for (int j = 0; j < hn; ++j) o += W2[j] * a[j];
      y = 1.0 / (1.0 + std::exp(-o));
    } else {
      y = model.predict(x, local.data());
    }
    const double d_o = upstream[i] * y * (1.0 - y);
    gb2 += d_o;
    for (int j = 0; j < hn; ++j) {
      gw2[j] += d_o * a[j];
      const double dz = d_o * W2[j] * (1.0 - a[j] * a[j]);
      gb1[j] += dz;
      double* row = gw1 + static_cast<std::size_t>(j) * kFeatureCount;
      for (int k = 0; k < kFeatureCount; ++k) row[k] += dz * x[k];
    }
  }
  return grad;
}

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<double> params, AdamState& state, std::span<const double> grad,
                      const AdamConfig& cfg) {
  if (state.m.size() != params.size() || grad.size() != params.size())
    throw ShapeMismatch("adam_step");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grad[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
    const double mh = state.m[k] / c1;
    const double vh = state.v[k] / c2;
    params[k] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
  }
}

}  // namespace ppseg

#endif  // PPSEG_MODEL_HPP
