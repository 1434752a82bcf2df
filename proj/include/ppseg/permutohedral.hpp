#ifndef PPSEG_PERMUTOHEDRAL_HPP
#define PPSEG_PERMUTOHEDRAL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <span>
#include <vector>

namespace ppseg {

/// Sparse permutohedral lattice (Adams, Baek & Davis 2010) for Gaussian
/// filtering in D dimensions. Features are expected pre-divided by their
/// bandwidths, so the target kernel is exp(-|fi - fj|^2 / 2). The lattice is
/// built once per feature set and can then filter any number of signals.
///
/// Output is scaled to approximate the unnormalized Gauss transform
/// sum_j exp(-|fi - fj|^2 / 2) v_j, self term included.
template <int D>
class PermutohedralLattice {
 public:
  using Key = std::array<std::int16_t, D>;

  explicit PermutohedralLattice(std::span<const std::array<double, D>> features)
      : n_(features.size()),
        offsets_(n_ * (D + 1)),
        weights_(n_ * (D + 1)) {
    const double inv_std = std::sqrt(2.0 / 3.0) * (D + 1);
    std::array<double, D> scale{};
    for (int i = 0; i < D; ++i) scale[i] = inv_std / std::sqrt(double(i + 1) * (i + 2));

    table_.reset(n_ * (D + 1));
    std::array<double, D + 1> elevated{};
    std::array<int, D + 1> rem0{};
    std::array<int, D + 1> rank{};
    std::array<double, D + 2> bary{};
    Key key{};

    for (std::size_t p = 0; p < n_; ++p) {
      const auto& f = features[p];
      // Elevate onto the hyperplane sum(x) = 0.
      double sm = 0.0;
      for (int j = D; j > 0; --j) {
        const double cf = f[j - 1] * scale[j - 1];
        elevated[j] = sm - j * cf;
        sm += cf;
      }
      elevated[0] = sm;

      // Closest remainder-0 point.
      int sum = 0;
      for (int i = 0; i <= D; ++i) {
        const double v = elevated[i] / (D + 1);
        const int up = static_cast<int>(std::ceil(v)) * (D + 1);
        const int down = static_cast<int>(std::floor(v)) * (D + 1);
        rem0[i] = (up - elevated[i] < elevated[i] - down) ? up : down;
        sum += rem0[i];
      }
      sum /= D + 1;

      rank.fill(0);
      for (int i = 0; i < D; ++i) {
        const double di = elevated[i] - rem0[i];
        for (int j = i + 1; j <= D; ++j) {
          if (di < elevated[j] - rem0[j])
            ++rank[i];
          else
            ++rank[j];
        }
      }
      if (sum > 0) {
        for (int i = 0; i <= D; ++i) {
          if (rank[i] >= D + 1 - sum) {
            rem0[i] -= D + 1;
            rank[i] += sum - (D + 1);
          } else {
            rank[i] += sum;
          }
        }
      } else if (sum < 0) {
        for (int i = 0; i <= D; ++i) {
          if (rank[i] < -sum) {
            rem0[i] += D + 1;
            rank[i] += D + 1 + sum;
          } else {
            rank[i] += sum;
          }
        }
      }

      bary.fill(0.0);
      for (int i = 0; i <= D; ++i) {
        const double v = (elevated[i] - rem0[i]) / (D + 1);
        bary[D - rank[i]] += v;
        bary[D + 1 - rank[i]] -= v;
      }
      bary[0] += 1.0 + bary[D + 1];

      for (int k = 0; k <= D; ++k) {
        for (int i = 0; i < D; ++i)
          key[i] = static_cast<std::int16_t>(rank[i] <= D - k ? rem0[i] + k : rem0[i] + k - (D + 1));
        offsets_[p * (D + 1) + k] = table_.find_or_insert(key);
        weights_[p * (D + 1) + k] = bary[k];
      }
    }
    const std::size_t m = table_.size();

    // Blur neighbors along each of the D+1 lattice directions.
    neighbors_.assign(m * (D + 1), {kMissing, kMissing});
    Key n1{}, n2{};
    for (int j = 0; j <= D; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const Key& k = table_.key(i);
        for (int c = 0; c < D; ++c) {
          n1[c] = static_cast<std::int16_t>(k[c] - 1);
          n2[c] = static_cast<std::int16_t>(k[c] + 1);
        }
        if (j < D) {
          n1[j] = static_cast<std::int16_t>(k[j] + D);
          n2[j] = static_cast<std::int16_t>(k[j] - D);
        }
        neighbors_[j * m + i] = {table_.find(n1), table_.find(n2)};
      }
    }

    // Mass-preserving scale: lattice covolume (d+1)^(d-1/2), elevation
    // stretch inv_std^d, blur mass 2^(d+1), Gaussian mass (2 pi)^(d/2).
    scale_ = std::pow(2.0 * std::numbers::pi, D / 2.0) * std::pow(inv_std, D) /
             (std::pow(D + 1.0, D - 0.5) * std::pow(2.0, D + 1));
  }

  std::size_t lattice_size() const noexcept { return table_.size(); }

  /// out_i ~= sum_j exp(-|fi - fj|^2 / 2) in_j (including j == i).
  void filter(std::span<const double> in, std::span<double> out) const {
    const std::size_t m = table_.size();
    std::vector<double> values(m + 1, 0.0), next(m + 1, 0.0);
    for (std::size_t p = 0; p < n_; ++p)
      for (int k = 0; k <= D; ++k)
        values[offsets_[p * (D + 1) + k]] += weights_[p * (D + 1) + k] * in[p];

    for (int j = 0; j <= D; ++j) {
      const auto* nb = &neighbors_[j * m];
      for (std::size_t i = 0; i < m; ++i) {
        const double a = nb[i].first == kMissing ? 0.0 : values[nb[i].first];
        const double b = nb[i].second == kMissing ? 0.0 : values[nb[i].second];
        next[i] = values[i] + 0.5 * (a + b);
      }
      std::swap(values, next);
    }

    for (std::size_t p = 0; p < n_; ++p) {
      double s = 0.0;
      for (int k = 0; k <= D; ++k)
        s += weights_[p * (D + 1) + k] * values[offsets_[p * (D + 1) + k]];
      out[p] = s * scale_;
    }
  }

 private:
  static constexpr std::uint32_t kMissing = UINT32_MAX;

  /// Open-addressing hash from lattice keys to dense indices.
  class KeyTable {
   public:
    void reset(std::size_t expected) {
      std::size_t cap = 64;
      while (cap < 2 * expected) cap <<= 1;
      slots_.assign(cap, kMissing);
      keys_.clear();
      keys_.reserve(expected);
    }
    std::size_t size() const noexcept { return keys_.size(); }
    const Key& key(std::size_t i) const { return keys_[i]; }

    std::uint32_t find_or_insert(const Key& k) {
      std::size_t h = hash(k) & (slots_.size() - 1);
      for (;;) {
        const std::uint32_t s = slots_[h];
        if (s == kMissing) {
          if (2 * (keys_.size() + 1) > slots_.size()) {
            grow();
            return find_or_insert(k);
          }
          slots_[h] = static_cast<std::uint32_t>(keys_.size());
          keys_.push_back(k);
          return slots_[h];
        }
        if (keys_[s] == k) return s;
        h = (h + 1) & (slots_.size() - 1);
      }
    }

    std::uint32_t find(const Key& k) const {
      std::size_t h = hash(k) & (slots_.size() - 1);
      for (;;) {
        const std::uint32_t s = slots_[h];
        if (s == kMissing) return kMissing;
        if (keys_[s] == k) return s;
        h = (h + 1) & (slots_.size() - 1);
      }
    }

   private:
    static std::size_t hash(const Key& k) {
      std::size_t h = 0;
      for (int i = 0; i < D; ++i) {
        h += static_cast<std::size_t>(static_cast<std::uint16_t>(k[i]));
        h *= 2531011;
      }
      return h ^ (h >> 17);
    }
    void grow() {
      slots_.assign(slots_.size() * 2, kMissing);
      for (std::size_t i = 0; i < keys_.size(); ++i) {
        std::size_t h = hash(keys_[i]) & (slots_.size() - 1);
        while (slots_[h] != kMissing) h = (h + 1) & (slots_.size() - 1);
        slots_[h] = static_cast<std::uint32_t>(i);
      }
    }

    std::vector<std::uint32_t> slots_;
    std::vector<Key> keys_;
  };

  std::size_t n_;
  std::vector<std::uint32_t> offsets_;
  std::vector<double> weights_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> neighbors_;
  KeyTable table_;
  double scale_ = 1.0;
};

}  // namespace ppseg

#endif  // PPSEG_PERMUTOHEDRAL_HPP
