#ifndef PPSEG_COMPONENTS_HPP
#define PPSEG_COMPONENTS_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "raster.hpp"

namespace ppseg {

enum class Connectivity { kFour = 4, kEight = 8 };

namespace detail {

struct Offset {
  int dr;
  int dc;
};

inline constexpr std::array<Offset, 4> kNeighbors4 = {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
inline constexpr std::array<Offset, 8> kNeighbors8 = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

template <class Fn>
void for_each_neighbor(Connectivity conn, int r, int c, int h, int w, Fn&& fn) {
  auto visit = [&](const auto& offsets) {
    for (const auto& o : offsets) {
      const int rr = r + o.dr, cc = c + o.dc;
      if (rr >= 0 && cc >= 0 && rr < h && cc < w) fn(rr, cc);
    }
  };
  if (conn == Connectivity::kFour)
    visit(kNeighbors4);
  else
    visit(kNeighbors8);
}

}  // namespace detail

/// Labels foreground components. Ids are 1..n in raster order of each
/// component's first pixel.
template <class T, class Tag>
InstanceLabelMap connected_components(const Raster<T, Tag>& mask,
                                      Connectivity conn = Connectivity::kEight) {
  const int h = mask.height(), w = mask.width();
  InstanceLabelMap labels(h, w, 0);
  std::vector<std::size_t> stack;
  std::int32_t next = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || labels[start] != 0) continue;
    labels[start] = ++next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int r = static_cast<int>(i / static_cast<std::size_t>(w));
      const int c = static_cast<int>(i % static_cast<std::size_t>(w));
      detail::for_each_neighbor(conn, r, c, h, w, [&](int rr, int cc) {
        const std::size_t j = labels.index(rr, cc);
        if (mask[j] && labels[j] == 0) {
          labels[j] = next;
          stack.push_back(j);
        }
      });
    }
  }
  return labels;
}

inline int instance_count(const InstanceLabelMap& labels) {
  std::int32_t n = 0;
  for (auto v : labels) n = std::max(n, v);
  return n;
}

/// Pixel count of every id; index 0 holds the background count.
inline std::vector<std::size_t> instance_areas(const InstanceLabelMap& labels) {
  std::vector<std::size_t> areas(static_cast<std::size_t>(instance_count(labels)) + 1, 0);
  for (auto v : labels) ++areas[static_cast<std::size_t>(v)];
  return areas;
}

/// Mean pixel coordinate of each id, in id order. Unrounded.
inline PointSet component_centroids(const InstanceLabelMap& labels) {
  const int n = instance_count(labels);
  std::vector<double> sr(n + 1, 0.0), sc(n + 1, 0.0);
  std::vector<std::size_t> cnt(n + 1, 0);
  for (int r = 0; r < labels.height(); ++r)
    for (int c = 0; c < labels.width(); ++c) {
      const auto id = labels(r, c);
      if (id <= 0) continue;
      sr[id] += r;
      sc[id] += c;
      ++cnt[id];
    }
  PointSet out;
  out.reserve(n);
  for (int id = 1; id <= n; ++id) {
    if (cnt[id] == 0) continue;
    out.push_back({sr[id] / static_cast<double>(cnt[id]), sc[id] / static_cast<double>(cnt[id])});
  }
  return out;
}

/// Centers of each id's axis-aligned bounding box, in id order.
inline PointSet bounding_box_centers(const InstanceLabelMap& labels) {
  const int n = instance_count(labels);
  std::vector<int> r0(n + 1, labels.height()), r1(n + 1, -1), c0(n + 1, labels.width()),
      c1(n + 1, -1);
  for (int r = 0; r < labels.height(); ++r)
    for (int c = 0; c < labels.width(); ++c) {
      const auto id = labels(r, c);
      if (id <= 0) continue;
      r0[id] = std::min(r0[id], r);
      r1[id] = std::max(r1[id], r);
      c0[id] = std::min(c0[id], c);
      c1[id] = std::max(c1[id], c);
    }
  PointSet out;
  for (int id = 1; id <= n; ++id)
    if (r1[id] >= 0) out.push_back({0.5 * (r0[id] + r1[id]), 0.5 * (c0[id] + c1[id])});
  return out;
}

/// Drops components smaller than `min_area` and renumbers the rest 1..n in
/// their original order.
inline InstanceLabelMap remove_small_instances(const InstanceLabelMap& labels,
                                               std::size_t min_area) {
  const auto areas = instance_areas(labels);
  std::vector<std::int32_t> remap(areas.size(), 0);
  std::int32_t next = 0;
  for (std::size_t id = 1; id < areas.size(); ++id)
    if (areas[id] >= min_area && areas[id] > 0) remap[id] = ++next;
  InstanceLabelMap out(labels.height(), labels.width(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
  return out;
}

}  // namespace ppseg

#endif  // PPSEG_COMPONENTS_HPP
