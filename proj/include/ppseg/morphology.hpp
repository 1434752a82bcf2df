#ifndef PPSEG_MORPHOLOGY_HPP
#define PPSEG_MORPHOLOGY_HPP

#include <vector>

#include "components.hpp"
#include "distance.hpp"
#include "raster.hpp"

namespace ppseg {

enum class MorphMode { kDilate, kErode };

/// Offsets of the digital disk: all (dr, dc) with dr^2 + dc^2 <= radius^2.
inline std::vector<detail::Offset> disk_offsets(int radius) {
  std::vector<detail::Offset> out;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) out.push_back({dr, dc});
  return out;
}

/// Binary dilation / erosion with a disk. Pixels outside the raster never
/// contribute: dilation ignores them, and erosion is the in-raster dual
/// (a pixel survives if every in-raster disk neighbor is foreground).
inline BinaryMap morph_disk(const BinaryMap& mask, int radius, MorphMode mode) {
  if (radius <= 0) return mask;
  const auto disk = disk_offsets(radius);
  const int h = mask.height(), w = mask.width();
  BinaryMap out(h, w, 0);
  const std::uint8_t want = mode == MorphMode::kDilate ? 1 : 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool hit = false;
      for (const auto& o : disk) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (!mask.contains(rr, cc)) continue;
        if ((mask(rr, cc) != 0) == (want != 0)) {
          hit = true;
          break;
        }
      }
      out(r, c) = mode == MorphMode::kDilate ? hit : !hit;
    }
  return out;
}

/// Points rounded to pixels and dilated by a disk.
inline BinaryMap dilated_points(const PointSet& points, int height, int width, int radius) {
  return morph_disk(rasterize_points(points, height, width), radius, MorphMode::kDilate);
}

}  // namespace ppseg

#endif  // PPSEG_MORPHOLOGY_HPP
