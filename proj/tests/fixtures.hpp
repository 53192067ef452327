#pragma once

#include "treeseg/point_cloud.hpp"
#include "treeseg/raster.hpp"
#include "treeseg/terrain.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace fixtures {

struct Cone
{
  double x = 0.0;
  double y = 0.0;
  double height = 20.0;
  double radius = 4.0;
  double base = 8.0; // crown base height
};

inline treeseg::GroundModel flat_ground(double z, double lo = -50.0, double hi = 50.0)
{
  const int n = static_cast<int>(hi - lo) + 1;
  return treeseg::GroundModel(treeseg::Raster(lo, lo, 1.0, n, n, z));
}

/// Crown surface points and a stem line per cone, ground points on a grid,
/// all above a flat ground at `ground_z`.  Instance k + 1 marks cone k.
inline treeseg::PointCloud cone_stand(const std::vector<Cone>& cones, double spacing = 0.25, double ground_z = 0.0,
                                      double extent = 0.0, std::uint64_t seed = 1)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.3 * spacing, 0.3 * spacing);
  treeseg::PointCloud c;
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const Cone& t = cones[k];
    const auto id = static_cast<std::int32_t>(k + 1);
    for (double dx = -t.radius; dx <= t.radius; dx += spacing)
      for (double dy = -t.radius; dy <= t.radius; dy += spacing) {
        const double px = dx + jitter(rng), py = dy + jitter(rng);
        const double d = std::hypot(px, py);
        if (d > t.radius)
          continue;
        const double z = t.height - (t.height - t.base) * d / t.radius;
        c.push_back({ t.x + px, t.y + py, ground_z + z }, id, 1);
        // a lower crown layer so crowns have some depth
        c.push_back({ t.x + 0.8 * px, t.y + 0.8 * py, ground_z + z - 1.0 }, id, 1);
      }
    for (double z = 0.3; z < t.base; z += spacing)
      c.push_back({ t.x + jitter(rng), t.y + jitter(rng), ground_z + z }, id, 1);
  }
  if (extent > 0.0)
    for (double x = -extent; x <= extent; x += 2 * spacing)
      for (double y = -extent; y <= extent; y += 2 * spacing)
        c.push_back({ x + jitter(rng), y + jitter(rng), ground_z }, 0, 0);
  return c;
}

} // namespace fixtures
