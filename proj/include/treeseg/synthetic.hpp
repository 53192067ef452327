#pragma once

#include "treeseg/point_cloud.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace treeseg {

enum class CrownShape { cone, ellipsoid };

struct SyntheticTree
{
  double x = 0.0;
  double y = 0.0;
  double height = 15.0;
  double crown_radius = 2.0;
  CrownShape shape = CrownShape::cone;
  /// Height of the crown base as a fraction of the tree height.
  double crown_base = 0.4;
  bool understory = false;
};

/// Circular plot on a planar ground surface.  Trees stand on the ground
/// below their stem; crown returns are drawn from top-down pulses that stop
/// in a crown with probability `crown_hit` (at an exponentially distributed
/// depth below its surface) or continue to lower crowns and
/// finally the ground.
struct SyntheticPlotSpec
{
  double radius = 12.0;
  std::vector<SyntheticTree> trees;
  double ground_z = 100.0;
  double slope_x = 0.0;
  double slope_y = 0.0;
  /// Pulses per square metre.
  double density = 100.0;
  double noise = 0.03;
  double crown_hit = 0.85;
  /// Mean depth (m) of crown returns below the crown surface.
  double penetration = 1.5;
  /// Stem points per metre of stem per unit pulse density.
  double stem_sampling = 0.1;
  double stem_radius = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  double ground(double x, double y) const { return ground_z + slope_x * x + slope_y * y; }
};

/// Ground points get semantic 0 / instance 0, tree points semantic 1 and
/// instance (tree index + 1).  Deterministic per seed.
PointCloud generate_synthetic_plot(const SyntheticPlotSpec& spec);

/// Six plots of dominant trees (14-24 m, cones and ellipsoids) with a few
/// understory trees placed beside or under dominants.
std::vector<SyntheticPlotSpec> synthetic_suite(std::uint64_t seed, double density, int plots = 6);

nlohmann::json to_json(const SyntheticPlotSpec& spec);
SyntheticPlotSpec synthetic_spec_from_json(const nlohmann::json& j);

} // namespace treeseg
