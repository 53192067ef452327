#include "treeseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace treeseg {

void SyntheticPlotSpec::validate() const
{
  if (!(radius > 0.0))
    throw std::invalid_argument("synthetic plot: radius must be positive");
  if (!(density > 0.0))
    throw std::invalid_argument("synthetic plot: density must be positive");
  if (!(noise >= 0.0) || !(penetration > 0.0) || !(crown_hit > 0.0 && crown_hit <= 1.0) || !(stem_sampling >= 0.0) || !(stem_radius >= 0.0))
    throw std::invalid_argument("synthetic plot: invalid sampling parameters");
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& t = trees[i];
    if (!(t.height > 0.0) || !(t.crown_radius > 0.0) || !(t.crown_base >= 0.0 && t.crown_base < 1.0))
      throw std::invalid_argument("synthetic plot: invalid tree " + std::to_string(i));
    if (std::hypot(t.x, t.y) + t.crown_radius > radius + 1e-9)
      throw std::invalid_argument("synthetic plot: crown of tree " + std::to_string(i) + " leaves the plot");
    for (std::size_t j = 0; j < i; ++j)
      if (trees[j].x == t.x && trees[j].y == t.y)
        throw std::invalid_argument("synthetic plot: trees " + std::to_string(j) + " and " + std::to_string(i) +
                                    " share a position");
  }
}

namespace {

/// Vertical extent of a crown at horizontal distance d from the stem.
bool crown_span(const SyntheticTree& t, double d, double& bottom, double& top)
{
  if (d >= t.crown_radius)
    return false;
  const double base = t.crown_base * t.height;
  const double u = d / t.crown_radius;
  if (t.shape == CrownShape::cone) {
    top = t.height - (t.height - base) * u;
    bottom = base;
  } else {
    const double mid = 0.5 * (base + t.height), half = 0.5 * (t.height - base);
    const double h = half * std::sqrt(1.0 - u * u);
    top = mid + h;
    bottom = mid - h;
  }
  return top > bottom;
}

} // namespace

PointCloud generate_synthetic_plot(const SyntheticPlotSpec& spec)
{
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  PointCloud cloud;

  auto emit = [&](double x, double y, double z, std::int32_t instance) {
    const double s = spec.noise;
    cloud.push_back({ x + s * jitter(rng), y + s * jitter(rng), z + s * jitter(rng) }, instance,
                    instance > 0 ? static_cast<std::int32_t>(SemanticClass::tree) : 0);
  };

  const double area = M_PI * spec.radius * spec.radius;
  const auto pulses = std::poisson_distribution<long long>(spec.density * area)(rng);
  struct Hit
  {
    double top, bottom;
    std::int32_t id;
  };
  std::vector<Hit> hits;
  for (long long p = 0; p < pulses; ++p) {
    const double r = spec.radius * std::sqrt(unit(rng));
    const double a = 2.0 * M_PI * unit(rng);
    const double x = r * std::cos(a), y = r * std::sin(a);
    hits.clear();
    for (std::size_t i = 0; i < spec.trees.size(); ++i) {
      const auto& t = spec.trees[i];
      double bottom = 0, top = 0;
      if (crown_span(t, std::hypot(x - t.x, y - t.y), bottom, top))
        hits.push_back({ top, bottom, static_cast<std::int32_t>(i + 1) });
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.top > b.top || (a.top == b.top && a.id < b.id); });
    bool stopped = false;
    for (const auto& h : hits) {
      if (unit(rng) >= spec.crown_hit)
        continue;
      // Depth below the crown surface: exponential, truncated to the crown.
      const double span = h.top - h.bottom;
      const double depth = -spec.penetration * std::log(1.0 - unit(rng) * (1.0 - std::exp(-span / spec.penetration)));
      const auto& t = spec.trees[h.id - 1];
      emit(x, y, spec.ground(t.x, t.y) + h.top - std::min(depth, span), h.id);
      stopped = true;
      break;
    }
    if (!stopped)
      emit(x, y, spec.ground(x, y), 0);
  }

  for (std::size_t i = 0; i < spec.trees.size(); ++i) {
    const auto& t = spec.trees[i];
    const double stem_top = std::max(t.crown_base * t.height, 0.5 * t.height);
    const auto n = std::poisson_distribution<long long>(spec.density * spec.stem_sampling * stem_top)(rng);
    for (long long k = 0; k < n; ++k) {
      const double a = 2.0 * M_PI * unit(rng);
      const double z = stem_top * unit(rng);
      emit(t.x + spec.stem_radius * std::cos(a), t.y + spec.stem_radius * std::sin(a), spec.ground(t.x, t.y) + z,
           static_cast<std::int32_t>(i + 1));
    }
  }
  return cloud;
}

std::vector<SyntheticPlotSpec> synthetic_suite(std::uint64_t seed, double density, int plots)
{
  if (plots < 1)
    throw std::invalid_argument("synthetic_suite: need at least one plot");
  std::vector<SyntheticPlotSpec> out;
  for (int p = 0; p < plots; ++p) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(p));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SyntheticPlotSpec spec;
    spec.density = density;
    spec.seed = rng();
    spec.slope_x = 0.1 * (unit(rng) - 0.5);
    spec.slope_y = 0.1 * (unit(rng) - 0.5);

    const int target = 5 + static_cast<int>(unit(rng) * 4.0);
    for (int attempt = 0; attempt < 2000 && static_cast<int>(spec.trees.size()) < target; ++attempt) {
      SyntheticTree t;
      t.height = 14.0 + 10.0 * unit(rng);
      t.crown_radius = 2.0 + 1.5 * unit(rng);
      t.shape = unit(rng) < 0.5 ? CrownShape::cone : CrownShape::ellipsoid;
      t.crown_base = 0.35 + 0.2 * unit(rng);
      const double r = (spec.radius - t.crown_radius) * std::sqrt(unit(rng));
      const double a = 2.0 * M_PI * unit(rng);
      t.x = r * std::cos(a);
      t.y = r * std::sin(a);
      const bool clear = std::all_of(spec.trees.begin(), spec.trees.end(), [&](const SyntheticTree& o) {
        return std::hypot(o.x - t.x, o.y - t.y) >= std::max(4.0, 0.8 * (o.crown_radius + t.crown_radius));
      });
      if (clear)
        spec.trees.push_back(t);
    }

    const std::size_t dominants = spec.trees.size();
    const int understory = 1 + static_cast<int>(unit(rng) * 2.0);
    for (int k = 0, attempt = 0; k < understory && attempt < 500; ++attempt) {
      const auto& host = spec.trees[static_cast<std::size_t>(unit(rng) * static_cast<double>(dominants))];
      SyntheticTree t;
      t.understory = true;
      t.height = 6.0 + 4.0 * unit(rng);
      t.crown_radius = 1.2 + 0.6 * unit(rng);
      t.shape = CrownShape::cone;
      t.crown_base = 0.3;
      const double d = 1.0 + 2.0 * unit(rng);
      const double a = 2.0 * M_PI * unit(rng);
      t.x = host.x + d * std::cos(a);
      t.y = host.y + d * std::sin(a);
      if (std::hypot(t.x, t.y) + t.crown_radius > spec.radius)
        continue;
      const bool clear = std::all_of(spec.trees.begin(), spec.trees.end(), [&](const SyntheticTree& o) {
        return &o == &host || std::hypot(o.x - t.x, o.y - t.y) >= 2.0;
      });
      if (!clear)
        continue;
      spec.trees.push_back(t);
      ++k;
    }
    out.push_back(std::move(spec));
  }
  return out;
}

nlohmann::json to_json(const SyntheticPlotSpec& spec)
{
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : spec.trees)
    trees.push_back({ { "x", t.x },
                      { "y", t.y },
                      { "height", t.height },
                      { "crown_radius", t.crown_radius },
                      { "shape", t.shape == CrownShape::cone ? "cone" : "ellipsoid" },
                      { "crown_base", t.crown_base },
                      { "understory", t.understory } });
  return { { "radius", spec.radius },     { "trees", trees },
           { "ground_z", spec.ground_z }, { "slope_x", spec.slope_x },
           { "slope_y", spec.slope_y },   { "density", spec.density },
           { "noise", spec.noise },       { "crown_hit", spec.crown_hit },
           { "penetration", spec.penetration },
           { "stem_sampling", spec.stem_sampling }, { "stem_radius", spec.stem_radius },
           { "seed", spec.seed } };
}

SyntheticPlotSpec synthetic_spec_from_json(const nlohmann::json& j)
{
  SyntheticPlotSpec s;
  s.radius = j.value("radius", s.radius);
  s.ground_z = j.value("ground_z", s.ground_z);
  s.slope_x = j.value("slope_x", s.slope_x);
  s.slope_y = j.value("slope_y", s.slope_y);
  s.density = j.value("density", s.density);
  s.noise = j.value("noise", s.noise);
  s.crown_hit = j.value("crown_hit", s.crown_hit);
  s.penetration = j.value("penetration", s.penetration);
  s.stem_sampling = j.value("stem_sampling", s.stem_sampling);
  s.stem_radius = j.value("stem_radius", s.stem_radius);
  s.seed = j.value("seed", s.seed);
  for (const auto& e : j.value("trees", nlohmann::json::array())) {
    SyntheticTree t;
    t.x = e.at("x").get<double>();
    t.y = e.at("y").get<double>();
    t.height = e.value("height", t.height);
    t.crown_radius = e.value("crown_radius", t.crown_radius);
    const auto shape = e.value("shape", std::string("cone"));
    if (shape != "cone" && shape != "ellipsoid")
      throw std::invalid_argument("unknown crown shape " + shape);
    t.shape = shape == "cone" ? CrownShape::cone : CrownShape::ellipsoid;
    t.crown_base = e.value("crown_base", t.crown_base);
    t.understory = e.value("understory", t.understory);
    s.trees.push_back(t);
  }
  s.validate();
  return s;
}

} // namespace treeseg
