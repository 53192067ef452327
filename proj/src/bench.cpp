#include "treeseg/bench.hpp"

#include "treeseg/layerstack.hpp"
#include "treeseg/meanshift.hpp"
#include "treeseg/preprocess.hpp"
#include "treeseg/synthetic.hpp"
#include "treeseg/treeiso.hpp"
#include "treeseg/watershed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace treeseg {

Algorithm parse_algorithm(const std::string& s)
{
  if (s == "watershed")
    return Algorithm::watershed;
  if (s == "ams3d")
    return Algorithm::ams3d;
  if (s == "layerstack")
    return Algorithm::layerstack;
  if (s == "treeiso")
    return Algorithm::treeiso;
  throw std::invalid_argument("unknown algorithm " + s);
}

std::string to_string(Algorithm a)
{
  switch (a) {
    case Algorithm::watershed:
      return "watershed";
    case Algorithm::ams3d:
      return "ams3d";
    case Algorithm::layerstack:
      return "layerstack";
    case Algorithm::treeiso:
      return "treeiso";
  }
  return "?";
}

namespace {

bool as_bool(const nlohmann::json& v)
{
  if (v.is_boolean())
    return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "true" || s == "True")
      return true;
    if (s == "false" || s == "False")
      return false;
  }
  if (v.is_number())
    return v.get<double>() != 0.0;
  throw std::invalid_argument("expected a boolean, got " + v.dump());
}

template<class Params>
using Setter = std::function<void(Params&, const nlohmann::json&)>;

template<class Params>
Params parse_params(const nlohmann::json& j, const std::map<std::string, Setter<Params>>& setters, const char* what)
{
  Params p;
  if (j.is_null())
    return p;
  if (!j.is_object())
    throw std::invalid_argument(std::string(what) + " parameters must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument(std::string(what) + ": unknown parameter " + key);
    it->second(p, value);
  }
  p.validate();
  return p;
}

WatershedParams watershed_params(const nlohmann::json& j)
{
  return parse_params<WatershedParams>(j,
                                       {
                                         { "resolution", [](auto& p, const auto& v) { p.resolution = v.template get<double>(); } },
                                         { "sigma", [](auto& p, const auto& v) { p.sigma = v.template get<double>(); } },
                                         { "window_gf", [](auto& p, const auto& v) { p.window_gf = v.template get<int>(); } },
                                         { "window_mf", [](auto& p, const auto& v) { p.window_mf = v.template get<int>(); } },
                                       },
                                       "watershed");
}

AMS3DParams ams3d_params(const nlohmann::json& j)
{
  return parse_params<AMS3DParams>(
    j,
    {
      { "s_s", [](auto& p, const auto& v) { p.s_s = v.template get<double>(); } },
      { "s_z", [](auto& p, const auto& v) { p.s_z = v.template get<double>(); } },
      { "work_density", [](auto& p, const auto& v) { p.work_density = v.template get<double>(); } },
      { "merge_min_points", [](auto& p, const auto& v) { p.merge_min_points = v.template get<int>(); } },
      { "merge_dist_thresh", [](auto& p, const auto& v) { p.merge_dist_thresh = v.template get<double>(); } },
      { "tol", [](auto& p, const auto& v) { p.tol = v.template get<double>(); } },
      { "max_iter", [](auto& p, const auto& v) { p.max_iter = v.template get<int>(); } },
    },
    "ams3d");
}

LayerStackParams layerstack_params(const nlohmann::json& j)
{
  return parse_params<LayerStackParams>(
    j,
    {
      { "resolution_coarse", [](auto& p, const auto& v) { p.resolution_coarse = v.template get<double>(); } },
      { "filter_cutoff", [](auto& p, const auto& v) { p.filter_cutoff = v.template get<double>(); } },
      { "dbscan_filter", [](auto& p, const auto& v) { p.dbscan_filter = as_bool(v); } },
      { "buffer_width", [](auto& p, const auto& v) { p.buffer_width = v.template get<double>(); } },
      { "core_width", [](auto& p, const auto& v) { p.core_width = v.template get<double>(); } },
      { "window", [](auto& p, const auto& v) { p.window = v.template get<int>(); } },
      { "dbscan_eps", [](auto& p, const auto& v) { p.dbscan_eps = v.template get<double>(); } },
      { "dbscan_min_points", [](auto& p, const auto& v) { p.dbscan_min_points = v.template get<int>(); } },
      { "dbscan_layers", [](auto& p, const auto& v) { p.dbscan_layers = v.template get<int>(); } },
    },
    "layerstack");
}

TreeisoParams treeiso_params(const nlohmann::json& j)
{
  return parse_params<TreeisoParams>(j,
                                     {
                                       { "K1", [](auto& p, const auto& v) { p.K1 = v.template get<int>(); } },
                                       { "K2", [](auto& p, const auto& v) { p.K2 = v.template get<int>(); } },
                                       { "lambda1", [](auto& p, const auto& v) { p.lambda1 = v.template get<double>(); } },
                                       { "lambda2", [](auto& p, const auto& v) { p.lambda2 = v.template get<double>(); } },
                                       { "rho_zmax", [](auto& p, const auto& v) { p.rho_zmax = v.template get<double>(); } },
                                       { "w_rho", [](auto& p, const auto& v) { p.w_rho = v.template get<double>(); } },
                                     },
                                     "treeiso");
}

} // namespace

nlohmann::json default_params(Algorithm a)
{
  switch (a) {
    case Algorithm::watershed: {
      const WatershedParams p;
      return { { "resolution", p.resolution }, { "sigma", p.sigma }, { "window_gf", p.window_gf }, { "window_mf", p.window_mf } };
    }
    case Algorithm::ams3d: {
      const AMS3DParams p;
      return { { "s_s", p.s_s }, { "s_z", p.s_z } };
    }
    case Algorithm::layerstack: {
      const LayerStackParams p;
      return { { "resolution_coarse", p.resolution_coarse }, { "filter_cutoff", p.filter_cutoff },
               { "dbscan_filter", p.dbscan_filter },         { "buffer_width", p.buffer_width },
               { "core_width", p.core_width },               { "window", p.window } };
    }
    case Algorithm::treeiso: {
      const TreeisoParams p;
      return { { "K1", p.K1 },           { "K2", p.K2 },           { "lambda1", p.lambda1 },
               { "lambda2", p.lambda2 }, { "rho_zmax", p.rho_zmax }, { "w_rho", p.w_rho } };
    }
  }
  return nlohmann::json::object();
}

ParamSpace default_space(Algorithm a)
{
  ParamSpace s;
  switch (a) {
    case Algorithm::watershed:
      s.params = { ParamDef::real("resolution", 0.05, 1.0, 0.05), ParamDef::real("sigma", 0.1, 6.0, 0.1),
                   ParamDef::integer("window_gf", 3, 41, 2), ParamDef::integer("window_mf", 3, 41, 2) };
      break;
    case Algorithm::ams3d:
      // A zero slope gives an empty kernel, so the grid starts one step in.
      s.params = { ParamDef::real("s_s", 0.1, 1.0, 0.1), ParamDef::real("s_z", 0.1, 1.0, 0.1) };
      break;
    case Algorithm::layerstack:
      s.params = { ParamDef::real("resolution_coarse", 0.05, 1.0, 0.05), ParamDef::real("filter_cutoff", 2.5, 3.5, 0.5),
                   ParamDef::categorical("dbscan_filter", { "false", "true" }), ParamDef::real("buffer_width", 0.1, 1.5, 0.1),
                   ParamDef::real("core_width", 0.1, 1.0, 0.1), ParamDef::integer("window", 1, 15, 1) };
      break;
    case Algorithm::treeiso:
      s.params = { ParamDef::integer("K1", 3, 20, 1),          ParamDef::integer("K2", 3, 40, 1),
                   ParamDef::real("lambda1", 0.1, 40.0, 0.1),  ParamDef::real("lambda2", 5.0, 40.0, 0.1),
                   ParamDef::real("rho_zmax", 0.1, 1.0, 0.05), ParamDef::real("w_rho", 0.1, 2.0, 0.1) };
      break;
  }
  return s;
}

nlohmann::json apply_config(const nlohmann::json& base, const ParamSpace& space, const Config& config)
{
  nlohmann::json out = base.is_object() ? base : nlohmann::json::object();
  const auto values = space.to_json(config);
  for (const auto& [k, v] : values.items())
    out[k] = v;
  return out;
}

Segmenter make_segmenter(Algorithm a, const nlohmann::json& params)
{
  switch (a) {
    case Algorithm::watershed: {
      const auto p = watershed_params(params);
      return [p](const PointCloud& c, const GroundModel& g, std::uint64_t) { return watershed_its(c, g, p); };
    }
    case Algorithm::ams3d: {
      const auto p = ams3d_params(params);
      return [p](const PointCloud& c, const GroundModel& g, std::uint64_t seed) { return ams3d_segment(c, g, p, seed); };
    }
    case Algorithm::layerstack: {
      const auto p = layerstack_params(params);
      return [p](const PointCloud& c, const GroundModel& g, std::uint64_t seed) { return layer_stacking_segment(c, g, p, seed); };
    }
    case Algorithm::treeiso: {
      const auto p = treeiso_params(params);
      return [p](const PointCloud& c, const GroundModel& g, std::uint64_t) { return treeiso_segment(c, g, p); };
    }
  }
  throw std::invalid_argument("unknown algorithm");
}

PreparedPlot prepare_plot(const PlotInput& plot, const BenchOptions& options)
{
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < plot.cloud.size(); ++i) {
    const auto s = static_cast<SemanticClass>(plot.cloud.semantic_id[i]);
    const bool other = s == SemanticClass::building || s == SemanticClass::vehicle || s == SemanticClass::pole;
    if (s != SemanticClass::out && !(options.drop_other_classes && other))
      keep.push_back(i);
  }
  PreparedPlot out;
  out.id = plot.id;
  out.cloud = keep.size() == plot.cloud.size() ? plot.cloud : plot.cloud.subset(keep);
  if (out.cloud.empty())
    throw std::invalid_argument("plot " + plot.id + " is empty after class filtering");
  out.ground = plot.ground ? *plot.ground : estimate_ground(out.cloud);
  out.gt = ground_truth(out.cloud);
  out.trees = tree_records(out.cloud);
  return out;
}

std::size_t BenchResult::failures() const
{
  return static_cast<std::size_t>(std::count_if(plots.begin(), plots.end(), [](const PlotResult& p) { return !p.ok; }));
}

BenchResult run_prepared(const std::vector<PreparedPlot>& plots, const Segmenter& segmenter, const BenchOptions& options,
                         const std::string& name)
{
  if (!(options.iou_thresh > 0.0 && options.iou_thresh <= 1.0))
    throw std::invalid_argument("run_benchmark: iou_thresh must lie in (0, 1]");
  BenchResult result;
  result.algorithm = name;
  result.plots.resize(plots.size());

  const auto n = static_cast<std::ptrdiff_t>(plots.size());
#pragma omp parallel for schedule(dynamic) if (options.exec == Exec::parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto& plot = plots[static_cast<std::size_t>(k)];
    PlotResult& r = result.plots[static_cast<std::size_t>(k)];
    r.id = plot.id;
    r.trees = plot.trees;
    try {
      const auto start = std::chrono::steady_clock::now();
      Segmentation pred = segmenter(plot.cloud, plot.ground, derive_seed(options.seed, static_cast<std::uint64_t>(k)));
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (pred.size() != plot.cloud.size())
        throw std::runtime_error("segmenter returned " + std::to_string(pred.size()) + " labels for " +
                                 std::to_string(plot.cloud.size()) + " points");
      if (options.postfilter)
        pred = postfilter_segments(pred, plot.cloud);
      r.match = match_instances(plot.gt, pred, options.iou_thresh);
      r.prediction = std::move(pred);
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  }

  MetricsAccumulator acc;
  double seconds = 0.0;
  std::size_t ok = 0;
  for (const auto& r : result.plots) {
    if (!r.ok)
      continue;
    acc.add(r.match, r.trees);
    seconds += r.seconds;
    ++ok;
  }
  result.report = acc.report();
  result.mean_seconds = ok > 0 ? seconds / static_cast<double>(ok) : 0.0;
  return result;
}

BenchResult run_benchmark(const std::vector<PlotInput>& plots, const Segmenter& segmenter, const BenchOptions& options,
                          const std::string& name)
{
  std::vector<PreparedPlot> prepared;
  prepared.reserve(plots.size());
  for (const auto& p : plots)
    prepared.push_back(prepare_plot(p, options));
  return run_prepared(prepared, segmenter, options, name);
}

void BenchConfig::validate() const
{
  if (plots.empty())
    throw std::invalid_argument("bench config: no plots");
  for (std::size_t i = 0; i < densities.size(); ++i) {
    if (!(densities[i] > 0.0))
      throw std::invalid_argument("bench config: densities must be positive");
    if (i > 0 && !(densities[i] < densities[i - 1]))
      throw std::invalid_argument("bench config: densities must be strictly descending");
  }
}

BenchResult run_benchmark(const BenchConfig& config)
{
  config.validate();
  auto result = run_benchmark(config.plots, make_segmenter(config.algorithm, config.params), config.options,
                              to_string(config.algorithm));
  if (config.output_dir)
    write_reports(result, *config.output_dir);
  return result;
}

nlohmann::json runtime_json(const BenchResult& result)
{
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& p : result.plots)
    if (!p.ok)
      failures.push_back({ { "plot", p.id }, { "error", p.error } });
  return { { "algorithm", result.algorithm },
           { "plots", result.plots.size() },
           { "mean_seconds_per_plot", result.mean_seconds },
           { "failures", failures } };
}

std::string trees_csv(const BenchResult& result)
{
  std::ostringstream out;
  out.precision(10);
  out << "plot_id,tree_id,x,y,height_m,category,matched_pred_id,iou\n";
  for (const auto& p : result.plots) {
    if (!p.ok)
      continue;
    std::map<std::int32_t, std::int32_t> matched;
    for (const auto& m : p.match.pairs)
      matched[m.gt] = m.pred;
    for (const auto& t : p.trees) {
      const auto mi = p.match.max_iou.find(t.id);
      out << p.id << ',' << t.id << ',' << t.x << ',' << t.y << ',' << t.height << ',' << static_cast<char>(t.category) << ','
          << (matched.count(t.id) ? matched[t.id] : 0) << ',' << (mi != p.match.max_iou.end() ? mi->second : 0.0) << '\n';
    }
  }
  return out.str();
}

void write_reports(const BenchResult& result, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& file, const std::string& text) {
    std::ofstream out(dir / file);
    if (!out)
      throw std::runtime_error("cannot write " + (dir / file).string());
    out << text;
  };
  write(result.algorithm + "_metrics.json", metrics_to_json(result.report).dump(2) + "\n");
  write(result.algorithm + "_runtime.json", runtime_json(result).dump(2) + "\n");
  write(result.algorithm + "_trees.csv", trees_csv(result));
}

std::vector<std::vector<std::size_t>> nested_density_indices(std::size_t point_count, double area_m2,
                                                             const std::vector<double>& densities, std::uint64_t seed)
{
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> current(point_count);
  for (std::size_t i = 0; i < point_count; ++i)
    current[i] = i;
  for (std::size_t level = 0; level < densities.size(); ++level) {
    if (level > 0 && !(densities[level] < densities[level - 1]))
      throw std::invalid_argument("nested_density_indices: densities must be strictly descending");
    const auto local = density_sample_indices(current.size(), area_m2, densities[level], derive_seed(seed, level));
    std::vector<std::size_t> next;
    next.reserve(local.size());
    for (auto i : local)
      next.push_back(current[i]);
    current = std::move(next);
    out.push_back(current);
  }
  return out;
}

std::vector<SweepRow> density_sweep(const BenchConfig& config)
{
  config.validate();
  if (config.densities.empty())
    throw std::invalid_argument("density_sweep: no densities");
  const auto segmenter = make_segmenter(config.algorithm, config.params);
  const auto name = to_string(config.algorithm);

  std::vector<std::vector<std::vector<std::size_t>>> levels;
  std::vector<GroundModel> grounds;
  for (std::size_t k = 0; k < config.plots.size(); ++k) {
    const auto& plot = config.plots[k];
    grounds.push_back(prepare_plot(plot, config.options).ground);
    const double area = (plot.geometry ? *plot.geometry : PlotGeometry::equivalent_to(plot.cloud)).area_m2();
    levels.push_back(nested_density_indices(plot.cloud.size(), area, config.densities, derive_seed(config.options.seed, k)));
  }

  std::vector<SweepRow> rows;
  for (std::size_t level = 0; level < config.densities.size(); ++level) {
    std::vector<PlotInput> plots;
    for (std::size_t k = 0; k < config.plots.size(); ++k) {
      PlotInput p;
      p.id = config.plots[k].id;
      p.geometry = config.plots[k].geometry;
      p.ground = grounds[k];
      p.cloud = config.plots[k].cloud.subset(levels[k][level]);
      const auto kept = filter_small_gt(ground_truth(p.cloud), 5);
      p.cloud.instance_id = kept.labels;
      plots.push_back(std::move(p));
    }
    SweepRow row;
    row.algorithm = name;
    row.density = config.densities[level];
    row.result = run_benchmark(plots, segmenter, config.options, name);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
  std::ostringstream out;
  out.precision(10);
  out << "algorithm,density,metric,value\n";
  for (const auto& row : rows) {
    const auto metrics = metrics_to_json(row.result.report);
    for (const auto& [metric, value] : metrics.items())
      out << row.algorithm << ',' << row.density << ',' << metric << ',' << (value.is_null() ? std::string() : value.dump()) << '\n';
  }
  return out.str();
}

TuneResult tune(const std::vector<PreparedPlot>& training, Algorithm a, const ParamSpace& space, int budget,
                const OptimizerOptions& options, const BenchOptions& bench, const std::optional<std::filesystem::path>& journal)
{
  const auto base = default_params(a);
  const Objective objective = [&](const Config& config, std::uint64_t seed) {
    BenchOptions b = bench;
    b.seed = seed;
    const auto result = run_prepared(training, make_segmenter(a, apply_config(base, space, config)), b, to_string(a));
    if (result.failures() > 0)
      throw std::runtime_error("plot failed during tuning");
    return result.report.f1;
  };
  TuneResult out;
  out.study = optimize(space, objective, budget, options, journal);
  const auto best = out.study.best();
  out.best_params = best ? apply_config(base, space, best->config) : base;
  return out;
}

std::vector<PlotInput> synthetic_inputs(std::uint64_t seed, double density, int plots)
{
  std::vector<PlotInput> out;
  const auto specs = synthetic_suite(seed, density, plots);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    PlotInput p;
    p.id = "synthetic_" + std::to_string(k);
    p.cloud = generate_synthetic_plot(specs[k]);
    p.geometry = PlotGeometry(0.0, 0.0, specs[k].radius);
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace treeseg
