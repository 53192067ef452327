#pragma once

#include "treeseg/eval.hpp"
#include "treeseg/execution.hpp"
#include "treeseg/hpo.hpp"
#include "treeseg/point_cloud.hpp"
#include "treeseg/segmentation.hpp"
#include "treeseg/terrain.hpp"
#include "treeseg/tree_geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace treeseg {

enum class Algorithm { watershed, ams3d, layerstack, treeiso };

Algorithm parse_algorithm(const std::string& s);
std::string to_string(Algorithm a);

/// Default parameters as a JSON object.
nlohmann::json default_params(Algorithm a);
/// Search space over the tested ranges and step sizes of each algorithm.
ParamSpace default_space(Algorithm a);
/// `base` with the parameters of `config` overwritten.
nlohmann::json apply_config(const nlohmann::json& base, const ParamSpace& space, const Config& config);

using Segmenter = std::function<Segmentation(const PointCloud& cloud, const GroundModel& ground, std::uint64_t seed)>;

/// Segmenter for an algorithm; keys missing from `params` keep their
/// defaults, unknown keys throw std::invalid_argument.
Segmenter make_segmenter(Algorithm a, const nlohmann::json& params);

struct PlotInput
{
  std::string id;
  PointCloud cloud;
  /// Footprint used for density computations (convex hull when absent).
  std::optional<PlotGeometry> geometry;
  /// Precomputed ground model (estimated from the filtered cloud when absent).
  std::optional<GroundModel> ground;
};

/// A plot after class filtering, with its ground model and reference trees.
struct PreparedPlot
{
  std::string id;
  PointCloud cloud;
  GroundModel ground;
  Segmentation gt;
  std::vector<TreeRecord> trees;
};

struct BenchOptions
{
  /// Also drop building, vehicle and pole points (class "out" is always
  /// dropped).
  bool drop_other_classes = true;
  bool postfilter = true;
  double iou_thresh = 0.5;
  std::uint64_t seed = 0;
  /// Plots run concurrently under Exec::parallel.
  Exec exec = Exec::serial;
};

PreparedPlot prepare_plot(const PlotInput& plot, const BenchOptions& options);

struct PlotResult
{
  std::string id;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  Segmentation prediction;
  MatchResult match;
  std::vector<TreeRecord> trees;
};

struct BenchResult
{
  std::string algorithm;
  MetricsReport report;
  std::vector<PlotResult> plots;
  double mean_seconds = 0.0;

  std::size_t failures() const;
};

/// Segments, post-filters and matches every plot; metrics are pooled over
/// all successful plots.  Ground estimation is not timed.  A failing plot is
/// recorded and skipped.
BenchResult run_prepared(const std::vector<PreparedPlot>& plots, const Segmenter& segmenter, const BenchOptions& options,
                         const std::string& name = "custom");
BenchResult run_benchmark(const std::vector<PlotInput>& plots, const Segmenter& segmenter, const BenchOptions& options,
                          const std::string& name = "custom");

struct BenchConfig
{
  std::vector<PlotInput> plots;
  Algorithm algorithm = Algorithm::watershed;
  nlohmann::json params = nlohmann::json::object();
  BenchOptions options;
  /// Descending, positive.  Used by density_sweep only.
  std::vector<double> densities;
  /// Reports are written here when set.
  std::optional<std::filesystem::path> output_dir;

  void validate() const;
};

BenchResult run_benchmark(const BenchConfig& config);

/// Writes <algo>_metrics.json, <algo>_runtime.json and <algo>_trees.csv.
void write_reports(const BenchResult& result, const std::filesystem::path& dir);
std::string trees_csv(const BenchResult& result);
nlohmann::json runtime_json(const BenchResult& result);

/// Downsampling where every level is drawn from the previous (denser) one:
/// entry k holds the ordinals into the original cloud kept at densities[k].
std::vector<std::vector<std::size_t>> nested_density_indices(std::size_t point_count, double area_m2,
                                                             const std::vector<double>& densities, std::uint64_t seed);

struct SweepRow
{
  std::string algorithm;
  double density = 0.0;
  BenchResult result;
};

/// Per density: nested downsampling, gt instances under 5 points dropped,
/// then run_benchmark.  Every level is height-normalised with the ground
/// model of the full-density plot.
std::vector<SweepRow> density_sweep(const BenchConfig& config);
/// Long format: algorithm,density,metric,value.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct TuneResult
{
  Study study;
  nlohmann::json best_params;
};

/// Optimises the pooled F1 over `training` plots.  A trial fails when any
/// plot fails.
TuneResult tune(const std::vector<PreparedPlot>& training, Algorithm a, const ParamSpace& space, int budget,
                const OptimizerOptions& options, const BenchOptions& bench,
                const std::optional<std::filesystem::path>& journal = std::nullopt);

/// Synthetic suite plots as benchmark inputs (ids "synthetic_<k>").
std::vector<PlotInput> synthetic_inputs(std::uint64_t seed, double density, int plots = 6);

} // namespace treeseg
