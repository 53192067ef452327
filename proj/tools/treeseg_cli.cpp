#include "treeseg/bench.hpp"
#include "treeseg/eval.hpp"
#include "treeseg/io.hpp"
#include "treeseg/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace treeseg;

namespace {

nlohmann::json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(in);
}

void write_text(const std::string& path, const std::string& text)
{
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path);
  out << text;
}

struct PlotSource
{
  std::vector<std::string> files;
  int synthetic_plots = 0;
  std::uint64_t synthetic_seed = 0;
  double synthetic_density = 100.0;

  void add_options(CLI::App* app)
  {
    app->add_option("--in", files, "Labelled point clouds (one plot each)");
    app->add_option("--synthetic", synthetic_plots, "Use N generated plots instead of files");
    app->add_option("--synthetic-seed", synthetic_seed, "Seed of the generated plots");
    app->add_option("--synthetic-density", synthetic_density, "Pulse density of the generated plots");
  }

  std::vector<PlotInput> load() const
  {
    if (synthetic_plots > 0)
      return synthetic_inputs(synthetic_seed, synthetic_density, synthetic_plots);
    if (files.empty())
      throw std::runtime_error("no plots given (use --in or --synthetic)");
    std::vector<PlotInput> out;
    for (const auto& f : files)
      out.push_back({ std::filesystem::path(f).stem().string(), load_point_cloud(f), std::nullopt });
    return out;
  }
};

std::vector<double> parse_densities(const std::string& s)
{
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    out.push_back(std::stod(item));
  return out;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Individual tree segmentation and evaluation toolkit" };
  app.require_subcommand(1);

  std::string algo = "watershed", params_file, in_file, out_file;
  std::uint64_t seed = 0;
  bool keep_other = false, no_postfilter = false;
  double iou = 0.5;

  auto* segment = app.add_subcommand("segment", "Segment one point cloud");
  segment->add_option("--algo", algo)->check(CLI::IsMember({ "watershed", "ams3d", "layerstack", "treeiso" }));
  segment->add_option("--params", params_file, "JSON parameter file");
  segment->add_option("--in", in_file)->required();
  segment->add_option("--out", out_file)->required();
  segment->add_option("--seed", seed);

  std::string gt_file, pred_file, report_file;
  auto* evaluate = app.add_subcommand("evaluate", "Match predicted instances against ground truth");
  evaluate->add_option("--gt", gt_file)->required();
  evaluate->add_option("--pred", pred_file)->required();
  evaluate->add_option("--iou-thresh", iou);
  evaluate->add_option("--report", report_file, "Output JSON (stdout when omitted)");
  evaluate->add_flag("--no-postfilter", no_postfilter);

  PlotSource run_plots;
  std::string out_dir = "reports";
  auto* run = app.add_subcommand("run", "Benchmark one algorithm over a set of plots");
  run->add_option("--algo", algo)->check(CLI::IsMember({ "watershed", "ams3d", "layerstack", "treeiso" }));
  run->add_option("--params", params_file);
  run->add_option("--out", out_dir);
  run->add_option("--seed", seed);
  run->add_flag("--keep-other-classes", keep_other, "Keep building, vehicle and pole points");
  run_plots.add_options(run);

  PlotSource opt_plots;
  std::string space_file, strategy = "tpe", journal, best_file;
  int budget = 100;
  auto* optimize_cmd = app.add_subcommand("optimize", "Tune parameters on training plots");
  optimize_cmd->add_option("--algo", algo)->check(CLI::IsMember({ "watershed", "ams3d", "layerstack", "treeiso" }));
  optimize_cmd->add_option("--space", space_file, "JSON parameter space (default: built-in ranges)");
  optimize_cmd->add_option("--budget", budget);
  optimize_cmd->add_option("--strategy", strategy)->check(CLI::IsMember({ "random", "tpe", "gp" }));
  optimize_cmd->add_option("--seed", seed);
  optimize_cmd->add_option("--journal", journal, "JSON-lines trial log; resumes when it exists");
  optimize_cmd->add_option("--out", best_file, "Best parameters as JSON (stdout when omitted)");
  opt_plots.add_options(optimize_cmd);

  PlotSource sweep_plots;
  std::string densities = "1000,500,100,75,50,25,10";
  auto* sweep = app.add_subcommand("sweep", "Density sweep");
  sweep->add_option("--algo", algo)->check(CLI::IsMember({ "watershed", "ams3d", "layerstack", "treeiso" }));
  sweep->add_option("--params", params_file);
  sweep->add_option("--densities", densities);
  sweep->add_option("--out", out_file, "CSV output (stdout when omitted)");
  sweep->add_option("--seed", seed);
  sweep_plots.add_options(sweep);

  std::string spec_file;
  bool has_seed = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled plot");
  synth->add_option("--spec", spec_file, "JSON plot specification");
  synth->add_option("--seed", seed)->each([&](const std::string&) { has_seed = true; });
  synth->add_option("--out", out_file)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const nlohmann::json params = params_file.empty() ? nlohmann::json::object() : read_json(params_file);

    if (*segment) {
      PointCloud cloud = load_point_cloud(in_file);
      const auto ground = estimate_ground(cloud);
      const auto pred = make_segmenter(parse_algorithm(algo), params)(cloud, ground, seed);
      cloud.instance_id = pred.labels;
      save_point_cloud(cloud, out_file);
      std::cerr << pred.instance_count() << " instances\n";
      return 0;
    }

    if (*evaluate) {
      const PointCloud gt = load_point_cloud(gt_file);
      const PointCloud pred_cloud = load_point_cloud(pred_file);
      if (gt.size() != pred_cloud.size())
        throw std::runtime_error("gt and prediction differ in point count");
      Segmentation pred(pred_cloud.instance_id);
      if (!no_postfilter)
        pred = postfilter_segments(pred, gt);
      const auto match = match_instances(ground_truth(gt), pred, iou);
      const auto trees = tree_records(gt);
      write_text(report_file, metrics_to_json(compute_metrics(match, trees)).dump(2) + "\n");
      return 0;
    }

    if (*run) {
      BenchConfig config;
      config.plots = run_plots.load();
      config.algorithm = parse_algorithm(algo);
      config.params = params;
      config.options.seed = seed;
      config.options.drop_other_classes = !keep_other;
      config.output_dir = out_dir;
      const auto result = run_benchmark(config);
      std::cout << metrics_to_json(result.report).dump(2) << "\n";
      for (const auto& p : result.plots)
        if (!p.ok)
          std::cerr << "plot " << p.id << " failed: " << p.error << "\n";
      return result.failures() > 0 ? 2 : 0;
    }

    if (*optimize_cmd) {
      const auto a = parse_algorithm(algo);
      const ParamSpace space = space_file.empty() ? default_space(a) : ParamSpace::parse(read_json(space_file));
      BenchOptions bench;
      std::vector<PreparedPlot> prepared;
      for (const auto& p : opt_plots.load())
        prepared.push_back(prepare_plot(p, bench));
      OptimizerOptions options;
      options.strategy = parse_strategy(strategy);
      options.seed = seed;
      const auto result = tune(prepared, a, space, budget, options, bench,
                               journal.empty() ? std::nullopt : std::optional<std::filesystem::path>(journal));
      const auto best = result.study.best();
      std::cerr << "best training F1: " << (best ? best->value : 0.0) << "\n";
      write_text(best_file, result.best_params.dump(2) + "\n");
      return best ? 0 : 2;
    }

    if (*sweep) {
      BenchConfig config;
      config.plots = sweep_plots.load();
      config.algorithm = parse_algorithm(algo);
      config.params = params;
      config.options.seed = seed;
      config.densities = parse_densities(densities);
      const auto rows = density_sweep(config);
      write_text(out_file, sweep_csv(rows));
      for (const auto& r : rows)
        if (r.result.failures() > 0)
          return 2;
      return 0;
    }

    if (*synth) {
      SyntheticPlotSpec spec;
      if (!spec_file.empty())
        spec = synthetic_spec_from_json(read_json(spec_file));
      else
        spec = synthetic_suite(seed, spec.density, 1).front();
      if (has_seed)
        spec.seed = seed;
      save_point_cloud(generate_synthetic_plot(spec), out_file);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
