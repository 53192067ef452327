#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace treeseg {

/// One discretised dimension.  Numeric parameters take min + k*step for
/// k = 0..size()-1; categorical ones take one of `choices`.
struct ParamDef
{
  enum class Kind { real, integer, categorical };

  std::string name;
  Kind kind = Kind::real;
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;
  std::vector<std::string> choices;

  static ParamDef real(std::string name, double min, double max, double step);
  static ParamDef integer(std::string name, int min, int max, int step = 1);
  static ParamDef categorical(std::string name, std::vector<std::string> choices);

  std::size_t size() const;
  /// Numeric value of grid index k (for categoricals, k itself).
  double value(std::size_t k) const;
  nlohmann::json json_value(std::size_t k) const;
  /// Grid index of a JSON value; throws when it is not on the grid.
  std::size_t index_of(const nlohmann::json& v) const;
  void validate() const;
};

/// A configuration is one grid index per parameter.
using Config = std::vector<std::size_t>;

struct ParamSpace
{
  std::vector<ParamDef> params;

  std::size_t dims() const { return params.size(); }
  /// Number of grid points (saturates at SIZE_MAX).
  std::size_t cardinality() const;
  void validate() const;
  bool contains(const Config& c) const;
  Config sample_uniform(std::mt19937_64& rng) const;
  /// {name: value} object.
  nlohmann::json to_json(const Config& c) const;
  Config from_json(const nlohmann::json& j) const;

  /// Reads [{"name", "min", "max", "step"[, "type": "int"]} | {"name", "choices"}].
  static ParamSpace parse(const nlohmann::json& j);
};

enum class TrialStatus { pending, complete, failed };

struct Trial
{
  std::size_t index = 0;
  Config config;
  double value = 0.0;
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::pending;
};

struct Study
{
  std::vector<Trial> trials;

  /// Completed trial with the highest value (earliest on ties).
  std::optional<Trial> best() const;
  /// Best value after each trial, in order (NaN until the first completion).
  std::vector<double> best_trace() const;
};

/// Objective: higher is better.  Throwing marks the trial failed.
using Objective = std::function<double(const Config&, std::uint64_t seed)>;

/// Seed of trial `index` derived from the study seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// ---------------------------------------------------------------- kernels

enum class MaternNu { half, three_halves, five_halves };

/// Parses 0.5, 1.5 or 2.5; anything else throws std::invalid_argument.
MaternNu matern_nu(double nu);

double matern_kernel(const std::vector<double>& a, const std::vector<double>& b, MaternNu nu, double rho);
double matern_kernel(const std::vector<double>& a, const std::vector<double>& b, double nu, double rho);

/// Zero-mean, unit-amplitude GP on standardised targets.
class GaussianProcess
{
public:
  GaussianProcess(MaternNu nu, double rho, double noise);

  /// Jitter added once when the Gram matrix is not positive definite.
  static constexpr double kJitter = 1e-8;

  void fit(std::vector<std::vector<double>> x, std::vector<double> y);
  /// Posterior mean and variance in standardised units.
  std::pair<double, double> predict(const std::vector<double>& x) const;
  /// Expected improvement over the best observed (standardised) target.
  double expected_improvement(const std::vector<double>& x) const;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  MaternNu nu_;
  double rho_;
  double noise_;
};

/// Grid indices mapped to [0, 1] per dimension.
std::vector<double> unit_coordinates(const ParamSpace& space, const Config& c);

double gp_expected_improvement(const std::vector<Trial>& history, const ParamSpace& space, const Config& candidate,
                               double nu = 2.5, double rho = 0.25, double noise = 1e-6);

// ---------------------------------------------------------------- samplers

struct TpeOptions
{
  double gamma = 0.25;
  int n_candidates = 24;
};

struct Suggestion
{
  Config config;
  /// True when the sampler fell back to a uniform draw.
  bool fallback = false;
};

Suggestion tpe_suggest(const std::vector<Trial>& history, const ParamSpace& space, std::mt19937_64& rng,
                       const TpeOptions& options = {});

struct GpOptions
{
  double nu = 2.5;
  double rho = 0.25;
  double noise = 1e-6;
  /// Grids larger than this are searched on a random subset of this size.
  std::size_t max_candidates = 20000;
};

Suggestion gp_suggest(const std::vector<Trial>& history, const ParamSpace& space, std::mt19937_64& rng,
                      const GpOptions& options = {});

enum class Strategy { random, tpe, gp };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

struct OptimizerOptions
{
  Strategy strategy = Strategy::tpe;
  std::uint64_t seed = 0;
  int n_startup = 10;
  TpeOptions tpe;
  GpOptions gp;
};

/// Ask/tell driver.  Suggestions use only completed trials, so tells may
/// arrive in any order; each ask is seeded from (seed, trial index), which
/// makes a resumed study continue exactly as an uninterrupted one would.
class Optimizer
{
public:
  Optimizer(ParamSpace space, OptimizerOptions options);

  Trial ask();
  void tell(std::size_t index, double value);
  void tell_failed(std::size_t index);
  /// Appends an already evaluated trial (used when resuming).
  void restore(Trial trial);

  const Study& study() const { return study_; }
  const ParamSpace& space() const { return space_; }

private:
  Trial& pending(std::size_t index);

  ParamSpace space_;
  OptimizerOptions options_;
  Study study_;
};

/// JSON-lines trial log: {index, params, value, seed, status} per line.
nlohmann::json trial_to_json(const ParamSpace& space, const Trial& t);
Trial trial_from_json(const ParamSpace& space, const nlohmann::json& j);
std::vector<Trial> load_journal(const ParamSpace& space, const std::filesystem::path& path);
void append_journal(const ParamSpace& space, const std::filesystem::path& path, const Trial& t);

/// Runs `budget` trials in total (including any already in the journal,
/// which are loaded first when `journal` is given).
Study optimize(const ParamSpace& space, const Objective& objective, int budget, const OptimizerOptions& options,
               const std::optional<std::filesystem::path>& journal = std::nullopt);

/// Uniform sampling with replacement; equivalent to optimize with
/// Strategy::random.
Study random_search(const ParamSpace& space, const Objective& objective, int n_trials, std::uint64_t seed);

} // namespace treeseg
