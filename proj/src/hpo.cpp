#include "treeseg/hpo.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace treeseg {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

bool on_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

} // namespace

ParamDef ParamDef::real(std::string name, double min, double max, double step)
{
  ParamDef p;
  p.name = std::move(name);
  p.kind = Kind::real;
  p.min = min;
  p.max = max;
  p.step = step;
  return p;
}

ParamDef ParamDef::integer(std::string name, int min, int max, int step)
{
  ParamDef p = real(std::move(name), min, max, step);
  p.kind = Kind::integer;
  return p;
}

ParamDef ParamDef::categorical(std::string name, std::vector<std::string> choices)
{
  ParamDef p;
  p.name = std::move(name);
  p.kind = Kind::categorical;
  p.choices = std::move(choices);
  return p;
}

std::size_t ParamDef::size() const
{
  if (kind == Kind::categorical)
    return choices.size();
  return static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
}

double ParamDef::value(std::size_t k) const
{
  if (kind == Kind::categorical)
    return static_cast<double>(k);
  return min + static_cast<double>(k) * step;
}

nlohmann::json ParamDef::json_value(std::size_t k) const
{
  switch (kind) {
    case Kind::categorical:
      return choices.at(k);
    case Kind::integer:
      return static_cast<long long>(std::llround(value(k)));
    case Kind::real:
      break;
  }
  return value(k);
}

std::size_t ParamDef::index_of(const nlohmann::json& v) const
{
  if (kind == Kind::categorical) {
    const auto s = v.get<std::string>();
    const auto it = std::find(choices.begin(), choices.end(), s);
    if (it == choices.end())
      throw std::invalid_argument("parameter " + name + ": unknown choice " + s);
    return static_cast<std::size_t>(it - choices.begin());
  }
  const double x = v.get<double>();
  const double k = std::round((x - min) / step);
  if (k < 0 || k >= static_cast<double>(size()) || std::abs(value(static_cast<std::size_t>(k)) - x) > 1e-9 * std::max(1.0, std::abs(x)))
    throw std::invalid_argument("parameter " + name + ": value off the grid");
  return static_cast<std::size_t>(k);
}

void ParamDef::validate() const
{
  if (name.empty())
    throw std::invalid_argument("parameter without a name");
  if (kind == Kind::categorical) {
    if (choices.empty())
      throw std::invalid_argument("parameter " + name + ": no choices");
    return;
  }
  if (!std::isfinite(min) || !std::isfinite(max) || !std::isfinite(step))
    throw std::invalid_argument("parameter " + name + ": non-finite bounds");
  if (!(step > 0.0))
    throw std::invalid_argument("parameter " + name + ": step must be positive");
  if (min > max)
    throw std::invalid_argument("parameter " + name + ": min > max");
  if (kind == Kind::integer && !(on_integer(min) && on_integer(max) && on_integer(step)))
    throw std::invalid_argument("parameter " + name + ": integer bounds required");
  if ((max - min) / step > 1e9)
    throw std::invalid_argument("parameter " + name + ": grid too fine");
}

std::size_t ParamSpace::cardinality() const
{
  std::size_t n = 1;
  for (const auto& p : params) {
    const std::size_t k = p.size();
    if (n > std::numeric_limits<std::size_t>::max() / k)
      return std::numeric_limits<std::size_t>::max();
    n *= k;
  }
  return n;
}

void ParamSpace::validate() const
{
  if (params.empty())
    throw std::invalid_argument("empty parameter space");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (params[j].name == params[i].name)
        throw std::invalid_argument("duplicate parameter " + params[i].name);
  }
}

bool ParamSpace::contains(const Config& c) const
{
  if (c.size() != params.size())
    return false;
  for (std::size_t d = 0; d < c.size(); ++d)
    if (c[d] >= params[d].size())
      return false;
  return true;
}

Config ParamSpace::sample_uniform(std::mt19937_64& rng) const
{
  Config c(params.size());
  for (std::size_t d = 0; d < params.size(); ++d)
    c[d] = std::uniform_int_distribution<std::size_t>(0, params[d].size() - 1)(rng);
  return c;
}

nlohmann::json ParamSpace::to_json(const Config& c) const
{
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t d = 0; d < params.size(); ++d)
    j[params[d].name] = params[d].json_value(c.at(d));
  return j;
}

Config ParamSpace::from_json(const nlohmann::json& j) const
{
  Config c(params.size());
  for (std::size_t d = 0; d < params.size(); ++d) {
    if (!j.contains(params[d].name))
      throw std::invalid_argument("missing parameter " + params[d].name);
    c[d] = params[d].index_of(j.at(params[d].name));
  }
  return c;
}

ParamSpace ParamSpace::parse(const nlohmann::json& j)
{
  const nlohmann::json& list = j.is_object() && j.contains("params") ? j.at("params") : j;
  if (!list.is_array())
    throw std::invalid_argument("parameter space must be a list");
  ParamSpace space;
  for (const auto& e : list) {
    const auto name = e.at("name").get<std::string>();
    const auto type = e.value("type", std::string(e.contains("choices") ? "categorical" : "real"));
    if (type == "categorical") {
      std::vector<std::string> choices;
      for (const auto& c : e.at("choices"))
        choices.push_back(c.is_string() ? c.get<std::string>() : c.dump());
      space.params.push_back(ParamDef::categorical(name, std::move(choices)));
    } else if (type == "int" || type == "integer") {
      space.params.push_back(ParamDef::integer(name, e.at("min").get<int>(), e.at("max").get<int>(), e.value("step", 1)));
    } else if (type == "real" || type == "float") {
      space.params.push_back(ParamDef::real(name, e.at("min").get<double>(), e.at("max").get<double>(), e.at("step").get<double>()));
    } else {
      throw std::invalid_argument("parameter " + name + ": unknown type " + type);
    }
  }
  space.validate();
  return space;
}

std::optional<Trial> Study::best() const
{
  std::optional<Trial> out;
  for (const auto& t : trials)
    if (t.status == TrialStatus::complete && (!out || t.value > out->value))
      out = t;
  return out;
}

std::vector<double> Study::best_trace() const
{
  std::vector<double> out;
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& t : trials) {
    if (t.status == TrialStatus::complete && (std::isnan(best) || t.value > best))
      best = t.value;
    out.push_back(best);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MaternNu matern_nu(double nu)
{
  if (nu == 0.5)
    return MaternNu::half;
  if (nu == 1.5)
    return MaternNu::three_halves;
  if (nu == 2.5)
    return MaternNu::five_halves;
  throw std::invalid_argument("matern_kernel: only nu in {0.5, 1.5, 2.5} is supported");
}

double matern_kernel(const std::vector<double>& a, const std::vector<double>& b, MaternNu nu, double rho)
{
  if (!(rho > 0.0))
    throw std::invalid_argument("matern_kernel: rho must be positive");
  if (a.size() != b.size())
    throw std::invalid_argument("matern_kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d2 += (a[i] - b[i]) * (a[i] - b[i]);
  const double r = std::sqrt(d2) / rho;
  switch (nu) {
    case MaternNu::half:
      return std::exp(-r);
    case MaternNu::three_halves:
      return (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    case MaternNu::five_halves:
      return (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * std::exp(-kSqrt5 * r);
  }
  return 0.0;
}

double matern_kernel(const std::vector<double>& a, const std::vector<double>& b, double nu, double rho)
{
  return matern_kernel(a, b, matern_nu(nu), rho);
}

struct GaussianProcess::Impl
{
  std::vector<std::vector<double>> x;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  double best = 0.0;
};

GaussianProcess::GaussianProcess(MaternNu nu, double rho, double noise)
  : nu_(nu)
  , rho_(rho)
  , noise_(noise)
{
  if (!(rho > 0.0))
    throw std::invalid_argument("GaussianProcess: rho must be positive");
  if (!(noise >= 0.0))
    throw std::invalid_argument("GaussianProcess: noise must be non-negative");
}

void GaussianProcess::fit(std::vector<std::vector<double>> x, std::vector<double> y)
{
  if (x.empty() || x.size() != y.size())
    throw std::invalid_argument("GaussianProcess::fit: need matching non-empty data");
  const auto n = static_cast<Eigen::Index>(x.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : y)
    ss += (v - mean) * (v - mean);
  const double sd = ss > 0.0 ? std::sqrt(ss / static_cast<double>(n)) : 1.0;

  auto impl = std::make_shared<Impl>();
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd ys(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ys[i] = (y[i] - mean) / sd;
    for (Eigen::Index j = 0; j <= i; ++j)
      k(i, j) = k(j, i) = matern_kernel(x[i], x[j], nu_, rho_);
    k(i, i) += noise_;
  }
  impl->llt.compute(k);
  if (impl->llt.info() != Eigen::Success) {
    k.diagonal().array() += kJitter;
    impl->llt.compute(k);
    if (impl->llt.info() != Eigen::Success)
      throw std::runtime_error("GaussianProcess: kernel matrix is singular");
  }
  impl->alpha = impl->llt.solve(ys);
  impl->best = ys.maxCoeff();
  impl->x = std::move(x);
  impl_ = std::move(impl);
}

std::pair<double, double> GaussianProcess::predict(const std::vector<double>& x) const
{
  if (!impl_)
    throw std::logic_error("GaussianProcess::predict before fit");
  const auto n = static_cast<Eigen::Index>(impl_->x.size());
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i)
    ks[i] = matern_kernel(impl_->x[i], x, nu_, rho_);
  const double mean = ks.dot(impl_->alpha);
  const Eigen::VectorXd v = impl_->llt.matrixL().solve(ks);
  return { mean, std::max(0.0, 1.0 - v.squaredNorm()) };
}

double GaussianProcess::expected_improvement(const std::vector<double>& x) const
{
  const auto [mu, var] = predict(x);
  const double s = std::sqrt(var);
  const double gain = mu - impl_->best;
  if (s < 1e-12)
    return std::max(0.0, gain);
  const double z = gain / s;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return std::max(0.0, gain * cdf + s * pdf);
}

std::vector<double> unit_coordinates(const ParamSpace& space, const Config& c)
{
  std::vector<double> u(c.size());
  for (std::size_t d = 0; d < c.size(); ++d) {
    const std::size_t k = space.params[d].size();
    u[d] = k > 1 ? static_cast<double>(c[d]) / static_cast<double>(k - 1) : 0.0;
  }
  return u;
}

namespace {

std::vector<const Trial*> completed(const std::vector<Trial>& history)
{
  std::vector<const Trial*> out;
  for (const auto& t : history)
    if (t.status == TrialStatus::complete)
      out.push_back(&t);
  return out;
}

GaussianProcess fit_gp(const std::vector<const Trial*>& done, const ParamSpace& space, double nu, double rho, double noise)
{
  GaussianProcess gp(matern_nu(nu), rho, noise);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const Trial* t : done) {
    x.push_back(unit_coordinates(space, t->config));
    y.push_back(t->value);
  }
  gp.fit(std::move(x), std::move(y));
  return gp;
}

/// Discrete Parzen mass over the grid indices of one parameter.
std::vector<double> parzen_mass(const ParamDef& p, const std::vector<std::size_t>& obs)
{
  const std::size_t k = p.size();
  std::vector<double> mass(k, 0.0);
  if (p.kind == ParamDef::Kind::categorical) {
    // Prior weight spread evenly, one unit per observation.
    for (auto& m : mass)
      m = 1.0 / static_cast<double>(k);
    for (auto o : obs)
      mass[o] += 1.0;
  } else {
    const double lo = -0.5, hi = static_cast<double>(k) - 0.5;
    const double range = hi - lo;
    std::vector<double> mus{ 0.5 * (lo + hi) };
    std::vector<double> sigmas{ range };
    std::vector<double> sorted;
    for (auto o : obs)
      sorted.push_back(static_cast<double>(o));
    std::sort(sorted.begin(), sorted.end());
    const double min_sigma = range / std::min(100.0, 1.0 + static_cast<double>(obs.size()));
    for (auto o : obs) {
      const double mu = static_cast<double>(o);
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), mu);
      const auto pos = static_cast<std::size_t>(it - sorted.begin());
      const double left = pos > 0 ? mu - sorted[pos - 1] : mu - lo;
      // Duplicates share a position; look past them on the right.
      const auto up = std::upper_bound(sorted.begin(), sorted.end(), mu);
      const double right = up != sorted.end() ? *up - mu : hi - mu;
      mus.push_back(mu);
      sigmas.push_back(std::clamp(std::max(left, right), min_sigma, range));
    }
    auto cdf = [](double x, double mu, double s) { return 0.5 * std::erfc(-(x - mu) / (s * std::sqrt(2.0))); };
    for (std::size_t c = 0; c < mus.size(); ++c) {
      const double norm = cdf(hi, mus[c], sigmas[c]) - cdf(lo, mus[c], sigmas[c]);
      for (std::size_t i = 0; i < k; ++i) {
        const double a = static_cast<double>(i) - 0.5, b = static_cast<double>(i) + 0.5;
        mass[i] += (cdf(b, mus[c], sigmas[c]) - cdf(a, mus[c], sigmas[c])) / norm;
      }
    }
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (auto& m : mass)
    m = std::max(m / total, 1e-300);
  return mass;
}

} // namespace

double gp_expected_improvement(const std::vector<Trial>& history, const ParamSpace& space, const Config& candidate,
                               double nu, double rho, double noise)
{
  const auto done = completed(history);
  if (done.empty())
    throw std::invalid_argument("gp_expected_improvement: no completed trials");
  return fit_gp(done, space, nu, rho, noise).expected_improvement(unit_coordinates(space, candidate));
}

Suggestion tpe_suggest(const std::vector<Trial>& history, const ParamSpace& space, std::mt19937_64& rng,
                       const TpeOptions& options)
{
  if (!(options.gamma > 0.0 && options.gamma < 1.0))
    throw std::invalid_argument("tpe_suggest: gamma must be in (0, 1)");
  if (options.n_candidates < 1)
    throw std::invalid_argument("tpe_suggest: need at least one candidate");
  auto done = completed(history);
  const bool degenerate =
    done.size() < 2 || std::all_of(done.begin(), done.end(), [&](const Trial* t) { return t->value == done.front()->value; });
  if (degenerate)
    return { space.sample_uniform(rng), true };

  std::stable_sort(done.begin(), done.end(), [](const Trial* a, const Trial* b) { return a->value > b->value; });
  const auto n = done.size();
  const auto n_good = std::min(n - 1, static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(n))));

  std::vector<std::vector<double>> l(space.dims()), g(space.dims());
  for (std::size_t d = 0; d < space.dims(); ++d) {
    std::vector<std::size_t> good, bad;
    for (std::size_t i = 0; i < n; ++i)
      (i < n_good ? good : bad).push_back(done[i]->config[d]);
    l[d] = parzen_mass(space.params[d], good);
    g[d] = parzen_mass(space.params[d], bad);
  }

  Config best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < options.n_candidates; ++c) {
    Config cand(space.dims());
    double score = 0.0;
    for (std::size_t d = 0; d < space.dims(); ++d) {
      std::discrete_distribution<std::size_t> draw(l[d].begin(), l[d].end());
      cand[d] = draw(rng);
      score += std::log(l[d][cand[d]]) - std::log(g[d][cand[d]]);
    }
    if (score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  return { best, false };
}

Suggestion gp_suggest(const std::vector<Trial>& history, const ParamSpace& space, std::mt19937_64& rng,
                      const GpOptions& options)
{
  const auto done = completed(history);
  if (done.empty())
    return { space.sample_uniform(rng), true };
  const auto gp = fit_gp(done, space, options.nu, options.rho, options.noise);

  const std::size_t total = space.cardinality();
  const bool exhaustive = total <= options.max_candidates;
  const std::size_t count = exhaustive ? total : options.max_candidates;
  Config best;
  double best_ei = -1.0;
  for (std::size_t i = 0; i < count; ++i) {
    Config cand(space.dims());
    if (exhaustive) {
      std::size_t rest = i;
      for (std::size_t d = space.dims(); d-- > 0;) {
        cand[d] = rest % space.params[d].size();
        rest /= space.params[d].size();
      }
    } else {
      cand = space.sample_uniform(rng);
    }
    const double ei = gp.expected_improvement(unit_coordinates(space, cand));
    if (ei > best_ei) {
      best_ei = ei;
      best = std::move(cand);
    }
  }
  return { best, false };
}

Strategy parse_strategy(const std::string& s)
{
  if (s == "random")
    return Strategy::random;
  if (s == "tpe")
    return Strategy::tpe;
  if (s == "gp")
    return Strategy::gp;
  throw std::invalid_argument("unknown strategy " + s);
}

std::string to_string(Strategy s)
{
  switch (s) {
    case Strategy::random:
      return "random";
    case Strategy::tpe:
      return "tpe";
    case Strategy::gp:
      return "gp";
  }
  return "?";
}

Optimizer::Optimizer(ParamSpace space, OptimizerOptions options)
  : space_(std::move(space))
  , options_(options)
{
  space_.validate();
}

Trial Optimizer::ask()
{
  Trial t;
  t.index = study_.trials.empty() ? 0 : study_.trials.back().index + 1;
  t.seed = derive_seed(options_.seed, t.index);
  std::mt19937_64 rng(derive_seed(options_.seed ^ 0x5bd1e9955bd1e995ULL, t.index));
  const bool startup = options_.strategy == Strategy::random || t.index < static_cast<std::size_t>(std::max(options_.n_startup, 1));
  if (startup)
    t.config = space_.sample_uniform(rng);
  else if (options_.strategy == Strategy::tpe)
    t.config = tpe_suggest(study_.trials, space_, rng, options_.tpe).config;
  else
    t.config = gp_suggest(study_.trials, space_, rng, options_.gp).config;
  study_.trials.push_back(t);
  return t;
}

Trial& Optimizer::pending(std::size_t index)
{
  for (auto& t : study_.trials)
    if (t.index == index) {
      if (t.status != TrialStatus::pending)
        throw std::logic_error("trial already told");
      return t;
    }
  throw std::invalid_argument("unknown trial index");
}

void Optimizer::tell(std::size_t index, double value)
{
  Trial& t = pending(index);
  t.value = value;
  t.status = std::isfinite(value) ? TrialStatus::complete : TrialStatus::failed;
}

void Optimizer::tell_failed(std::size_t index) { pending(index).status = TrialStatus::failed; }

void Optimizer::restore(Trial trial)
{
  if (!space_.contains(trial.config))
    throw std::invalid_argument("restored trial is off the grid");
  auto& trials = study_.trials;
  const auto pos = std::lower_bound(trials.begin(), trials.end(), trial.index,
                                    [](const Trial& t, std::size_t i) { return t.index < i; });
  if (pos != trials.end() && pos->index == trial.index)
    throw std::invalid_argument("duplicate trial index");
  trials.insert(pos, std::move(trial));
}

namespace {

std::string status_name(TrialStatus s)
{
  switch (s) {
    case TrialStatus::pending:
      return "pending";
    case TrialStatus::complete:
      return "complete";
    case TrialStatus::failed:
      return "failed";
  }
  return "?";
}

TrialStatus parse_status(const std::string& s)
{
  if (s == "complete")
    return TrialStatus::complete;
  if (s == "failed")
    return TrialStatus::failed;
  if (s == "pending")
    return TrialStatus::pending;
  throw std::invalid_argument("unknown trial status " + s);
}

} // namespace

nlohmann::json trial_to_json(const ParamSpace& space, const Trial& t)
{
  nlohmann::json j;
  j["index"] = t.index;
  j["params"] = space.to_json(t.config);
  j["value"] = t.status == TrialStatus::complete ? nlohmann::json(t.value) : nlohmann::json(nullptr);
  j["seed"] = t.seed;
  j["status"] = status_name(t.status);
  return j;
}

Trial trial_from_json(const ParamSpace& space, const nlohmann::json& j)
{
  Trial t;
  t.index = j.at("index").get<std::size_t>();
  t.config = space.from_json(j.at("params"));
  t.seed = j.at("seed").get<std::uint64_t>();
  t.status = parse_status(j.at("status").get<std::string>());
  if (t.status == TrialStatus::complete)
    t.value = j.at("value").get<double>();
  return t;
}

std::vector<Trial> load_journal(const ParamSpace& space, const std::filesystem::path& path)
{
  std::vector<Trial> out;
  std::ifstream in(path);
  if (!in)
    return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    out.push_back(trial_from_json(space, nlohmann::json::parse(line)));
  }
  return out;
}

void append_journal(const ParamSpace& space, const std::filesystem::path& path, const Trial& t)
{
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << trial_to_json(space, t).dump() << '\n';
}

Study optimize(const ParamSpace& space, const Objective& objective, int budget, const OptimizerOptions& options,
               const std::optional<std::filesystem::path>& journal)
{
  if (budget < 1)
    throw std::invalid_argument("optimize: budget must be >= 1");
  Optimizer opt(space, options);
  if (journal)
    for (auto& t : load_journal(space, *journal))
      if (t.status != TrialStatus::pending)
        opt.restore(std::move(t));
  while (opt.study().trials.size() < static_cast<std::size_t>(budget)) {
    const Trial t = opt.ask();
    try {
      opt.tell(t.index, objective(t.config, t.seed));
    } catch (const std::exception&) {
      opt.tell_failed(t.index);
    }
    if (journal)
      append_journal(space, *journal, opt.study().trials.back());
  }
  return opt.study();
}

Study random_search(const ParamSpace& space, const Objective& objective, int n_trials, std::uint64_t seed)
{
  OptimizerOptions options;
  options.strategy = Strategy::random;
  options.seed = seed;
  return optimize(space, objective, n_trials, options);
}

} // namespace treeseg
