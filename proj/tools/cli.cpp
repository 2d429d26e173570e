#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <type_traits>

#include <CLI11.hpp>
#include <json.hpp>

#include "rclab/analysis.hpp"
#include "rclab/environment.hpp"
#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/isoperimetry.hpp"
#include "rclab/kernel.hpp"
#include "rclab/parallel.hpp"
#include "rclab/rng.hpp"
#include "rclab/stats.hpp"
#include "rclab/traps.hpp"
#include "rclab/walker.hpp"

namespace rclab::cli {

namespace {

using json = nlohmann::ordered_json;

struct Output {
  json result;
  std::optional<std::string> csv;
  bool wrote_out = false;  // the command wrote --out itself
};

template <class T>
struct is_optional : std::false_type {};
template <class T>
struct is_optional<std::optional<T>> : std::true_type {};

template <class T>
json echo_value(const T& v) {
  if constexpr (is_optional<T>::value) {
    return v ? json(*v) : json(nullptr);
  } else {
    return json(v);
  }
}

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<std::shared_ptr<void>> storage;
  std::vector<std::pair<std::string, std::function<json()>>> echo;
  std::function<Output()> body;
  bool csv = false;

  std::string out;
  std::string format = "json";
  int threads = 1;
  bool no_timestamp = false;
  std::string config;
};

std::string key_of(const std::string& names) {
  std::string first = names.substr(0, names.find(','));
  while (!first.empty() && first.front() == '-') first.erase(first.begin());
  return first;
}

template <class T>
T& option(Command& c, const std::string& names, T def, const std::string& help) {
  auto p = std::make_shared<T>(std::move(def));
  c.storage.push_back(p);
  CLI::Option* o = c.app->add_option(names, *p, help);
  if constexpr (!is_optional<T>::value) o->capture_default_str();
  c.echo.emplace_back(key_of(names), [p] { return echo_value(*p); });
  return *p;
}

Point parse_point(const std::string& text, int d) {
  if (text.empty()) return Point::origin(d);
  std::vector<int> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("bad coordinate list '" + text + "'");
    }
  }
  if (static_cast<int>(v.size()) != d) {
    throw UsageError("point '" + text + "' has " + std::to_string(v.size()) + " coordinates, expected " +
                     std::to_string(d));
  }
  return Point::from_vector(v);
}

std::vector<Point> parse_points(const std::string& text, int d) {
  std::vector<Point> pts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';'))
    if (!item.empty()) pts.push_back(parse_point(item, d));
  return pts;
}

std::string coords_text(const Point& p) {
  std::string s;
  for (int i = 0; i < p.dim(); ++i) s += (i ? " " : "") + std::to_string(p[i]);
  return s;
}

ConductanceLaw make_law(const std::string& kind, double gamma, double c) {
  switch (parse_law_kind(kind)) {
    case LawKind::PolyTail: return ConductanceLaw::poly_tail(gamma);
    case LawKind::SiteMin: return ConductanceLaw::site_min(gamma);
    default: return ConductanceLaw::constant(c);
  }
}

// Environment options shared by every command that needs a field.
struct EnvSource {
  std::string* in = nullptr;
  int* d = nullptr;
  std::string* law = nullptr;
  double* gamma = nullptr;
  double* c = nullptr;
  std::optional<int>* radius = nullptr;
  std::uint64_t* seed = nullptr;

  Environment make(int default_radius, int threads) const {
    if (in && !in->empty()) return load_environment(*in);
    return Environment::sample(*d, radius->value_or(default_radius), make_law(*law, *gamma, *c), *seed, threads);
  }
};

EnvSource env_options(Command& c, bool with_input, int d, const std::string& law, double gamma) {
  EnvSource s;
  if (with_input) s.in = &option(c, "--in", std::string(), "load the environment from this file instead of sampling");
  s.d = &option(c, "--d", d, "dimension");
  s.law = &option(c, "--law", law, "conductance law: poly, sitemin or constant");
  s.gamma = &option(c, "--gamma", gamma, "tail exponent of the poly and sitemin laws");
  s.c = &option(c, "--c", 1.0, "value of the constant law");
  s.radius = &option(c, "--radius", std::optional<int>(), "half-width of the stored window");
  s.seed = &option(c, "--seed", std::uint64_t{1}, "environment seed");
  return s;
}

json env_summary(const Environment& env) {
  json j;
  j["d"] = env.dim();
  j["radius"] = env.radius();
  j["law"] = env.law().describe();
  j["seed"] = env.seed();
  j["bond_count"] = env.bond_count();
  return j;
}

// Finite chain options for the iso commands.
struct ChainSource {
  std::string* path = nullptr;
  std::string* example = nullptr;
  std::uint64_t* seed = nullptr;

  std::pair<FiniteChain, std::string> make() const {
    if (!path->empty()) return {chain_from_json(nlohmann::json::parse(read_file(*path))), *path};
    const std::string& ex = *example;
    const auto size_after_colon = [&](const std::string& prefix) {
      try {
        return std::stoi(ex.substr(prefix.size()));
      } catch (const std::exception&) {
        throw UsageError("bad chain example '" + ex + "'");
      }
    };
    if (ex == "two-state") return {two_state_lazy(), ex};
    if (ex.rfind("cycle:", 0) == 0) return {lazy_cycle(size_after_colon("cycle:")), ex};
    if (ex.rfind("random:", 0) == 0) return {random_lazy_chain(size_after_colon("random:"), *seed), ex};
    throw UsageError("unknown chain example '" + ex + "' (two-state, cycle:K or random:K)");
  }
};

ChainSource chain_options(Command& c) {
  ChainSource s;
  s.path = &option(c, "--chain", std::string(), "chain JSON file (transition, measure)");
  s.example = &option(c, "--example", std::string("two-state"), "built-in chain: two-state, cycle:K or random:K");
  s.seed = &option(c, "--seed", std::uint64_t{1}, "seed for random:K chains");
  return s;
}

ReturnSeries load_series(const std::string& path) {
  if (path.empty()) throw UsageError("--in is required");
  std::istringstream is(read_file(path));
  return read_series_csv(is);
}

// ---------------------------------------------------------------------------
// Command definitions.

void def_env_sample(Command& c) {
  EnvSource src = env_options(c, false, 2, "poly", 1.0);
  c.body = [&c, src] {
    if (c.out.empty()) throw UsageError("env sample needs --out");
    const Environment env = src.make(64, c.threads);
    save_environment(env, c.out);
    Output o;
    o.result = env_summary(env);
    o.result["file"] = c.out;
    o.result["field_generator"] = kFieldGenerator;
    o.wrote_out = true;
    return o;
  };
}

void def_env_stat(Command& c) {
  EnvSource src = env_options(c, true, 2, "poly", 1.0);
  auto& N = option(c, "--N", std::optional<int>(), "box half-width for the minimum-conductance statistic");
  c.body = [&c, src, &N] {
    const Environment env = src.make(64, c.threads);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(env.bond_count()));
    env.for_each_bond([&](const Bond&, double w) { values.push_back(w); });
    double lo = INFINITY, hi = -INFINITY, sum = 0;
    for (double w : values) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
      sum += w;
    }
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["min"] = lo;
    o.result["max"] = hi;
    o.result["mean"] = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
    const ConductanceLaw& law = env.law();
    if (law.has_gamma()) {
      o.result["ks_distance"] = stats::ks_distance(values, [&law](double a) { return law.bond_cdf(a); });
    } else {
      o.result["ks_distance"] = nullptr;
    }
    const int n = N.value_or(env.radius());
    o.result["N"] = n;
    o.result["min_conductance_statistic"] = min_conductance_statistic(env, n);
    if (law.kind == LawKind::PolyTail) {
      o.result["target"] = -env.dim() / law.param;
    } else {
      o.result["target"] = nullptr;
    }
    return o;
  };
}

void def_kernel_return(Command& c) {
  EnvSource src = env_options(c, true, 2, "constant", 1.0);
  auto& n_max = option(c, "--n_max,--nmax", 64, "largest n; P^{2n}(0,0) is computed up to 2 n_max steps");
  auto& grid = option(c, "--grid", 24, "number of geometric grid points in [1, n_max]");
  auto& tau = option(c, "--tau", kDefaultTau, "entries below tau are dropped into the error bound");
  c.csv = true;
  c.body = [&c, src, &n_max, &grid, &tau] {
    const Environment env = src.make(2 * n_max + 1, c.threads);
    const ReturnSeries s = return_series(env, n_max, geometric_grid(1, n_max, grid), tau, c.threads);
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["tau"] = tau;
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back({{"n", p.n}, {"p2n", p.value}, {"err_bound", p.err_bound}});
    o.result["points"] = std::move(pts);
    std::ostringstream os;
    write_series_csv(s, os);
    o.csv = os.str();
    return o;
  };
}

void def_kernel_dist(Command& c) {
  EnvSource src = env_options(c, true, 2, "constant", 1.0);
  auto& n = option(c, "--n", 8, "number of steps");
  auto& source = option(c, "--source", std::string(), "start point, comma separated (default origin)");
  auto& tau = option(c, "--tau", kDefaultTau, "entries below tau are dropped into the error bound");
  c.csv = true;
  c.body = [&c, src, &n, &source, &tau] {
    const Point x = parse_point(source, *src.d);
    const Environment env = src.make(n + x.linf() + 1, c.threads);
    const SparseDistribution dist = heat_kernel(env, n, x, tau, c.threads);
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["n"] = n;
    o.result["source"] = x.to_vector();
    o.result["total"] = dist.total();
    o.result["lost_mass_bound"] = dist.lost_mass_bound();
    o.result["support_radius"] = dist.support_radius();
    json entries = json::array();
    std::ostringstream os;
    os << "x,p\n";
    dist.for_each([&](const Point& p, double m) {
      entries.push_back({{"x", p.to_vector()}, {"p", m}});
      os << coords_text(p) << ',' << format_double(m) << '\n';
    });
    o.result["entries"] = std::move(entries);
    o.csv = os.str();
    return o;
  };
}

void def_walk_simulate(Command& c) {
  EnvSource src = env_options(c, true, 2, "poly", 1.0);
  auto& length = option(c, "--length", std::int64_t{1000}, "number of steps");
  auto& start = option(c, "--start", std::string(), "start point, comma separated (default origin)");
  auto& walk_seed = option(c, "--walk_seed", std::optional<std::uint64_t>(), "walk seed (default derived from --seed)");
  auto& levels = option(c, "--levels", 0, "report hitting times of the boxes B_0 .. B_levels");
  auto& exit_n = option(c, "--exit_n", 0, "steps for the exit-probability estimate (0 disables it)");
  auto& exit_box = option(c, "--exit_box", 0, "half-width of the box for the exit-probability estimate");
  auto& replicas = option(c, "--replicas", std::int64_t{0}, "walks for the exit-probability estimate");
  c.csv = true;
  c.body = [&c, src, &length, &start, &walk_seed, &levels, &exit_n, &exit_box, &replicas] {
    const Point x = parse_point(start, *src.d);
    const std::int64_t need = std::max<std::int64_t>({length + x.linf(), exit_n, 3 * levels}) + 1;
    if (need > (1 << 20)) throw StorageError("requested walk needs a window radius above 2^20");
    const Environment env = src.make(static_cast<int>(need), c.threads);
    const std::uint64_t ws = walk_seed.value_or(derive_seed(env.seed(), 1));
    const Trajectory traj = simulate(env, x, length, ws);
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["walk_seed"] = ws;
    o.result["start"] = x.to_vector();
    json steps = json::array();
    std::ostringstream os;
    os << "step,x\n" << 0 << ',' << coords_text(x) << '\n';
    for (std::size_t i = 0; i < traj.length(); ++i) {
      steps.push_back(traj.steps[i].to_vector());
      os << i + 1 << ',' << coords_text(traj.steps[i]) << '\n';
    }
    o.result["steps"] = std::move(steps);
    if (levels > 0) {
      const HittingTimes h = hitting_times(traj, levels);
      json recs = json::array();
      for (const auto& r : h.records) recs.push_back({{"N", r.N}, {"time", r.time}, {"location", r.location.to_vector()}});
      o.result["hitting_times"] = {{"records", std::move(recs)}, {"truncated", h.truncated}};
    }
    if (exit_n > 0) {
      if (replicas <= 0 || exit_box <= 0) throw UsageError("--exit_n needs positive --replicas and --exit_box");
      const std::uint64_t es = derive_seed(ws, 2);
      const McEstimate est = exit_probability(env, exit_n, exit_box, replicas, es, c.threads);
      o.result["exit"] = experiment_record("exit_probability", {{"n", exit_n}, {"half_width", exit_box}}, est, es);
    }
    o.csv = os.str();
    return o;
  };
}

void def_traps_scan(Command& c) {
  EnvSource src = env_options(c, true, 2, "poly", 1.0);
  auto& N = option(c, "--N", 8, "scale N; the weak bond threshold is N^-alpha");
  auto& xi = option(c, "--xi", 0.5, "strong bond threshold");
  auto& eps = option(c, "--eps,--epsilon", 0.5, "epsilon; sets alpha = d (4d - 2)/(gamma (1 - eps)) unless --alpha");
  auto& alpha = option(c, "--alpha", std::optional<double>(), "trap exponent alpha");
  auto& region = option(c, "--region", std::optional<int>(), "scan sites with |x|_inf <= region (default radius - 3)");
  auto& plant = option(c, "--plant", std::string(), "plant traps at these sites, e.g. '2,0;0,-5'");
  c.csv = true;
  c.body = [&c, src, &N, &xi, &eps, &alpha, &region, &plant] {
    Environment env = src.make(32, c.threads);
    const double gamma = env.law().has_gamma() ? env.law().param : *src.gamma;
    const double a = alpha.value_or(trap_alpha(env.dim(), gamma, eps));
    for (const Point& p : parse_points(plant, env.dim())) env = plant_trap(env, p, N, a, xi);
    const TrapScanReport r = scan_traps(env, N, a, xi, region.value_or(env.radius() - 3), c.threads);
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["scan"] = scan_to_json(r);
    std::ostringstream os;
    write_scan_csv(r, os);
    o.csv = os.str();
    return o;
  };
}

void def_traps_qn(Command& c) {
  auto& d = option(c, "--d", 5, "dimension");
  auto& gamma = option(c, "--gamma", 0.1, "tail exponent");
  auto& xi = option(c, "--xi", 0.5, "strong bond threshold");
  auto& eps = option(c, "--eps,--epsilon", 0.5, "epsilon");
  auto& N = option(c, "--N", 10.0, "scale N");
  auto& alpha = option(c, "--alpha", std::optional<double>(), "trap exponent (default from d, gamma, eps)");
  auto& samples = option(c, "--samples", std::int64_t{0}, "i.i.d. collections for a Monte Carlo check");
  auto& seed = option(c, "--seed", std::uint64_t{1}, "Monte Carlo seed");
  c.body = [&c, &d, &gamma, &xi, &eps, &N, &alpha, &samples, &seed] {
    const double a = alpha.value_or(trap_alpha(d, gamma, eps));
    const double q = alpha ? q_N_for_alpha(d, gamma, xi, a, N) : q_N_closed_form(d, gamma, xi, eps, N);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", q);
    Output o;
    o.result["alpha"] = a;
    o.result["q_N"] = q;
    o.result["q_N_display"] = buf;
    o.result["formula"] = "(1 - 2^-gamma) (1 - xi^gamma) N^(-alpha gamma (4d - 2))";
    if (samples > 0) {
      const CollectionSample s = sample_collections(d, gamma, xi, a, N, samples, seed, c.threads);
      o.result["monte_carlo"] = {{"samples", s.samples}, {"successes", s.successes}, {"estimate", s.estimate},
                                 {"sigma", s.sigma},     {"z", s.z}};
    }
    return o;
  };
}

void def_traps_lambda(Command& c) {
  auto& d = option(c, "--d", 2, "dimension");
  auto& gamma = option(c, "--gamma", 1.0, "tail exponent");
  auto& xi = option(c, "--xi", 0.5, "strong bond threshold");
  auto& eps = option(c, "--eps,--epsilon", 0.5, "epsilon");
  auto& alpha = option(c, "--alpha", std::optional<double>(), "trap exponent (default from d, gamma, eps)");
  auto& N = option(c, "--N", 4, "number of boundary hits");
  auto& replicas = option(c, "--replicas", std::int64_t{100000}, "independent environment and walk replicas");
  auto& seed = option(c, "--seed", std::uint64_t{1}, "master seed");
  auto& cap = option(c, "--step_cap", std::int64_t{10000000}, "steps after which a replica counts as truncated");
  c.body = [&c, &d, &gamma, &xi, &eps, &alpha, &N, &replicas, &seed, &cap] {
    LambdaParams p;
    p.d = d;
    p.gamma = gamma;
    p.xi = xi;
    p.eps = eps;
    p.alpha = alpha;
    p.N = N;
    p.replicas = replicas;
    p.seed = seed;
    p.step_cap = cap;
    p.threads = c.threads;
    Output o;
    o.result = lambda_to_json(lambda_experiment(p));
    return o;
  };
}

void def_iso_profile(Command& c) {
  ChainSource src = chain_options(c);
  auto& samples = option(c, "--samples", std::uint64_t{0}, "sample this many connected sets instead of enumerating");
  auto& budget = option(c, "--budget", static_cast<int>(kDefaultStateBudget), "largest chain enumerated exactly");
  c.csv = true;
  c.body = [src, &samples, &budget] {
    const auto [chain, name] = src.make();
    const IsoProfile prof = samples > 0 ? iso_profile_sampled(chain, samples, *src.seed)
                                        : iso_profile(chain, static_cast<std::size_t>(budget));
    Output o;
    o.result["chain"] = {{"source", name}, {"states", chain.size()}, {"total_measure", chain.total_measure()}};
    o.result["profile"] = profile_to_json(prof);
    std::ostringstream os;
    write_profile_csv(prof, os);
    o.csv = os.str();
    return o;
  };
}

void def_iso_mp(Command& c) {
  ChainSource src = chain_options(c);
  auto& eps = option(c, "--eps,--epsilon", 0.5, "target: P^n(x, y) <= eps pi(y)");
  auto& x = option(c, "--x", std::optional<int>(), "start state (default: all pairs)");
  auto& y = option(c, "--y", std::optional<int>(), "target state (default: all pairs)");
  c.body = [src, &eps, &x, &y] {
    const auto [chain, name] = src.make();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (x.has_value() != y.has_value()) throw UsageError("--x and --y go together");
    if (x) {
      if (*x < 0 || *y < 0 || static_cast<std::size_t>(std::max(*x, *y)) >= chain.size())
        throw UsageError("state index out of range");
      pairs.emplace_back(static_cast<std::size_t>(*x), static_cast<std::size_t>(*y));
    }
    Output o;
    o.result["chain"] = {{"source", name}, {"states", chain.size()}, {"total_measure", chain.total_measure()}};
    o.result["mp"] = mp_report_to_json(verify_mp(chain, eps, pairs));
    return o;
  };
}

void def_iso_check(Command& c) {
  EnvSource src = env_options(c, true, 2, "poly", 1.0);
  auto& N = option(c, "--N", 30, "scale N; conductances are reset to 1 outside B_{N+1}");
  auto& mu = option(c, "--mu", 1.0, "mu in alpha(N) = N^-(d/gamma + mu)");
  auto& clusters = option(c, "--clusters", 100, "random connected even sets to check");
  auto& size = option(c, "--size", 12, "sites per random set");
  auto& cluster_seed = option(c, "--cluster_seed", std::uint64_t{1}, "seed for the random sets");
  c.csv = true;
  c.body = [&c, src, &N, &mu, &clusters, &size, &cluster_seed] {
    const Environment env = src.make(N + 3, c.threads);
    const double gamma = env.law().has_gamma() ? env.law().param : *src.gamma;
    const double alpha = lower_conductance_level(env.dim(), gamma, mu, N);
    const ModifiedEnvironment m = modify(env, N);
    json rows = json::array();
    std::ostringstream os;
    os << "index,size,boundary_pairs,q_out,surface_bound,pi,volume_bound,surface_ok,volume_ok\n";
    int surface_violations = 0, volume_violations = 0;
    bool precondition = false;
    double min_c = 0;
    for (int i = 0; i < clusters; ++i) {
      const auto lambda = random_even_cluster(Point::origin(env.dim()), static_cast<std::size_t>(size), N + 4,
                                              derive_seed(cluster_seed, static_cast<std::uint64_t>(i)));
      const SurfaceVolumeReport r = surface_volume_check(m, alpha, lambda);
      precondition = r.precondition;
      min_c = r.min_conductance;
      surface_violations += r.surface_ok ? 0 : 1;
      volume_violations += r.volume_ok ? 0 : 1;
      rows.push_back({{"size", r.size},
                      {"boundary_pairs", r.boundary_pairs},
                      {"q_out", r.q_out},
                      {"surface_bound", r.surface_bound},
                      {"pi", r.pi_lambda},
                      {"volume_bound", r.volume_bound},
                      {"surface_ok", r.surface_ok},
                      {"volume_ok", r.volume_ok}});
      os << i << ',' << r.size << ',' << r.boundary_pairs << ',' << format_double(r.q_out) << ','
         << format_double(r.surface_bound) << ',' << format_double(r.pi_lambda) << ','
         << format_double(r.volume_bound) << ',' << r.surface_ok << ',' << r.volume_ok << '\n';
    }
    Output o;
    o.result["environment"] = env_summary(env);
    o.result["alpha"] = alpha;
    o.result["min_conductance"] = min_c;
    o.result["precondition"] = precondition;
    o.result["surface_violations"] = surface_violations;
    o.result["volume_violations"] = volume_violations;
    o.result["sets"] = std::move(rows);
    o.csv = os.str();
    return o;
  };
}

void def_fit_exponent(Command& c) {
  auto& in = option(c, "--in", std::string(), "series CSV (n,p2n,err_bound)");
  auto& nmin = option(c, "--nmin,--n_min", 64, "smallest n in the fit");
  auto& nmax = option(c, "--nmax,--n_max", 1024, "largest n in the fit");
  auto& boot = option(c, "--bootstrap", 2000, "bootstrap resamples");
  auto& seed = option(c, "--seed", std::uint64_t{1}, "bootstrap seed");
  c.body = [&in, &nmin, &nmax, &boot, &seed] {
    Output o;
    o.result["input"] = in;
    o.result["fit"] = fit_to_json(fit_exponent(load_series(in), nmin, nmax, boot, seed));
    return o;
  };
}

void def_report_bounds(Command& c) {
  auto& d = option(c, "--d", 5, "dimension");
  auto& gamma = option(c, "--gamma", 45.0, "tail exponent");
  auto& eps = option(c, "--eps,--epsilon", 0.5, "epsilon");
  auto& mu = option(c, "--mu", 0.0, "mu");
  auto& in = option(c, "--in", std::string(), "optional series CSV to fit and compare");
  auto& nmin = option(c, "--nmin,--n_min", 64, "smallest n in the fit");
  auto& nmax = option(c, "--nmax,--n_max", 1024, "largest n in the fit");
  c.body = [&d, &gamma, &eps, &mu, &in, &nmin, &nmax] {
    std::optional<DecayFit> fit;
    if (!in.empty()) fit = fit_exponent(load_series(in), nmin, nmax);
    Output o;
    o.result = bounds_to_json(bounds_report(fit, d, gamma, eps, mu));
    return o;
  };
}

void def_annealed(Command& c) {
  auto& d = option(c, "--d", 2, "dimension");
  auto& law = option(c, "--law", std::string("poly"), "conductance law: poly, sitemin or constant");
  auto& gamma = option(c, "--gamma", 1.0, "tail exponent");
  auto& cval = option(c, "--c", 1.0, "value of the constant law");
  auto& n_max = option(c, "--n_max", 64, "largest n");
  auto& grid = option(c, "--grid", 12, "number of geometric grid points");
  auto& replicas = option(c, "--replicas", std::int64_t{100}, "environments averaged");
  auto& seed = option(c, "--seed", std::uint64_t{1}, "master seed");
  auto& tau = option(c, "--tau", kDefaultTau, "kernel truncation threshold");
  auto& nmin = option(c, "--fit_nmin", std::optional<int>(), "fit the mean over [fit_nmin, fit_nmax]");
  auto& nmax = option(c, "--fit_nmax", std::optional<int>(), "upper end of the fit range");
  c.csv = true;
  c.body = [&c, &d, &law, &gamma, &cval, &n_max, &grid, &replicas, &seed, &tau, &nmin, &nmax] {
    const AnnealedSeries s = annealed_return(d, make_law(law, gamma, cval), geometric_grid(1, n_max, grid),
                                             replicas, seed, tau, c.threads);
    Output o;
    o.result = annealed_to_json(s);
    if (nmin.has_value() != nmax.has_value()) throw UsageError("--fit_nmin and --fit_nmax go together");
    if (nmin) o.result["fit"] = fit_to_json(fit_exponent(annealed_as_series(s), *nmin, *nmax));
    std::ostringstream os;
    os << "n,mean,sd,ci_low,ci_high,median,max_err_bound\n";
    for (const auto& p : s.points) {
      os << p.n << ',' << format_double(p.mean) << ',' << format_double(p.sd) << ',' << format_double(p.ci_low)
         << ',' << format_double(p.ci_high) << ',' << format_double(p.median) << ','
         << format_double(p.max_err_bound) << '\n';
    }
    o.csv = os.str();
    return o;
  };
}

void def_pipeline(Command& c) {
  auto& d = option(c, "--d", 2, "dimension");
  auto& gamma = option(c, "--gamma", 0.05, "tail exponent");
  auto& xi = option(c, "--xi", 0.5, "strong bond threshold");
  auto& eps = option(c, "--eps,--epsilon", 0.5, "epsilon");
  auto& N = option(c, "--N", 8, "scale N");
  auto& seed = option(c, "--seed", std::uint64_t{1}, "environment and walk seed");
  auto& shell = option(c, "--plant_shell", std::optional<int>(), "plant traps on every site of the shell at this index");
  auto& branch = option(c, "--branch_replicas", std::int64_t{0}, "walks for the Monte Carlo branch estimate");
  auto& cap = option(c, "--step_cap", std::int64_t{1000000}, "step cap of the boundary walk");
  auto& tau = option(c, "--tau", kDefaultTau, "kernel truncation threshold");
  c.body = [&c, &d, &gamma, &xi, &eps, &N, &seed, &shell, &branch, &cap, &tau] {
    PipelineParams p;
    p.d = d;
    p.gamma = gamma;
    p.xi = xi;
    p.eps = eps;
    p.N = N;
    p.seed = seed;
    p.plant_shell = shell;
    p.branch_replicas = branch;
    p.step_cap = cap;
    p.tau = tau;
    p.threads = c.threads;
    Output o;
    o.result = pipeline_to_json(anomalous_pipeline(p));
    return o;
  };
}

struct Def {
  const char* group;
  const char* leaf;
  const char* help;
  void (*define)(Command&);
};

const Def kDefs[] = {
    {"env", "sample", "sample an environment and save it", def_env_sample},
    {"env", "stat", "summary statistics and the minimum-conductance statistic", def_env_stat},
    {"kernel", "return", "exact return probabilities P^{2n}(0,0) on a grid of n", def_kernel_return},
    {"kernel", "dist", "the n-step distribution from a source point", def_kernel_dist},
    {"walk", "simulate", "simulate a quenched walk, hitting times and exit estimates", def_walk_simulate},
    {"traps", "scan", "find trap configurations in an environment", def_traps_scan},
    {"traps", "qn", "probability that a bond collection forms a trap", def_traps_qn},
    {"traps", "lambda", "independence of trap events along boundary hits", def_traps_lambda},
    {"iso", "profile", "isoperimetric profile of a finite chain", def_iso_profile},
    {"iso", "mp", "check the evolving-set heat-kernel bound at its threshold", def_iso_mp},
    {"iso", "check", "surface and volume bounds for connected even sets", def_iso_check},
    {"fit", "exponent", "log-log slope with bootstrap interval", def_fit_exponent},
    {"report", "bounds", "theoretical exponents beside a measured slope", def_report_bounds},
    {"annealed", nullptr, "environment-averaged return probabilities", def_annealed},
    {"pipeline", "anomalous", "replay the anomalous lower-bound argument on one environment", def_pipeline},
};

struct Anchor {
  const char* statement;
  const char* quote;
};

const std::map<std::string, Anchor>& anchors() {
  static const std::map<std::string, Anchor> m = {
      {"env sample",
       {"model definition: i.i.d. conductances with P(w_b <= a) = a^gamma on [0, 1]",
        "driven by a field of i.i.d. bounded random conductances"}},
      {"env stat",
       {"minimum conductance in B_N behaves like N^(-d/gamma)",
        "for arbitrary $\\mu>0$, we can write $\\Q-$a.s.,  for all $N$ large enough"}},
      {"kernel return",
       {"main decay theorem for the quenched return probability",
        "There exists a positive constant $\\delta(\\gamma)$ depending only on $d$ and $\\gamma$"}},
      {"kernel dist",
       {"quenched heat kernel P^n_w(x, .) of the variable-speed-free walk",
        "universal upper bounds on the quenched heat-kernel"}},
      {"walk simulate",
       {"the walk meets a trap before leaving the box of size n^delta",
        "the random walk meets a \\textit{trap}, with positive probability, before getting out"}},
      {"traps scan",
       {"definition of the trap event A_N(x) on the bond collection C(x)",
        "a trap is an edge of conductance of order $1$ that can be\nreached only by crossing an edge of order $1/n$"}},
      {"traps qn",
       {"closed-form probability of the trap configuration",
        "Let $q_{N}$ be the $\\Q$-probability of having the configuration of the trap"}},
      {"traps lambda",
       {"independence lemma for trap events at successive boundary hits",
        "The family $\\{\\AAA^{k}_{N}=\\AAA_{N}(X_{H_{k}})\\}^{N-1}_{k=0}$ is $\\mathbb{P}$-independent for each "
        "$N$. (is P-independent for each N)"}},
      {"iso profile",
       {"isoperimetric profile Phi(r) = inf { Phi_S : pi(S) <= r }",
        "and use it to define the isoperimetric profile"}},
      {"iso mp",
       {"Morris-Peres heat-kernel bound P^n(x, y) <= eps pi(y)",
        "for all~$n$ such that (for all n such that)"}},
      {"iso check",
       {"surface and volume bounds for connected subsets of the even lattice",
        "any finite connected~$\\Lambda\\subset \\Z^d_e$"}},
      {"fit exponent",
       {"polynomial decay exponents of the return probability",
        "\\leq -\\frac{d}{2}+\\delta(\\gamma)"}},
      {"report bounds",
       {"upper and lower decay exponents and the large-gamma limit",
        "\\delta(\\gamma)\\xrightarrow[\\gamma \\to +\\infty]{}0"}},
      {"annealed",
       {"annealed law: the quenched law averaged over environments",
        "so-called \\textit{annealed} semi-direct product measure law"}},
      {"pipeline anomalous",
       {"anomalous lower bound: trap met, crossed and held for n steps",
        "we agree to call it a \\textit{trap} (we agree to call it a trap)"}},
  };
  return m;
}

std::string iso_utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Replaces --config FILE by its key=value lines, placed before the explicit flags so those win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, std::string& config_path) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;
  std::vector<std::string> file_flags;
  std::istringstream in(read_file(config_path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError(config_path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    file_flags.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  std::size_t at = 0;
  while (at < rest.size() && !rest[at].empty() && rest[at][0] != '-') ++at;
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), file_flags.begin(), file_flags.end());
  return rest;
}

std::string render(const Command& c, const Output& o, const std::string& config_path) {
  json prov;
  prov["tool"] = "rclab";
  prov["version"] = kVersion;
  prov["command"] = c.name;
  prov["field_generator"] = kFieldGenerator;
  json cfg;
  for (const auto& [k, f] : c.echo) cfg[k] = f();
  cfg["threads"] = c.threads;
  cfg["format"] = c.format;
  prov["config"] = std::move(cfg);
  prov["config_file"] = config_path.empty() ? json(nullptr) : json(config_path);
  if (!c.no_timestamp) prov["timestamp"] = iso_utc_now();
  if (c.format == "csv") {
    if (!o.csv) throw UsageError("csv output is not available for " + c.name);
    return "# provenance " + prov.dump() + "\n" + *o.csv;
  }
  json doc;
  doc["provenance"] = std::move(prov);
  doc["result"] = o.result;
  return doc.dump(2) + "\n";
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const Def& d : kDefs) v.push_back(d.leaf ? std::string(d.group) + " " + d.leaf : std::string(d.group));
    return v;
  }();
  return names;
}

std::string describe(const std::string& command) {
  const auto it = anchors().find(trim(command));
  if (it == anchors().end()) throw UsageError("unknown command '" + command + "'");
  return it->first + ": " + it->second.statement + "\n  anchor: \"" + it->second.quote + "\"\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rclab: random walks among random conductances", "rclab"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::deque<Command> commands;
  std::map<std::string, CLI::App*> groups;
  for (const Def& def : kDefs) {
    CLI::App* parent = &app;
    Command& c = commands.emplace_back();
    if (def.leaf) {
      auto& g = groups[def.group];
      if (!g) {
        g = app.add_subcommand(def.group, std::string(def.group) + " commands");
        g->require_subcommand(1);
      }
      parent = g;
      c.name = std::string(def.group) + " " + def.leaf;
      c.app = parent->add_subcommand(def.leaf, def.help);
    } else {
      c.name = def.group;
      c.app = app.add_subcommand(def.group, def.help);
    }
    c.threads = default_threads();
    c.app->add_option("--out", c.out, "write the result to this file (atomic)");
    c.app->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    c.app->add_option("--threads", c.threads, "worker threads (default RCLAB_THREADS or 1)")->capture_default_str();
    c.app->add_flag("--no-timestamp,--no_timestamp", c.no_timestamp, "omit the timestamp from the provenance block");
    c.app->add_option("--config", c.config, "key=value file; command-line flags override it");
    def.define(c);
  }
  std::vector<std::string> words;
  CLI::App* desc = app.add_subcommand("describe", "print the statement a command exercises");
  desc->add_option("command", words, "command name, e.g. traps lambda")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  try {
    std::string config_path;
    std::vector<std::string> expanded = expand_config(args, config_path);
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);

    if (desc->parsed()) {
      if (words.empty()) {
        for (const auto& name : command_names()) out << describe(name);
      } else {
        std::string name;
        for (const auto& w : words) name += (name.empty() ? "" : " ") + w;
        out << describe(name);
      }
      return kOk;
    }
    for (Command& c : commands) {
      if (!c.app->parsed()) continue;
      if (c.threads < 1) throw UsageError("--threads must be at least 1");
      const Output o = c.body();
      if (o.wrote_out || c.out.empty()) {
        out << render(c, o, config_path);
      } else {
        write_file_atomic(c.out, render(c, o, config_path));
      }
      return kOk;
    }
    throw UsageError("no command given");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const StorageError& e) {
    err << "budget exceeded: " << e.what() << '\n';
    return kStorage;
  } catch (const std::bad_alloc&) {
    err << "budget exceeded: out of memory\n";
    return kStorage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    err << "i/o error: malformed JSON: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rclab::cli
