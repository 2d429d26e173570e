#include "rclab/isoperimetry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <functional>
#include <ostream>
#include <unordered_set>

#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/kernel.hpp"
#include "rclab/rng.hpp"

namespace rclab {

namespace {

void check_states(const FiniteChain& chain, const StateSet& s) {
  for (int x : s) {
    if (x < 0 || static_cast<std::size_t>(x) >= chain.size()) {
      throw UsageError("unknown state id " + std::to_string(x));
    }
  }
}

std::vector<char> membership(const FiniteChain& chain, const StateSet& s) {
  std::vector<char> in(chain.size(), 0);
  for (int x : s) in[static_cast<std::size_t>(x)] = 1;
  return in;
}

constexpr double kRel = 1e-12;

}  // namespace

double edge_measure(const FiniteChain& chain, const StateSet& s1, const StateSet& s2) {
  check_states(chain, s1);
  check_states(chain, s2);
  const auto in1 = membership(chain, s1);
  const auto in2 = membership(chain, s2);
  double q = 0;
  for (std::size_t x = 0; x < chain.size(); ++x) {
    if (!in1[x]) continue;
    for (std::size_t y = 0; y < chain.size(); ++y)
      if (in2[y]) q += chain.pi(x) * chain.p(x, y);
  }
  return q;
}

double set_measure(const FiniteChain& chain, const StateSet& s) {
  check_states(chain, s);
  double m = 0;
  for (int x : s) m += chain.pi(static_cast<std::size_t>(x));
  return m;
}

double phi_S(const FiniteChain& chain, const StateSet& s) {
  check_states(chain, s);
  const auto in = membership(chain, s);
  StateSet uniq;
  for (std::size_t x = 0; x < chain.size(); ++x)
    if (in[x]) uniq.push_back(static_cast<int>(x));
  if (uniq.empty()) throw UsageError("boundary ratio of the empty set is undefined");
  StateSet comp;
  for (std::size_t x = 0; x < chain.size(); ++x)
    if (!in[x]) comp.push_back(static_cast<int>(x));
  return edge_measure(chain, uniq, comp) / set_measure(chain, uniq);
}

bool is_connected(const FiniteChain& chain, const StateSet& s) {
  check_states(chain, s);
  if (s.empty()) return false;
  const auto in = membership(chain, s);
  std::vector<char> seen(chain.size(), 0);
  std::deque<int> queue{s.front()};
  seen[static_cast<std::size_t>(s.front())] = 1;
  std::size_t reached = 0;
  while (!queue.empty()) {
    const int x = queue.front();
    queue.pop_front();
    ++reached;
    for (int y : chain.neighbors()[static_cast<std::size_t>(x)]) {
      const auto uy = static_cast<std::size_t>(y);
      if (in[uy] && !seen[uy]) {
        seen[uy] = 1;
        queue.push_back(y);
      }
    }
  }
  std::size_t distinct = 0;
  for (char c : in) distinct += c != 0;
  return reached == distinct;
}

// ---------------------------------------------------------------------------

double IsoProfile::at(double r) const {
  const auto k = piece(r);
  return k ? breakpoints[*k].phi : std::numeric_limits<double>::infinity();
}

std::optional<std::size_t> IsoProfile::piece(double r) const {
  std::optional<std::size_t> out;
  for (std::size_t k = 0; k < breakpoints.size(); ++k) {
    if (breakpoints[k].r <= r * (1 + kRel)) out = k;
  }
  return out;
}

namespace {

struct Candidate {
  double pi;
  double phi;
  std::uint64_t mask;
};

StateSet mask_to_set(std::uint64_t mask) {
  StateSet s;
  for (int i = 0; mask; ++i, mask >>= 1)
    if (mask & 1) s.push_back(i);
  return s;
}

// `decode` maps a candidate key back to its state set.
IsoProfile build_profile(std::vector<Candidate> cands, double cap,
                         const std::function<StateSet(std::uint64_t)>& decode) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.pi != b.pi) return a.pi < b.pi;
    if (a.phi != b.phi) return a.phi < b.phi;
    return a.mask < b.mask;
  });
  IsoProfile prof;
  prof.cap = cap;
  prof.subsets_examined = cands.size();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) {
    if (c.phi < best) {
      best = c.phi;
      if (!prof.breakpoints.empty() && prof.breakpoints.back().r == c.pi) {
        prof.breakpoints.back().phi = c.phi;
        prof.breakpoints.back().minimizer = decode(c.mask);
      } else {
        prof.breakpoints.push_back({c.pi, c.phi, decode(c.mask)});
      }
    }
  }
  return prof;
}

// Incremental boundary flow: Q(S + w, complement) from Q(S, S^c).
struct Flow {
  const FiniteChain& chain;
  double add(double q, std::uint64_t S, int w) const {
    const auto uw = static_cast<std::size_t>(w);
    double into_w = 0;
    double from_w = 0;
    for (std::uint64_t m = S; m; m &= m - 1) {
      const auto x = static_cast<std::size_t>(std::countr_zero(m));
      into_w += chain.pi(x) * chain.p(x, uw);
      from_w += chain.pi(uw) * chain.p(uw, x);
    }
    return q - into_w + chain.pi(uw) * (1 - chain.p(uw, uw)) - from_w;
  }
};

std::vector<std::uint64_t> adjacency_masks(const FiniteChain& chain) {
  std::vector<std::uint64_t> adj(chain.size(), 0);
  for (std::size_t x = 0; x < chain.size(); ++x)
    for (int y : chain.neighbors()[x]) adj[x] |= std::uint64_t{1} << y;
  return adj;
}

}  // namespace

IsoProfile iso_profile(const FiniteChain& chain, std::size_t state_budget) {
  const std::size_t n = chain.size();
  if (n == 0) throw UsageError("chain has no states");
  if (n > state_budget || n > 63) {
    throw StorageError("exact profile enumeration is limited to " + std::to_string(std::min<std::size_t>(state_budget, 63)) +
                       " states (chain has " + std::to_string(n) + "); use the sampled mode");
  }
  const double cap = chain.total_measure() / 2;
  const double cap_tol = cap * (1 + kRel);
  const auto adj = adjacency_masks(chain);
  const Flow flow{chain};
  std::vector<Candidate> cands;

  std::function<void(std::uint64_t, std::uint64_t, std::uint64_t, std::uint64_t, double, double)> extend =
      [&](std::uint64_t S, std::uint64_t closed, std::uint64_t ext, std::uint64_t above, double piS, double qS) {
        cands.push_back({piS, qS / piS, S});
        if (cands.size() > kMaxSubsets) {
          throw StorageError("more than " + std::to_string(kMaxSubsets) +
                             " connected subsets; use the sampled mode");
        }
        while (ext) {
          const int w = std::countr_zero(ext);
          const std::uint64_t bw = std::uint64_t{1} << w;
          ext &= ~bw;
          const double piW = piS + chain.pi(static_cast<std::size_t>(w));
          if (piW > cap_tol) continue;  // supersets only grow
          const std::uint64_t ext2 = ext | (adj[static_cast<std::size_t>(w)] & ~closed & above);
          extend(S | bw, closed | adj[static_cast<std::size_t>(w)] | bw, ext2, above, piW, flow.add(qS, S, w));
        }
      };

  for (std::size_t v = 0; v < n; ++v) {
    const double pv = chain.pi(v);
    if (pv > cap_tol) continue;
    const std::uint64_t bv = std::uint64_t{1} << v;
    const std::uint64_t above = ~((bv << 1) - 1);  // states with index > v
    const double qv = pv * (1 - chain.p(v, v));
    extend(bv, adj[v] | bv, adj[v] & above, above, pv, qv);
  }
  return build_profile(std::move(cands), cap, mask_to_set);
}

IsoProfile iso_profile_sampled(const FiniteChain& chain, std::uint64_t samples, std::uint64_t seed) {
  const std::size_t n = chain.size();
  if (n == 0) throw UsageError("chain has no states");
  const double cap = chain.total_measure() / 2;
  const double cap_tol = cap * (1 + kRel);
  Engine eng = make_engine(seed);
  // Candidate masks index into `members`, so chains of any size are supported.
  std::vector<Candidate> cands;
  std::vector<StateSet> members;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const auto root = static_cast<std::size_t>(eng() % n);
    double piS = chain.pi(root);
    if (piS > cap_tol) continue;
    std::vector<char> in(n, 0);
    in[root] = 1;
    StateSet set{static_cast<int>(root)};
    double qS = piS * (1 - chain.p(root, root));
    std::vector<int> frontier;
    while (true) {
      cands.push_back({piS, qS / piS, members.size()});
      members.push_back(set);
      frontier.clear();
      for (int x : set)
        for (int y : chain.neighbors()[static_cast<std::size_t>(x)])
          if (!in[static_cast<std::size_t>(y)]) frontier.push_back(y);
      if (frontier.empty()) break;
      const auto w = static_cast<std::size_t>(frontier[eng() % frontier.size()]);
      if (piS + chain.pi(w) > cap_tol) break;
      double into_w = 0;
      double from_w = 0;
      for (int x : set) {
        const auto ux = static_cast<std::size_t>(x);
        into_w += chain.pi(ux) * chain.p(ux, w);
        from_w += chain.pi(w) * chain.p(w, ux);
      }
      qS = qS - into_w + chain.pi(w) * (1 - chain.p(w, w)) - from_w;
      piS += chain.pi(w);
      in[w] = 1;
      set.push_back(static_cast<int>(w));
    }
  }
  IsoProfile prof = build_profile(std::move(cands), cap, [&](std::uint64_t i) {
    StateSet m = members[static_cast<std::size_t>(i)];
    std::sort(m.begin(), m.end());
    return m;
  });
  prof.certified = false;
  return prof;
}

double mp_integral(const IsoProfile& profile, double lo, double hi) {
  if (!(lo < hi)) return 0.0;
  const auto& bp = profile.breakpoints;
  double total = 0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    const double a = std::max(lo, bp[k].r);
    const double b = k + 1 < bp.size() ? std::min(hi, bp[k + 1].r) : hi;
    if (!(a < b)) continue;
    if (bp[k].phi <= 0) return std::numeric_limits<double>::infinity();
    total += 4.0 / (bp[k].phi * bp[k].phi) * std::log(b / a);
  }
  return total;
}

std::int64_t mp_threshold(const FiniteChain& chain, const IsoProfile& profile, double sigma, double eps,
                          std::size_t x, std::size_t y) {
  if (!(sigma > 0 && sigma <= 0.5)) throw UsageError("sigma must lie in (0, 1/2]");
  if (!(eps > 0)) throw UsageError("epsilon must be positive");
  if (x >= chain.size() || y >= chain.size()) throw UsageError("unknown state id");
  if (chain.min_holding() < sigma * (1 - kRel)) {
    throw UsageError("holding probability precondition violated: min P(z,z) = " +
                     std::to_string(chain.min_holding()) + " < sigma = " + std::to_string(sigma));
  }
  const double lo = 4 * std::min(chain.pi(x), chain.pi(y));
  const double hi = 4 / eps;
  if (lo >= hi) return 1;
  const double integral = mp_integral(profile, lo, hi);
  if (!std::isfinite(integral)) throw UsageError("profile vanishes on the integration range (reducible chain)");
  const double value = 1 + (1 - sigma) * (1 - sigma) / (sigma * sigma) * integral;
  if (value > 4e18) throw StorageError("time threshold exceeds the 64-bit range");
  return static_cast<std::int64_t>(std::ceil(value));
}

std::int64_t mp_threshold(const FiniteChain& chain, double sigma, double eps, std::size_t x, std::size_t y) {
  return mp_threshold(chain, iso_profile(chain), sigma, eps, x, y);
}

namespace {

// e_x P^n; repeated squaring for long horizons.
std::vector<double> row_power(const FiniteChain& chain, std::size_t x, std::int64_t n) {
  const std::size_t s = chain.size();
  if (n <= 4096) return chain.power_row(x, n);
  std::vector<double> base = chain.transition();
  std::vector<double> row(s, 0.0);
  row[x] = 1.0;
  std::vector<double> tmp(s * s), vtmp(s);
  while (n > 0) {
    if (n & 1) {
      std::fill(vtmp.begin(), vtmp.end(), 0.0);
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) vtmp[b] += row[a] * base[a * s + b];
      row.swap(vtmp);
    }
    n >>= 1;
    if (n == 0) break;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t a = 0; a < s; ++a)
      for (std::size_t k = 0; k < s; ++k) {
        const double v = base[a * s + k];
        if (v == 0) continue;
        for (std::size_t b = 0; b < s; ++b) tmp[a * s + b] += v * base[k * s + b];
      }
    base.swap(tmp);
  }
  return row;
}

}  // namespace

MpReport verify_mp(const FiniteChain& chain, double eps,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  MpReport rep;
  rep.eps = eps;
  rep.sigma = std::min(chain.min_holding(), 0.5);
  rep.total_measure = chain.total_measure();
  rep.informative = eps * rep.total_measure > 1;
  if (!(rep.sigma > 0)) throw UsageError("chain has a state with zero holding probability");
  const IsoProfile prof = iso_profile(chain);
  std::vector<std::pair<std::size_t, std::size_t>> todo = pairs;
  if (todo.empty()) {
    for (std::size_t x = 0; x < chain.size(); ++x)
      for (std::size_t y = 0; y < chain.size(); ++y) todo.emplace_back(x, y);
  }
  for (const auto& [x, y] : todo) {
    MpCheck c;
    c.x = x;
    c.y = y;
    c.n = mp_threshold(chain, prof, rep.sigma, eps, x, y);
    c.p = row_power(chain, x, c.n)[y];
    c.bound = eps * chain.pi(y);
    c.margin = c.bound - c.p;
    c.holds = c.p <= c.bound;
    if (!c.holds) ++rep.violations;
    rep.checks.push_back(c);
  }
  return rep;
}

nlohmann::ordered_json profile_to_json(const IsoProfile& profile) {
  nlohmann::ordered_json j;
  j["cap"] = profile.cap;
  j["certified"] = profile.certified;
  j["subsets_examined"] = profile.subsets_examined;
  auto bps = nlohmann::ordered_json::array();
  for (const auto& b : profile.breakpoints) {
    nlohmann::ordered_json e;
    e["r"] = b.r;
    e["phi"] = b.phi;
    e["minimizer"] = b.minimizer;
    bps.push_back(std::move(e));
  }
  j["breakpoints"] = std::move(bps);
  return j;
}

void write_profile_csv(const IsoProfile& profile, std::ostream& os) {
  os << "r,phi,minimizer_size\n";
  for (const auto& b : profile.breakpoints)
    os << format_double(b.r) << ',' << format_double(b.phi) << ',' << b.minimizer.size() << '\n';
}

nlohmann::ordered_json mp_report_to_json(const MpReport& r) {
  nlohmann::ordered_json j;
  j["eps"] = r.eps;
  j["sigma"] = r.sigma;
  j["total_measure"] = r.total_measure;
  j["informative"] = r.informative;
  j["note"] =
      "pi is unnormalized; the bound P^n(x,y) <= eps pi(y) is only informative when eps pi(V) > 1, "
      "since P^n(x,y) tends to pi(y)/pi(V)";
  j["violations"] = r.violations;
  auto checks = nlohmann::ordered_json::array();
  for (const auto& c : r.checks) {
    nlohmann::ordered_json e;
    e["x"] = c.x;
    e["y"] = c.y;
    e["n"] = c.n;
    e["p"] = c.p;
    e["bound"] = c.bound;
    e["margin"] = c.margin;
    e["holds"] = c.holds;
    checks.push_back(std::move(e));
  }
  j["checks"] = std::move(checks);
  return j;
}

// ---------------------------------------------------------------------------

double lower_conductance_level(int d, double gamma, double mu, double N) {
  if (!(gamma > 0) || !(mu >= 0) || !(N >= 1)) throw UsageError("need gamma > 0, mu >= 0, N >= 1");
  return std::pow(N, -(d / gamma + mu));
}

namespace {

std::unordered_set<Point> validated_even_set(const std::vector<Point>& lambda, int d) {
  if (lambda.empty()) throw UsageError("Lambda must be nonempty");
  std::unordered_set<Point> set;
  for (const Point& p : lambda) {
    if (p.dim() != d) throw UsageError("Lambda point " + p.str() + " has the wrong dimension");
    if (!p.is_even()) throw UsageError("Lambda point " + p.str() + " is not even");
    set.insert(p);
  }
  std::unordered_set<Point> seen{lambda.front()};
  std::deque<Point> queue{lambda.front()};
  while (!queue.empty()) {
    const Point x = queue.front();
    queue.pop_front();
    for (const Point& z : even_neighbors(x))
      if (set.count(z) && seen.insert(z).second) queue.push_back(z);
  }
  if (seen.size() != set.size()) throw UsageError("Lambda is not connected in the even lattice");
  return set;
}

}  // namespace

SurfaceVolumeReport surface_volume_check(const ModifiedEnvironment& env, double alpha,
                                         const std::vector<Point>& lambda) {
  const int d = env.dim();
  const auto set = validated_even_set(lambda, d);
  SurfaceVolumeReport r;
  r.alpha = alpha;
  r.min_conductance = min_conductance(env.base(), env.scale() + 1);
  r.precondition = r.min_conductance >= alpha;
  r.size = static_cast<std::int64_t>(set.size());
  std::unordered_set<Point> done;
  for (const Point& x : lambda) {
    if (!done.insert(x).second) continue;  // duplicates count once
    const double pix = env.pi(x);
    r.pi_lambda += pix;
    for (const Point& z : even_neighbors(x)) {
      if (set.count(z)) continue;
      ++r.boundary_pairs;
      r.q_out += pix * two_step_probability(env, x, z);
    }
  }
  r.surface_bound = alpha * alpha / (2.0 * d) * static_cast<double>(r.boundary_pairs);
  r.volume_bound = 2.0 * d * static_cast<double>(r.size);
  r.surface_ok = r.q_out >= r.surface_bound * (1 - kRel);
  r.volume_ok = r.pi_lambda <= r.volume_bound * (1 + kRel);
  return r;
}

std::int64_t lattice_boundary_edges(const std::vector<Point>& lambda) {
  std::unordered_set<Point> set(lambda.begin(), lambda.end());
  std::int64_t edges = 0;
  for (const Point& x : set)
    for (int a = 0; a < x.dim(); ++a)
      for (int s : {-1, 1})
        if (!set.count(x.shifted(a, s))) ++edges;
  return edges;
}

IsoConstant iso_constant_check(int d, const std::vector<std::vector<Point>>& shapes) {
  if (d < 1) throw UsageError("dimension must be positive");
  IsoConstant out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (s.empty()) throw UsageError("shapes must be nonempty");
    const std::unordered_set<Point> uniq(s.begin(), s.end());
    const double vol = std::pow(static_cast<double>(uniq.size()), (d - 1.0) / d);
    const double ratio = static_cast<double>(lattice_boundary_edges(s)) / vol;
    out.ratios.push_back(ratio);
    if (ratio < out.kappa) {
      out.kappa = ratio;
      out.argmin = i;
    }
  }
  return out;
}

namespace {

FiniteChain lazy_from_weights(const std::vector<double>& c, std::size_t k) {
  std::vector<double> P(k * k, 0.0), measure(k, 0.0);
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) measure[x] += c[x * k + y];
  for (std::size_t x = 0; x < k; ++x) {
    P[x * k + x] = 0.5;
    for (std::size_t y = 0; y < k; ++y)
      if (y != x) P[x * k + y] = c[x * k + y] / (2 * measure[x]);
  }
  return FiniteChain(std::move(P), std::move(measure));
}

}  // namespace

FiniteChain two_state_lazy() { return FiniteChain({0.5, 0.5, 0.5, 0.5}, {1.0, 1.0}); }

FiniteChain lazy_cycle(int k) {
  if (k < 3) throw UsageError("a cycle needs at least 3 states");
  const auto n = static_cast<std::size_t>(k);
  std::vector<double> P(n * n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    P[x * n + x] = 0.5;
    P[x * n + (x + 1) % n] += 0.25;
    P[x * n + (x + n - 1) % n] += 0.25;
  }
  return FiniteChain(std::move(P), std::vector<double>(n, 1.0));
}

FiniteChain random_lazy_chain(int k, std::uint64_t seed, double chord_probability) {
  if (k < 2) throw UsageError("a chain needs at least 2 states");
  const auto n = static_cast<std::size_t>(k);
  Engine eng = make_engine(seed);
  std::vector<double> c(n * n, 0.0);
  const auto link = [&](std::size_t a, std::size_t b) {
    const double w = unit_open_closed(eng());
    c[a * n + b] = c[b * n + a] = w;
  };
  for (std::size_t x = 0; x + 1 < n; ++x) link(x, x + 1);
  if (n > 2) link(n - 1, 0);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 2; y < n; ++y)
      if (c[x * n + y] == 0 && uniform01(eng) < chord_probability) link(x, y);
  return lazy_from_weights(c, n);
}

std::vector<Point> box_shape(int d, const std::vector<int>& sides) {
  if (static_cast<int>(sides.size()) != d) throw UsageError("need one side length per axis");
  std::vector<Point> out;
  Point p(d);
  std::function<void(int)> rec = [&](int axis) {
    if (axis == d) {
      out.push_back(p);
      return;
    }
    for (int i = 0; i < sides[static_cast<std::size_t>(axis)]; ++i) {
      p[axis] = i;
      rec(axis + 1);
    }
  };
  rec(0);
  return out;
}

std::vector<Point> random_even_cluster(const Point& root, std::size_t size, int window, std::uint64_t seed) {
  if (!root.is_even()) throw UsageError("cluster root must be even");
  if (root.linf() > window) throw UsageError("cluster root outside the window");
  Engine eng = make_engine(seed);
  std::vector<Point> members{root};
  std::unordered_set<Point> in{root};
  std::size_t stalls = 0;
  while (members.size() < size && stalls < 64 * size + 64) {
    const Point& from = members[eng() % members.size()];
    const auto nb = even_neighbors(from);
    const Point& z = nb[eng() % nb.size()];
    if (z.linf() > window || in.count(z)) {
      ++stalls;
      continue;
    }
    in.insert(z);
    members.push_back(z);
  }
  return members;
}

}  // namespace rclab
