#include "rclab/traps.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/kernel.hpp"
#include "rclab/parallel.hpp"
#include "rclab/rng.hpp"
#include "rclab/stats.hpp"

namespace rclab {

std::vector<Bond> TrapPattern::bonds() const {
  std::vector<Bond> out{weak, strong};
  out.insert(out.end(), others.begin(), others.end());
  return out;
}

TrapPattern collection_C(const Point& x) {
  const auto [axis, sign] = direction_and_sign(x);
  TrapPattern t;
  t.x = x;
  t.axis = axis;
  t.sign = sign;
  t.y = x.shifted(axis, sign);
  t.z = x.shifted(axis, 2 * sign);
  t.weak = Bond(t.x, t.y);
  t.strong = Bond(t.y, t.z);
  for (const Point* c : {&t.y, &t.z}) {
    for (int i = 0; i < x.dim(); ++i) {
      if (i == axis) continue;
      t.others.push_back(Bond(*c, c->shifted(i, -1)));
      t.others.push_back(Bond(*c, c->shifted(i, 1)));
    }
  }
  t.others.push_back(Bond(t.z, t.z.shifted(axis, sign)));
  return t;
}

double trap_alpha(int d, double gamma, double eps) {
  if (d < 1 || !(gamma > 0) || !(eps > 0 && eps < 1)) {
    throw UsageError("need d >= 1, gamma > 0 and 0 < eps < 1");
  }
  return (1 - eps) / ((4.0 * d - 2.0) * gamma);
}

double anomalous_delta(int d, double gamma, double eps) {
  return d * (4.0 * d - 2.0) * gamma / (1 - eps);
}

double trap_threshold(double N, double alpha) { return std::pow(N, -alpha); }

bool trap_conditions(double w_xy, double w_yz, std::span<const double> others, double threshold, double xi) {
  if (!(w_xy > 0.5 * threshold && w_xy <= threshold)) return false;
  if (!(w_yz >= xi)) return false;
  for (double w : others)
    if (w > threshold) return false;
  return true;
}

TrapCheck is_trap(const Environment& env, const Point& x, int N, double alpha, double xi) {
  if (x.dim() != env.dim()) throw UsageError("point dimension does not match the environment");
  TrapCheck c;
  c.pattern = collection_C(x);
  for (const Bond& b : c.pattern.bonds()) {
    if (!env.has_bond(b)) throw StorageError("bond " + b.str() + " of C(" + x.str() + ") is outside the stored window");
  }
  c.omega_xy = env.conductance(c.pattern.weak);
  c.omega_yz = env.conductance(c.pattern.strong);
  std::vector<double> others;
  others.reserve(c.pattern.others.size());
  for (const Bond& b : c.pattern.others) {
    others.push_back(env.conductance(b));
    c.max_other = std::max(c.max_other, others.back());
  }
  c.is_trap = trap_conditions(c.omega_xy, c.omega_yz, others, trap_threshold(N, alpha), xi);
  return c;
}

double q_N_for_alpha(int d, double gamma, double xi, double alpha, double N) {
  if (d < 1 || !(gamma > 0) || !(alpha > 0) || !(N >= 1)) throw UsageError("need d >= 1, gamma > 0, alpha > 0, N >= 1");
  if (!(xi > 0 && xi < 1)) throw UsageError("xi must lie in (0, 1)");
  const double weak = -std::expm1(-gamma * std::log(2.0));
  const double strong = -std::expm1(gamma * std::log(xi));
  return weak * strong * std::pow(N, -alpha * gamma * (4.0 * d - 2.0));
}

double q_N_closed_form(int d, double gamma, double xi, double eps, double N) {
  return q_N_for_alpha(d, gamma, xi, trap_alpha(d, gamma, eps), N);
}

// ---------------------------------------------------------------------------

TrapScanReport scan_traps(const Environment& env, int N, double alpha, double xi, int region, int threads) {
  if (region < 0) throw UsageError("scan region must be nonnegative");
  if (region + 3 > env.radius()) {
    throw StorageError("scanning |x| <= " + std::to_string(region) + " needs a window of radius at least " +
                       std::to_string(region + 3));
  }
  TrapScanReport rep;
  rep.N = N;
  rep.alpha = alpha;
  rep.xi = xi;
  rep.region = region;
  const Cube cube(env.dim(), region);
  rep.sites_scanned = cube.site_count();
  const double floor_crossing = 1.0 / (4.0 * env.dim() * std::pow(N, alpha));

  const int chunks = std::max(1, std::min(threads * 4, 1024));
  std::vector<std::vector<TrapHit>> parts(static_cast<std::size_t>(chunks));
  const std::int64_t per = (cube.site_count() + chunks - 1) / chunks;
  parallel_for(chunks, threads, [&](std::int64_t cb, std::int64_t ce) {
    for (std::int64_t c = cb; c < ce; ++c) {
      const std::int64_t e = std::min(cube.site_count(), (c + 1) * per);
      for (std::int64_t i = c * per; i < e; ++i) {
        const Point x = cube.point(i);
        const TrapCheck tc = is_trap(env, x, N, alpha, xi);
        if (!tc.is_trap) continue;
        TrapHit h;
        h.site = x;
        h.pattern = tc.pattern;
        h.omega_xy = tc.omega_xy;
        h.omega_yz = tc.omega_yz;
        h.max_other = tc.max_other;
        h.crossing = tc.omega_xy / pi(env, x);
        parts[static_cast<std::size_t>(c)].push_back(std::move(h));
      }
    }
  });
  for (auto& p : parts)
    for (auto& h : p) {
      if (h.crossing < floor_crossing) ++rep.crossing_violations;
      rep.hits.push_back(std::move(h));
    }
  return rep;
}

void write_scan_csv(const TrapScanReport& report, std::ostream& os) {
  os << "site_coords,omega_xy,omega_yz,max_other\n";
  for (const auto& h : report.hits) {
    for (int i = 0; i < h.site.dim(); ++i) os << (i ? " " : "") << h.site[i];
    os << ',' << format_double(h.omega_xy) << ',' << format_double(h.omega_yz) << ','
       << format_double(h.max_other) << '\n';
  }
}

nlohmann::ordered_json scan_to_json(const TrapScanReport& report) {
  nlohmann::ordered_json j;
  j["N"] = report.N;
  j["alpha"] = report.alpha;
  j["xi"] = report.xi;
  j["region"] = report.region;
  j["sites_scanned"] = report.sites_scanned;
  j["crossing_floor"] = 1.0 / (4.0 * (report.hits.empty() ? 1 : report.hits.front().site.dim()) *
                               std::pow(report.N, report.alpha));
  j["crossing_violations"] = report.crossing_violations;
  auto hits = nlohmann::ordered_json::array();
  for (const auto& h : report.hits) {
    nlohmann::ordered_json e;
    e["site"] = h.site.to_vector();
    e["y"] = h.pattern.y.to_vector();
    e["z"] = h.pattern.z.to_vector();
    e["omega_xy"] = h.omega_xy;
    e["omega_yz"] = h.omega_yz;
    e["max_other"] = h.max_other;
    e["crossing"] = h.crossing;
    hits.push_back(std::move(e));
  }
  j["hits"] = std::move(hits);
  return j;
}

// ---------------------------------------------------------------------------

CollectionSample sample_collections(int d, double gamma, double xi, double alpha, double N, std::int64_t samples,
                                    std::uint64_t seed, int threads) {
  if (samples <= 0) throw UsageError("sample count must be positive");
  CollectionSample out;
  out.samples = samples;
  out.q_exact = q_N_for_alpha(d, gamma, xi, alpha, N);
  const double t = trap_threshold(N, alpha);
  const double inv_gamma = 1.0 / gamma;
  const std::size_t n_other = static_cast<std::size_t>(4 * d - 3);
  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(chunks), 0);
  parallel_for(chunks, threads, [&](std::int64_t cb, std::int64_t ce) {
    std::vector<double> others(n_other);
    for (std::int64_t c = cb; c < ce; ++c) {
      Engine eng = make_engine(derive_seed(seed, static_cast<std::uint64_t>(c)));
      const auto draw = [&] { return std::pow(unit_open_closed(eng()), inv_gamma); };
      const std::int64_t e = std::min(samples, (c + 1) * kChunk);
      std::int64_t k = 0;
      for (std::int64_t s = c * kChunk; s < e; ++s) {
        // Draw lazily in C(x) order; a failed condition ends the collection.
        const double wxy = draw();
        if (!(wxy > 0.5 * t && wxy <= t)) continue;
        const double wyz = draw();
        if (!(wyz >= xi)) continue;
        bool ok = true;
        for (std::size_t i = 0; i < n_other && ok; ++i) {
          others[i] = draw();
          ok = others[i] <= t;
        }
        if (ok && trap_conditions(wxy, wyz, others, t, xi)) ++k;
      }
      counts[static_cast<std::size_t>(c)] = k;
    }
  });
  for (auto k : counts) out.successes += k;
  out.estimate = static_cast<double>(out.successes) / static_cast<double>(samples);
  out.sigma = std::sqrt(out.q_exact * (1 - out.q_exact) / static_cast<double>(samples));
  out.z = out.sigma > 0 ? (out.estimate - out.q_exact) / out.sigma : 0.0;
  return out;
}

double bonferroni_z(std::size_t m) {
  if (m == 0) m = 1;
  const double family = std::erfc(3.0 / std::sqrt(2.0));  // 2(1 - Phi(3))
  return stats::normal_quantile(1 - family / (2.0 * static_cast<double>(m)));
}

LambdaReport lambda_experiment(const LambdaParams& p) {
  if (p.N < 1) throw UsageError("N must be at least 1");
  if (p.N > 63) throw UsageError("N must be at most 63");
  if (p.replicas <= 0) throw UsageError("replicas must be positive");
  if (p.d < 2) throw UsageError("traps need d >= 2");
  LambdaReport rep;
  rep.params = p;
  rep.alpha = p.alpha ? *p.alpha : trap_alpha(p.d, p.gamma, p.eps);
  rep.q_N = q_N_for_alpha(p.d, p.gamma, p.xi, rep.alpha, p.N);
  rep.delta = anomalous_delta(p.d, p.gamma, p.eps);
  const ConductanceLaw law = ConductanceLaw::poly_tail(p.gamma);
  const int N = p.N;
  const int radius = 3 * N;

  // Bit k of a mask records A_N at the k-th boundary hit; bit 63 marks truncation.
  constexpr std::uint64_t kTruncated = std::uint64_t{1} << 63;
  std::vector<std::uint64_t> masks(static_cast<std::size_t>(p.replicas), 0);
  parallel_for(p.replicas, p.threads, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t r = b; r < e; ++r) {
      const auto ur = static_cast<std::uint64_t>(r);
      const Environment env = Environment::sample(p.d, radius, law, derive_seed(p.seed, 2 * ur));
      Engine eng = make_engine(derive_seed(p.seed, 2 * ur + 1));
      const BoundaryWalk w = walk_boundary_hits(env, N, rep.alpha, p.xi, eng, p.step_cap);
      masks[static_cast<std::size_t>(r)] = w.trap_mask | (w.truncated ? kTruncated : 0);
    }
  });

  rep.hit_counts.assign(static_cast<std::size_t>(N), 0);
  for (std::uint64_t m : masks) {
    if (m & kTruncated) {
      ++rep.truncated;
      continue;
    }
    ++rep.valid;
    if ((m & ((std::uint64_t{1} << N) - 1)) == 0) ++rep.lambda_c_count;
    for (int k = 0; k < N; ++k)
      if (m >> k & 1) ++rep.hit_counts[static_cast<std::size_t>(k)];
  }
  if (rep.valid == 0) throw StorageError("every replica reached the step cap");
  const double R = static_cast<double>(rep.valid);
  const double q = rep.q_N;
  rep.marginal_sigma = std::sqrt(q * (1 - q) / R);
  for (int k = 0; k < N; ++k) {
    const double f = static_cast<double>(rep.hit_counts[static_cast<std::size_t>(k)]) / R;
    rep.marginals.push_back(f);
    rep.marginal_z.push_back(rep.marginal_sigma > 0 ? (f - q) / rep.marginal_sigma : 0.0);
    if (std::abs(rep.marginal_z.back()) > 3) ++rep.marginal_failures;
  }

  // Homogeneity of the marginals across k (2 x N contingency table).
  if (N > 1) {
    double pooled = 0;
    for (auto c : rep.hit_counts) pooled += static_cast<double>(c);
    pooled /= R * N;
    double chi2 = 0;
    if (pooled > 0 && pooled < 1) {
      for (auto c : rep.hit_counts) {
        const double hit = static_cast<double>(c);
        chi2 += (hit - R * pooled) * (hit - R * pooled) / (R * pooled);
        chi2 += (hit - R * pooled) * (hit - R * pooled) / (R * (1 - pooled));
      }
      rep.homogeneity_chi2 = chi2;
      rep.homogeneity_p = stats::chi_square_sf(chi2, N - 1);
    }
  }

  // Independence diagnostics: centered indicator products against their null sd.
  const auto joint = [&](const std::vector<int>& ks) {
    JointTest t;
    t.ranks = ks;
    double stat = 0;
    double sd = 1;
    t.product = 1;
    for (int k : ks) {
      const double pk = rep.marginals[static_cast<std::size_t>(k)];
      t.product *= pk;
      sd *= pk * (1 - pk);
    }
    for (std::uint64_t m : masks) {
      if (m & kTruncated) continue;
      double term = 1;
      bool all = true;
      for (int k : ks) {
        const double a = static_cast<double>(m >> k & 1);
        term *= a - rep.marginals[static_cast<std::size_t>(k)];
        all = all && a == 1;
      }
      stat += term;
      if (all) ++t.count;
    }
    t.statistic = stat / R;
    t.frequency = static_cast<double>(t.count) / R;
    t.sigma = std::sqrt(sd / R);
    t.z = t.sigma > 0 ? t.statistic / t.sigma : 0.0;
    return t;
  };
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) rep.pairs.push_back(joint({a, b}));
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b)
      for (int c = b + 1; c < N; ++c) rep.triples.push_back(joint({a, b, c}));
  rep.pair_z_limit = bonferroni_z(rep.pairs.size());
  rep.triple_z_limit = bonferroni_z(rep.triples.size());
  for (auto& t : rep.pairs) {
    t.pass = std::abs(t.z) <= rep.pair_z_limit;
    if (!t.pass) ++rep.pair_failures;
  }
  for (auto& t : rep.triples) {
    t.pass = std::abs(t.z) <= rep.triple_z_limit;
    if (!t.pass) ++rep.triple_failures;
  }

  rep.lambda_c_frequency = static_cast<double>(rep.lambda_c_count) / R;
  rep.lambda_c_expected = std::pow(1 - q, N);
  rep.lambda_c_sigma = std::sqrt(rep.lambda_c_expected * (1 - rep.lambda_c_expected) / R);
  rep.lambda_c_z = rep.lambda_c_sigma > 0 ? (rep.lambda_c_frequency - rep.lambda_c_expected) / rep.lambda_c_sigma : 0.0;
  const double c_const = q * std::pow(static_cast<double>(N), 1 - p.eps);
  rep.exp_bound = std::exp(-c_const * std::pow(static_cast<double>(N), p.eps));
  return rep;
}

nlohmann::ordered_json lambda_to_json(const LambdaReport& r) {
  nlohmann::ordered_json j;
  j["alpha"] = r.alpha;
  j["q_N"] = r.q_N;
  j["delta"] = r.delta;
  j["replicas"] = r.params.replicas;
  j["valid"] = r.valid;
  j["truncated"] = r.truncated;
  j["hit_counts"] = r.hit_counts;
  j["marginals"] = r.marginals;
  j["marginal_sigma"] = r.marginal_sigma;
  j["marginal_z"] = r.marginal_z;
  j["marginal_failures"] = r.marginal_failures;
  j["homogeneity_chi2"] = r.homogeneity_chi2;
  j["homogeneity_p"] = r.homogeneity_p;
  const auto tests = [](const std::vector<JointTest>& ts) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& t : ts) {
      nlohmann::ordered_json e;
      e["ranks"] = t.ranks;
      e["count"] = t.count;
      e["frequency"] = t.frequency;
      e["marginal_product"] = t.product;
      e["centered_statistic"] = t.statistic;
      e["sigma"] = t.sigma;
      e["z"] = t.z;
      e["pass"] = t.pass;
      a.push_back(std::move(e));
    }
    return a;
  };
  j["pair_z_limit"] = r.pair_z_limit;
  j["pairs"] = tests(r.pairs);
  j["pair_failures"] = r.pair_failures;
  j["triple_z_limit"] = r.triple_z_limit;
  j["triples"] = tests(r.triples);
  j["triple_failures"] = r.triple_failures;
  nlohmann::ordered_json lc;
  lc["count"] = r.lambda_c_count;
  lc["frequency"] = r.lambda_c_frequency;
  lc["expected"] = r.lambda_c_expected;
  lc["sigma"] = r.lambda_c_sigma;
  lc["z"] = r.lambda_c_z;
  lc["exp_bound"] = r.exp_bound;
  j["lambda_complement"] = std::move(lc);
  return j;
}

// ---------------------------------------------------------------------------

FirstTrap first_trap_rank(const Environment& env, const Trajectory& traj, int N, double alpha, double xi) {
  FirstTrap out;
  if (N < 1) return out;
  const HittingTimes ht = hitting_times(traj, N - 1);
  for (const auto& rec : ht.records) {
    if (is_trap(env, rec.location, N, alpha, xi).is_trap) {
      out.rank = rec.N;
      out.location = rec.location;
      return out;
    }
  }
  out.truncated = ht.truncated;
  return out;
}

BoundaryWalk walk_boundary_hits(const Environment& env, int N, double alpha, double xi, Engine& eng,
                                std::int64_t step_cap) {
  if (N < 1 || N > 63) throw UsageError("N must lie in [1, 63]");
  if (env.radius() < 3 * N) {
    throw StorageError("boundary walk at scale N=" + std::to_string(N) + " needs radius at least " +
                       std::to_string(3 * N));
  }
  BoundaryWalk w;
  Point x = Point::origin(env.dim());
  int level = 0;
  while (true) {
    if (x.linf() == 3 * level) {
      w.hits.push_back(x);
      if (is_trap(env, x, N, alpha, xi).is_trap) w.trap_mask |= std::uint64_t{1} << level;
      if (level == N - 1) break;
      ++level;
    }
    if (w.steps == step_cap) {
      w.truncated = true;
      break;
    }
    x = sample_step(env, x, eng);
    ++w.steps;
  }
  return w;
}

FirstTrap first_trap(const BoundaryWalk& walk) {
  FirstTrap out;
  for (std::size_t k = 0; k < walk.hits.size(); ++k) {
    if (walk.trap_mask >> k & 1) {
      out.rank = static_cast<int>(k);
      out.location = walk.hits[k];
      return out;
    }
  }
  out.truncated = walk.truncated;
  return out;
}

std::vector<std::pair<Bond, double>> trap_overrides(const Point& x, int N, double alpha, double xi) {
  if (!(xi > 0 && xi < 1)) throw UsageError("xi must lie in (0, 1)");
  const double t = trap_threshold(N, alpha);
  const TrapPattern c = collection_C(x);
  std::vector<std::pair<Bond, double>> out;
  out.emplace_back(c.weak, 0.75 * t);
  out.emplace_back(c.strong, xi + (1 - xi) / 2);
  for (const Bond& b : c.others) out.emplace_back(b, 0.5 * t);
  return out;
}

Environment plant_trap(const Environment& env, const Point& x, int N, double alpha, double xi) {
  const auto ov = trap_overrides(x, N, alpha, xi);
  return env.with_overrides(ov);
}

Environment plant_shell(const Environment& env, int k, int N, double alpha, double xi) {
  std::vector<std::pair<Bond, double>> ov;
  for (const Point& x : inner_boundary(Box{env.dim(), k})) {
    auto part = trap_overrides(x, N, alpha, xi);
    ov.insert(ov.end(), part.begin(), part.end());
  }
  return env.with_overrides(ov);
}

}  // namespace rclab
