#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "../oracles.hpp"
#include "rclab/error.hpp"
#include "rclab/stats.hpp"
#include "rclab/traps.hpp"

using namespace rclab;

TEST_CASE("collection C(x) geometry") {
  CHECK(collection_C(Point{3, 0}).bonds().size() == 7);
  CHECK(collection_C(Point{3, 0, 0, 0, 0}).bonds().size() == 19);
  for (int d = 2; d <= 5; ++d) {
    Point x(d);
    x[0] = -6;
    const TrapPattern c = collection_C(x);
    const auto b = c.bonds();
    CHECK(static_cast<int>(b.size()) == 4 * d - 1);
    CHECK(static_cast<int>(c.others.size()) == 4 * d - 3);
    CHECK(std::set<Bond>(b.begin(), b.end()).size() == b.size());
    CHECK(c.y == Point(x).shifted(0, -1));
    CHECK(c.z == Point(x).shifted(0, -2));
    for (const Bond& o : c.others) CHECK((o.touches(c.y) || o.touches(c.z)));
  }
  // x = (3, 0): y = (4, 0), z = (5, 0)
  const TrapPattern c = collection_C(Point{3, 0});
  CHECK(c.y == Point{4, 0});
  CHECK(c.z == Point{5, 0});
  CHECK(c.others.back() == Bond(Point{5, 0}, Point{6, 0}));
}

TEST_CASE("collections of boundary points stay outside the box") {
  for (int d = 2; d <= 3; ++d)
    for (int N = 1; N <= 4; ++N)
      for (const Point& x : inner_boundary(Box{d, N}))
        for (const Bond& b : collection_C(x).bonds()) {
          CHECK(b.lo().linf() >= 3 * N);
          CHECK(b.hi().linf() >= 3 * N);
        }
}

TEST_CASE("collections on different shells are disjoint") {
  for (int d = 2; d <= 3; ++d) {
    std::map<Bond, int> owner;
    for (int K = 1; K <= 6; ++K)
      for (const Point& x : inner_boundary(Box{d, K}))
        for (const Bond& b : collection_C(x).bonds()) {
          auto [it, fresh] = owner.emplace(b, K);
          if (!fresh) CHECK(it->second == K);
        }
  }
}

TEST_CASE("trap conditions on a planted fixture") {
  const int N = 5;
  const double alpha = 0.8, xi = 0.5;
  const double t = trap_threshold(N, alpha);
  const Point x{6, 2};
  const Environment base = Environment::sample(2, 12, ConductanceLaw::poly_tail(1.0), 4);
  const Environment env = plant_trap(base, x, N, alpha, xi);
  const TrapCheck ok = is_trap(env, x, N, alpha, xi);
  CHECK(ok.is_trap);
  CHECK(ok.omega_xy == doctest::Approx(0.75 * t));
  CHECK(ok.omega_yz >= xi);
  CHECK(ok.max_other <= t);

  const TrapPattern c = collection_C(x);
  const std::pair<Bond, double> too_strong[] = {{c.weak, 1.01 * t}};
  CHECK_FALSE(is_trap(env.with_overrides(too_strong), x, N, alpha, xi).is_trap);
  const std::pair<Bond, double> too_weak[] = {{c.weak, 0.5 * t}};
  CHECK_FALSE(is_trap(env.with_overrides(too_weak), x, N, alpha, xi).is_trap);
  const std::pair<Bond, double> leaky[] = {{c.others[2], 2 * t}};
  CHECK_FALSE(is_trap(env.with_overrides(leaky), x, N, alpha, xi).is_trap);
  const std::pair<Bond, double> soft[] = {{c.strong, 0.49}};
  CHECK_FALSE(is_trap(env.with_overrides(soft), x, N, alpha, xi).is_trap);
  CHECK_THROWS_AS(is_trap(env, Point{10, 0}, N, alpha, xi), StorageError);
}

TEST_CASE("q_N closed form") {
  const double q = q_N_closed_form(5, 0.1, 0.5, 0.5, 10);
  const double hand = (1 - std::pow(2.0, -0.1)) * (1 - std::pow(0.5, 0.1)) * std::pow(10.0, -0.5);
  CHECK(q == doctest::Approx(hand).epsilon(1e-12));
  CHECK(q == doctest::Approx(1.42e-3).epsilon(0.005));
  for (int d : {2, 3, 5})
    for (double gamma : {0.05, 0.5, 2.0}) {
      const double a = trap_alpha(d, gamma, 0.3);
      CHECK(q_N_for_alpha(d, gamma, 0.4, a, 7) == doctest::Approx(oracle::q_trap(d, gamma, 0.4, a, 7)).epsilon(1e-12));
      CHECK(q_N_closed_form(d, gamma, 0.4, 0.3, 28) / q_N_closed_form(d, gamma, 0.4, 0.3, 7) ==
            doctest::Approx(std::pow(4.0, -0.7)).epsilon(1e-12));
    }
  const double limit = (1 - std::pow(2.0, -0.1)) * (1 - std::pow(0.5, 0.1));
  CHECK(q_N_closed_form(5, 0.1, 0.5, 1 - 1e-9, 10) == doctest::Approx(limit).epsilon(1e-6));
  CHECK_THROWS_AS(q_N_closed_form(5, 0.1, 1.5, 0.5, 10), UsageError);
  CHECK_THROWS_AS(q_N_closed_form(5, 0.1, 0.5, 1.0, 10), UsageError);
  CHECK(anomalous_delta(5, 0.01, 0.5) == doctest::Approx(5 * 18 * 0.01 / 0.5));
  CHECK(anomalous_delta(2, 1e-6, 0.5) < 1e-4);
}

TEST_CASE("Monte Carlo over single collections") {
  const double a = trap_alpha(2, 1.0, 0.5);
  const auto s = sample_collections(2, 1.0, 0.5, a, 3, 400000, 17, 4);
  CHECK(s.q_exact == doctest::Approx(q_N_for_alpha(2, 1.0, 0.5, a, 3)));
  CHECK(std::abs(s.z) <= 3);
  CHECK(sample_collections(2, 1.0, 0.5, a, 3, 400000, 17, 1).successes == s.successes);
}

TEST_CASE("scanning for traps") {
  const int N = 4;
  const double alpha = 0.9, xi = 0.5;
  const Environment flat = Environment::sample(2, 20, ConductanceLaw::constant(1.0), 0);
  CHECK(scan_traps(flat, N, alpha, xi, 15).hits.empty());

  const Point x{-7, 3};
  const Environment one = plant_trap(flat, x, N, alpha, xi);
  const TrapScanReport r = scan_traps(one, N, alpha, xi, 15, 3);
  REQUIRE(r.hits.size() == 1);
  CHECK(r.hits[0].site == x);
  CHECK(r.sites_scanned == 31 * 31);
  CHECK(r.crossing_violations == 0);
  CHECK(r.hits[0].crossing >= 1 / (4 * 2 * std::pow(N, alpha)));
  std::ostringstream os;
  write_scan_csv(r, os);
  CHECK(os.str().rfind("site_coords,omega_xy,omega_yz,max_other\n-7 3,", 0) == 0);
  CHECK(scan_to_json(r)["hits"].size() == 1);
  CHECK_THROWS_AS(scan_traps(one, N, alpha, xi, 18), StorageError);
}

TEST_CASE("scan hit frequency matches q_N") {
  const double gamma = 1, xi = 0.5, alpha = 0.5;
  const int N = 2, region = 20;
  const double q = q_N_for_alpha(2, gamma, xi, alpha, N);
  std::int64_t hits = 0, sites = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Environment env = Environment::sample(2, region + 3, ConductanceLaw::poly_tail(gamma), 500 + s);
    const auto r = scan_traps(env, N, alpha, xi, region);
    hits += static_cast<std::int64_t>(r.hits.size());
    sites += r.sites_scanned;
    CHECK(r.crossing_violations == 0);
  }
  const double expected = q * static_cast<double>(sites);
  CHECK(std::abs(static_cast<double>(hits) - expected) <= 4 * std::sqrt(expected * (1 - q)));
}

TEST_CASE("first trap rank") {
  const int N = 4;
  const double alpha = 1.0, xi = 0.5;
  const Environment flat = Environment::sample(2, 400, ConductanceLaw::constant(1.0), 0);
  const Trajectory t = simulate(flat, Point{0, 0}, 400, 3);
  const auto none = first_trap_rank(flat, t, N, alpha, xi);
  CHECK_FALSE(none.rank.has_value());
  const HittingTimes h = hitting_times(t, N - 1);
  REQUIRE_FALSE(h.truncated);
  const Point at2 = h.records[2].location;
  const Environment planted = plant_trap(flat, at2, N, alpha, xi);
  const Trajectory t2 = simulate(planted, Point{0, 0}, 400, 3);
  // the planted bonds lie outside B_2, so the walk is unchanged up to H_2
  for (std::int64_t n = 0; n <= h.records[2].time; ++n)
    CHECK(t2.at(static_cast<std::size_t>(n)) == t.at(static_cast<std::size_t>(n)));
  const auto r = first_trap_rank(planted, t2, N, alpha, xi);
  REQUIRE(r.rank.has_value());
  CHECK(*r.rank == 2);
  CHECK(r.location == at2);
  CHECK(is_trap(planted, r.location, N, alpha, xi).is_trap);

  Engine eng = make_engine(3);
  const BoundaryWalk w = walk_boundary_hits(planted, N, alpha, xi, eng, 1000000);
  CHECK(w.hits.size() == static_cast<std::size_t>(N));
  for (std::size_t k = 0; k < w.hits.size(); ++k) {
    CHECK(w.hits[k].linf() == 3 * static_cast<int>(k));
    CHECK(((w.trap_mask >> k & 1) != 0) == is_trap(planted, w.hits[k], N, alpha, xi).is_trap);
  }
  Engine capped = make_engine(3);
  CHECK(walk_boundary_hits(flat, N, alpha, xi, capped, 5).truncated);
}

TEST_CASE("planting a whole shell") {
  for (int d = 2; d <= 3; ++d) {
    const int N = 5, k = 2;
    const double alpha = 0.7, xi = 0.5;
    const Environment env =
        plant_shell(Environment::sample(d, 3 * k + 4, ConductanceLaw::poly_tail(1.0), 9), k, N, alpha, xi);
    for (const Point& x : inner_boundary(Box{d, k})) CHECK(is_trap(env, x, N, alpha, xi).is_trap);
  }
}

TEST_CASE("Bonferroni band") {
  CHECK(bonferroni_z(1) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(bonferroni_z(6) > bonferroni_z(1));
}

TEST_CASE("lambda experiment bookkeeping") {
  LambdaParams p;
  p.d = 2;
  p.gamma = 1;
  p.alpha = 0.4;
  p.N = 3;
  p.replicas = 3000;
  p.seed = 8;
  p.threads = 4;
  const LambdaReport r = lambda_experiment(p);
  CHECK(r.valid + r.truncated == p.replicas);
  CHECK(r.marginals.size() == 3);
  CHECK(r.pairs.size() == 3);
  CHECK(r.triples.size() == 1);
  CHECK(r.q_N == doctest::Approx(q_N_for_alpha(2, 1, 0.5, 0.4, 3)));
  CHECK(r.lambda_c_expected == doctest::Approx(std::pow(1 - r.q_N, 3)));
  p.threads = 1;
  const LambdaReport again = lambda_experiment(p);
  CHECK(again.hit_counts == r.hit_counts);
  CHECK(again.lambda_c_count == r.lambda_c_count);
  const auto j = lambda_to_json(r);
  CHECK(j.contains("pairs"));
}
