#include <doctest.h>

#include <cmath>

#include "rclab/error.hpp"
#include "rclab/kernel.hpp"
#include "rclab/stats.hpp"
#include "rclab/traps.hpp"
#include "rclab/walker.hpp"

using namespace rclab;

TEST_CASE("one-step frequencies on the constant law") {
  for (int d : {1, 2, 3}) {
    const Environment env = Environment::sample(d, 2, ConductanceLaw::constant(1.0), 0);
    Engine eng = make_engine(5);
    std::vector<std::int64_t> count(static_cast<std::size_t>(2 * d), 0);
    const std::int64_t M = 1000000;
    const Point o = Point::origin(d);
    for (std::int64_t k = 0; k < M; ++k) {
      const Point y = sample_step(env, o, eng);
      for (int a = 0; a < d; ++a)
        if (y[a] != 0) ++count[static_cast<std::size_t>(2 * a + (y[a] > 0 ? 1 : 0))];
    }
    for (auto c : count) CHECK(std::abs(static_cast<double>(c) / M - 1.0 / (2 * d)) <= 0.002);
  }
}

TEST_CASE("one-step frequencies follow the transition row") {
  const std::pair<Bond, double> split[] = {{Bond(Point{-1}, Point{0}), 0.25}, {Bond(Point{0}, Point{1}), 0.75}};
  const Environment env1 = Environment::sample(1, 3, ConductanceLaw::constant(1.0), 0).with_overrides(split);
  Engine e1 = make_engine(1);
  int right = 0;
  const int M1 = 100000;
  for (int k = 0; k < M1; ++k) right += sample_step(env1, Point{0}, e1)[0] > 0 ? 1 : 0;
  CHECK(std::abs(right / static_cast<double>(M1) - 0.75) <= 0.01);

  const Environment env = Environment::sample(2, 5, ConductanceLaw::poly_tail(0.8), 31);
  for (const Point& x : {Point{0, 0}, Point{2, -3}}) {
    Engine eng = make_engine(2);
    const std::int64_t M = 1000000;
    std::vector<double> obs(4, 0), expect(4);
    const double px = pi(env, x);
    for (int a = 0; a < 2; ++a)
      for (int s : {-1, 1}) expect[static_cast<std::size_t>(2 * a + (s > 0))] = env.conductance(x, x.shifted(a, s)) / px * M;
    for (std::int64_t k = 0; k < M; ++k) {
      const Point y = sample_step(env, x, eng);
      const Point dlt = y - x;
      for (int a = 0; a < 2; ++a)
        if (dlt[a] != 0) obs[static_cast<std::size_t>(2 * a + (dlt[a] > 0))] += 1;
    }
    double chi2 = 0;
    for (int i = 0; i < 4; ++i) chi2 += std::pow(obs[i] - expect[i], 2) / expect[i];
    CHECK(stats::chi_square_sf(chi2, 3) > 0.001);
  }
}

TEST_CASE("trajectories are reproducible nearest-neighbor paths") {
  const Environment env = Environment::sample(2, 60, ConductanceLaw::poly_tail(1.0), 3);
  const Trajectory a = simulate(env, Point{0, 0}, 50, 77);
  const Trajectory b = simulate(env, Point{0, 0}, 50, 77);
  CHECK(a.steps == b.steps);
  CHECK(a.length() == 50);
  for (std::size_t n = 1; n <= a.length(); ++n) CHECK(l1_distance(a.at(n - 1), a.at(n)) == 1);
  CHECK_THROWS_AS(simulate(env, Point{10, 0}, 55, 1), StorageError);
}

TEST_CASE("hitting times of the 3N boxes") {
  Trajectory t;
  t.start = Point{0};
  t.steps = {Point{1}, Point{2}, Point{3}};
  auto h = hitting_times(t, 1);
  REQUIRE(h.records.size() == 2);
  CHECK(h.records[0].N == 0);
  CHECK(h.records[0].time == 0);
  CHECK(h.records[1].time == 3);
  CHECK(h.records[1].location == Point{3});
  CHECK_FALSE(h.truncated);
  CHECK(hitting_times(t, 2).truncated);

  const Environment env = Environment::sample(2, 400, ConductanceLaw::constant(1.0), 0);
  const Trajectory w = simulate(env, Point{0, 0}, 400, 12);
  const auto hw = hitting_times(w, 3);
  for (std::size_t i = 1; i < hw.records.size(); ++i) {
    CHECK(hw.records[i].time > hw.records[i - 1].time);
    CHECK(hw.records[i].location.linf() == 3 * hw.records[i].N);
    for (std::int64_t n = 0; n < hw.records[i].time; ++n) CHECK(w.at(static_cast<std::size_t>(n)).linf() < 3 * hw.records[i].N);
  }
}

TEST_CASE("exit probability") {
  const Environment env = Environment::sample(2, 120, ConductanceLaw::constant(1.0), 0);
  const McEstimate all = exit_probability(env, 30, 30, 2000, 1);
  CHECK(all.estimate == 1.0);
  const int n = 100, h = 6;
  const double exact = heat_kernel(env, n, Point{0, 0}).mass_in(h);
  const McEstimate est = exit_probability(env, n, h, 100000, 9, 4);
  CHECK(std::abs(est.estimate - exact) <= 4 * std::sqrt(exact * (1 - exact) / 1e5));
  CHECK(est.ci_low <= est.estimate);
  CHECK(est.ci_high >= est.estimate);
  CHECK(exit_probability(env, n, h, 100000, 9, 1).successes == est.successes);
  const McEstimate small = exit_probability(env, n, h, 10000, 9, 4);
  const McEstimate large = exit_probability(env, n, h, 1000000, 10, 4);
  const double ratio = (small.ci_high - small.ci_low) / (large.ci_high - large.ci_low);
  CHECK(ratio > 8);
  CHECK(ratio < 12);
  CHECK(std::abs(large.estimate - exact) <= 4 * std::sqrt(exact * (1 - exact) / 1e6));
  CHECK_THROWS_AS(exit_probability(env, n, h, 0, 1), UsageError);
}

TEST_CASE("trap sojourn") {
  const int N = 6;
  const double gamma = 0.05, eps = 0.5, xi = 0.5;
  const double alpha = trap_alpha(2, gamma, eps);
  const Point x{18, 3};
  const Environment base = Environment::sample(2, 30, ConductanceLaw::poly_tail(gamma), 8);
  const Environment env = plant_trap(base, x, N, alpha, xi);
  const TrapPattern trap = collection_C(x);
  const int n = static_cast<int>(std::floor(std::pow(N, alpha)));
  const SojournResult r = trap_sojourn(env, trap, n, 200000, 4, 4);
  const double t = std::pow(N, -alpha);
  CHECK(r.exact >= std::pow(xi / (xi + 3 * t), n));
  CHECK(r.exact >= std::exp(-3 / xi) / 2);
  CHECK(std::abs(r.mc.estimate - r.exact) <= 3 * r.mc_sigma);
  CHECK(trap_sojourn(env, trap, n + 5, 0, 1).exact <= r.exact);
  const Environment stronger = plant_trap(base, x, N, alpha, 0.8);
  CHECK(trap_sojourn(stronger, trap, n, 0, 1).exact >= r.exact);
  TrapPattern wrong = trap;
  wrong.z = wrong.z.shifted(0, 1);
  CHECK_THROWS_AS(trap_sojourn(env, wrong, n, 0, 1), UsageError);
}

TEST_CASE("experiment record") {
  const auto rec = experiment_record("exit_probability", {{"n", 3}}, make_estimate(3, 10), 5);
  CHECK(rec["op"] == "exit_probability");
  CHECK(rec["estimate"].get<double>() == doctest::Approx(0.3));
  CHECK(rec["replicas"] == 10);
  CHECK(rec["seed"] == 5);
  CHECK(rec["ci_low"].get<double>() < 0.3);
  CHECK(rec["ci_high"].get<double>() > 0.3);
}
