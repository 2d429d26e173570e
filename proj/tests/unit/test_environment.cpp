#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rclab/environment.hpp"
#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/stats.hpp"

using namespace rclab;

namespace {

std::vector<double> all_values(const Environment& env) {
  std::vector<double> v;
  env.for_each_bond([&](const Bond&, double w) { v.push_back(w); });
  return v;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rclab_test_" + name)).string();
}

}  // namespace

TEST_CASE("constant law stores a single value") {
  const Environment env = Environment::sample(2, 5, ConductanceLaw::constant(0.5), 3);
  CHECK(env.is_uniform());
  CHECK(env.bond_count() == 2 * 11 * 10);
  for (double w : all_values(env)) CHECK(w == 0.5);
  CHECK(env.conductance(Point{0, 0}, Point{1, 0}) == 0.5);
}

TEST_CASE("poly tail marginal is the exact power law") {
  for (double gamma : {0.5, 1.0, 3.0}) {
    const Environment env = Environment::sample(2, 200, ConductanceLaw::poly_tail(gamma), 11);
    auto v = all_values(env);
    const double M = static_cast<double>(v.size());
    for (double a : {0.01, 0.1, 0.5, 1.0}) {
      const double frac = static_cast<double>(std::count_if(v.begin(), v.end(), [a](double w) { return w <= a; })) / M;
      CHECK(std::abs(frac - std::pow(a, gamma)) <= 4 / std::sqrt(M));
    }
    for (double w : v) {
      CHECK(w > 0);
      CHECK(w <= 1);
    }
  }
}

TEST_CASE("site-min marginal is the two-site minimum law") {
  const double gamma = 1.5;
  const Environment env = Environment::sample(2, 200, ConductanceLaw::site_min(gamma), 5);
  auto v = all_values(env);
  const double M = static_cast<double>(v.size());
  for (double a : {0.1, 0.5, 0.9}) {
    const double frac = static_cast<double>(std::count_if(v.begin(), v.end(), [a](double w) { return w <= a; })) / M;
    const double expected = 1 - std::pow(1 - std::pow(a, gamma), 2);
    // neighboring bonds share sites, so allow a wider band than the i.i.d. 4/sqrt(M)
    CHECK(std::abs(frac - expected) <= 8 / std::sqrt(M));
  }
}

TEST_CASE("tiny exponents stay strictly positive") {
  const Environment env = Environment::sample(2, 20, ConductanceLaw::poly_tail(0.001), 2);
  for (double w : all_values(env)) CHECK(w > 0);
}

TEST_CASE("sampling is deterministic and thread independent") {
  const auto law = ConductanceLaw::poly_tail(1.0);
  const Environment a = Environment::sample(3, 12, law, 99, 1);
  const Environment b = Environment::sample(3, 12, law, 99, 4);
  CHECK(a == b);
  CHECK(all_values(a) == all_values(b));
  const Environment c = Environment::sample(3, 12, law, 100, 1);
  CHECK_FALSE(all_values(a) == all_values(c));
  // keyed by coordinates: a smaller window reads the same bonds
  const Environment small = Environment::sample(3, 5, law, 99, 1);
  small.for_each_bond([&](const Bond& bd, double w) { CHECK(a.conductance(bd) == w); });
}

TEST_CASE("conductance is symmetric and window checked") {
  const Environment env = Environment::sample(2, 4, ConductanceLaw::poly_tail(2.0), 1);
  const Point x{1, 1}, y{1, 2};
  CHECK(env.conductance(x, y) == env.conductance(y, x));
  CHECK_THROWS_AS(env.conductance(Point{4, 0}, Point{5, 0}), StorageError);
  const std::pair<Bond, double> planted[] = {{Bond(Point{0, 0}, Point{1, 0}), 0.25}};
  const Environment p = env.with_overrides(planted);
  CHECK(p.conductance(Point{1, 0}, Point{0, 0}) == 0.25);
  CHECK(p.conductance(x, y) == env.conductance(x, y));
  CHECK_THROWS_AS(Environment::sample(2, 4, ConductanceLaw::poly_tail(-1.0), 1), UsageError);
  CHECK_THROWS_AS(Environment::sample(2, 0, ConductanceLaw::poly_tail(1.0), 1), UsageError);
}

TEST_CASE("memory budget is enforced with the required size") {
  CHECK_THROWS_AS(Environment::sample(3, 2000, ConductanceLaw::poly_tail(1.0), 1, 1, 1 << 20), StorageError);
}

TEST_CASE("modified environment resets bonds outside B_{N+1}") {
  const Environment env = Environment::sample(2, 10, ConductanceLaw::poly_tail(1.0), 7);
  const ModifiedEnvironment m = modify(env, 2);
  const Bond inside(Point{3, 2}, Point{3, 3});
  const Bond crossing(Point{3, 0}, Point{4, 0});
  const Bond outside(Point{5, 5}, Point{5, 6});
  CHECK(m.conductance(inside) == env.conductance(inside));
  CHECK(m.conductance(crossing) == 1.0);
  CHECK(m.conductance(outside) == 1.0);
  const ModifiedEnvironment twice = modify(m, 2);
  for (const Bond& b : {inside, crossing, outside}) CHECK(twice.conductance(b) == m.conductance(b));
  CHECK_THROWS_AS(modify(env, 10), StorageError);
}

TEST_CASE("minimum conductance statistic") {
  const Environment one = Environment::sample(2, 10, ConductanceLaw::constant(1.0), 1);
  CHECK(min_conductance_statistic(one, 8) == 0.0);
  CHECK_THROWS_AS(min_conductance_statistic(one, 1), UsageError);
  const Environment env = Environment::sample(2, 10, ConductanceLaw::poly_tail(1.0), 4);
  double m = 1;
  env.for_each_bond([&](const Bond& b, double w) {
    if (b.lo().linf() <= 5 && b.hi().linf() <= 5) m = std::min(m, w);
  });
  CHECK(min_conductance(env, 5) == m);
  CHECK(min_conductance_statistic(env, 5) == doctest::Approx(std::log(m) / std::log(5.0)));
}

TEST_CASE("minimum-conductance event becomes typical as N grows") {
  // Frequency over seeds of {min over B_N >= N^-(d/gamma + mu)} against the
  // exact value (1 - a^gamma)^M for the M bonds of B_N.
  const double gamma = 1, mu = 0.5;
  const int seeds = 40;
  double prev_exact = 0;
  for (int N : {50, 100, 200, 400}) {
    const double a = std::pow(N, -(2 / gamma + mu));
    const double bonds = 2.0 * (2 * N + 1) * (2 * N);
    const double exact = std::pow(1 - std::pow(a, gamma), bonds);
    CHECK(exact > prev_exact);
    prev_exact = exact;
    int hits = 0;
    for (int s = 0; s < seeds; ++s) {
      const Environment env = Environment::sample(2, N, ConductanceLaw::poly_tail(gamma), 1000 + s);
      hits += min_conductance(env, N) >= a ? 1 : 0;
    }
    const double freq = static_cast<double>(hits) / seeds;
    CHECK(std::abs(freq - exact) <= 3 * std::sqrt(exact * (1 - exact) / seeds) + 1.0 / seeds);
  }
}

TEST_CASE("save and load round trip") {
  const Environment env = Environment::sample(2, 16, ConductanceLaw::poly_tail(0.7), 42);
  const std::string path = temp_path("roundtrip.rclb");
  save_environment(env, path);
  const Environment back = load_environment(path);
  CHECK(back == env);
  CHECK(back.seed() == 42);
  CHECK(all_values(back) == all_values(env));

  const Environment flat = Environment::sample(3, 3, ConductanceLaw::constant(0.25), 1);
  CHECK(deserialize_environment(serialize_environment(flat)) == flat);

  std::string bytes = serialize_environment(env);
  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_environment(corrupt), FormatError);
  CHECK_THROWS_AS(deserialize_environment(bytes.substr(0, bytes.size() - 9)), FormatError);
  std::string newer = bytes;
  newer[4] = static_cast<char>(kEnvFormatVersion + 1);
  try {
    deserialize_environment(newer);
    FAIL("newer version accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  CHECK_THROWS_AS(load_environment(temp_path("does_not_exist.rclb")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("header layout") {
  const Environment env = Environment::sample(2, 3, ConductanceLaw::poly_tail(1.0), 0x0102030405060708ULL);
  const std::string b = serialize_environment(env);
  CHECK(b.substr(0, 4) == "RCLB");
  CHECK(static_cast<unsigned char>(b[4]) == kEnvFormatVersion);
  CHECK(static_cast<unsigned char>(b[6]) == 2);  // d
  CHECK(static_cast<unsigned char>(b[8]) == 3);  // radius
  CHECK(static_cast<unsigned char>(b[12]) == static_cast<unsigned char>(LawKind::PolyTail));
  const std::size_t seed_at = 4 + 2 + 2 + 4 + 1 + 8;
  CHECK(static_cast<unsigned char>(b[seed_at]) == 0x08);
  CHECK(static_cast<unsigned char>(b[seed_at + 7]) == 0x01);
  const std::size_t count_at = seed_at + 8;
  CHECK(static_cast<unsigned char>(b[count_at]) == env.bond_count());
  CHECK(b.size() == count_at + 8 + 8 * static_cast<std::size_t>(env.bond_count()) + 8);
}
