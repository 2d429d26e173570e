#include "rclab/walker.hpp"

#include <array>
#include <cmath>
#include <functional>

#include "rclab/error.hpp"
#include "rclab/kernel.hpp"
#include "rclab/parallel.hpp"
#include "rclab/stats.hpp"

namespace rclab {

Point sample_step(const Environment& env, const Point& x, Engine& eng) {
  const int d = env.dim();
  const Cube& w = env.window();
  const std::int64_t s = w.index(x);
  std::array<double, 2 * kMaxDim> weight{};
  double total = 0;
  for (int a = 0; a < d; ++a) {
    weight[static_cast<std::size_t>(2 * a)] = env.slot(s - w.stride(a), a);
    weight[static_cast<std::size_t>(2 * a + 1)] = env.slot(s, a);
    total += weight[static_cast<std::size_t>(2 * a)] + weight[static_cast<std::size_t>(2 * a + 1)];
  }
  const double u = uniform01(eng) * total;
  double acc = 0;
  int pick = 2 * d - 1;
  for (int k = 0; k < 2 * d; ++k) {
    acc += weight[static_cast<std::size_t>(k)];
    if (u < acc) {
      pick = k;
      break;
    }
  }
  // Rounding can leave u >= acc at the end; fall back to the last positive weight.
  while (weight[static_cast<std::size_t>(pick)] == 0 && pick > 0) --pick;
  return x.shifted(pick / 2, pick % 2 == 0 ? -1 : 1);
}

Trajectory simulate(const Environment& env, const Point& start, std::int64_t length, std::uint64_t seed) {
  if (start.dim() != env.dim()) throw UsageError("start dimension does not match the environment");
  if (length < 0) throw UsageError("trajectory length must be nonnegative");
  if (length > env.radius() - start.linf()) {
    throw StorageError("trajectory of length " + std::to_string(length) + " from " + start.str() +
                       " may leave the stored window of radius " + std::to_string(env.radius()));
  }
  Trajectory t;
  t.start = start;
  t.seed = seed;
  t.steps.reserve(static_cast<std::size_t>(length));
  Engine eng = make_engine(seed);
  Point x = start;
  for (std::int64_t k = 0; k < length; ++k) {
    x = sample_step(env, x, eng);
    t.steps.push_back(x);
  }
  return t;
}

HittingTimes hitting_times(const Trajectory& traj, int N_max) {
  HittingTimes out;
  if (N_max < 0) return out;
  // H_N is the first n with |X_n|_inf = 3N; for walks from the origin H_0 = 0.
  std::vector<std::int64_t> first(static_cast<std::size_t>(N_max) + 1, -1);
  int missing = N_max + 1;
  for (std::size_t n = 0; n <= traj.length() && missing > 0; ++n) {
    const int L = traj.at(n).linf();
    if (L % 3 != 0 || L / 3 > N_max) continue;
    auto& slot = first[static_cast<std::size_t>(L / 3)];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(n);
      --missing;
    }
  }
  for (int N = 0; N <= N_max; ++N) {
    const std::int64_t t = first[static_cast<std::size_t>(N)];
    if (t >= 0) out.records.push_back({N, t, traj.at(static_cast<std::size_t>(t))});
  }
  out.truncated = missing > 0;
  return out;
}

McEstimate make_estimate(std::int64_t successes, std::int64_t replicas) {
  McEstimate e;
  e.successes = successes;
  e.replicas = replicas;
  e.estimate = replicas > 0 ? static_cast<double>(successes) / static_cast<double>(replicas) : 0.0;
  const auto ci = stats::wilson(successes, replicas);
  e.ci_low = ci.low;
  e.ci_high = ci.high;
  return e;
}

namespace {

std::int64_t count_parallel(std::int64_t replicas, int threads,
                            const std::function<bool(std::int64_t)>& trial) {
  const int chunks = std::max(1, std::min<int>(threads, 256));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(chunks), 0);
  const std::int64_t per = (replicas + chunks - 1) / chunks;
  parallel_for(chunks, threads, [&](std::int64_t cb, std::int64_t ce) {
    for (std::int64_t c = cb; c < ce; ++c) {
      const std::int64_t b = c * per;
      const std::int64_t e = std::min(replicas, b + per);
      std::int64_t k = 0;
      for (std::int64_t r = b; r < e; ++r)
        if (trial(r)) ++k;
      counts[static_cast<std::size_t>(c)] = k;
    }
  });
  std::int64_t total = 0;
  for (auto k : counts) total += k;
  return total;
}

}  // namespace

McEstimate exit_probability(const Environment& env, int n, int half_width, std::int64_t replicas,
                            std::uint64_t seed, int threads) {
  if (replicas <= 0) throw UsageError("replicas must be positive");
  if (n < 0) throw UsageError("number of steps must be nonnegative");
  if (n > env.radius() - 1) {
    throw StorageError(std::to_string(n) + " steps need a window of radius at least " + std::to_string(n + 1));
  }
  const Point origin = Point::origin(env.dim());
  const std::int64_t hits = count_parallel(replicas, threads, [&](std::int64_t r) {
    Engine eng = make_engine(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Point x = origin;
    for (int k = 0; k < n; ++k) x = sample_step(env, x, eng);
    return x.linf() <= half_width;
  });
  return make_estimate(hits, replicas);
}

SojournResult trap_sojourn(const Environment& env, const TrapPattern& trap, int n, std::int64_t replicas,
                           std::uint64_t seed, int threads) {
  if (n < 0) throw UsageError("number of jumps must be nonnegative");
  if (replicas < 0) throw UsageError("replicas must be nonnegative");
  const TrapPattern expect = collection_C(trap.x);
  if (!(expect.y == trap.y && expect.z == trap.z && expect.others == trap.others)) {
    throw UsageError("trap pattern does not match the collection of " + trap.x.str());
  }
  for (const Bond& b : trap.bonds()) {
    if (!env.has_bond(b)) throw StorageError("trap bond " + b.str() + " outside the stored window");
  }
  SojournResult out;
  const double wyz = env.conductance(trap.strong);
  out.p_y = wyz / pi(env, trap.y);
  out.p_z = wyz / pi(env, trap.z);
  out.exact = std::pow(out.p_y, (n + 1) / 2) * std::pow(out.p_z, n / 2);
  if (replicas > 0) {
    const std::int64_t stays = count_parallel(replicas, threads, [&](std::int64_t r) {
      Engine eng = make_engine(derive_seed(seed, static_cast<std::uint64_t>(r)));
      Point x = trap.y;
      for (int k = 0; k < n; ++k) {
        x = sample_step(env, x, eng);
        if (!(x == trap.y || x == trap.z)) return false;
      }
      return true;
    });
    out.mc = make_estimate(stays, replicas);
    out.mc_sigma = std::sqrt(out.exact * (1 - out.exact) / static_cast<double>(replicas));
  }
  return out;
}

nlohmann::ordered_json experiment_record(const std::string& op, const nlohmann::ordered_json& params,
                                         const McEstimate& est, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["op"] = op;
  j["params"] = params;
  j["estimate"] = est.estimate;
  j["ci_low"] = est.ci_low;
  j["ci_high"] = est.ci_high;
  j["replicas"] = est.replicas;
  j["seed"] = seed;
  return j;
}

}  // namespace rclab
