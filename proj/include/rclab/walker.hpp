#pragma once

// Monte Carlo simulation of the quenched walk.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rclab/environment.hpp"
#include "rclab/lattice.hpp"
#include "rclab/rng.hpp"
#include "rclab/trap_pattern.hpp"

namespace rclab {

struct Trajectory {
  Point start;
  std::vector<Point> steps;  // X_1, ..., X_length
  std::uint64_t seed = 0;

  std::size_t length() const noexcept { return steps.size(); }
  // X_n for 0 <= n <= length.
  const Point& at(std::size_t n) const { return n == 0 ? start : steps[n - 1]; }
};

// Samples one step from x with probabilities w_xy / pi(x). x must satisfy
// |x|_inf <= radius - 1; this is not checked.
Point sample_step(const Environment& env, const Point& x, Engine& eng);

// Requires length <= radius - |start|_inf.
Trajectory simulate(const Environment& env, const Point& start, std::int64_t length, std::uint64_t seed);

struct HittingRecord {
  int N = 0;
  std::int64_t time = 0;
  Point location;
};

struct HittingTimes {
  std::vector<HittingRecord> records;  // N = 0, 1, ... while hit
  bool truncated = false;              // some N <= N_max was not reached
};

// First visits to the inner boundary of [-3N, 3N]^d for N = 0..N_max; H_0 = 0.
HittingTimes hitting_times(const Trajectory& traj, int N_max);

struct McEstimate {
  std::int64_t successes = 0;
  std::int64_t replicas = 0;
  double estimate = 0;
  double ci_low = 0;  // Wilson 95%
  double ci_high = 0;
};

McEstimate make_estimate(std::int64_t successes, std::int64_t replicas);

// P_0(X_n in [-half_width, half_width]^d). Requires n <= radius - 1.
McEstimate exit_probability(const Environment& env, int n, int half_width, std::int64_t replicas,
                            std::uint64_t seed, int threads = 1);

struct SojournResult {
  double p_y = 0;    // w_yz / pi(y)
  double p_z = 0;    // w_yz / pi(z)
  double exact = 0;  // p_y^ceil(n/2) p_z^floor(n/2)
  McEstimate mc;
  double mc_sigma = 0;  // binomial standard deviation at the exact value
};

// Probability that the walk from y alternates on {y, z} for n jumps. Throws
// UsageError if `trap` is not the collection of its own x, StorageError if
// its bonds are not stored.
SojournResult trap_sojourn(const Environment& env, const TrapPattern& trap, int n, std::int64_t replicas,
                           std::uint64_t seed, int threads = 1);

// {op, params, estimate, ci_low, ci_high, replicas, seed}
nlohmann::ordered_json experiment_record(const std::string& op, const nlohmann::ordered_json& params,
                                         const McEstimate& est, std::uint64_t seed);

}  // namespace rclab
