#pragma once

// Traps: a strong bond reachable from a boundary hit x only through weak bonds.
//
// With t = N^(-alpha), the collection C(x) is a trap when
//   (1) t/2 < w_xy <= t,   (2) w_yz >= xi,   (3) every other bond of C(x) is <= t.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rclab/environment.hpp"
#include "rclab/trap_pattern.hpp"
#include "rclab/walker.hpp"

namespace rclab {

// alpha = (1 - eps) / ((4d - 2) gamma)
double trap_alpha(int d, double gamma, double eps);
// d (4d - 2) gamma / (1 - eps)
double anomalous_delta(int d, double gamma, double eps);
// N^(-alpha)
double trap_threshold(double N, double alpha);

bool trap_conditions(double w_xy, double w_yz, std::span<const double> others, double threshold, double xi);

struct TrapCheck {
  bool is_trap = false;
  TrapPattern pattern;
  double omega_xy = 0;
  double omega_yz = 0;
  double max_other = 0;
};

// Throws StorageError when C(x) is not inside the stored window.
TrapCheck is_trap(const Environment& env, const Point& x, int N, double alpha, double xi);

// Exact trap probability under the power law for an arbitrary alpha:
// (1 - 2^-gamma)(1 - xi^gamma) N^(-alpha gamma (4d - 2)).
double q_N_for_alpha(int d, double gamma, double xi, double alpha, double N);
// Same with alpha from (gamma, eps); equals (1 - 2^-gamma)(1 - xi^gamma) N^-(1 - eps).
double q_N_closed_form(int d, double gamma, double xi, double eps, double N);

struct TrapHit {
  Point site;
  TrapPattern pattern;
  double omega_xy = 0;
  double omega_yz = 0;
  double max_other = 0;
  double crossing = 0;  // w_xy / pi(x)
};

struct TrapScanReport {
  int N = 0;
  double alpha = 0;
  double xi = 0;
  int region = 0;  // sites with |x|_inf <= region
  std::vector<TrapHit> hits;
  std::int64_t sites_scanned = 0;
  std::int64_t crossing_violations = 0;  // hits with crossing < 1/(4 d N^alpha)
};

// Requires region + 3 <= radius.
TrapScanReport scan_traps(const Environment& env, int N, double alpha, double xi, int region, int threads = 1);

// Header `site_coords,omega_xy,omega_yz,max_other`; coordinates space-separated.
void write_scan_csv(const TrapScanReport& report, std::ostream& os);
nlohmann::ordered_json scan_to_json(const TrapScanReport& report);

struct CollectionSample {
  std::int64_t samples = 0;
  std::int64_t successes = 0;
  double q_exact = 0;
  double estimate = 0;
  double sigma = 0;  // binomial sd at q_exact
  double z = 0;
};

// Monte Carlo over i.i.d. collections of 4d-1 power-law bonds.
CollectionSample sample_collections(int d, double gamma, double xi, double alpha, double N, std::int64_t samples,
                                    std::uint64_t seed, int threads = 1);

struct LambdaParams {
  int d = 2;
  double gamma = 1;
  double xi = 0.5;
  double eps = 0.5;
  std::optional<double> alpha;  // default trap_alpha(d, gamma, eps)
  int N = 4;
  std::int64_t replicas = 100000;
  std::uint64_t seed = 1;
  std::int64_t step_cap = 10000000;
  int threads = 1;
};

struct JointTest {
  std::vector<int> ranks;
  std::int64_t count = 0;
  double frequency = 0;
  double product = 0;  // product of empirical marginals
  double statistic = 0;  // mean of the centered indicator product
  double sigma = 0;
  double z = 0;
  bool pass = true;
};

struct LambdaReport {
  LambdaParams params;
  double alpha = 0;
  double q_N = 0;
  double delta = 0;
  std::int64_t valid = 0;
  std::int64_t truncated = 0;  // replicas that hit the step cap; excluded
  std::vector<std::int64_t> hit_counts;
  std::vector<double> marginals;
  double marginal_sigma = 0;
  std::vector<double> marginal_z;
  int marginal_failures = 0;  // |z| > 3
  double homogeneity_chi2 = 0;
  double homogeneity_p = 1;
  double pair_z_limit = 3;
  double triple_z_limit = 3;
  std::vector<JointTest> pairs;
  std::vector<JointTest> triples;
  int pair_failures = 0;
  int triple_failures = 0;
  std::int64_t lambda_c_count = 0;
  double lambda_c_frequency = 0;
  double lambda_c_expected = 0;  // (1 - q_N)^N
  double lambda_c_sigma = 0;
  double lambda_c_z = 0;
  double exp_bound = 0;  // exp(-c N^eps) with c = q_N N^(1 - eps)
};

// Each replica samples a fresh environment of radius 3N and a walk from 0 up to
// the first hit of the boundary of [-3(N-1), 3(N-1)]^d, recording A_N at each hit.
LambdaReport lambda_experiment(const LambdaParams& params);
nlohmann::ordered_json lambda_to_json(const LambdaReport& report);

// z such that a family of m two-sided tests has overall level 2(1 - Phi(3)).
double bonferroni_z(std::size_t m);

struct FirstTrap {
  std::optional<int> rank;
  Point location;
  bool truncated = false;  // the trajectory ended before H_{N-1} without a trap
};

// Smallest k <= N-1 with A_N(X_{H_k}).
FirstTrap first_trap_rank(const Environment& env, const Trajectory& traj, int N, double alpha, double xi);

struct BoundaryWalk {
  std::uint64_t trap_mask = 0;     // bit k: A_N(X_{H_k})
  std::vector<Point> hits;         // X_{H_0}, X_{H_1}, ...
  bool truncated = false;          // step cap reached before H_{N-1}
  std::int64_t steps = 0;
};

// Walks from 0 until the first hit of the boundary of [-3(N-1), 3(N-1)]^d,
// checking A_N at every boundary hit. Requires radius >= 3N and N <= 63.
BoundaryWalk walk_boundary_hits(const Environment& env, int N, double alpha, double xi, Engine& eng,
                                std::int64_t step_cap);
FirstTrap first_trap(const BoundaryWalk& walk);

// Bond values making C(x) a trap: weak 0.75 t, strong xi + (1 - xi)/2, others t/2.
std::vector<std::pair<Bond, double>> trap_overrides(const Point& x, int N, double alpha, double xi);
Environment plant_trap(const Environment& env, const Point& x, int N, double alpha, double xi);
// Plants a trap at every point of the inner boundary of [-3k, 3k]^d.
Environment plant_shell(const Environment& env, int k, int N, double alpha, double xi);

}  // namespace rclab
