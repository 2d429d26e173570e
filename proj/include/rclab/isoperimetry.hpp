#pragma once

// Boundary ratios, the isoperimetric profile of a finite chain, the
// Morris-Peres time threshold, and surface/volume bounds for the two-step
// chain on the even sublattice.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rclab/chain.hpp"
#include "rclab/environment.hpp"

namespace rclab {

using StateSet = std::vector<int>;

// Q(S1, S2) = sum over x in S1, y in S2 of pi(x) P(x, y).
double edge_measure(const FiniteChain& chain, const StateSet& s1, const StateSet& s2);
double set_measure(const FiniteChain& chain, const StateSet& s);
// Q(S, S^c) / pi(S). Throws UsageError for an empty set; the full set gives 0.
double phi_S(const FiniteChain& chain, const StateSet& s);
bool is_connected(const FiniteChain& chain, const StateSet& s);

inline constexpr std::size_t kDefaultStateBudget = 20;
inline constexpr std::uint64_t kMaxSubsets = std::uint64_t{1} << 20;

// Phi(r) = inf { Phi_S : S connected, pi(S) <= min(r, pi(V)/2) }, a
// nonincreasing step function. Phi(r) = +inf below the smallest state measure.
struct IsoProfile {
  struct Breakpoint {
    double r = 0;    // Phi is constant on [r, next r)
    double phi = 0;
    StateSet minimizer;
  };
  std::vector<Breakpoint> breakpoints;  // r increasing, phi strictly decreasing
  double cap = 0;                       // pi(V) / 2
  bool certified = true;                // false for the sampled mode
  std::uint64_t subsets_examined = 0;

  double at(double r) const;
  // Index of the breakpoint in force at r, or nullopt when Phi(r) = +inf.
  std::optional<std::size_t> piece(double r) const;
};

// Exhaustive over connected subsets. Throws StorageError above `state_budget`
// states or kMaxSubsets connected subsets; the sampled mode is the fallback.
IsoProfile iso_profile(const FiniteChain& chain, std::size_t state_budget = kDefaultStateBudget);

// Randomized connected-subset search; every value is an upper bound on the
// true profile, so the result is not certified.
IsoProfile iso_profile_sampled(const FiniteChain& chain, std::uint64_t samples, std::uint64_t seed);


// Integral of 4 / (u Phi(u)^2) over [lo, hi], exact on the step function.
double mp_integral(const IsoProfile& profile, double lo, double hi);

// Smallest n >= 1 + ((1 - sigma)^2 / sigma^2) * integral over
// [4 min(pi(x), pi(y)), 4/eps]. Throws UsageError unless 0 < sigma <= 1/2,
// every P(z, z) >= sigma, and eps > 0.
std::int64_t mp_threshold(const FiniteChain& chain, const IsoProfile& profile, double sigma, double eps,
                          std::size_t x, std::size_t y);
std::int64_t mp_threshold(const FiniteChain& chain, double sigma, double eps, std::size_t x, std::size_t y);

struct MpCheck {
  std::size_t x = 0;
  std::size_t y = 0;
  std::int64_t n = 0;
  double p = 0;       // P^n(x, y)
  double bound = 0;   // eps pi(y)
  double margin = 0;  // bound - p
  bool holds = true;
};

struct MpReport {
  double eps = 0;
  double sigma = 0;           // used in the threshold: min(min_x P(x,x), 1/2)
  double total_measure = 0;
  bool informative = false;   // eps pi(V) > 1
  std::vector<MpCheck> checks;
  int violations = 0;
};

// Empty `pairs` means all ordered pairs.
MpReport verify_mp(const FiniteChain& chain, double eps,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs = {});

nlohmann::ordered_json profile_to_json(const IsoProfile& profile);
// Header `r,phi,minimizer_size`, one row per breakpoint.
void write_profile_csv(const IsoProfile& profile, std::ostream& os);
nlohmann::ordered_json mp_report_to_json(const MpReport& report);

// alpha(N) = N^-(d/gamma + mu)
double lower_conductance_level(int d, double gamma, double mu, double N);

struct SurfaceVolumeReport {
  double alpha = 0;
  double min_conductance = 0;     // over bonds of [-(N+1), N+1]^d
  bool precondition = false;      // min_conductance >= alpha
  double q_out = 0;               // Q(Lambda, Z^d_e \ Lambda) of the two-step chain
  double pi_lambda = 0;
  std::int64_t boundary_pairs = 0;  // even-lattice edges leaving Lambda
  std::int64_t size = 0;
  double surface_bound = 0;         // alpha^2 / (2d) |boundary|
  double volume_bound = 0;          // 2d |Lambda|
  bool surface_ok = false;
  bool volume_ok = false;
};

// Lambda must be a nonempty set of even points connected in the even
// lattice; throws UsageError otherwise.
SurfaceVolumeReport surface_volume_check(const ModifiedEnvironment& env, double alpha,
                                         const std::vector<Point>& lambda);

// Edges of Z^d between Lambda and its complement.
std::int64_t lattice_boundary_edges(const std::vector<Point>& lambda);

struct IsoConstant {
  double kappa = std::numeric_limits<double>::infinity();
  std::size_t argmin = 0;
  std::vector<double> ratios;
};

// min over shapes of |boundary| / |Lambda|^((d-1)/d).
IsoConstant iso_constant_check(int d, const std::vector<std::vector<Point>>& shapes);

// Lazy chains: P(x,x) = 1/2 and pi(x)P(x,y) = c_xy / 2 for symmetric weights c.
FiniteChain two_state_lazy();
// k-cycle with unit weights: P(x, x+-1) = 1/4, pi = 1.
FiniteChain lazy_cycle(int k);
// Ring plus random chords with weights in (0, 1]; pi(x) = sum_y c_xy.
FiniteChain random_lazy_chain(int k, std::uint64_t seed, double chord_probability = 0.3);

// Shape families.
std::vector<Point> box_shape(int d, const std::vector<int>& sides);

// Random connected set of even points grown from `root` by adding even
// neighbors, all within [-window, window]^d.
std::vector<Point> random_even_cluster(const Point& root, std::size_t size, int window, std::uint64_t seed);

}  // namespace rclab
