#pragma once

// Exponent fits of return-probability series and their comparison with the
// decay windows, plus two experiment drivers: the annealed average and the
// replay of the trap lower-bound chain on exact kernels.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rclab/environment.hpp"
#include "rclab/kernel.hpp"

namespace rclab {

struct DecayFit {
  double slope = 0;
  double intercept = 0;
  double ci_low = 0;  // bootstrap percentile interval, 95%
  double ci_high = 0;
  double residual_rms = 0;
  int n_min = 0;
  int n_max = 0;
  std::size_t points = 0;
};

// Least squares of log p2n against log n over n in [n_min, n_max]. Throws
// UsageError with fewer than 4 points or a value not above its error bound.
DecayFit fit_exponent(const ReturnSeries& series, int n_min, int n_max, int bootstrap = 2000,
                      std::uint64_t seed = 1);
nlohmann::ordered_json fit_to_json(const DecayFit& fit);

// Exact value of a formula together with its rational form.
struct ExactValue {
  std::string exact;  // "p/q" or an integer
  double value = 0;
};

// A positive decimal parameter as an exact rational, from its shortest
// round-trip decimal form.
std::string decimal_rational(double v);

struct BoundsReport {
  int d = 0;
  double gamma = 0;
  double eps = 0;
  double mu = 0;
  ExactValue window_lower;       // -2 (1 + d (2d - 1) gamma)
  ExactValue window_upper;       // -2
  ExactValue trans_bound;        // -d/2 for d = 2, 3; -2 for d >= 4
  std::string trans_form;        // "n^-d/2", "n^-2 log n" or "n^-2"
  ExactValue standard_target;    // -d/2 + 4 d^2 / gamma
  ExactValue delta_standard;     // 4 d^2 / gamma
  ExactValue delta_anomalous;    // d (4d - 2) gamma / (1 - eps)
  ExactValue mu_corrected;       // -(d/2 - 4 d^2/gamma - 4 mu d)
  ExactValue d5_target;          // -5/2 + 100/gamma, the d = 5 standard target
  bool standard_regime = false;  // gamma > 8d and mu < 1/8 - d/gamma
  std::optional<DecayFit> fit;
  std::string window_verdict;    // below / inside / above
  std::string trans_verdict;     // below / consistent / above
  std::string standard_verdict;  // below / consistent / above
  std::vector<std::string> notes;
};

BoundsReport bounds_report(const std::optional<DecayFit>& fit, int d, double gamma, double eps, double mu);
nlohmann::ordered_json bounds_to_json(const BoundsReport& report);

// Interval [lo, hi] against a window [a, b]: below, inside or above.
std::string window_verdict(double lo, double hi, double a, double b);

struct AnnealedPoint {
  int n = 0;
  double mean = 0;
  double sd = 0;
  double ci_low = 0;
  double ci_high = 0;
  double median = 0;
  double max_err_bound = 0;
};

struct AnnealedSeries {
  int d = 0;
  std::string law;
  std::int64_t replicas = 0;
  std::uint64_t seed = 0;
  std::vector<AnnealedPoint> points;
};

// Environment average of P^{2n}(0,0) over independent environments.
AnnealedSeries annealed_return(int d, const ConductanceLaw& law, const std::vector<int>& grid,
                               std::int64_t replicas, std::uint64_t seed, double tau = kDefaultTau,
                               int threads = 1);
nlohmann::ordered_json annealed_to_json(const AnnealedSeries& series);
// Mean values as a ReturnSeries, for fitting.
ReturnSeries annealed_as_series(const AnnealedSeries& series);

struct PipelineParams {
  int d = 2;
  double gamma = 0.05;
  double xi = 0.5;
  double eps = 0.5;
  int N = 8;
  std::uint64_t seed = 1;
  std::optional<int> plant_shell;     // plant a trap at every point of this boundary shell
  std::int64_t branch_replicas = 0;   // walks for the Monte Carlo branch estimate
  std::int64_t step_cap = 1000000;
  double tau = kDefaultTau;
  int threads = 1;
};

struct PipelineReport {
  PipelineParams params;
  double alpha = 0;
  int n = 0;  // floor(N^alpha)
  double delta = 0;
  double q_N = 0;
  double no_trap_probability = 0;  // (1 - q_N)^N
  int radius = 0;
  int planted_total = 0;
  int planted_valid = 0;

  // Cauchy-Schwarz step on exact kernels.
  int box_half_width = 0;  // floor(3 n^(1/alpha))
  double p2n = 0;
  double p2n_err = 0;
  double pi0 = 0;
  double mass_in_box = 0;
  double pi_box = 0;
  std::int64_t box_points = 0;
  double rhs_pi = 0;     // pi(0) mass^2 / pi(B)
  double rhs_count = 0;  // pi(0) mass^2 / (2d #B)
  bool cauchy_schwarz_ok = false;

  // First trap along one walk.
  std::optional<int> rank;
  Point trap_site;
  bool walk_truncated = false;
  double crossing = 0;
  double crossing_floor = 0;  // 1 / (4 d N^alpha)
  double sojourn = 0;
  double sojourn_floor = 0;   // (xi / (xi + (2d - 1) N^-alpha))^n
  double sojourn_limit = 0;   // e^(-(2d - 1)/xi) / 2
  int crossing_violations = 0;
  int sojourn_violations = 0;
  int traps_checked = 0;

  // Replay of the branch: P_0(X_n in B_N) >= E[1{D_N <= N-1} crossing sojourn].
  double box_mass_N = 0;
  bool branch_evaluated = false;
  double branch_estimate = 0;
  double branch_se = 0;
  bool branch_exact = false;
  bool branch_ok = true;

  double final_bound = 0;  // pi(0) (e^(-(2d-1)/xi) / 16d)^2 7^-d / n^(2 + delta)
  std::vector<std::string> notes;

  int violations() const {
    return (cauchy_schwarz_ok ? 0 : 1) + crossing_violations + sojourn_violations + (branch_ok ? 0 : 1);
  }
};

PipelineReport anomalous_pipeline(const PipelineParams& params);
nlohmann::ordered_json pipeline_to_json(const PipelineReport& report);

}  // namespace rclab
