#pragma once

// Quenched transition operator P(x,y) = w_xy / pi(x) and exact n-step
// distributions by truncated sparse propagation.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rclab/chain.hpp"
#include "rclab/environment.hpp"
#include "rclab/lattice.hpp"

namespace rclab {

inline constexpr double kDefaultTau = 1e-14;

// pi(x) = sum of the 2d incident conductances. Throws StorageError when x is
// on the outermost layer of the window (some bonds are not stored).
double pi(const Environment& env, const Point& x);

// Finitely supported sub-probability vector on window sites, kept sorted by
// site index. Mass dropped by truncation is accumulated in lost_mass_bound.
class SparseDistribution {
 public:
  SparseDistribution() = default;
  explicit SparseDistribution(const Cube& window) : window_(window) {}

  static SparseDistribution delta(const Cube& window, const Point& p);
  // Entries may come in any order; duplicates are summed.
  static SparseDistribution from_entries(const Cube& window, const std::vector<std::pair<Point, double>>& entries,
                                         double lost_mass_bound = 0.0);

  const Cube& window() const noexcept { return window_; }
  std::size_t size() const noexcept { return sites_.size(); }
  bool empty() const noexcept { return sites_.empty(); }
  const std::vector<std::int64_t>& sites() const noexcept { return sites_; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  double lost_mass_bound() const noexcept { return lost_; }

  double at(const Point& p) const;
  double total() const;
  // Mass on [-h, h]^d.
  double mass_in(int half_width) const;
  // Largest |x|_inf over the support (-1 when empty).
  int support_radius() const;

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t i = 0; i < sites_.size(); ++i) fn(window_.point(sites_[i]), masses_[i]);
  }

 private:
  friend class Propagator;

  void recompute_bounds();

  Cube window_;
  std::vector<std::int64_t> sites_;
  std::vector<double> masses_;
  double lost_ = 0.0;
  // Bounding box of the support and its common parity (-1 if mixed).
  std::array<int, kMaxDim> lo_{}, hi_{};
  int parity_ = -1;
};

// Reusable workspace for repeated steps in one environment.
class Propagator {
 public:
  explicit Propagator(const Environment& env, double tau = kDefaultTau, int threads = 1);

  // One exact push-forward followed by truncation below tau. Throws
  // StorageError if the support touches the outermost layer of the window.
  SparseDistribution step(const SparseDistribution& in);

 private:
  template <class Cond>
  void pull(const Cond& cond);

  const Environment& env_;
  double tau_;
  int threads_;
  std::array<int, kMaxDim> lo_{}, dims_{};
  std::array<std::int64_t, kMaxDim> stride_{};
  std::int64_t grid_size_ = 0;
  int source_parity_ = -1;  // -1: mixed parities
  std::vector<double> weight_;
  std::vector<double> target_;
};

SparseDistribution step(const Environment& env, const SparseDistribution& dist, double tau = kDefaultTau,
                        int threads = 1);

// Distribution of X_n from `source`. Requires |source|_inf + n <= radius - 1.
SparseDistribution heat_kernel(const Environment& env, int n, const Point& source, double tau = kDefaultTau,
                               int threads = 1);

// Absolute floating-point allowance for `steps` pushes in dimension d.
double rounding_allowance(std::int64_t steps, int dim);

struct ReturnPoint {
  int n = 0;
  double value = 0;      // P^{2n}(0,0)
  double err_bound = 0;  // truncation mass plus rounding allowance; true value in [value, value + err_bound]
};

struct ReturnSeries {
  int dim = 0;
  std::string law;
  double gamma = 0;  // 0 when the law has no exponent
  std::uint64_t seed = 0;
  double tau = kDefaultTau;
  std::vector<ReturnPoint> points;
};

// Roughly geometric integer grid on [n_min, n_max], strictly increasing.
std::vector<int> geometric_grid(int n_min, int n_max, int count);

// P^{2n}(0,0) for every n in `grid`; empty grid means geometric_grid(1, n_max, 24).
// Requires 2 * n_max <= radius - 1.
ReturnSeries return_series(const Environment& env, int n_max, std::vector<int> grid = {},
                           double tau = kDefaultTau, int threads = 1);

// CSV with header `n,p2n,err_bound` and 17 significant digits.
void write_series_csv(const ReturnSeries& series, std::ostream& os);
ReturnSeries read_series_csv(std::istream& is);

inline constexpr std::size_t kMaxChainStates = 4096;

// Two-step chain P^2 of the modified field restricted to even points of
// [-window_radius, window_radius]^d, with pi = modified pi. Mass that would
// leave the window is held in place, which keeps rows stochastic and the
// chain reversible.
FiniteChain two_step_even_kernel(const ModifiedEnvironment& env, int window_radius);

// Two-step transition probability P^2(x, z) on the unbounded modified field.
double two_step_probability(const ModifiedEnvironment& env, const Point& x, const Point& z);

}  // namespace rclab
