#pragma once

// I.i.d. bond conductance fields on a finite window [-R, R]^d.
//
// The canonical law is the exact power CDF Q(w <= a) = a^gamma on [0, 1],
// sampled as w = U^(1/gamma) with U uniform on (0, 1]. Only the tail exponent
// is prescribed for the model, so constants derived from this law are
// law-dependent; exponents are not.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rclab/lattice.hpp"

namespace rclab {

enum class LawKind : std::uint8_t {
  PolyTail = 0,  // w_b = U^(1/gamma)
  SiteMin = 1,   // w_xy = w(x) ^ w(y), site values U^(1/gamma)
  Constant = 2,  // w_b = c
  Explicit = 3,  // values set by hand (planted fixtures, loaded overrides)
};

struct ConductanceLaw {
  LawKind kind = LawKind::Constant;
  double param = 1.0;  // gamma, or the constant c

  static ConductanceLaw poly_tail(double gamma);
  static ConductanceLaw site_min(double gamma);
  static ConductanceLaw constant(double c);

  bool has_gamma() const { return kind == LawKind::PolyTail || kind == LawKind::SiteMin; }
  // Marginal CDF of a single bond, P(w_b <= a).
  double bond_cdf(double a) const;
  std::string name() const;
  std::string describe() const;
};

// Parses "poly", "sitemin", "constant" (case-insensitive).
LawKind parse_law_kind(const std::string& s);

inline constexpr std::uint64_t kDefaultMemoryBudget = std::uint64_t{4} << 30;

class Environment {
 public:
  Environment() = default;

  // Throws UsageError on bad parameters and StorageError when the bond array
  // would exceed `memory_budget` bytes.
  static Environment sample(int dim, int radius, const ConductanceLaw& law, std::uint64_t seed,
                            int threads = 1, std::uint64_t memory_budget = kDefaultMemoryBudget);

  int dim() const noexcept { return window_.dim(); }
  int radius() const noexcept { return window_.radius(); }
  const Cube& window() const noexcept { return window_; }
  const ConductanceLaw& law() const noexcept { return law_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Bonds with both endpoints in the window.
  std::int64_t bond_count() const;
  bool has_bond(const Bond& b) const { return window_.contains_bond(b); }

  // Throws StorageError for bonds outside the window.
  double conductance(const Bond& b) const;
  double conductance(const Point& a, const Point& b) const { return conductance(Bond(a, b)); }

  // Unchecked read of the bond (site, site + e_axis) by window index.
  double slot(std::int64_t site, int axis) const noexcept {
    return values_ ? (*values_)[static_cast<std::size_t>(site * dim() + axis)] : constant_;
  }

  bool is_uniform() const noexcept { return !values_; }
  // Dense slot array (site * d + axis), or nullptr for uniform fields.
  const double* raw_values() const noexcept { return values_ ? values_->data() : nullptr; }
  double uniform_value() const noexcept { return constant_; }

  // Visits stored bonds in canonical order: lexicographic site, then axis.
  template <class Fn>
  void for_each_bond(Fn&& fn) const {
    const int d = dim();
    for (std::int64_t s = 0; s < window_.site_count(); ++s) {
      const Point p = window_.point(s);
      for (int a = 0; a < d; ++a) {
        if (p[a] == window_.radius()) continue;
        fn(Bond::along(p, a), slot(s, a));
      }
    }
  }

  // Copy with some bonds replaced. The result's law becomes Explicit and keeps
  // the base parameter for reference.
  Environment with_overrides(std::span<const std::pair<Bond, double>> overrides) const;

  bool operator==(const Environment& o) const;

 private:
  friend Environment deserialize_environment(const std::string& bytes);

  Cube window_;
  ConductanceLaw law_;
  std::uint64_t seed_ = 0;
  double constant_ = 1.0;
  // Dense slots site * d + axis; slots of bonds leaving the window are unused.
  std::shared_ptr<const std::vector<double>> values_;
};

// Value of the field at bond (lo, lo + e_axis) for the given law and seed,
// independent of any window.
double sample_bond(const ConductanceLaw& law, std::uint64_t seed, const Point& lo, int axis);

inline constexpr std::uint16_t kEnvFormatVersion = 1;

void save_environment(const Environment& env, const std::string& path);
Environment load_environment(const std::string& path);

// Serialized bytes (what save_environment writes).
std::string serialize_environment(const Environment& env);
Environment deserialize_environment(const std::string& bytes);

// The field reset to 1 on every bond not inside [-(N+1), N+1]^d. Defined on
// all of Z^d.
class ModifiedEnvironment {
 public:
  ModifiedEnvironment(Environment base, int N);

  const Environment& base() const noexcept { return base_; }
  int scale() const noexcept { return N_; }
  int dim() const noexcept { return base_.dim(); }
  const Cube& protected_cube() const noexcept { return protected_; }

  double conductance(const Bond& b) const;
  double conductance(const Point& a, const Point& b) const { return conductance(Bond(a, b)); }
  // Sum of the 2d incident modified conductances.
  double pi(const Point& x) const;

 private:
  Environment base_;
  int N_;
  Cube protected_;
};

// Throws StorageError if [-(N+1), N+1]^d does not fit in the window.
ModifiedEnvironment modify(const Environment& env, int N);
// Modifying again keeps the smaller protected box; with equal N reads are identical.
ModifiedEnvironment modify(const ModifiedEnvironment& env, int N);

// Minimum conductance over bonds with both endpoints in [-h, h]^d.
double min_conductance(const Environment& env, int half_width);

// log(min over bonds of [-N, N]^d) / log N. Requires N >= 2.
double min_conductance_statistic(const Environment& env, int N);

}  // namespace rclab
