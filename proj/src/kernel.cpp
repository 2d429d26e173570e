#include "rclab/kernel.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/parallel.hpp"

namespace rclab {

double pi(const Environment& env, const Point& x) {
  if (x.dim() != env.dim()) throw UsageError("point dimension does not match the environment");
  if (x.linf() >= env.radius()) {
    throw StorageError("pi(" + x.str() + ") needs bonds outside the stored window of radius " +
                       std::to_string(env.radius()));
  }
  const Cube& w = env.window();
  const std::int64_t s = w.index(x);
  double sum = 0;
  for (int a = 0; a < env.dim(); ++a) sum += env.slot(s, a) + env.slot(s - w.stride(a), a);
  return sum;
}

// ---------------------------------------------------------------------------

namespace {

int mod2(int v) { return ((v % 2) + 2) % 2; }

}  // namespace

SparseDistribution SparseDistribution::delta(const Cube& window, const Point& p) {
  if (!window.contains(p)) throw StorageError("point " + p.str() + " outside window");
  SparseDistribution d(window);
  d.sites_.push_back(window.index(p));
  d.masses_.push_back(1.0);
  d.recompute_bounds();
  return d;
}

SparseDistribution SparseDistribution::from_entries(const Cube& window,
                                                    const std::vector<std::pair<Point, double>>& entries,
                                                    double lost_mass_bound) {
  std::map<std::int64_t, double> acc;
  for (const auto& [p, m] : entries) {
    if (!window.contains(p)) throw StorageError("point " + p.str() + " outside window");
    if (!(m >= 0)) throw UsageError("masses must be nonnegative");
    acc[window.index(p)] += m;
  }
  SparseDistribution d(window);
  for (const auto& [s, m] : acc) {
    if (m == 0) continue;
    d.sites_.push_back(s);
    d.masses_.push_back(m);
  }
  d.lost_ = lost_mass_bound;
  d.recompute_bounds();
  return d;
}

void SparseDistribution::recompute_bounds() {
  const int dim = window_.dim();
  lo_.fill(0);
  hi_.fill(0);
  parity_ = -1;
  bool first = true;
  bool mixed = false;
  for (std::int64_t s : sites_) {
    const Point p = window_.point(s);
    int sum = 0;
    for (int i = 0; i < dim; ++i) {
      sum += p[i];
      if (first) {
        lo_[static_cast<std::size_t>(i)] = hi_[static_cast<std::size_t>(i)] = p[i];
      } else {
        lo_[static_cast<std::size_t>(i)] = std::min(lo_[static_cast<std::size_t>(i)], p[i]);
        hi_[static_cast<std::size_t>(i)] = std::max(hi_[static_cast<std::size_t>(i)], p[i]);
      }
    }
    if (first) {
      parity_ = mod2(sum);
    } else if (mod2(sum) != parity_) {
      mixed = true;
    }
    first = false;
  }
  if (mixed) parity_ = -1;
}

double SparseDistribution::at(const Point& p) const {
  if (!window_.contains(p)) return 0.0;
  const auto it = std::lower_bound(sites_.begin(), sites_.end(), window_.index(p));
  if (it == sites_.end() || *it != window_.index(p)) return 0.0;
  return masses_[static_cast<std::size_t>(it - sites_.begin())];
}

double SparseDistribution::total() const {
  double s = 0;
  for (double m : masses_) s += m;
  return s;
}

double SparseDistribution::mass_in(int half_width) const {
  double s = 0;
  for_each([&](const Point& p, double m) {
    if (p.linf() <= half_width) s += m;
  });
  return s;
}

int SparseDistribution::support_radius() const {
  if (sites_.empty()) return -1;
  int r = 0;
  for (int i = 0; i < window_.dim(); ++i)
    r = std::max({r, std::abs(lo_[static_cast<std::size_t>(i)]), std::abs(hi_[static_cast<std::size_t>(i)])});
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct UniformCond {
  double c;
  double operator()(std::int64_t, int) const noexcept { return c; }
};

struct DenseCond {
  const double* v;
  int d;
  double operator()(std::int64_t site, int axis) const noexcept { return v[site * d + axis]; }
};

}  // namespace

Propagator::Propagator(const Environment& env, double tau, int threads)
    : env_(env), tau_(tau), threads_(std::max(1, threads)) {
  if (!(tau >= 0)) throw UsageError("truncation threshold must be nonnegative");
}

template <class Cond>
void Propagator::pull(const Cond& cond) {
  const int d = env_.dim();
  const int R = env_.radius();
  const Cube& w = env_.window();
  const int last = d - 1;
  std::int64_t rows = 1;
  for (int i = 0; i < last; ++i) rows *= dims_[static_cast<std::size_t>(i)] - 2;
  const int inner = dims_[static_cast<std::size_t>(last)] - 2;
  const int target_parity = source_parity_ < 0 ? -1 : 1 - source_parity_;

  parallel_for(rows, threads_, [&](std::int64_t rb, std::int64_t re) {
    std::array<int, kMaxDim> c{};
    for (std::int64_t r = rb; r < re; ++r) {
      std::int64_t rem = r;
      std::int64_t base = 0;
      std::int64_t gbase = 0;
      int outer_sum = 0;
      for (int i = last - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        const int span = dims_[ui] - 2;
        c[ui] = static_cast<int>(rem % span) + 1;
        rem /= span;
      }
      for (int i = 0; i < last; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int x = lo_[ui] + c[ui];
        base += c[ui] * stride_[ui];
        gbase += (x + R) * w.stride(i);
        outer_sum += x;
      }
      const int lo_last = lo_[static_cast<std::size_t>(last)];
      int start = 1;
      int inc = 1;
      if (target_parity >= 0) {
        inc = 2;
        if (mod2(outer_sum + lo_last + start) != target_parity) ++start;
      }
      for (int k = start; k <= inner; k += inc) {
        const std::int64_t t = base + k;
        const std::int64_t g = gbase + (lo_last + k + R);
        double acc = 0;
        for (int a = 0; a < d; ++a) {
          const std::int64_t st = stride_[static_cast<std::size_t>(a)];
          const std::int64_t gs = w.stride(a);
          const double wm = weight_[static_cast<std::size_t>(t - st)];
          if (wm != 0) acc += wm * cond(g - gs, a);
          const double wp = weight_[static_cast<std::size_t>(t + st)];
          if (wp != 0) acc += wp * cond(g, a);
        }
        target_[static_cast<std::size_t>(t)] = acc;
      }
    }
  });
}

SparseDistribution Propagator::step(const SparseDistribution& in) {
  const Cube& w = env_.window();
  if (!(in.window().dim() == w.dim() && in.window().radius() == w.radius())) {
    throw UsageError("distribution window does not match the environment");
  }
  SparseDistribution out(w);
  out.lost_ = in.lost_;
  if (in.empty()) return out;

  const int d = w.dim();
  const int R = w.radius();
  for (int i = 0; i < d; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (in.lo_[ui] - 1 < -R || in.hi_[ui] + 1 > R) {
      throw StorageError("support reaches the edge of the stored window (radius " + std::to_string(R) +
                         "); enlarge the environment");
    }
  }

  grid_size_ = 1;
  for (int i = d - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    lo_[ui] = in.lo_[ui] - 2;
    dims_[ui] = in.hi_[ui] - in.lo_[ui] + 5;
    stride_[ui] = grid_size_;
    grid_size_ *= dims_[ui];
  }
  source_parity_ = in.parity_;
  weight_.assign(static_cast<std::size_t>(grid_size_), 0.0);
  target_.assign(static_cast<std::size_t>(grid_size_), 0.0);

  for (std::size_t e = 0; e < in.sites_.size(); ++e) {
    std::int64_t g = in.sites_[e];
    std::int64_t local = 0;
    double pi_s = 0;
    for (int i = 0; i < d; ++i) {
      const std::int64_t gi = w.stride(i);
      const int x = static_cast<int>(g / gi) - R;
      g %= gi;
      local += (x - lo_[static_cast<std::size_t>(i)]) * stride_[static_cast<std::size_t>(i)];
    }
    const std::int64_t s = in.sites_[e];
    for (int a = 0; a < d; ++a) pi_s += env_.slot(s, a) + env_.slot(s - w.stride(a), a);
    weight_[static_cast<std::size_t>(local)] = in.masses_[e] / pi_s;
  }

  if (const double* raw = env_.raw_values()) {
    pull(DenseCond{raw, d});
  } else {
    pull(UniformCond{env_.uniform_value()});
  }

  // Gather in lexicographic order; this fixes the summation order of the lost mass.
  const int last = d - 1;
  std::int64_t rows = 1;
  for (int i = 0; i < last; ++i) rows *= dims_[static_cast<std::size_t>(i)] - 2;
  const int inner = dims_[static_cast<std::size_t>(last)] - 2;
  double lost = 0;
  bool first = true;
  std::array<int, kMaxDim> c{};
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t rem = r;
    for (int i = last - 1; i >= 0; --i) {
      const auto ui = static_cast<std::size_t>(i);
      const int span = dims_[ui] - 2;
      c[ui] = static_cast<int>(rem % span) + 1;
      rem /= span;
    }
    std::int64_t base = 0;
    std::int64_t gbase = 0;
    for (int i = 0; i < last; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      base += c[ui] * stride_[ui];
      gbase += (lo_[ui] + c[ui] + R) * w.stride(i);
    }
    for (int k = 1; k <= inner; ++k) {
      const double v = target_[static_cast<std::size_t>(base + k)];
      if (v == 0) continue;
      if (v < tau_) {
        lost += v;
        continue;
      }
      c[static_cast<std::size_t>(last)] = k;
      out.sites_.push_back(gbase + lo_[static_cast<std::size_t>(last)] + k + R);
      out.masses_.push_back(v);
      for (int i = 0; i < d; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int x = lo_[ui] + c[ui];
        if (first) {
          out.lo_[ui] = out.hi_[ui] = x;
        } else {
          out.lo_[ui] = std::min(out.lo_[ui], x);
          out.hi_[ui] = std::max(out.hi_[ui], x);
        }
      }
      first = false;
    }
  }
  out.lost_ += lost;
  if (in.parity_ >= 0) {
    out.parity_ = out.sites_.empty() ? -1 : 1 - in.parity_;
  } else {
    out.recompute_bounds();
  }
  return out;
}

SparseDistribution step(const Environment& env, const SparseDistribution& dist, double tau, int threads) {
  Propagator prop(env, tau, threads);
  return prop.step(dist);
}

SparseDistribution heat_kernel(const Environment& env, int n, const Point& source, double tau, int threads) {
  if (n < 0) throw UsageError("number of steps must be nonnegative");
  if (source.dim() != env.dim()) throw UsageError("source dimension does not match the environment");
  if (source.linf() + n > env.radius() - 1) {
    throw StorageError(std::to_string(n) + " steps from " + source.str() + " need a window of radius at least " +
                       std::to_string(source.linf() + n + 1) + ", stored radius is " +
                       std::to_string(env.radius()));
  }
  SparseDistribution dist = SparseDistribution::delta(env.window(), source);
  Propagator prop(env, tau, threads);
  for (int k = 0; k < n; ++k) dist = prop.step(dist);
  return dist;
}

double rounding_allowance(std::int64_t steps, int dim) {
  return static_cast<double>(steps) * (4.0 * dim + 2.0) * DBL_EPSILON;
}

std::vector<int> geometric_grid(int n_min, int n_max, int count) {
  if (n_min < 1 || n_max < n_min || count < 1) throw UsageError("invalid geometric grid bounds");
  std::vector<int> out;
  if (count == 1 || n_min == n_max) {
    out.push_back(n_max);
    return out;
  }
  const double ratio = static_cast<double>(n_max) / n_min;
  for (int k = 0; k < count; ++k) {
    const int v = static_cast<int>(std::lround(n_min * std::pow(ratio, static_cast<double>(k) / (count - 1))));
    if (out.empty() || v > out.back()) out.push_back(std::min(v, n_max));
  }
  if (out.back() != n_max) out.push_back(n_max);
  return out;
}

ReturnSeries return_series(const Environment& env, int n_max, std::vector<int> grid, double tau, int threads) {
  if (n_max < 1) throw UsageError("n_max must be at least 1");
  if (2 * static_cast<std::int64_t>(n_max) > env.radius() - 1) {
    throw StorageError("return series up to n=" + std::to_string(n_max) + " needs radius at least " +
                       std::to_string(2 * n_max + 1) + ", stored radius is " + std::to_string(env.radius()));
  }
  if (grid.empty()) grid = geometric_grid(1, n_max, 24);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0 || grid[i] > n_max || (i > 0 && grid[i] <= grid[i - 1])) {
      throw UsageError("return-series grid must be strictly increasing within [0, n_max]");
    }
  }
  ReturnSeries series;
  series.dim = env.dim();
  series.law = env.law().name();
  series.gamma = env.law().has_gamma() ? env.law().param : 0.0;
  series.seed = env.seed();
  series.tau = tau;

  const Point origin = Point::origin(env.dim());
  SparseDistribution dist = SparseDistribution::delta(env.window(), origin);
  Propagator prop(env, tau, threads);
  std::size_t next = 0;
  for (int k = 0; next < grid.size(); ++k) {
    if (k == 2 * grid[next]) {
      series.points.push_back({grid[next], dist.at(origin), dist.lost_mass_bound() + rounding_allowance(k, env.dim())});
      ++next;
      if (next == grid.size()) break;
    }
    dist = prop.step(dist);
  }
  return series;
}

void write_series_csv(const ReturnSeries& series, std::ostream& os) {
  os << "n,p2n,err_bound\n";
  for (const auto& p : series.points) os << p.n << ',' << format_double(p.value) << ',' << format_double(p.err_bound) << '\n';
}

ReturnSeries read_series_csv(std::istream& is) {
  ReturnSeries series;
  std::string line;
  do {
    if (!std::getline(is, line)) throw FormatError("empty series file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  } while (!line.empty() && line.front() == '#');  // provenance comments
  if (line != "n,p2n,err_bound") throw FormatError("series CSV must start with header n,p2n,err_bound");
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw FormatError("malformed series row: " + line);
    }
    try {
      series.points.push_back({std::stoi(a), std::stod(b), std::stod(c)});
    } catch (const std::exception&) {
      throw FormatError("malformed series row: " + line);
    }
  }
  return series;
}

// ---------------------------------------------------------------------------

double two_step_probability(const ModifiedEnvironment& env, const Point& x, const Point& z) {
  const int d = env.dim();
  const double pix = env.pi(x);
  double total = 0;
  for (int a = 0; a < d; ++a) {
    for (int s : {-1, 1}) {
      const Point y = x.shifted(a, s);
      if (l1_distance(y, z) != 1) continue;
      total += env.conductance(x, y) / pix * env.conductance(y, z) / env.pi(y);
    }
  }
  return total;
}

FiniteChain two_step_even_kernel(const ModifiedEnvironment& env, int window_radius) {
  const int d = env.dim();
  const Cube window(d, window_radius);
  std::vector<Point> states;
  std::unordered_map<std::int64_t, int> index;
  const std::int64_t even_count = (window.site_count() + 1) / 2;
  if (static_cast<std::uint64_t>(even_count) > kMaxChainStates) {
    throw StorageError("two-step chain on a window of radius " + std::to_string(window_radius) + " has " +
                       std::to_string(even_count) + " states, limit is " + std::to_string(kMaxChainStates));
  }
  for (std::int64_t i = 0; i < window.site_count(); ++i) {
    const Point p = window.point(i);
    if (!p.is_even()) continue;
    index.emplace(i, static_cast<int>(states.size()));
    states.push_back(p);
  }
  const std::size_t n = states.size();
  std::vector<double> P(n * n, 0.0);
  std::vector<double> measure(n);
  for (std::size_t sx = 0; sx < n; ++sx) {
    const Point& x = states[sx];
    const double pix = env.pi(x);
    measure[sx] = pix;
    for (int a = 0; a < d; ++a)
      for (int s : {-1, 1}) {
        const Point y = x.shifted(a, s);
        const double p1 = env.conductance(x, y) / pix;
        const double piy = env.pi(y);
        for (int b = 0; b < d; ++b)
          for (int t : {-1, 1}) {
            const Point z = y.shifted(b, t);
            const double p2 = p1 * env.conductance(y, z) / piy;
            std::size_t col = sx;
            if (window.contains(z)) col = static_cast<std::size_t>(index.at(window.index(z)));
            P[sx * n + col] += p2;
          }
      }
  }
  return FiniteChain(std::move(P), std::move(measure), std::move(states));
}

}  // namespace rclab
