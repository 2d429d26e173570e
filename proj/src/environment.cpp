#include "rclab/environment.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "rclab/error.hpp"
#include "rclab/io.hpp"
#include "rclab/parallel.hpp"
#include "rclab/rng.hpp"

namespace rclab {

ConductanceLaw ConductanceLaw::poly_tail(double gamma) {
  if (!(gamma > 0) || !std::isfinite(gamma)) throw UsageError("gamma must be positive and finite");
  return {LawKind::PolyTail, gamma};
}

ConductanceLaw ConductanceLaw::site_min(double gamma) {
  if (!(gamma > 0) || !std::isfinite(gamma)) throw UsageError("gamma must be positive and finite");
  return {LawKind::SiteMin, gamma};
}

ConductanceLaw ConductanceLaw::constant(double c) {
  if (!(c > 0 && c <= 1)) throw UsageError("constant conductance must lie in (0, 1]");
  return {LawKind::Constant, c};
}

double ConductanceLaw::bond_cdf(double a) const {
  if (a <= 0) return 0.0;
  if (a >= 1) return 1.0;
  switch (kind) {
    case LawKind::PolyTail:
      return std::pow(a, param);
    case LawKind::SiteMin: {
      const double s = 1.0 - std::pow(a, param);
      return 1.0 - s * s;
    }
    case LawKind::Constant:
      return a >= param ? 1.0 : 0.0;
    case LawKind::Explicit:
      break;
  }
  throw UsageError("explicit environments have no marginal law");
}

std::string ConductanceLaw::name() const {
  switch (kind) {
    case LawKind::PolyTail: return "poly";
    case LawKind::SiteMin: return "sitemin";
    case LawKind::Constant: return "constant";
    case LawKind::Explicit: return "explicit";
  }
  return "unknown";
}

std::string ConductanceLaw::describe() const {
  std::ostringstream os;
  switch (kind) {
    case LawKind::PolyTail: os << "PolyTail(gamma=" << param << ", exact power CDF a^gamma)"; break;
    case LawKind::SiteMin: os << "SiteMin(gamma=" << param << ", site law a^gamma, bond = min)"; break;
    case LawKind::Constant: os << "Constant(" << param << ")"; break;
    case LawKind::Explicit: os << "Explicit(base param " << param << ")"; break;
  }
  return os.str();
}

LawKind parse_law_kind(const std::string& s) {
  std::string k;
  for (char ch : s) k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (k == "poly" || k == "polytail") return LawKind::PolyTail;
  if (k == "sitemin") return LawKind::SiteMin;
  if (k == "constant") return LawKind::Constant;
  throw UsageError("unknown law '" + s + "' (expected poly, sitemin or constant)");
}

namespace {

// U^(1/gamma), kept strictly positive when the power underflows.
double power_draw(std::uint64_t bits, double gamma) {
  return std::max(std::pow(unit_open_closed(bits), 1.0 / gamma), std::numeric_limits<double>::denorm_min());
}

}  // namespace

double sample_bond(const ConductanceLaw& law, std::uint64_t seed, const Point& lo, int axis) {
  switch (law.kind) {
    case LawKind::PolyTail:
      return power_draw(bond_key(seed, lo, axis), law.param);
    case LawKind::SiteMin:
      return std::min(power_draw(site_key(seed, lo), law.param),
                      power_draw(site_key(seed, lo.shifted(axis, 1)), law.param));
    case LawKind::Constant:
      return law.param;
    case LawKind::Explicit:
      break;
  }
  throw UsageError("explicit laws cannot be sampled");
}

Environment Environment::sample(int dim, int radius, const ConductanceLaw& law, std::uint64_t seed,
                                int threads, std::uint64_t memory_budget) {
  if (radius < 1) throw UsageError("environment radius must be at least 1");
  switch (law.kind) {
    case LawKind::PolyTail: (void)ConductanceLaw::poly_tail(law.param); break;
    case LawKind::SiteMin: (void)ConductanceLaw::site_min(law.param); break;
    case LawKind::Constant: (void)ConductanceLaw::constant(law.param); break;
    case LawKind::Explicit: throw UsageError("explicit laws cannot be sampled");
  }
  Environment env;
  env.window_ = Cube(dim, radius);
  env.law_ = law;
  env.seed_ = seed;
  if (law.kind == LawKind::Constant) {
    env.constant_ = law.param;
    return env;
  }
  const auto sites = static_cast<std::uint64_t>(env.window_.site_count());
  const std::uint64_t slots = sites * static_cast<std::uint64_t>(dim);
  if (slots > memory_budget / sizeof(double)) {
    throw StorageError("environment needs " + std::to_string(slots * sizeof(double)) +
                       " bytes for its bond array, budget is " + std::to_string(memory_budget));
  }
  auto values = std::make_shared<std::vector<double>>(static_cast<std::size_t>(slots), 0.0);
  const Cube& w = env.window_;
  parallel_for(w.site_count(), threads, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t s = b; s < e; ++s) {
      const Point p = w.point(s);
      for (int a = 0; a < dim; ++a) {
        if (p[a] == radius) continue;
        (*values)[static_cast<std::size_t>(s * dim + a)] = sample_bond(law, seed, p, a);
      }
    }
  });
  env.values_ = std::move(values);
  return env;
}

std::int64_t Environment::bond_count() const {
  const std::int64_t side = window_.side();
  std::int64_t per_axis = side - 1;
  for (int i = 1; i < dim(); ++i) per_axis *= side;
  return per_axis * dim();
}

double Environment::conductance(const Bond& b) const {
  if (b.lo().dim() != dim()) throw UsageError("bond dimension does not match the environment");
  if (!window_.contains_bond(b)) {
    throw StorageError("bond " + b.str() + " lies outside the stored window of radius " +
                       std::to_string(radius()));
  }
  return slot(window_.index(b.lo()), b.axis());
}

Environment Environment::with_overrides(std::span<const std::pair<Bond, double>> overrides) const {
  Environment out = *this;
  std::vector<double> values;
  if (values_) {
    values = *values_;
  } else {
    values.assign(static_cast<std::size_t>(window_.site_count() * dim()), 0.0);
    for_each_bond([&](const Bond& b, double v) {
      values[static_cast<std::size_t>(window_.index(b.lo()) * dim() + b.axis())] = v;
    });
  }
  for (const auto& [bond, value] : overrides) {
    if (!(value > 0 && value <= 1)) throw UsageError("conductances must lie in (0, 1]");
    if (!window_.contains_bond(bond)) throw StorageError("override bond " + bond.str() + " outside window");
    values[static_cast<std::size_t>(window_.index(bond.lo()) * dim() + bond.axis())] = value;
  }
  out.values_ = std::make_shared<const std::vector<double>>(std::move(values));
  out.law_.kind = LawKind::Explicit;
  return out;
}

bool Environment::operator==(const Environment& o) const {
  if (!(window_.dim() == o.window_.dim() && window_.radius() == o.window_.radius())) return false;
  if (law_.kind != o.law_.kind || law_.param != o.law_.param || seed_ != o.seed_) return false;
  const int d = dim();
  for (std::int64_t s = 0; s < window_.site_count(); ++s)
    for (int a = 0; a < d; ++a)
      if (slot(s, a) != o.slot(s, a)) {
        // Unused slots may differ between dense and uniform storage.
        if (window_.point(s)[a] != radius()) return false;
      }
  return true;
}

// ---------------------------------------------------------------------------
// Binary format
//
//   "RCLB" | u16 version | u16 d | u32 radius | u8 law tag | f64 law param |
//   u64 seed | u64 bond count | f64 x bond count | u64 FNV-1a of all prior bytes
//
// Integers and floats little-endian; bonds in canonical order.

namespace {

constexpr char kMagic[4] = {'R', 'C', 'L', 'B'};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError("truncated environment file");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_environment(const Environment& env) {
  std::string out;
  const std::int64_t count = env.bond_count();
  out.reserve(48 + static_cast<std::size_t>(count) * 8);
  out.append(kMagic, 4);
  put<std::uint16_t>(out, kEnvFormatVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(env.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(env.radius()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(env.law().kind));
  put<double>(out, env.law().param);
  put<std::uint64_t>(out, env.seed());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(count));
  env.for_each_bond([&](const Bond&, double v) { put<double>(out, v); });
  put<std::uint64_t>(out, fnv1a(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
  return out;
}

Environment deserialize_environment(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an environment file (bad magic)");
  }
  Reader r(bytes);
  (void)r.get<std::uint32_t>();
  const auto version = r.get<std::uint16_t>();
  if (version > kEnvFormatVersion) {
    throw FormatError("environment file format version " + std::to_string(version) +
                      " is newer than supported version " + std::to_string(kEnvFormatVersion));
  }
  if (version == 0) throw FormatError("invalid environment file format version 0");
  const int d = r.get<std::uint16_t>();
  const auto radius = r.get<std::uint32_t>();
  const auto tag = r.get<std::uint8_t>();
  const double param = r.get<double>();
  const auto seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (tag > static_cast<std::uint8_t>(LawKind::Explicit)) throw FormatError("unknown law tag");
  if (d < 1 || d > kMaxDim || radius < 1 || radius > (1u << 30)) throw FormatError("invalid geometry in header");

  Environment env;
  Cube window(d, static_cast<int>(radius));
  {
    std::int64_t expected = window.side() - 1;
    for (int i = 1; i < d; ++i) expected *= window.side();
    expected *= d;
    if (count != static_cast<std::uint64_t>(expected)) throw FormatError("bond count does not match geometry");
  }
  if (r.remaining() < count * 8 + 8) throw FormatError("truncated environment file");
  const std::size_t payload_end = r.pos() + count * 8;
  const std::uint64_t expected_sum = fnv1a(reinterpret_cast<const unsigned char*>(bytes.data()), payload_end);

  auto values = std::make_shared<std::vector<double>>(static_cast<std::size_t>(window.site_count() * d), 0.0);
  for (std::int64_t s = 0; s < window.site_count(); ++s) {
    const Point p = window.point(s);
    for (int a = 0; a < d; ++a) {
      if (p[a] == window.radius()) continue;
      (*values)[static_cast<std::size_t>(s * d + a)] = r.get<double>();
    }
  }
  const auto stored_sum = r.get<std::uint64_t>();
  if (stored_sum != expected_sum) throw FormatError("environment file checksum mismatch");
  if (r.remaining() != 0) throw FormatError("trailing bytes after environment checksum");
  for (std::int64_t s = 0; s < window.site_count(); ++s) {
    const Point p = window.point(s);
    for (int a = 0; a < d; ++a) {
      if (p[a] == window.radius()) continue;
      const double v = (*values)[static_cast<std::size_t>(s * d + a)];
      if (!(v > 0 && v <= 1)) throw FormatError("stored conductance outside (0, 1]");
    }
  }

  env.window_ = window;
  env.law_ = ConductanceLaw{static_cast<LawKind>(tag), param};
  env.seed_ = seed;
  if (env.law_.kind == LawKind::Constant) {
    env.constant_ = param;
  }
  env.values_ = std::move(values);
  return env;
}

void save_environment(const Environment& env, const std::string& path) {
  write_file_atomic(path, serialize_environment(env));
}

Environment load_environment(const std::string& path) { return deserialize_environment(read_file(path)); }

// ---------------------------------------------------------------------------

ModifiedEnvironment::ModifiedEnvironment(Environment base, int N)
    : base_(std::move(base)), N_(N), protected_(base_.dim(), N + 1) {
  if (N < 0) throw UsageError("modification scale must be nonnegative");
  if (N + 1 > base_.radius()) {
    throw StorageError("protected box of radius " + std::to_string(N + 1) +
                       " does not fit in the stored window of radius " + std::to_string(base_.radius()));
  }
}

double ModifiedEnvironment::conductance(const Bond& b) const {
  if (protected_.contains_bond(b)) return base_.conductance(b);
  return 1.0;
}

double ModifiedEnvironment::pi(const Point& x) const {
  double s = 0;
  for (int a = 0; a < dim(); ++a) {
    s += conductance(Bond::along(x, a));
    s += conductance(Bond::along(x.shifted(a, -1), a));
  }
  return s;
}

ModifiedEnvironment modify(const Environment& env, int N) { return ModifiedEnvironment(env, N); }

ModifiedEnvironment modify(const ModifiedEnvironment& env, int N) {
  return ModifiedEnvironment(env.base(), std::min(N, env.scale()));
}

double min_conductance(const Environment& env, int half_width) {
  if (half_width < 1 || half_width > env.radius()) {
    throw StorageError("box of half-width " + std::to_string(half_width) + " not inside stored window");
  }
  const Cube inner(env.dim(), half_width);
  const Cube& w = env.window();
  const int d = env.dim();
  double m = std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < inner.site_count(); ++i) {
    const Point p = inner.point(i);
    const std::int64_t s = w.index(p);
    for (int a = 0; a < d; ++a) {
      if (p[a] == half_width) continue;
      m = std::min(m, env.slot(s, a));
    }
  }
  return m;
}

double min_conductance_statistic(const Environment& env, int N) {
  if (N < 2) throw UsageError("the minimum-conductance statistic needs N >= 2");
  return std::log(min_conductance(env, N)) / std::log(static_cast<double>(N));
}

}  // namespace rclab
