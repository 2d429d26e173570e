#include "rclab/lattice.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <sstream>

#include "rclab/error.hpp"

namespace rclab {

namespace {

void check_dim(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw UsageError("dimension must lie in [1, " + std::to_string(kMaxDim) + "], got " +
                     std::to_string(dim));
  }
}

void check_same_dim(int a, int b) {
  if (a != b) {
    throw UsageError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

Point::Point(int dim) : dim_(dim) { check_dim(dim); }

Point::Point(std::initializer_list<int> coords) : dim_(static_cast<int>(coords.size())) {
  check_dim(dim_);
  std::size_t i = 0;
  for (int c : coords) c_[i++] = c;
}

Point Point::unit(int dim, int axis, int sign) {
  Point p(dim);
  p[axis] = sign;
  return p;
}

Point Point::operator+(const Point& o) const {
  check_same_dim(dim_, o.dim_);
  Point r = *this;
  for (int i = 0; i < dim_; ++i) r[i] += o[i];
  return r;
}

Point Point::operator-(const Point& o) const {
  check_same_dim(dim_, o.dim_);
  Point r = *this;
  for (int i = 0; i < dim_; ++i) r[i] -= o[i];
  return r;
}

Point Point::operator*(int k) const {
  Point r = *this;
  for (int i = 0; i < dim_; ++i) r[i] *= k;
  return r;
}

int Point::linf() const noexcept {
  int m = 0;
  for (int i = 0; i < dim_; ++i) m = std::max(m, std::abs((*this)[i]));
  return m;
}

int Point::l1() const noexcept {
  int s = 0;
  for (int i = 0; i < dim_; ++i) s += std::abs((*this)[i]);
  return s;
}

bool Point::is_even() const noexcept {
  int s = 0;
  for (int i = 0; i < dim_; ++i) s += (*this)[i];
  return std::abs(s) % 2 == 0;
}

bool Point::operator==(const Point& o) const noexcept {
  if (dim_ != o.dim_) return false;
  for (int i = 0; i < dim_; ++i)
    if ((*this)[i] != o[i]) return false;
  return true;
}

std::strong_ordering Point::operator<=>(const Point& o) const noexcept {
  if (auto c = dim_ <=> o.dim_; c != 0) return c;
  for (int i = 0; i < dim_; ++i)
    if (auto c = (*this)[i] <=> o[i]; c != 0) return c;
  return std::strong_ordering::equal;
}

std::vector<int> Point::to_vector() const { return {c_.begin(), c_.begin() + dim_}; }

Point Point::from_vector(const std::vector<int>& v) {
  Point p(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p.c_[i] = v[i];
  return p;
}

std::string Point::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Point& p) {
  os << '(';
  for (int i = 0; i < p.dim(); ++i) {
    if (i) os << ',';
    os << p[i];
  }
  return os << ')';
}

int l1_distance(const Point& a, const Point& b) { return (a - b).l1(); }

Bond::Bond(const Point& a, const Point& b) {
  check_same_dim(a.dim(), b.dim());
  Point diff = b - a;
  if (diff.l1() != 1) {
    throw UsageError("bond endpoints " + a.str() + " and " + b.str() + " are not nearest neighbors");
  }
  for (int i = 0; i < a.dim(); ++i) {
    if (diff[i] != 0) {
      axis_ = i;
      lo_ = diff[i] > 0 ? a : b;
      break;
    }
  }
}

std::strong_ordering Bond::operator<=>(const Bond& o) const noexcept {
  if (auto c = lo_ <=> o.lo_; c != 0) return c;
  return axis_ <=> o.axis_;
}

std::string Bond::str() const { return "[" + lo_.str() + "," + hi().str() + "]"; }

Cube::Cube(int dim, int radius) : dim_(dim), radius_(radius) {
  check_dim(dim);
  if (radius < 0) throw UsageError("cube radius must be nonnegative");
  side_ = 2 * static_cast<std::int64_t>(radius) + 1;
  count_ = 1;
  for (int i = dim - 1; i >= 0; --i) {
    stride_[static_cast<std::size_t>(i)] = count_;
    if (count_ > (std::int64_t{1} << 62) / side_) throw StorageError("cube too large to index");
    count_ *= side_;
  }
}

bool Cube::contains(const Point& p) const {
  check_same_dim(dim_, p.dim());
  for (int i = 0; i < dim_; ++i)
    if (p[i] < -radius_ || p[i] > radius_) return false;
  return true;
}

std::int64_t Cube::index(const Point& p) const {
  std::int64_t idx = 0;
  for (int i = 0; i < dim_; ++i) idx += (p[i] + radius_) * stride(i);
  return idx;
}

Point Cube::point(std::int64_t index) const {
  Point p(dim_);
  for (int i = 0; i < dim_; ++i) {
    p[i] = static_cast<int>(index / stride(i)) - radius_;
    index %= stride(i);
  }
  return p;
}

std::vector<Point> Cube::points() const {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(count_));
  for (std::int64_t i = 0; i < count_; ++i) out.push_back(point(i));
  return out;
}

bool box_contains(const Box& box, const Point& p) {
  check_same_dim(box.dim, p.dim());
  return p.linf() <= box.half_width();
}

std::vector<Point> inner_boundary(const Box& box) {
  if (box.scale < 0) throw UsageError("box scale must be nonnegative");
  const Cube cube = box.cube();
  std::vector<Point> out;
  const int h = box.half_width();
  // Only points with some |x_i| = h qualify; enumerate the cube directly.
  for (std::int64_t i = 0; i < cube.site_count(); ++i) {
    Point p = cube.point(i);
    if (p.linf() == h) out.push_back(p);
  }
  return out;
}

DirectionSign direction_and_sign(const Point& x) {
  DirectionSign ds;
  int best = -1;
  for (int i = 0; i < x.dim(); ++i) {
    if (std::abs(x[i]) >= best) {
      best = std::abs(x[i]);
      ds.axis = i;
    }
  }
  ds.sign = x[ds.axis] >= 0 ? 1 : -1;
  return ds;
}

std::vector<Point> even_neighbors(const Point& x) {
  if (!x.is_even()) throw UsageError("even_neighbors requires an even point, got " + x.str());
  const int d = x.dim();
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(2 * d * d));
  for (int i = 0; i < d; ++i) {
    out.push_back(x.shifted(i, -2));
    out.push_back(x.shifted(i, 2));
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (int si : {-1, 1})
        for (int sj : {-1, 1}) out.push_back(x.shifted(i, si).shifted(j, sj));
  return out;
}

}  // namespace rclab

std::size_t std::hash<rclab::Point>::operator()(const rclab::Point& p) const noexcept {
  std::size_t h = static_cast<std::size_t>(p.dim());
  for (int i = 0; i < p.dim(); ++i) h = h * 1000003u ^ static_cast<std::size_t>(p[i] + 0x9e3779b9);
  return h;
}
