#pragma once

// Geometry of Z^d on explicit finite windows.
//
// Two box conventions coexist and are kept apart on purpose:
//   Box  - the scale-N box [-3N, 3N]^d used by the trap construction,
//   Cube - a plain box [-R, R]^d used for storage windows and kernels.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace rclab {

inline constexpr int kMaxDim = 8;

class Point {
 public:
  Point() = default;
  explicit Point(int dim);
  Point(std::initializer_list<int> coords);

  static Point origin(int dim) { return Point(dim); }
  static Point unit(int dim, int axis, int sign = 1);

  int dim() const noexcept { return dim_; }
  int operator[](int i) const noexcept { return c_[static_cast<std::size_t>(i)]; }
  int& operator[](int i) noexcept { return c_[static_cast<std::size_t>(i)]; }

  Point operator+(const Point& o) const;
  Point operator-(const Point& o) const;
  Point operator*(int k) const;
  Point shifted(int axis, int delta) const {
    Point p = *this;
    p[axis] += delta;
    return p;
  }

  int linf() const noexcept;
  int l1() const noexcept;
  // Coordinate sum has even absolute value.
  bool is_even() const noexcept;

  bool operator==(const Point& o) const noexcept;
  std::strong_ordering operator<=>(const Point& o) const noexcept;

  std::vector<int> to_vector() const;
  static Point from_vector(const std::vector<int>& v);
  std::string str() const;

 private:
  int dim_ = 0;
  std::array<int, kMaxDim> c_{};
};

std::ostream& operator<<(std::ostream& os, const Point& p);

int l1_distance(const Point& a, const Point& b);

// Nearest-neighbor bond stored canonically as (lo, lo + e_axis).
class Bond {
 public:
  Bond() = default;
  // Throws UsageError unless a and b are nearest neighbors.
  Bond(const Point& a, const Point& b);

  static Bond along(const Point& lo, int axis) {
    Bond b;
    b.lo_ = lo;
    b.axis_ = axis;
    return b;
  }

  const Point& lo() const noexcept { return lo_; }
  Point hi() const { return lo_.shifted(axis_, 1); }
  int axis() const noexcept { return axis_; }
  bool touches(const Point& p) const { return p == lo_ || p == hi(); }

  bool operator==(const Bond& o) const noexcept { return axis_ == o.axis_ && lo_ == o.lo_; }
  std::strong_ordering operator<=>(const Bond& o) const noexcept;
  std::string str() const;

 private:
  Point lo_;
  int axis_ = 0;
};

// Plain box [-radius, radius]^d with a lexicographic mixed-radix site index
// (first coordinate most significant).
class Cube {
 public:
  Cube() = default;
  Cube(int dim, int radius);

  int dim() const noexcept { return dim_; }
  int radius() const noexcept { return radius_; }
  std::int64_t side() const noexcept { return side_; }
  std::int64_t site_count() const noexcept { return count_; }
  // Index step for a unit move along `axis`.
  std::int64_t stride(int axis) const noexcept { return stride_[static_cast<std::size_t>(axis)]; }

  bool contains(const Point& p) const;
  std::int64_t index(const Point& p) const;
  Point point(std::int64_t index) const;
  // Both endpoints inside.
  bool contains_bond(const Bond& b) const { return contains(b.lo()) && contains(b.hi()); }
  // At least one neighbor lies outside the cube.
  bool on_boundary(const Point& p) const { return contains(p) && p.linf() == radius_; }

  std::vector<Point> points() const;

 private:
  int dim_ = 0;
  int radius_ = 0;
  std::int64_t side_ = 1;
  std::int64_t count_ = 1;
  std::array<std::int64_t, kMaxDim> stride_{};
};

// The scale-N box B_N = [-3N, 3N]^d.
struct Box {
  int dim = 0;
  int scale = 0;

  int half_width() const noexcept { return 3 * scale; }
  Cube cube() const { return Cube(dim, half_width()); }
  std::int64_t point_count() const { return cube().site_count(); }
};

bool box_contains(const Box& box, const Point& p);

// Points of B_N with at least one neighbor outside B_N, in lexicographic order.
// B_0 = {0} is its own inner boundary.
std::vector<Point> inner_boundary(const Box& box);

struct DirectionSign {
  int axis = 0;  // 0-based; the largest index attaining max |x_i|
  int sign = 1;  // +1 iff x_axis >= 0
};

DirectionSign direction_and_sign(const Point& x);

// Even points at L1 distance exactly 2. Throws UsageError for odd x.
std::vector<Point> even_neighbors(const Point& x);

}  // namespace rclab

template <>
struct std::hash<rclab::Point> {
  std::size_t operator()(const rclab::Point& p) const noexcept;
};
