#include <doctest.h>

#include <algorithm>
#include <set>

#include "rclab/error.hpp"
#include "rclab/lattice.hpp"

using namespace rclab;

TEST_CASE("box membership on the 3N-scaled box") {
  CHECK(box_contains(Box{1, 1}, Point{3}));
  CHECK_FALSE(box_contains(Box{1, 1}, Point{4}));
  CHECK(Box{2, 1}.point_count() == 49);
  CHECK_THROWS_AS(box_contains(Box{2, 1}, Point{0}), UsageError);
}

TEST_CASE("inner boundary matches shell counts") {
  const auto b1 = inner_boundary(Box{1, 1});
  CHECK(std::set<Point>(b1.begin(), b1.end()) == std::set<Point>{Point{-3}, Point{3}});
  CHECK(inner_boundary(Box{2, 1}).size() == 24);
  for (int d = 1; d <= 3; ++d)
    for (int N = 1; N <= 5; ++N) {
      const Box box{d, N};
      const auto pts = inner_boundary(box);
      std::int64_t expected = 1, inner = 1;
      for (int i = 0; i < d; ++i) {
        expected *= 6 * N + 1;
        inner *= 6 * N - 1;
      }
      CHECK(static_cast<std::int64_t>(pts.size()) == expected - inner);
      for (const Point& p : pts) {
        CHECK(box_contains(box, p));
        bool outside_neighbor = false;
        for (int a = 0; a < d; ++a)
          for (int s : {-1, 1}) outside_neighbor |= !box_contains(box, p.shifted(a, s));
        CHECK(outside_neighbor);
      }
    }
}

TEST_CASE("direction and sign use the largest maximizing axis") {
  auto ds = direction_and_sign(Point{3, 1});
  CHECK(ds.axis == 0);
  CHECK(ds.sign == 1);
  ds = direction_and_sign(Point{-2, 2});
  CHECK(ds.axis == 1);
  CHECK(ds.sign == 1);
  ds = direction_and_sign(Point{2, -2});
  CHECK(ds.axis == 1);
  CHECK(ds.sign == -1);
  ds = direction_and_sign(Point::origin(5));
  CHECK(ds.axis == 4);
  CHECK(ds.sign == 1);
  for (const Point& x : {Point{3, -1}, Point{-2, 5}, Point{4, -4, 1}}) {
    const auto a = direction_and_sign(x);
    for (int k : {2, 3, 7}) {
      const auto b = direction_and_sign(x * k);
      CHECK(a.axis == b.axis);
      CHECK(a.sign == b.sign);
    }
  }
}

TEST_CASE("even neighbors") {
  const auto n1 = even_neighbors(Point{0});
  CHECK(std::set<Point>(n1.begin(), n1.end()) == std::set<Point>{Point{-2}, Point{2}});
  const auto n2 = even_neighbors(Point{0, 0});
  const std::set<Point> want{Point{2, 0}, Point{-2, 0}, Point{0, 2},  Point{0, -2},
                             Point{1, 1}, Point{1, -1}, Point{-1, 1}, Point{-1, -1}};
  CHECK(std::set<Point>(n2.begin(), n2.end()) == want);
  CHECK_THROWS_AS(even_neighbors(Point{1, 0}), UsageError);
  for (int d = 1; d <= 4; ++d) {
    Point x(d);
    x[0] = 2;
    const auto nb = even_neighbors(x);
    CHECK(static_cast<int>(nb.size()) == 2 * d * d);
    for (const Point& y : nb) {
      CHECK(y.is_even());
      CHECK(l1_distance(x, y) == 2);
      const auto back = even_neighbors(y);
      CHECK(std::find(back.begin(), back.end(), x) != back.end());
    }
  }
}

TEST_CASE("bonds are unordered nearest-neighbor pairs") {
  const Point a{1, 2}, b{1, 3};
  CHECK(Bond(a, b) == Bond(b, a));
  CHECK(Bond(a, b).lo() == a);
  CHECK(Bond(a, b).axis() == 1);
  CHECK_THROWS_AS(Bond(a, Point{2, 3}), UsageError);
}

TEST_CASE("cube index is a bijection") {
  const Cube c(3, 2);
  CHECK(c.site_count() == 125);
  for (std::int64_t i = 0; i < c.site_count(); ++i) CHECK(c.index(c.point(i)) == i);
  CHECK_FALSE(c.contains(Point{3, 0, 0}));
}
