#pragma once

// Geometry of the 4d-1 bond collection C(x) around a boundary hit x.

#include <vector>

#include "rclab/lattice.hpp"

namespace rclab {

struct TrapPattern {
  Point x, y, z;  // y = x + s e_axis, z = x + 2 s e_axis
  int axis = 0;
  int sign = 1;
  Bond weak;    // [x, y]
  Bond strong;  // [y, z]
  // The 4d-3 remaining bonds: y +- e_i and z +- e_i for i != axis (ascending
  // i, minus before plus, y block first), then the forward bond [z, z + s e_axis].
  std::vector<Bond> others;

  // weak, strong, then others.
  std::vector<Bond> bonds() const;
};

TrapPattern collection_C(const Point& x);

}  // namespace rclab
