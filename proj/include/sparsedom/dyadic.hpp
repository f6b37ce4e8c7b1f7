#pragma once

#include <vector>

#include "sparsedom/geometry.hpp"

namespace sparsedom {

// One of the 3^n shifted dyadic families attached to a reference lattice.
//
// The reference lattice is D(base): base has power-of-two side, its cubes at
// scale k have side 2^-k * l(base), anchored at base.corner. For a tag with
// per-axis digits (j_1,...,j_n) in {0,1,2}, the shifted family at scale k
// consists of cubes of side 3 * 2^-k * l(base) whose corners sit at
//   base.corner + (sigma_k(j) + 3u) * 2^-k * l(base),  u integer,
// where sigma_k(j) = j for even k and (3 - j) mod 3 for odd k. The
// alternating digit keeps consecutive scales nested (each cube splits into
// exactly 2^n children), and together the 3^n families absorb every triple
// 3Q of a reference cube while each of them contains, for every reference Q,
// a cube R with Q subset R and l(R) = 3 l(Q). Both claims are enumerable at
// finite depth and are property-tested rather than assumed.
class DyadicLattice {
 public:
  DyadicLattice(int dim, int tag, Cube base, int depth, int span = 3);

  int dim() const { return dim_; }
  int tag() const { return tag_; }
  int depth() const { return depth_; }
  const Cube& base() const { return base_; }

  // All member cubes at scales 0..depth intersecting the coverage region
  // (span * base, concentric).
  std::vector<Cube> cubes() const;
  std::vector<Cube> cubes_at_scale(int k) const;

  bool is_member(const Cube& c) const;

  // The cube R in this family with q subset R and l(R) = 3 l(q); q must be a
  // reference-lattice cube within the truncated scale range.
  Cube containing_triple(const Cube& q) const;

 private:
  int digit(int axis) const;         // per-axis tag digit in {0,1,2}
  int sigma(int k, int axis) const;  // shift digit at scale k

  int dim_;
  int tag_;
  Cube base_;
  int depth_;
  int span_;
};

// The 3^n shifted families for the given reference box. depth >= 1 counts
// the scales below the base scale; base must have power-of-two side.
std::vector<DyadicLattice> make_shifted_lattices(int dim, int depth, const Cube& base);

// R in family with Q subset R and l(R) = 3 l(Q) (wrapper around the member
// function, named after what it retrieves).
Cube containing_triple(const Cube& q, const DyadicLattice& family);

// Reference lattice D(base): all dyadic descendants of base down to `depth`
// subdivisions (scale 0 = base itself).
std::vector<Cube> reference_cubes(const Cube& base, int depth);
std::vector<Cube> dyadic_children(const Cube& q);

}  // namespace sparsedom
