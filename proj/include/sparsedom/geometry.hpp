#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sparsedom/rational.hpp"

namespace sparsedom {

// Point in dimension 1 or 2; the unused slot stays 0.
using Coord = std::array<Rational, 2>;

// Axis-aligned half-open cube [corner, corner + side)^n with exact
// rational geometry. Dimension is 1 or 2.
struct Cube {
  int dim = 1;
  Coord corner{};
  Rational side{1};

  Cube() = default;
  Cube(Rational lo, Rational s) : dim(1), corner{lo, 0}, side(s) {}
  Cube(Rational lo0, Rational lo1, Rational s) : dim(2), corner{lo0, lo1}, side(s) {}

  Rational upper(int axis) const { return corner[axis] + side; }
  Coord center() const {
    Coord c = corner;
    for (int a = 0; a < dim; ++a) c[a] += side / Rational(2);
    return c;
  }
  Rational volume() const { return dim == 1 ? side : side * side; }

  bool contains(const Coord& x) const {
    for (int a = 0; a < dim; ++a)
      if (x[a] < corner[a] || !(x[a] < upper(a))) return false;
    return true;
  }
  bool contains_cube(const Cube& q) const {
    for (int a = 0; a < dim; ++a)
      if (q.corner[a] < corner[a] || upper(a) < q.upper(a)) return false;
    return true;
  }
  bool intersects(const Cube& q) const {
    for (int a = 0; a < dim; ++a)
      if (!(corner[a] < q.upper(a)) || !(q.corner[a] < upper(a))) return false;
    return true;
  }
  // Concentric dilate lambda*Q, exact for rational lambda > 0.
  Cube dilate(const Rational& lambda) const {
    Cube r = *this;
    Rational shift = side * (Rational(1) - lambda) / Rational(2);
    for (int a = 0; a < dim; ++a) r.corner[a] = corner[a] + shift;
    r.side = side * lambda;
    return r;
  }
  Cube triple() const { return dilate(Rational(3)); }

  friend bool operator==(const Cube& a, const Cube& b) {
    if (a.dim != b.dim || a.side != b.side) return false;
    for (int i = 0; i < a.dim; ++i)
      if (a.corner[i] != b.corner[i]) return false;
    return true;
  }

  std::string str() const {
    std::string s = "[" + corner[0].str() + "," + upper(0).str() + ")";
    if (dim == 2) s += "x[" + corner[1].str() + "," + upper(1).str() + ")";
    return s;
  }
};

// Invertible n x n matrix with exact rational entries (n = 1 or 2),
// cached determinant and inverse. A * A^{-1} is the identity exactly.
class LinearMap {
 public:
  LinearMap() : LinearMap(1, {Rational(1)}) {}
  LinearMap(int dim, std::vector<Rational> entries);  // row-major, dim*dim entries

  static LinearMap identity(int dim);
  static LinearMap scalar(int dim, const Rational& c);   // c * I
  static LinearMap diagonal(std::vector<Rational> d);

  int dim() const { return dim_; }
  const Rational& entry(int r, int c) const { return a_[r * dim_ + c]; }
  const Rational& determinant() const { return det_; }
  LinearMap inverse() const;
  double norm_bound() const;  // upper bound for the operator norm

  Coord apply(const Coord& x) const;

  bool is_identity() const;
  // Every row has exactly one nonzero entry of the form +-2^k: cells map to
  // axis-aligned boxes, which is what the exact grid pullback needs.
  bool is_monomial_pow2() const;

  friend bool operator==(const LinearMap& a, const LinearMap& b) {
    return a.dim_ == b.dim_ && a.a_ == b.a_;
  }

  friend LinearMap operator*(const LinearMap& a, const LinearMap& b);
  friend LinearMap operator-(const LinearMap& a, const LinearMap& b);

  std::string str() const;

 private:
  int dim_;
  std::vector<Rational> a_;
  Rational det_;
};

// |AQ ∩ Q| where AQ is the image parallelepiped of Q under A.
// Interval intersection in 1-D, exact convex polygon clipping in 2-D.
double cube_image_intersection_volume(const LinearMap& A, const Cube& Q);

// Hypothesis (H): every A_i and every difference A_i - A_j invertible.
struct HypothesisReport {
  bool ok = true;
  int i = 0, j = 0;  // 1-based indices of the first failing map / pair; j = 0 for a singular A_i
  std::string what;
};
HypothesisReport check_hypothesis_h(std::span<const LinearMap> maps);

}  // namespace sparsedom
