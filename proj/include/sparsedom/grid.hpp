#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sparsedom/geometry.hpp"

namespace sparsedom {

// Uniform grid over the truncated box [-2^J, 2^J)^n with cells of side 2^-L.
// Cell count per axis is 2^(J+L+1); every reference-lattice cube at scale
// <= J+L+1 resolves to whole cells.
struct Grid {
  int dim = 1;
  int box_exp = 0;   // J
  int cell_exp = 0;  // L

  Grid() = default;
  Grid(int n, int j, int l);

  int cells_per_axis() const { return 1 << (box_exp + cell_exp + 1); }
  std::int64_t cell_count() const {
    std::int64_t n = cells_per_axis();
    return dim == 1 ? n : n * n;
  }
  Rational half_width() const { return pow2(box_exp); }
  Rational cell_side() const { return pow2(-cell_exp); }
  double cell_volume() const;
  Cube box() const;

  Cube cell_cube(int ix, int iy = 0) const;
  Coord cell_center(int ix, int iy = 0) const;
  std::int64_t flat_index(int ix, int iy = 0) const {
    return ix + static_cast<std::int64_t>(cells_per_axis()) * iy;
  }

  // Axis index of the cell containing exact coordinate x; -1 if outside box.
  int axis_index(const Rational& x) const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dim == b.dim && a.box_exp == b.box_exp && a.cell_exp == b.cell_exp;
  }
};

// Half-open per-axis cell index ranges, already clamped to the box.
struct CellRange {
  int lo[2] = {0, 0};
  int hi[2] = {0, 0};
  bool empty(int dim) const {
    for (int a = 0; a < dim; ++a)
      if (hi[a] <= lo[a]) return true;
    return false;
  }
  std::int64_t count(int dim) const {
    std::int64_t c = 1;
    for (int a = 0; a < dim; ++a) c *= std::max(0, hi[a] - lo[a]);
    return c;
  }
};

// True iff the cube boundary lies on the cell lattice (the cube may extend
// beyond the box; the returned range covers cube ∩ box).
bool cube_to_range(const Grid& g, const Cube& q, CellRange* out);

// Piecewise-constant field: one value per cell, integration is the exact
// cell sum times cell volume.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(const Grid& g, double fill = 0.0)
      : grid_(g), v_(static_cast<size_t>(g.cell_count()), fill) {}

  const Grid& grid() const { return grid_; }
  double& at(int ix, int iy = 0) { return v_[static_cast<size_t>(grid_.flat_index(ix, iy))]; }
  double at(int ix, int iy = 0) const { return v_[static_cast<size_t>(grid_.flat_index(ix, iy))]; }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  GridFunction map(const std::function<double(double)>& f) const;
  GridFunction pow(double e) const;  // pointwise |v|^e with sign dropped

 private:
  Grid grid_;
  std::vector<double> v_;
};

// Weights are nonnegative grid functions; check_weight guards the invariant
// at the points where a field is used as a weight.
using Weight = GridFunction;
void check_weight(const GridFunction& w);

class CellMask {
 public:
  CellMask() = default;
  explicit CellMask(const Grid& g) : grid_(g), m_(static_cast<size_t>(g.cell_count()), 0) {}

  const Grid& grid() const { return grid_; }
  bool get(int ix, int iy = 0) const { return m_[static_cast<size_t>(grid_.flat_index(ix, iy))] != 0; }
  void set(int ix, int iy, bool b) { m_[static_cast<size_t>(grid_.flat_index(ix, iy))] = b ? 1 : 0; }
  void set(int ix, bool b) { set(ix, 0, b); }
  std::int64_t count() const;
  double measure() const { return static_cast<double>(count()) * grid_.cell_volume(); }
  std::int64_t count_in(const CellRange& r) const;
  const std::vector<std::uint8_t>& raw() const { return m_; }
  std::vector<std::uint8_t>& raw() { return m_; }

 private:
  Grid grid_;
  std::vector<std::uint8_t> m_;
};

// Cumulative sums for O(1) range queries; values are plain cell sums, the
// caller scales by cell volume.
class FieldPrefix {
 public:
  explicit FieldPrefix(const GridFunction& f);
  FieldPrefix(const GridFunction& f, const std::function<double(double)>& transform);
  double cell_sum(const CellRange& r) const;

 private:
  void build(const GridFunction& f, const std::function<double(double)>& tr);
  Grid grid_;
  std::vector<double> p_;
};

constexpr double kInfExponent = std::numeric_limits<double>::infinity();

// Exact cell-sum quadrature of f over region ∩ box; throws on a cube whose
// boundary is not on the cell lattice.
double integrate(const GridFunction& f, const Cube& q);
double integrate(const GridFunction& f, const CellMask& mask);

// ((1/|Q|) ∫_Q |f|^r)^{1/r}; r = infinity gives the max of |f| over the
// cells of Q. |Q| is the full cube volume (f is zero outside the box).
double lr_average(const GridFunction& f, const Cube& q, double r);

// (∫ |f|^p w)^{1/p}; the caller supplies the already-powered weight.
double lp_norm(const GridFunction& f, const GridFunction& powered_weight, double p);

// ∫_{g > lambda} w, cell-exact.
double weighted_level_measure(const GridFunction& w, const GridFunction& g, double lambda);

// x -> f(Ax). Exact (mass-preserving cell pooling) for grid-compatible A
// (every row one entry of magnitude 2^k); otherwise nearest-cell resampling
// behind an explicit flag. residual = |det A|^{-1} ∫f - ∫pullback, the mass
// lost to truncation.
struct PullbackResult {
  GridFunction value;
  double residual = 0.0;
  bool exact = true;
};
PullbackResult pullback(const GridFunction& f, const LinearMap& A, bool allow_resample = false);

// ∫ w over A({g > lambda}): the image-side route of the level-set identity,
// exact for grid-compatible A.
double twisted_level_measure(const GridFunction& w, const GridFunction& g, const LinearMap& A,
                             double lambda);

// ∫_{A(Q) ∩ box} f, exact for grid-compatible A (the image is a rational box).
double integrate_image(const GridFunction& f, const LinearMap& A, const Cube& q);

// CSV round-trip (header row "i,value" / "i,j,value" after a grid line).
void write_grid_csv(const GridFunction& f, const std::string& path);
GridFunction read_grid_csv(const std::string& path);

}  // namespace sparsedom
