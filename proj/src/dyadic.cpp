#include "sparsedom/dyadic.hpp"

#include <stdexcept>

namespace sparsedom {

namespace {

bool side_is_pow2(const Rational& s) {
  if (s.sign() <= 0) return false;
  std::int64_t n = s.num(), d = s.den();
  return (n & (n - 1)) == 0 && (d & (d - 1)) == 0;
}

// s_base / s must equal 2^k with k in [0, depth]; -1 otherwise.
int scale_of(const Rational& s_base, const Rational& s, int depth) {
  Rational r = s_base / s;
  if (!r.is_integer()) return -1;
  std::int64_t v = r.num();
  if (v <= 0 || (v & (v - 1)) != 0) return -1;
  int k = 0;
  while ((std::int64_t{1} << k) < v) ++k;
  return k <= depth ? k : -1;
}

}  // namespace

DyadicLattice::DyadicLattice(int dim, int tag, Cube base, int depth, int span)
    : dim_(dim), tag_(tag), base_(std::move(base)), depth_(depth), span_(span) {
  if (dim_ != 1 && dim_ != 2) throw std::invalid_argument("DyadicLattice: dimension must be 1 or 2");
  if (base_.dim != dim_) throw std::invalid_argument("DyadicLattice: base dimension mismatch");
  if (depth_ < 0) throw std::invalid_argument("DyadicLattice: negative depth");
  if (!side_is_pow2(base_.side))
    throw std::invalid_argument("DyadicLattice: base side must be a power of two");
  int families = dim_ == 1 ? 3 : 9;
  if (tag_ < 0 || tag_ >= families) throw std::invalid_argument("DyadicLattice: tag out of range");
}

int DyadicLattice::digit(int axis) const { return axis == 0 ? tag_ % 3 : tag_ / 3; }

int DyadicLattice::sigma(int k, int axis) const {
  int j = digit(axis);
  return (k % 2 == 0) ? j : (3 - j) % 3;
}

std::vector<Cube> DyadicLattice::cubes_at_scale(int k) const {
  if (k < 0 || k > depth_) throw std::out_of_range("DyadicLattice: scale outside truncation range");
  Rational unit = base_.side.times_pow2(-k);  // reference side at this scale
  Rational side = Rational(3) * unit;
  Cube region = base_.dilate(Rational(span_));
  std::vector<Cube> out;
  // per-axis ranges of the offset index u such that the cube meets the region
  std::array<std::vector<Rational>, 2> starts;
  for (int a = 0; a < dim_; ++a) {
    Rational sh = Rational(sigma(k, a)) * unit;
    // corner = base.corner + sh + 3*u*unit; want corner + side > region.lo and corner < region.hi
    Rational lo = (region.corner[a] - side - base_.corner[a] - sh) / (Rational(3) * unit);
    Rational hi = (region.upper(a) - base_.corner[a] - sh) / (Rational(3) * unit);
    for (std::int64_t u = lo.floor(); u <= hi.floor() + 1; ++u) {
      Rational c = base_.corner[a] + sh + Rational(3 * u) * unit;
      if (c + side > region.corner[a] && c < region.upper(a)) starts[a].push_back(c);
    }
  }
  if (dim_ == 1) {
    for (const auto& c : starts[0]) out.push_back(Cube(c, side));
  } else {
    for (const auto& c0 : starts[0])
      for (const auto& c1 : starts[1]) out.push_back(Cube(c0, c1, side));
  }
  return out;
}

std::vector<Cube> DyadicLattice::cubes() const {
  std::vector<Cube> out;
  for (int k = 0; k <= depth_; ++k) {
    auto sc = cubes_at_scale(k);
    out.insert(out.end(), sc.begin(), sc.end());
  }
  return out;
}

bool DyadicLattice::is_member(const Cube& c) const {
  if (c.dim != dim_) return false;
  // side must be 3 * 2^-k * l(base)
  int k = scale_of(base_.side, c.side / Rational(3), depth_);
  if (k < 0) return false;
  Rational unit = base_.side.times_pow2(-k);
  for (int a = 0; a < dim_; ++a) {
    Rational rel = (c.corner[a] - base_.corner[a]) / unit;
    if (!rel.is_integer()) return false;
    std::int64_t m = rel.num();
    std::int64_t res = ((m - sigma(k, a)) % 3 + 3) % 3;
    if (res != 0) return false;
  }
  // coverage region
  Cube region = base_.dilate(Rational(span_));
  return c.intersects(region);
}

Cube DyadicLattice::containing_triple(const Cube& q) const {
  if (q.dim != dim_) throw std::invalid_argument("containing_triple: dimension mismatch");
  int k = scale_of(base_.side, q.side, depth_);
  if (k < 0)
    throw std::out_of_range("containing_triple: cube out of truncation range (side " +
                            q.side.str() + " vs base " + base_.side.str() + ")");
  Rational unit = q.side;
  Cube r;
  r.dim = dim_;
  r.side = Rational(3) * unit;
  for (int a = 0; a < dim_; ++a) {
    Rational rel = (q.corner[a] - base_.corner[a]) / unit;
    if (!rel.is_integer())
      throw std::invalid_argument("containing_triple: cube not on the reference lattice");
    std::int64_t m = rel.num();
    std::int64_t sg = sigma(k, a);
    std::int64_t u = (m - sg) >= 0 ? (m - sg) / 3 : -(((sg - m) + 2) / 3);
    r.corner[a] = base_.corner[a] + Rational(sg + 3 * u) * unit;
  }
  if (!r.contains_cube(q))
    throw std::logic_error("containing_triple: construction failed to contain the cube");
  Cube region = base_.dilate(Rational(span_));
  if (!r.intersects(region))
    throw std::out_of_range("containing_triple: result out of truncation range");
  return r;
}

std::vector<DyadicLattice> make_shifted_lattices(int dim, int depth, const Cube& base) {
  if (dim != 1 && dim != 2)
    throw std::invalid_argument("make_shifted_lattices: dimension must be 1 or 2");
  if (depth < 1) throw std::invalid_argument("make_shifted_lattices: depth must be >= 1");
  if (depth > 40) throw std::invalid_argument("make_shifted_lattices: depth would overflow exact arithmetic");
  int families = dim == 1 ? 3 : 9;
  std::vector<DyadicLattice> out;
  out.reserve(families);
  for (int j = 0; j < families; ++j) out.emplace_back(dim, j, base, depth);
  return out;
}

Cube containing_triple(const Cube& q, const DyadicLattice& family) {
  return family.containing_triple(q);
}

std::vector<Cube> dyadic_children(const Cube& q) {
  std::vector<Cube> out;
  Rational half = q.side / Rational(2);
  if (q.dim == 1) {
    out.push_back(Cube(q.corner[0], half));
    out.push_back(Cube(q.corner[0] + half, half));
  } else {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        out.push_back(Cube(q.corner[0] + Rational(i) * half, q.corner[1] + Rational(j) * half, half));
  }
  return out;
}

std::vector<Cube> reference_cubes(const Cube& base, int depth) {
  std::vector<Cube> out{base};
  size_t level_begin = 0;
  for (int k = 1; k <= depth; ++k) {
    size_t level_end = out.size();
    for (size_t i = level_begin; i < level_end; ++i) {
      auto ch = dyadic_children(out[i]);
      out.insert(out.end(), ch.begin(), ch.end());
    }
    level_begin = level_end;
  }
  return out;
}

}  // namespace sparsedom
