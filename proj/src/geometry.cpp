#include "sparsedom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparsedom {

LinearMap::LinearMap(int dim, std::vector<Rational> entries) : dim_(dim), a_(std::move(entries)) {
  if (dim_ != 1 && dim_ != 2) throw std::invalid_argument("LinearMap: dimension must be 1 or 2");
  if (a_.size() != static_cast<size_t>(dim_ * dim_))
    throw std::invalid_argument("LinearMap: wrong entry count");
  det_ = dim_ == 1 ? a_[0] : a_[0] * a_[3] - a_[1] * a_[2];
  if (det_.is_zero()) throw std::invalid_argument("LinearMap: singular matrix");
}

LinearMap LinearMap::identity(int dim) { return scalar(dim, Rational(1)); }

LinearMap LinearMap::scalar(int dim, const Rational& c) {
  if (dim == 1) return LinearMap(1, {c});
  return LinearMap(2, {c, Rational(0), Rational(0), c});
}

LinearMap LinearMap::diagonal(std::vector<Rational> d) {
  if (d.size() == 1) return LinearMap(1, {d[0]});
  if (d.size() == 2) return LinearMap(2, {d[0], Rational(0), Rational(0), d[1]});
  throw std::invalid_argument("LinearMap::diagonal: dimension must be 1 or 2");
}

LinearMap LinearMap::inverse() const {
  if (dim_ == 1) return LinearMap(1, {Rational(1) / a_[0]});
  return LinearMap(2, {a_[3] / det_, -a_[1] / det_, -a_[2] / det_, a_[0] / det_});
}

double LinearMap::norm_bound() const {
  // Frobenius norm dominates the spectral norm.
  double s = 0;
  for (const auto& e : a_) {
    double v = e.to_double();
    s += v * v;
  }
  return std::sqrt(s);
}

Coord LinearMap::apply(const Coord& x) const {
  Coord y{};
  if (dim_ == 1) {
    y[0] = a_[0] * x[0];
  } else {
    y[0] = a_[0] * x[0] + a_[1] * x[1];
    y[1] = a_[2] * x[0] + a_[3] * x[1];
  }
  return y;
}

bool LinearMap::is_identity() const { return *this == identity(dim_); }

namespace {
bool is_pow2_magnitude(const Rational& r) {
  if (r.is_zero()) return false;
  std::int64_t n = std::llabs(r.num()), d = r.den();
  return (n & (n - 1)) == 0 && (d & (d - 1)) == 0;
}
}  // namespace

bool LinearMap::is_monomial_pow2() const {
  for (int r = 0; r < dim_; ++r) {
    int nonzero = 0;
    for (int c = 0; c < dim_; ++c) {
      const Rational& e = entry(r, c);
      if (!e.is_zero()) {
        ++nonzero;
        if (!is_pow2_magnitude(e)) return false;
      }
    }
    if (nonzero != 1) return false;
  }
  // invertibility guarantees the nonzero pattern is a permutation
  return true;
}

LinearMap operator*(const LinearMap& a, const LinearMap& b) {
  if (a.dim_ != b.dim_) throw std::invalid_argument("LinearMap: dimension mismatch");
  int n = a.dim_;
  std::vector<Rational> e(n * n, Rational(0));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int k = 0; k < n; ++k) e[r * n + c] += a.entry(r, k) * b.entry(k, c);
  return LinearMap(n, std::move(e));
}

LinearMap operator-(const LinearMap& a, const LinearMap& b) {
  if (a.dim_ != b.dim_) throw std::invalid_argument("LinearMap: dimension mismatch");
  int n = a.dim_;
  std::vector<Rational> e(n * n);
  for (int i = 0; i < n * n; ++i) e[i] = a.a_[i] - b.a_[i];
  return LinearMap(n, std::move(e));  // throws if singular; callers catch for (H)
}

std::string LinearMap::str() const {
  std::string s = "[";
  for (int r = 0; r < dim_; ++r) {
    for (int c = 0; c < dim_; ++c) s += entry(r, c).str() + (c + 1 < dim_ ? "," : "");
    s += r + 1 < dim_ ? ";" : "";
  }
  return s + "]";
}

namespace {

// Sutherland-Hodgman clip of a convex polygon against half-plane x[axis] <= bound
// (or >= if keep_ge), exact rational arithmetic.
using Poly = std::vector<Coord>;

Poly clip_halfplane(const Poly& poly, int axis, const Rational& bound, bool keep_ge) {
  Poly out;
  size_t n = poly.size();
  if (n == 0) return out;
  auto inside = [&](const Coord& p) {
    return keep_ge ? p[axis] >= bound : p[axis] <= bound;
  };
  for (size_t i = 0; i < n; ++i) {
    const Coord& p = poly[i];
    const Coord& q = poly[(i + 1) % n];
    bool pi = inside(p), qi = inside(q);
    if (pi) out.push_back(p);
    if (pi != qi) {
      Rational t = (bound - p[axis]) / (q[axis] - p[axis]);
      Coord x;
      x[0] = p[0] + t * (q[0] - p[0]);
      x[1] = p[1] + t * (q[1] - p[1]);
      out.push_back(x);
    }
  }
  return out;
}

Rational shoelace_area2(const Poly& poly) {
  Rational s(0);
  size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Coord& p = poly[i];
    const Coord& q = poly[(i + 1) % n];
    s += p[0] * q[1] - q[0] * p[1];
  }
  return s.abs();
}

}  // namespace

double cube_image_intersection_volume(const LinearMap& A, const Cube& Q) {
  if (A.dim() != Q.dim) throw std::invalid_argument("cube_image_intersection_volume: dim mismatch");
  if (Q.dim == 1) {
    Rational lo = A.entry(0, 0) * Q.corner[0];
    Rational hi = A.entry(0, 0) * Q.upper(0);
    if (hi < lo) std::swap(lo, hi);
    Rational a = std::max(lo, Q.corner[0]);
    Rational b = std::min(hi, Q.upper(0));
    return b > a ? (b - a).to_double() : 0.0;
  }
  // image parallelogram: A applied to the four corners, in order
  Coord c0 = Q.corner;
  Coord c1{Q.upper(0), Q.corner[1]};
  Coord c2{Q.upper(0), Q.upper(1)};
  Coord c3{Q.corner[0], Q.upper(1)};
  Poly poly{A.apply(c0), A.apply(c1), A.apply(c2), A.apply(c3)};
  for (int axis = 0; axis < 2; ++axis) {
    poly = clip_halfplane(poly, axis, Q.corner[axis], true);
    poly = clip_halfplane(poly, axis, Q.upper(axis), false);
    if (poly.empty()) return 0.0;
  }
  return (shoelace_area2(poly) / Rational(2)).to_double();
}

HypothesisReport check_hypothesis_h(std::span<const LinearMap> maps) {
  HypothesisReport rep;
  if (maps.empty()) throw std::invalid_argument("check_hypothesis_h: empty map list");
  // each A_i is invertible by construction of LinearMap; check the differences
  for (size_t i = 0; i < maps.size(); ++i) {
    for (size_t j = 0; j < maps.size(); ++j) {
      if (i == j) continue;
      const LinearMap& a = maps[i];
      const LinearMap& b = maps[j];
      Rational det = a.dim() == 1 ? a.entry(0, 0) - b.entry(0, 0)
                                  : (a.entry(0, 0) - b.entry(0, 0)) * (a.entry(1, 1) - b.entry(1, 1)) -
                                        (a.entry(0, 1) - b.entry(0, 1)) * (a.entry(1, 0) - b.entry(1, 0));
      if (det.is_zero()) {
        rep.ok = false;
        rep.i = static_cast<int>(i) + 1;
        rep.j = static_cast<int>(j) + 1;
        rep.what = "A_" + std::to_string(rep.i) + " - A_" + std::to_string(rep.j) + " is singular";
        return rep;
      }
    }
  }
  rep.what = "ok";
  return rep;
}

}  // namespace sparsedom
