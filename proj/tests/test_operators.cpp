#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sparsedom/operators.hpp"

using namespace sparsedom;

constexpr double kInf = KernelSpec::kInfRIndex;

namespace {

GridFunction indicator(const Grid& g, const Cube& q) {
  GridFunction f(g);
  CellRange r;
  REQUIRE(cube_to_range(g, q, &r));
  int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) f.at(ix, iy) = 1.0;
  return f;
}

// independent brute-force maximal oracle (n = 1): loops every grid-aligned
// interval directly, no prefix sums, no family machinery
double brute_maximal_at(const GridFunction& f, double alpha, double s, int cell) {
  const Grid& g = f.grid();
  int n = g.cells_per_axis();
  double h = g.cell_side().to_double();
  double best = 0.0;
  for (int i = 0; i <= cell; ++i)
    for (int j = cell + 1; j <= n; ++j) {
      double len = (j - i) * h;
      double acc = 0.0;
      for (int k = i; k < j; ++k) acc += std::pow(std::fabs(f.at(k)), s) * h;
      best = std::max(best, std::pow(len, alpha) * std::pow(acc / len, 1.0 / s));
    }
  return best;
}

OperatorSpec two_kernel_spec(double alpha, double a1, double a2) {
  OperatorSpec spec;
  spec.dim = 1;
  spec.alpha = alpha;
  spec.s = 1.0;
  spec.kernels = {KernelSpec::power(a1, kInf), KernelSpec::power(a2, kInf)};
  spec.maps = {LinearMap::scalar(1, Rational(-1)), LinearMap::identity(1)};
  spec.alpha_i = {a1, a2};
  spec.r_i = {kInf, kInf};
  return spec;
}

}  // namespace

TEST_CASE("fractional maximal against the brute-force oracle") {
  Grid g(1, 2, 4);  // box [-4,4), h = 1/16
  GridFunction f = indicator(g, Cube(Rational(0), Rational(1)));
  CubeFamily fam = interval_family(g);

  GridFunction m = fractional_maximal(f, 0.0, 1.0, fam);
  // the cell containing x = 2
  int cell2 = g.axis_index(Rational(2));
  double oracle = brute_maximal_at(f, 0.0, 1.0, cell2);
  CHECK(m.at(cell2) == doctest::Approx(oracle).epsilon(1e-12));
  // limit value 1/(2+h) as the best interval is [0, right edge of the cell)
  double h = g.cell_side().to_double();
  CHECK(oracle == doctest::Approx(1.0 / (2.0 + h)).epsilon(1e-12));

  // alpha = 1/2: optimum at Q = [0,1), value 1, for x inside [0,1)
  GridFunction mh = fractional_maximal(f, 0.5, 1.0, fam);
  int cell_half = g.axis_index(Rational(1, 2));
  double oracle_h = brute_maximal_at(f, 0.5, 1.0, cell_half);
  CHECK(mh.at(cell_half) == doctest::Approx(oracle_h).epsilon(1e-12));
  CHECK(oracle_h == doctest::Approx(1.0).epsilon(1e-12));

  GridFunction zero(g);
  GridFunction mz = fractional_maximal(zero, 0.25, 2.0, fam);
  for (double v : mz.values()) CHECK(v == 0.0);
}

TEST_CASE("maximal operator grows with the family") {
  Grid g(1, 1, 4);
  GridFunction f(g);
  std::uint64_t state = 17;
  for (auto& v : f.values()) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(state >> 40) / static_cast<double>(1 << 24);
  }
  auto lattices = make_shifted_lattices(1, 4, g.box());
  CubeFamily single = single_lattice_family(lattices[1]);
  CubeFamily unionf = lattice_union_family(g, 4);
  CubeFamily all = interval_family(g);
  GridFunction m1 = fractional_maximal(f, 0.0, 1.0, single);
  GridFunction m2 = fractional_maximal(f, 0.0, 1.0, unionf);
  GridFunction m3 = fractional_maximal(f, 0.0, 1.0, all);
  for (int i = 0; i < g.cells_per_axis(); ++i) {
    CHECK(m1.at(i) <= m2.at(i) + 1e-15);
    // the union family at depth 4 stops above cell scale; extend to full
  }
  CubeFamily unionfull = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
  GridFunction m2f = fractional_maximal(f, 0.0, 1.0, unionfull);
  for (int i = 0; i < g.cells_per_axis(); ++i) CHECK(m2f.at(i) <= m3.at(i) + 1e-15);
}

TEST_CASE("composed maximal operators") {
  Grid g(1, 2, 4);
  CubeFamily fam = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
  GridFunction f = indicator(g, Cube(Rational(0), Rational(1)));

  GridFunction plain = fractional_maximal(f, 0.0, 1.0, fam);
  GridFunction composed_id = composed_maximal(f, 0.0, 1.0, LinearMap::identity(1), fam);
  for (size_t i = 0; i < plain.values().size(); ++i)
    CHECK(composed_id.values()[i] == plain.values()[i]);

  // even f: reflection leaves the maximal function unchanged
  GridFunction even(g);
  for (int i = 0; i < g.cells_per_axis(); ++i) {
    double x = g.cell_center(i)[0].to_double();
    even.at(i) = std::exp(-x * x);
  }
  LinearMap neg = LinearMap::scalar(1, Rational(-1));
  GridFunction m_even = fractional_maximal(even, 0.0, 1.0, fam);
  GridFunction m_comp = composed_maximal(even, 0.0, 1.0, neg, fam);
  // reflection maps cell i to cell n-1-i; values agree up to that pairing
  int n = g.cells_per_axis();
  for (int i = 0; i < n; ++i) CHECK(m_comp.at(i) == doctest::Approx(m_even.at(n - 1 - i)));

  // M_{0,-I} f at the cell of -2 equals M f at the reflected cell [2-h, 2),
  // where the best interval is [0,2) with average exactly 1/2
  GridFunction mf = fractional_maximal(f, 0.0, 1.0, fam);
  GridFunction mc = composed_maximal(f, 0.0, 1.0, neg, fam);
  int cell_m2 = g.axis_index(Rational(-2));
  for (int i = 0; i < n; ++i) CHECK(mc.at(i) == doctest::Approx(mf.at(n - 1 - i)));
  CHECK(mc.at(cell_m2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("delta smoothed maximal") {
  Grid g(1, 1, 4);
  CubeFamily fam = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
  GridFunction c(g, 2.5);
  GridFunction m = delta_smoothed_maximal(c, 0.5, fam);
  for (double v : m.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

  GridFunction e = indicator(g, Cube(Rational(0), Rational(1)));
  double delta = 0.5;
  GridFunction md = delta_smoothed_maximal(e, delta, fam);
  GridFunction m1 = fractional_maximal(e.pow(delta), 0.0, 1.0, fam);
  for (size_t i = 0; i < md.values().size(); ++i)
    CHECK(md.values()[i] == doctest::Approx(std::pow(m1.values()[i], 1.0 / delta)).epsilon(1e-12));

  GridFunction zero(g);
  GridFunction mz = delta_smoothed_maximal(zero, 0.7, fam);
  for (double v : mz.values()) CHECK(v == 0.0);
}

TEST_CASE("apply_T reproduces the analytic two-kernel integral at the origin") {
  // T f(0) = integral_1^2 y^{alpha-1} dy = (2^alpha - 1)/alpha for
  // k_i = |.|^{-alpha_i}, A = {-I, I}, f = chi_[1,2)
  double alpha = 0.5;
  OperatorSpec spec = two_kernel_spec(alpha, 0.25, 0.25);
  double expected = (std::pow(2.0, alpha) - 1.0) / alpha;
  double prev_err = 1e9;
  for (int L : {4, 6, 8}) {
    Grid g(1, 2, L);
    GridFunction f = indicator(g, Cube(Rational(1), Rational(1)));
    GridFunction tf = apply_T(spec, f);
    // the origin is a cell boundary; average the two adjacent cells
    int right = g.axis_index(Rational(0));
    double val = 0.5 * (tf.at(right) + tf.at(right - 1));
    double err = std::fabs(val - expected);
    CHECK(err < prev_err + 1e-12);
    prev_err = err;
  }
  CHECK(prev_err < 2e-3);
}

TEST_CASE("apply_T of the zero function vanishes") {
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 4);
  GridFunction zero(g);
  GridFunction tf = apply_T(spec, zero);
  for (double v : tf.values()) CHECK(v == 0.0);
}

TEST_CASE("single-kernel T dominates the fractional-integral lower bound on cubes") {
  // m = 1, A = I, k = |x|^{alpha-n}: on f = chi_Q, T f(x) >= |Q|^{alpha/n}
  // pointwise on Q up to the quadrature regularization
  double alpha = 0.5;
  OperatorSpec spec;
  spec.dim = 1;
  spec.alpha = alpha;
  spec.s = 2.0;  // 1/r + 1/s = 1 with r = 2
  spec.kernels = {KernelSpec::power(1.0 - alpha, 2.0)};
  spec.maps = {LinearMap::identity(1)};
  spec.alpha_i = {1.0 - alpha};
  spec.r_i = {2.0};
  Grid g(1, 1, 6);
  Cube q(Rational(0), Rational(1));
  GridFunction f = indicator(g, q);
  GridFunction tf = apply_T(spec, f);
  CellRange r;
  cube_to_range(g, q, &r);
  for (int i = r.lo[0]; i < r.hi[0]; ++i) {
    // brute lower bound: |x-y| <= 1 on Q so the kernel is >= 1 there
    CHECK(tf.at(i) >= std::pow(q.volume().to_double(), alpha) - 1e-9);
  }
}

TEST_CASE("apply_T is linear") {
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 5);
  GridFunction f(g), h(g);
  std::uint64_t state = 5;
  for (int i = 0; i < g.cells_per_axis(); ++i) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    f.at(i) = static_cast<double>(state >> 40) / static_cast<double>(1 << 24) - 0.3;
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    h.at(i) = static_cast<double>(state >> 40) / static_cast<double>(1 << 24);
  }
  double a = 1.75, b = -0.5;
  GridFunction combo(g);
  for (int i = 0; i < g.cells_per_axis(); ++i) combo.at(i) = a * f.at(i) + b * h.at(i);
  GridFunction t1 = apply_T(spec, combo);
  GridFunction tf = apply_T(spec, f);
  GridFunction th = apply_T(spec, h);
  double scale = 0.0;
  for (double v : t1.values()) scale = std::max(scale, std::fabs(v));
  for (size_t i = 0; i < t1.values().size(); ++i) {
    double lin = a * tf.values()[i] + b * th.values()[i];
    CHECK(std::fabs(t1.values()[i] - lin) <= 1e-12 * std::max(scale, 1.0));
  }
}

TEST_CASE("apply_T refuses oversized grids without the override") {
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 2, 13);  // 2^16 cells
  GridFunction f(g);
  CHECK_THROWS_AS(apply_T(spec, f), BudgetError);
}

TEST_CASE("grand maximal of the zero function is zero") {
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 4);
  GridFunction zero(g);
  Cube root(Rational(-1), Rational(1));
  GridFunction m = grand_maximal_truncated_local(spec, zero, {root, root});
  for (double v : m.values()) CHECK(v == 0.0);
}

TEST_CASE("support inside every tuple triple cancels the truncation") {
  // f supported so close to the roots that even cell-level triples cover it:
  // with Q_i the root itself the cutoff region is empty, and smaller tuples
  // still remove all of supp f, so the sup is 0
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 4);
  Cube root(Rational(-2), Rational(4));  // the whole box as diagonal root
  GridFunction f = indicator(g, root);   // supp f = root
  GridFunction m = grand_maximal_truncated_local(spec, f, {root, root});
  // tuples = ancestors of the cells of A_i^{-1}x; the root tuple always
  // cancels, but smaller tuples keep mass, so just check finiteness and the
  // degenerate all-root case via a function supported nowhere outside cells
  GridFunction g0(g);
  GridFunction m0 = grand_maximal_truncated_local(spec, g0, {root, root});
  for (double v : m0.values()) CHECK(v == 0.0);
  for (double v : m.values()) CHECK(v >= 0.0);
}

TEST_CASE("far-support value equals the max of |Tf| over the root") {
  // roots = [0,1) diagonal; f supported in [-1,-7/8): inside 3Q_0 = [-1,2)
  // but outside 3Q for every proper subcube Q of the root chains, so every
  // proper tuple sees the full Tf
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 4);
  Cube root(Rational(0), Rational(1));
  GridFunction f = indicator(g, Cube(Rational(-1), Rational(1, 8)));
  TruncationCache cache(spec, f);
  GridFunction m = grand_maximal_truncated_local(spec, f, {root, root}, &cache);
  GridFunction tf = apply_T(spec, f);
  // max |T f| over the root cells
  CellRange rr;
  cube_to_range(g, root, &rr);
  double tmax = 0.0;
  for (int i = rr.lo[0]; i < rr.hi[0]; ++i) tmax = std::max(tmax, std::fabs(tf.at(i)));
  // at x deep inside the root with both twisted points inside, the halves
  // tuples dominate and reach every root cell
  int probe = g.axis_index(Rational(1, 2));
  if (LinearMap::scalar(1, Rational(-1)).apply(g.cell_center(probe))[0] >= Rational(0)) {
    // reflection must also lie in the root for a nonempty chain; pick x near 0+
  }
  double got = 0.0;
  for (int i = rr.lo[0]; i < rr.hi[0]; ++i) got = std::max(got, m.at(i));
  CHECK(got == doctest::Approx(tmax).epsilon(1e-9));
}

TEST_CASE("the all-intervals family refuses oversized grids") {
  Grid g(1, 2, 9);  // 2^12 cells per axis
  CHECK_THROWS_AS(interval_family(g), BudgetError);
}

TEST_CASE("a single-cell root admits only the cancelling tuple") {
  // the only admissible tuple is the root itself, whose cutoff region is
  // empty, so the operator vanishes identically
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 4);
  Cube cell = g.cell_cube(g.axis_index(Rational(0)));
  GridFunction f(g);
  std::uint64_t state = 77;
  for (auto& v : f.values()) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(state >> 40) / static_cast<double>(1 << 24);
  }
  GridFunction m = grand_maximal_truncated_local(spec, f, {cell, cell});
  for (double v : m.values()) CHECK(v == 0.0);
}

TEST_CASE("operator specs reject broken exponent bookkeeping") {
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  spec.alpha_i = {0.3, 0.3};  // sum != n - alpha
  CHECK_THROWS(spec.validate());
  spec = two_kernel_spec(0.5, 0.25, 0.25);
  spec.maps = {LinearMap::identity(1), LinearMap::identity(1)};  // (H) fails
  CHECK_THROWS(spec.validate());
  spec = two_kernel_spec(0.5, 0.25, 0.25);
  spec.r_i = {4.0, 4.0};  // 1/4 + 1/4 + 1/s != 1 at s = 1
  CHECK_THROWS(spec.validate());
}

TEST_CASE("the truncation cache over the full box reproduces the dense quadrature") {
  // two independent summation orders over the same kernel matrix
  OperatorSpec spec = two_kernel_spec(0.5, 0.25, 0.25);
  Grid g(1, 1, 6);
  GridFunction f(g);
  std::uint64_t state = 1234;
  for (auto& v : f.values()) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(state >> 40) / static_cast<double>(1 << 24) - 0.2;
  }
  GridFunction tf = apply_T(spec, f);
  TruncationCache cache(spec, f);
  CellRange full;
  full.lo[0] = 0;
  full.hi[0] = g.cells_per_axis();
  full.lo[1] = 0;
  full.hi[1] = 1;
  double scale = 0.0;
  for (double v : tf.values()) scale = std::max(scale, std::fabs(v));
  for (int i = 0; i < g.cells_per_axis(); ++i)
    CHECK(std::fabs(cache.partial(i, full) - tf.at(i)) <= 1e-12 * scale);
}
