#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "sparsedom/sparse.hpp"

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

OperatorSpec two_kernel_spec(double alpha, const LinearMap& a1, const LinearMap& a2) {
  double ai = (1.0 - alpha) / 2.0;
  OperatorSpec spec;
  spec.dim = 1;
  spec.alpha = alpha;
  spec.s = 1.0;
  spec.kernels = {KernelSpec::power(ai, kInf), KernelSpec::power(ai, kInf)};
  spec.maps = {a1, a2};
  spec.alpha_i = {ai, ai};
  spec.r_i = {kInf, kInf};
  return spec;
}

GridFunction random_nonneg(const Grid& g, std::uint64_t seed) {
  GridFunction f(g);
  std::uint64_t state = seed;
  for (auto& v : f.values()) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(state >> 40) / static_cast<double>(1 << 24);
  }
  return f;
}

}  // namespace

TEST_CASE("sparse apply on a single cube") {
  Grid g(1, 1, 4);
  Cube q(Rational(0), Rational(1));
  SparseFamily S;
  S.cubes = {q};
  GridFunction f = indicator(g, q);
  double alpha = 0.5;
  GridFunction out = sparse_apply(S, f, alpha, 1.0, LinearMap::identity(1));
  CellRange r;
  cube_to_range(g, q, &r);
  for (int i = 0; i < g.cells_per_axis(); ++i) {
    if (i >= r.lo[0] && i < r.hi[0])
      CHECK(out.at(i) == doctest::Approx(std::pow(q.volume().to_double(), alpha)).epsilon(1e-12));
    else
      CHECK(out.at(i) == 0.0);
  }
}

TEST_CASE("nested chains produce the closed-form geometric sum") {
  Grid g(1, 1, 5);
  double alpha = 0.5;
  SparseFamily S;
  std::vector<Cube> chain;
  Rational side(2);
  for (int k = 0; k < 4; ++k) {
    chain.push_back(Cube(Rational(0), side));
    side = side / Rational(2);
  }
  S.cubes = chain;
  GridFunction ones(g, 1.0);
  GridFunction out = sparse_apply(S, ones, alpha, 1.0, LinearMap::identity(1));
  // innermost cell: sum over the chain of |Q_k|^{alpha} with f == 1
  double expected = 0.0;
  for (const Cube& q : chain) expected += std::pow(q.volume().to_double(), alpha);
  int inner = g.axis_index(Rational(1, 16));
  CHECK(out.at(inner) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("reflected sparse apply is the reflection of the plain one") {
  Grid g(1, 1, 5);
  SparseFamily S;
  S.cubes = {Cube(Rational(0), Rational(1)), Cube(Rational(1, 2), Rational(1, 2)),
             Cube(Rational(-2), Rational(1))};
  GridFunction f = random_nonneg(g, 7);
  GridFunction plain = sparse_apply(S, f, 0.25, 1.0, LinearMap::identity(1));
  GridFunction refl = sparse_apply(S, f, 0.25, 1.0, LinearMap::scalar(1, Rational(-1)));
  int n = g.cells_per_axis();
  for (int i = 0; i < n; ++i) CHECK(refl.at(i) == doctest::Approx(plain.at(n - 1 - i)));
}

TEST_CASE("tilde sparse apply basics") {
  Grid g(1, 1, 4);
  Cube q(Rational(0), Rational(1));
  SparseFamily S;
  S.cubes = {q};
  GridFunction chi = indicator(g, q);
  GridFunction out = tilde_sparse_apply(S, chi, 1.0, 1.0);
  CellRange r;
  cube_to_range(g, q, &r);
  for (int i = r.lo[0]; i < r.hi[0]; ++i) CHECK(out.at(i) == doctest::Approx(1.0).epsilon(1e-12));

  GridFunction zero(g);
  GridFunction oz = tilde_sparse_apply(S, zero, 0.5, 1.0);
  for (double v : oz.values()) CHECK(v == 0.0);

  SparseFamily two;
  two.cubes = {Cube(Rational(-2), Rational(1)), Cube(Rational(1), Rational(1))};
  GridFunction f = random_nonneg(g, 3);
  GridFunction o2 = tilde_sparse_apply(two, f, 0.5, 0.75);
  SparseFamily left{-1, {two.cubes[0]}, {}, 0.5};
  SparseFamily right{-1, {two.cubes[1]}, {}, 0.5};
  GridFunction ol = tilde_sparse_apply(left, f, 0.5, 0.75);
  GridFunction orr = tilde_sparse_apply(right, f, 0.5, 0.75);
  for (int i = 0; i < g.cells_per_axis(); ++i)
    CHECK(o2.at(i) == doctest::Approx(ol.at(i) + orr.at(i)).epsilon(1e-12));
}

TEST_CASE("the sparse operator and its tilde rewrite agree to rounding") {
  Grid g(1, 1, 5);
  std::uint64_t seed = 11;
  for (int trial = 0; trial < 6; ++trial) {
    SparseFamily S;
    auto lattices = make_shifted_lattices(1, g.box_exp + g.cell_exp + 1, g.box());
    std::uint64_t state = seed + trial;
    for (const Cube& q : lattices[trial % 3].cubes()) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      if ((state >> 60) < 6 && g.box().contains_cube(q)) S.cubes.push_back(q);
    }
    if (S.cubes.empty()) S.cubes.push_back(Cube(Rational(0), Rational(1)));
    GridFunction f = random_nonneg(g, seed * 31 + trial);
    for (double r : {1.0, 2.0, 4.0}) {
      double alpha = trial % 2 == 0 ? 0.0 : 0.25;
      if (r * alpha >= 1.0) continue;
      CHECK(comp_sparse_check(S, f, alpha, r) <= 1e-12);
    }
  }
  // trivial cases
  SparseFamily single;
  single.cubes = {Cube(Rational(0), Rational(2))};
  GridFunction zero(g);
  CHECK(comp_sparse_check(single, zero, 0.25, 2.0) == 0.0);
  GridFunction ones(g, 1.0);
  GridFunction lhs = sparse_apply(single, ones, 0.5, 1.0, LinearMap::identity(1));
  int inside = g.axis_index(Rational(1));
  CHECK(lhs.at(inside) ==
        doctest::Approx(std::pow(2.0, 0.5)).epsilon(1e-12));  // both routes |Q|^{alpha}
}

TEST_CASE("sparsity audits") {
  Grid g(1, 1, 5);
  // pairwise disjoint cubes: eta = 1 with canonical witnesses
  SparseFamily disjoint;
  disjoint.cubes = {Cube(Rational(-2), Rational(1)), Cube(Rational(0), Rational(1)),
                    Cube(Rational(1), Rational(1))};
  SparsityAudit a = verify_sparsity(disjoint, 1.0, g);
  CHECK(a.ok);
  CHECK(a.min_ratio == doctest::Approx(1.0));

  // dyadic chain: canonical witnesses give exactly 1/2
  SparseFamily chain;
  chain.cubes = {Cube(Rational(0), Rational(1)), Cube(Rational(0), Rational(1, 2)),
                 Cube(Rational(0), Rational(1, 4))};
  SparsityAudit b = verify_sparsity(chain, 0.5, g);
  CHECK(b.ok);
  CHECK(b.min_ratio == doctest::Approx(0.5));

  // ratio-3/4 chain fails 1/2 but passes 1/4
  SparseFamily fat;
  fat.cubes = {Cube(Rational(0), Rational(2)), Cube(Rational(0), Rational(3, 2)),
               Cube(Rational(0), Rational(9, 8))};
  SparsityAudit c = verify_sparsity(fat, 0.5, g);
  CHECK(!c.ok);
  SparsityAudit d = verify_sparsity(fat, 0.25, g);
  CHECK(d.ok);
  CHECK(d.min_ratio == doctest::Approx(0.25));
}

TEST_CASE("calderon-zygmund decomposition") {
  Grid g(1, 1, 5);
  Cube root(Rational(-2), Rational(4));
  CellMask empty(g);
  CHECK(cz_decompose(empty, root, 0.25).empty());

  // single cell deep inside the root at height 1/4: the selected cube is the
  // ancestor at the smallest scale with |cell|/|P| > 1/4, i.e. |P| <= 2 cells
  CellMask one(g);
  int cell = g.axis_index(Rational(1, 2));
  one.set(cell, true);
  auto selected = cz_decompose(one, root, 0.25);
  REQUIRE(selected.size() == 1);
  CellRange r;
  cube_to_range(g, selected[0], &r);
  // oracle: walk the ancestors of the cell
  std::int64_t pcells = r.count(1);
  CHECK(1.0 / static_cast<double>(pcells) > 0.25);
  CHECK(2.0 / (2.0 * static_cast<double>(pcells)) <= 0.5);  // parent average <= height * 2^n
  CHECK(selected[0].contains_cube(g.cell_cube(cell)));

  // random masks satisfy the three postconditions
  std::uint64_t state = 23;
  for (int trial = 0; trial < 8; ++trial) {
    CellMask m(g);
    std::int64_t total = 0;
    for (int i = 0; i < g.cells_per_axis(); ++i) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      bool bit = (state >> 61) == 0;  // ~1/8 density
      if (bit) {
        m.set(i, true);
        ++total;
      }
    }
    CellRange rootr;
    cube_to_range(g, root, &rootr);
    std::int64_t in_root = m.count_in(rootr);
    double height = 0.25;
    if (static_cast<double>(in_root) > height * static_cast<double>(rootr.count(1))) {
      CHECK_THROWS(cz_decompose(m, root, height));
      continue;
    }
    auto sel = cz_decompose(m, root, height);
    std::int64_t covered = 0, sel_cells = 0;
    for (const Cube& p : sel) {
      CellRange pr;
      cube_to_range(g, p, &pr);
      std::int64_t cnt = m.count_in(pr);
      std::int64_t cells = pr.count(1);
      sel_cells += cells;
      covered += cnt;
      CHECK(static_cast<double>(cnt) > height * static_cast<double>(cells));   // selected
      CHECK(static_cast<double>(cnt) <= 2.0 * height * static_cast<double>(cells));  // parent bound
    }
    CHECK(covered == in_root);                                    // E \ ∪P null
    CHECK(static_cast<double>(sel_cells) <= static_cast<double>(in_root) / height + 1e-9);
  }
}

TEST_CASE("exceptional set: trivial cases") {
  Grid g(1, 1, 5);
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  Cube root(Rational(-2), Rational(4));
  SparseBuildParams params;
  GridFunction zero(g);
  CellMask e0 = exceptional_set(spec, zero, {root, root}, params);
  CHECK(e0.count() == 0);

  GridFunction f = random_nonneg(g, 5);
  SparseBuildParams huge;
  huge.gamma = 1e9;
  CellMask eh = exceptional_set(spec, f, {root, root}, huge);
  CHECK(eh.count() == 0);
}

TEST_CASE("builder certifies, audits pass, and homogeneity holds") {
  Grid g(1, 2, 5);  // 256 cells
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  GridFunction f = indicator(g, Cube(Rational(0), Rational(1, 4)));
  SparseBuildParams params;
  DominationCertificate cert = build_sparse_domination(spec, f, params);
  CHECK(cert.c_defined);
  CHECK(cert.c > 0.0);
  CHECK(cert.pre_audit.ok);
  CHECK(cert.pre_audit.min_ratio >= 0.5 - 1e-15);
  CHECK(cert.post_audit.ok);
  CHECK(cert.cz_audit.packing_ok);
  CHECK(cert.cz_audit.selection_ok);
  CHECK(cert.cz_audit.max_packing_ratio <= 1.0);
  CHECK(cert.cz_audit.max_selection_ratio <= 1.0 + 1e-12);

  // pointwise domination recheck from the certificate families
  GridFunction tf = apply_T(spec, f);
  GridFunction rhs(g);
  for (const SparseFamily& fam : cert.families)
    for (const LinearMap& A : spec.maps) {
      GridFunction part = sparse_apply(fam, f, spec.alpha, spec.s, A);
      for (size_t i = 0; i < rhs.values().size(); ++i) rhs.values()[i] += part.values()[i];
    }
  for (size_t i = 0; i < rhs.values().size(); ++i)
    CHECK(std::fabs(tf.values()[i]) <= cert.c * rhs.values()[i] * (1.0 + 1e-9) + 1e-300);

  // homogeneity: scaling f by 10 reproduces the same families and constant
  GridFunction f10 = f;
  for (auto& v : f10.values()) v *= 10.0;
  DominationCertificate cert10 = build_sparse_domination(spec, f10, params);
  CHECK(cert10.gamma == cert.gamma);
  REQUIRE(cert10.pre_family.cubes.size() == cert.pre_family.cubes.size());
  for (size_t i = 0; i < cert.pre_family.cubes.size(); ++i)
    CHECK(cert10.pre_family.cubes[i] == cert.pre_family.cubes[i]);
  CHECK(cert10.c == doctest::Approx(cert.c).epsilon(1e-12));
}

TEST_CASE("builder on the zero function flags an undefined constant") {
  Grid g(1, 1, 5);
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  GridFunction zero(g);
  DominationCertificate cert = build_sparse_domination(spec, zero, {});
  CHECK(!cert.c_defined);
  CHECK(cert.families.empty());
}

TEST_CASE("builder respects the budget guard") {
  Grid g(1, 2, 11);  // 2^14 cells > builder budget 2^12
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  GridFunction f(g);
  CHECK_THROWS_AS(build_sparse_domination(spec, f, {}), BudgetError);
}

TEST_CASE("constant spread over a small random suite stays within x10") {
  Grid g(1, 2, 5);
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  double cmin = 1e300, cmax = 0.0;
  for (int t = 0; t < 6; ++t) {
    GridFunction f = random_nonneg(g, 100 + t);
    DominationCertificate cert = build_sparse_domination(spec, f, {});
    REQUIRE(cert.c_defined);
    cmin = std::min(cmin, cert.c);
    cmax = std::max(cmax, cert.c);
  }
  CHECK(cmax / cmin <= 10.0);
}

TEST_CASE("certificates serialize with families and audits") {
  Grid g(1, 1, 5);
  OperatorSpec spec = two_kernel_spec(0.5, LinearMap::scalar(1, Rational(-1)),
                                      LinearMap::identity(1));
  GridFunction f = indicator(g, Cube(Rational(0), Rational(1, 2)));
  DominationCertificate cert = build_sparse_domination(spec, f, {});
  std::string path = "test_cert.txt";
  write_certificate(cert, g, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string first;
  std::getline(in, first);
  CHECK(first == "sparse-domination-certificate v1");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all.find("gamma") != std::string::npos);
  CHECK(all.find("families") != std::string::npos);
  in.close();

  // the stored structure re-verifies without the builder
  LoadedCertificate lc = load_certificate(path);
  CHECK(lc.grid == g);
  CHECK(lc.cert.gamma == cert.gamma);
  REQUIRE(lc.cert.families.size() == cert.families.size());
  std::string detail;
  CHECK(reverify_certificate(lc, &detail));
  // tampering with a witness breaks the re-audit
  bool tampered = false;
  for (auto& fam : lc.cert.families)
    for (auto& wmask : fam.witnesses)
      if (!tampered && wmask.count() > 0) {
        for (auto& b : wmask.raw()) b = 0;
        tampered = true;
      }
  if (tampered) CHECK(!reverify_certificate(lc, &detail));
  std::remove(path.c_str());
}

TEST_CASE("the builder certifies in two dimensions") {
  Grid g(2, 1, 2);  // 16 x 16
  OperatorSpec spec;
  spec.dim = 2;
  spec.alpha = 1.0;
  spec.s = 1.0;
  spec.kernels = {KernelSpec::power(0.5, kInf), KernelSpec::power(0.5, kInf)};
  spec.maps = {LinearMap::scalar(2, Rational(-1)), LinearMap::identity(2)};
  spec.alpha_i = {0.5, 0.5};
  spec.r_i = {kInf, kInf};
  GridFunction f(g);
  CellRange r;
  REQUIRE(cube_to_range(g, Cube(Rational(0), Rational(0), Rational(1)), &r));
  for (int iy = r.lo[1]; iy < r.hi[1]; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) f.at(ix, iy) = 1.0;
  DominationCertificate cert = build_sparse_domination(spec, f, {});
  CHECK(cert.c_defined);
  CHECK(cert.pre_audit.ok);
  CHECK(cert.post_audit.ok);
  CHECK(cert.cz_audit.packing_ok);
  CHECK(cert.cz_audit.selection_ok);
  // domination recheck
  GridFunction tf = apply_T(spec, f);
  GridFunction rhs(g);
  for (const SparseFamily& fam : cert.families)
    for (const LinearMap& A : spec.maps) {
      GridFunction part = sparse_apply(fam, f, spec.alpha, spec.s, A);
      for (size_t i = 0; i < rhs.values().size(); ++i) rhs.values()[i] += part.values()[i];
    }
  for (size_t i = 0; i < rhs.values().size(); ++i)
    CHECK(std::fabs(tf.values()[i]) <= cert.c * rhs.values()[i] * (1.0 + 1e-9) + 1e-300);
}
