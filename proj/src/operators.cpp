#include "sparsedom/operators.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sparsedom {

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  unsigned hw = std::thread::hardware_concurrency();
  std::int64_t nthreads = std::clamp<std::int64_t>(hw ? hw : 1, 1, 16);
  if (n < 256 || nthreads == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> ts;
  std::int64_t chunk = (n + nthreads - 1) / nthreads;
  for (std::int64_t t = 0; t < nthreads; ++t) {
    std::int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    ts.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : ts) t.join();
}

CubeFamily reference_family(const Grid& g, int depth) {
  if (depth < 0 || depth > g.box_exp + g.cell_exp + 1)
    throw std::invalid_argument("reference_family: depth not resolvable on the grid");
  CubeFamily fam;
  fam.cubes = reference_cubes(g.box(), depth);
  fam.descriptor = "reference(depth=" + std::to_string(depth) + ")";
  return fam;
}

CubeFamily lattice_union_family(const Grid& g, int depth) {
  if (depth < 1 || depth > g.box_exp + g.cell_exp + 1)
    throw std::invalid_argument("lattice_union_family: depth not resolvable on the grid");
  CubeFamily fam;
  auto lattices = make_shifted_lattices(g.dim, depth, g.box());
  for (const auto& lat : lattices) {
    auto cs = lat.cubes();
    fam.cubes.insert(fam.cubes.end(), cs.begin(), cs.end());
  }
  auto ref = reference_cubes(g.box(), depth);
  fam.cubes.insert(fam.cubes.end(), ref.begin(), ref.end());
  fam.descriptor = "lattice-union(depth=" + std::to_string(depth) + ")";
  return fam;
}

CubeFamily single_lattice_family(const DyadicLattice& lat) {
  CubeFamily fam;
  fam.cubes = lat.cubes();
  fam.descriptor = "lattice(tag=" + std::to_string(lat.tag()) + ",depth=" +
                   std::to_string(lat.depth()) + ")";
  return fam;
}

CubeFamily interval_family(const Grid& g, int max_cells) {
  if (g.dim != 1) throw std::invalid_argument("interval_family: defined for n = 1 only");
  int n = g.cells_per_axis();
  if (n > max_cells)
    throw BudgetError("interval_family: " + std::to_string(n) +
                      " cells per axis exceeds the budget of " + std::to_string(max_cells));
  CubeFamily fam;
  Rational h = g.cell_side();
  Rational lo0 = -g.half_width();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j <= n; ++j)
      fam.cubes.push_back(Cube(lo0 + Rational(i) * h, Rational(j - i) * h));
  fam.descriptor = "all-intervals";
  return fam;
}

GridFunction fractional_maximal(const GridFunction& f, double alpha, double s,
                                const CubeFamily& family) {
  const Grid& g = f.grid();
  if (family.cubes.empty()) throw std::invalid_argument("fractional_maximal: empty cube family");
  if (!(alpha >= 0.0) || alpha >= g.dim)
    throw std::invalid_argument("fractional_maximal: need 0 <= alpha < n");
  if (!(s >= 1.0)) throw std::invalid_argument("fractional_maximal: need s >= 1");
  GridFunction out(g);
  const bool s_inf = (s == kInfExponent);
  std::unique_ptr<FieldPrefix> prefix;
  if (!s_inf)
    prefix = std::make_unique<FieldPrefix>(f, [s](double x) { return std::pow(std::fabs(x), s); });
  double cellvol = g.cell_volume();
  for (const Cube& q : family.cubes) {
    CellRange r;
    if (!cube_to_range(g, q, &r))
      throw std::invalid_argument("fractional_maximal: family cube " + q.str() +
                                  " is not cell-aligned");
    if (r.empty(g.dim)) continue;
    double vol = q.volume().to_double();
    double val;
    if (s_inf) {
      val = lr_average(f, q, kInfExponent);
    } else {
      double avg = prefix->cell_sum(r) * cellvol / vol;
      val = std::pow(avg, 1.0 / s);
    }
    val *= std::pow(vol, alpha / g.dim);
    int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) {
        double& o = out.at(ix, iy);
        o = std::max(o, val);
      }
  }
  return out;
}

GridFunction composed_maximal(const GridFunction& f, double alpha, double s, const LinearMap& A,
                              const CubeFamily& family, bool allow_resample) {
  GridFunction m = fractional_maximal(f, alpha, s, family);
  return pullback(m, A.inverse(), allow_resample).value;
}

GridFunction delta_smoothed_maximal(const GridFunction& g, double delta, const CubeFamily& family) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("delta_smoothed_maximal: need delta in (0,1)");
  GridFunction powered = g.pow(delta);
  GridFunction m = fractional_maximal(powered, 0.0, 1.0, family);
  return m.pow(1.0 / delta);
}

void OperatorSpec::validate() const {
  size_t mm = kernels.size();
  if (mm == 0) throw std::invalid_argument("OperatorSpec: needs at least one kernel");
  if (maps.size() != mm || alpha_i.size() != mm || r_i.size() != mm)
    throw std::invalid_argument("OperatorSpec: kernel/map/exponent counts disagree");
  if (!(alpha >= 0.0) || alpha >= dim) throw std::invalid_argument("OperatorSpec: need 0 <= alpha < n");
  if (!(s >= 1.0)) throw std::invalid_argument("OperatorSpec: need s >= 1");
  double asum = 0.0, rsum = 1.0 / s;
  for (size_t i = 0; i < mm; ++i) {
    if (maps[i].dim() != dim) throw std::invalid_argument("OperatorSpec: map dimension mismatch");
    if (!(alpha_i[i] > 0.0) || alpha_i[i] >= dim)
      throw std::invalid_argument("OperatorSpec: kernel exponents must lie in (0, n)");
    asum += alpha_i[i];
    if (r_i[i] != KernelSpec::kInfRIndex) rsum += 1.0 / r_i[i];
  }
  if (std::fabs(asum - (dim - alpha)) > 1e-12)
    throw std::invalid_argument("OperatorSpec: kernel exponents must sum to n - alpha");
  if (std::fabs(rsum - 1.0) > 1e-12)
    throw std::invalid_argument("OperatorSpec: 1/r_1 + ... + 1/r_m + 1/s must equal 1");
  auto rep = check_hypothesis_h(maps);
  if (!rep.ok) throw std::invalid_argument("OperatorSpec: hypothesis (H) fails: " + rep.what);
}

namespace {

void check_budget(const Grid& g, bool override_budget, const char* who) {
  if (override_budget) return;
  std::int64_t limit = g.dim == 1 ? (1 << 14) : 96 * 96;
  if (g.cell_count() > limit)
    throw BudgetError(std::string(who) + ": " + std::to_string(g.cell_count()) +
                      " cells exceed the dense quadrature budget of " + std::to_string(limit) +
                      " (pass override_budget to proceed)");
}

// Flattened kernel data for the dense quadrature inner loops: one exp of an
// accumulated log instead of one pow per power-profile factor.
struct KernelEval {
  struct Factor {
    double a00, a01, a10, a11;  // map entries as doubles
    bool power;
    double exponent;
    double ball_avg;
    const KernelSpec* spec;
  };
  std::vector<Factor> factors;
  double rho0;
  int dim;

  KernelEval(const OperatorSpec& spec, const Grid& g) : rho0(0.5 * g.cell_side().to_double()),
                                                        dim(g.dim) {
    for (int i = 0; i < spec.m(); ++i) {
      const LinearMap& A = spec.maps[i];
      Factor f{};
      f.a00 = A.entry(0, 0).to_double();
      f.a01 = g.dim == 2 ? A.entry(0, 1).to_double() : 0.0;
      f.a10 = g.dim == 2 ? A.entry(1, 0).to_double() : 0.0;
      f.a11 = g.dim == 2 ? A.entry(1, 1).to_double() : 0.0;
      f.power = spec.kernels[i].profile() == KernelSpec::Profile::power;
      f.exponent = spec.kernels[i].exponent();
      f.ball_avg = spec.kernels[i].ball_average(rho0, g.dim);
      f.spec = &spec.kernels[i];
      factors.push_back(f);
    }
  }

  double operator()(double xx, double xy, double yx, double yy) const {
    double log_acc = 0.0;
    double direct = 1.0;
    bool any_log = false;
    for (const Factor& f : factors) {
      double d;
      if (dim == 1) {
        d = std::fabs(xx - f.a00 * yx);
      } else {
        double ax = f.a00 * yx + f.a01 * yy;
        double ay = f.a10 * yx + f.a11 * yy;
        d = std::hypot(xx - ax, xy - ay);
      }
      if (d < rho0) {
        direct *= f.ball_avg;
      } else if (f.power) {
        log_acc += f.exponent * std::log(d);
        any_log = true;
      } else {
        direct *= f.spec->eval(d);
      }
    }
    return any_log ? direct * std::exp(-log_acc) : direct;
  }
};

}  // namespace

GridFunction apply_T(const OperatorSpec& spec, const GridFunction& f, bool override_budget) {
  spec.validate();
  const Grid& g = f.grid();
  if (spec.dim != g.dim) throw std::invalid_argument("apply_T: dimension mismatch");
  check_budget(g, override_budget, "apply_T");
  GridFunction out(g);
  int n = g.cells_per_axis();
  double vol = g.cell_volume();
  std::vector<double> cx(n);
  for (int i = 0; i < n; ++i) cx[i] = g.cell_center(i, 0)[0].to_double();
  KernelEval kernel(spec, g);
  std::int64_t total = g.cell_count();
  parallel_for(total, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      int ix = static_cast<int>(idx % n), iy = static_cast<int>(idx / n);
      double xx = cx[ix], xy = g.dim == 2 ? cx[iy] : 0.0;
      double acc = 0.0;
      if (g.dim == 1) {
        for (int jx = 0; jx < n; ++jx) {
          double fv = f.at(jx);
          if (fv != 0.0) acc += kernel(xx, 0.0, cx[jx], 0.0) * fv;
        }
      } else {
        for (int jy = 0; jy < n; ++jy)
          for (int jx = 0; jx < n; ++jx) {
            double fv = f.at(jx, jy);
            if (fv != 0.0) acc += kernel(xx, xy, cx[jx], cx[jy]) * fv;
          }
      }
      out.values()[static_cast<size_t>(idx)] = acc * vol;
    }
  });
  return out;
}

TruncationCache::TruncationCache(const OperatorSpec& spec, const GridFunction& f,
                                 bool override_budget)
    : spec_(spec), f_(f) {
  spec_.validate();
  if (spec_.dim != f_.grid().dim) throw std::invalid_argument("TruncationCache: dimension mismatch");
  check_budget(f_.grid(), override_budget, "TruncationCache");
  cells_ = f_.grid().cells_per_axis();
  if (f_.grid().dim == 1)
    build_columns();
  else
    rows_.resize(static_cast<size_t>(f_.grid().cell_count()));
}

void TruncationCache::build_columns() {
  const Grid& g = f_.grid();
  int n = cells_;
  double vol = g.cell_volume();
  std::vector<double> cx(n);
  for (int i = 0; i < n; ++i) cx[i] = g.cell_center(i, 0)[0].to_double();
  KernelEval kernel(spec_, g);
  col_.assign(static_cast<size_t>(n + 1) * n, 0.0);
  // col(b)[xi] = sum_{y < b} K(xi, y) f(y) vol; built boundary by boundary
  for (int b = 0; b < n; ++b) {
    const double* prev = col_.data() + static_cast<size_t>(b) * n;
    double* next = col_.data() + static_cast<size_t>(b + 1) * n;
    double fv = f_.at(b);
    if (fv == 0.0) {
      std::copy(prev, prev + n, next);
      continue;
    }
    double y = cx[b];
    for (int xi = 0; xi < n; ++xi) next[xi] = prev[xi] + kernel(cx[xi], 0.0, y, 0.0) * fv * vol;
  }
}

void TruncationCache::build_row(std::int64_t xi_flat) const {
  const Grid& g = f_.grid();
  int n = cells_;
  int ix = static_cast<int>(xi_flat % n), iy = static_cast<int>(xi_flat / n);
  Coord xc = g.cell_center(ix, iy);
  double xx = xc[0].to_double(), xy = xc[1].to_double();
  double vol = g.cell_volume();
  std::vector<double> cx(n);
  for (int i = 0; i < n; ++i) cx[i] = g.cell_center(i, 0)[0].to_double();
  KernelEval kernel(spec_, g);
  auto row = std::make_unique<double[]>(static_cast<size_t>(n + 1) * (n + 1));
  auto P = [&](int i, int j) -> double& { return row[static_cast<size_t>(j) * (n + 1) + i]; };
  for (int i = 0; i <= n; ++i) P(i, 0) = 0.0;
  for (int j = 0; j <= n; ++j) P(0, j) = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double fv = f_.at(i, j);
      double term = fv == 0.0 ? 0.0 : kernel(xx, xy, cx[i], cx[j]) * fv * vol;
      P(i + 1, j + 1) = term + P(i, j + 1) + P(i + 1, j) - P(i, j);
    }
  rows_[static_cast<size_t>(xi_flat)] = std::move(row);
}

void TruncationCache::ensure_rows(const CellRange& xi_range) {
  const Grid& g = f_.grid();
  if (g.dim == 1) return;  // columns are built up front
  int ylo = xi_range.lo[1], yhi = xi_range.hi[1];
  std::vector<std::int64_t> need;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = xi_range.lo[0]; ix < xi_range.hi[0]; ++ix) {
      std::int64_t fl = g.flat_index(ix, iy);
      if (!rows_[static_cast<size_t>(fl)]) need.push_back(fl);
    }
  parallel_for(static_cast<std::int64_t>(need.size()), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) build_row(need[static_cast<size_t>(i)]);
  });
}

double TruncationCache::partial(std::int64_t xi_flat, const CellRange& r) const {
  const Grid& g = f_.grid();
  if (r.empty(g.dim)) return 0.0;
  if (g.dim == 1)
    return column(r.hi[0])[xi_flat] - column(r.lo[0])[xi_flat];
  if (!rows_[static_cast<size_t>(xi_flat)]) build_row(xi_flat);
  const double* row = rows_[static_cast<size_t>(xi_flat)].get();
  int n = cells_;
  auto P = [&](int i, int j) { return row[static_cast<size_t>(j) * (n + 1) + i]; };
  return P(r.hi[0], r.hi[1]) - P(r.lo[0], r.hi[1]) - P(r.hi[0], r.lo[1]) + P(r.lo[0], r.lo[1]);
}

namespace {

// cell range of a cube clamped to the box, which must be aligned
CellRange range_of(const Grid& g, const Cube& q, const char* who) {
  CellRange r;
  if (!cube_to_range(g, q, &r))
    throw std::invalid_argument(std::string(who) + ": cube " + q.str() + " is not cell-aligned");
  return r;
}

CellRange intersect(const CellRange& a, const CellRange& b, int dim) {
  CellRange r;
  for (int ax = 0; ax < 2; ++ax) {
    r.lo[ax] = std::max(a.lo[ax], b.lo[ax]);
    r.hi[ax] = std::min(a.hi[ax], b.hi[ax]);
  }
  if (dim == 1) {
    r.lo[1] = 0;
    r.hi[1] = 1;
  }
  return r;
}

// Signed cell ranges whose partial sums add up to T(f chi_region)(xi) for
// region = (∪ bases) \ (∪ cuts); precomputed once per tuple. In n = 1 the
// region is decomposed into disjoint segments; in n = 2 the bases must have
// collapsed to a single range and the cuts enter by inclusion-exclusion.
using SignedRanges = std::vector<std::pair<CellRange, double>>;

SignedRanges region_terms(int dim, std::span<const CellRange> bases,
                          std::span<const CellRange> cuts) {
  SignedRanges terms;
  if (dim == 1) {
    std::vector<std::pair<int, int>> segs;
    for (const CellRange& b : bases)
      if (b.hi[0] > b.lo[0]) segs.push_back({b.lo[0], b.hi[0]});
    std::sort(segs.begin(), segs.end());
    std::vector<std::pair<int, int>> merged;
    for (auto& s : segs) {
      if (!merged.empty() && s.first <= merged.back().second)
        merged.back().second = std::max(merged.back().second, s.second);
      else
        merged.push_back(s);
    }
    for (const CellRange& c : cuts) {
      int clo = c.lo[0], chi = c.hi[0];
      if (chi <= clo) continue;
      std::vector<std::pair<int, int>> next;
      for (auto& s : merged) {
        if (chi <= s.first || s.second <= clo) {
          next.push_back(s);
          continue;
        }
        if (s.first < clo) next.push_back({s.first, clo});
        if (chi < s.second) next.push_back({chi, s.second});
      }
      merged.swap(next);
    }
    for (auto& s : merged) {
      CellRange r;
      r.lo[0] = s.first;
      r.hi[0] = s.second;
      r.lo[1] = 0;
      r.hi[1] = 1;
      terms.push_back({r, 1.0});
    }
    return terms;
  }
  const CellRange& base = bases[0];
  terms.push_back({base, 1.0});
  int k = static_cast<int>(cuts.size());
  for (int mask = 1; mask < (1 << k); ++mask) {
    CellRange r = base;
    for (int i = 0; i < k; ++i)
      if (mask & (1 << i)) r = intersect(r, cuts[i], 2);
    if (r.empty(2)) continue;
    terms.push_back({r, __builtin_popcount(static_cast<unsigned>(mask)) % 2 == 1 ? -1.0 : 1.0});
  }
  return terms;
}

// dyadic ancestors of the cell containing y within root (smallest first)
std::vector<Cube> ancestor_chain(const Grid& g, const Cube& root, const Coord& y) {
  std::vector<Cube> chain;
  if (!root.contains(y)) return chain;
  Rational h = g.cell_side();
  Cube cur;
  cur.dim = g.dim;
  cur.side = h;
  for (int a = 0; a < g.dim; ++a) {
    Rational rel = (y[a] - root.corner[a]) / h;
    cur.corner[a] = root.corner[a] + Rational(rel.floor()) * h;
  }
  chain.push_back(cur);
  while (!(cur.side == root.side)) {
    Rational side2 = cur.side * Rational(2);
    Cube parent;
    parent.dim = g.dim;
    parent.side = side2;
    for (int a = 0; a < g.dim; ++a) {
      Rational rel = (cur.corner[a] - root.corner[a]) / side2;
      parent.corner[a] = root.corner[a] + Rational(rel.floor()) * side2;
    }
    chain.push_back(parent);
    cur = parent;
  }
  return chain;
}

}  // namespace

void grand_maximal_truncated_local_on(const OperatorSpec& spec, const GridFunction& f,
                                      const std::vector<Cube>& roots, TruncationCache& cache,
                                      const CellRange& eval_range, GridFunction& out) {
  const Grid& g = f.grid();
  int m = spec.m();
  if (static_cast<int>(roots.size()) != m)
    throw std::invalid_argument("grand_maximal_truncated_local: need one root per kernel factor");
  for (const Cube& root : roots) {
    if (!g.box().contains_cube(root))
      throw std::invalid_argument("grand_maximal_truncated_local: root outside the grid box");
    (void)range_of(g, root, "grand_maximal_truncated_local");
  }

  // base region = union of the root triples (equal roots collapse to one range)
  std::vector<CellRange> base_ranges;
  for (const Cube& root : roots) {
    CellRange r = range_of(g, root.triple(), "grand_maximal_truncated_local");
    bool dup = false;
    for (auto& b : base_ranges)
      if (b.lo[0] == r.lo[0] && b.hi[0] == r.hi[0] && b.lo[1] == r.lo[1] && b.hi[1] == r.hi[1])
        dup = true;
    if (!dup) base_ranges.push_back(r);
  }
  if (g.dim == 2 && base_ranges.size() > 1)
    throw std::invalid_argument(
        "grand_maximal_truncated_local: distinct roots are supported in n = 1 only");

  std::vector<LinearMap> invs;
  invs.reserve(m);
  for (int i = 0; i < m; ++i) invs.push_back(spec.maps[i].inverse());

  // rows for every xi we may touch: the root cells
  for (const Cube& root : roots) cache.ensure_rows(range_of(g, root, "grand_maximal"));

  int exlo = eval_range.lo[0], exhi = eval_range.hi[0];
  int eylo = g.dim == 2 ? eval_range.lo[1] : 0, eyhi = g.dim == 2 ? eval_range.hi[1] : 1;
  std::int64_t span_x = exhi - exlo;
  std::int64_t total = span_x * (eyhi - eylo);
  if (total <= 0) return;

  parallel_for(total, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<std::vector<Cube>> chains(m);
    std::vector<std::vector<CellRange>> chain_rng(m), chain_cut(m);
    for (std::int64_t t = lo; t < hi; ++t) {
      int ix = exlo + static_cast<int>(t % span_x);
      int iy = eylo + static_cast<int>(t / span_x);
      Coord xc = g.cell_center(ix, iy);
      int active = 0;
      for (int i = 0; i < m; ++i) {
        Coord y = invs[i].apply(xc);
        chains[i] = ancestor_chain(g, roots[i], y);
        chain_rng[i].clear();
        chain_cut[i].clear();
        for (const Cube& q : chains[i]) {
          chain_rng[i].push_back(range_of(g, q, "grand_maximal"));
          chain_cut[i].push_back(range_of(g, q.triple(), "grand_maximal"));
        }
        if (!chains[i].empty()) ++active;
      }
      double best = 0.0;
      if (active > 0) {
        // iterate tuples over the product of chains (empty chains skipped)
        std::vector<int> idx, which;
        for (int i = 0; i < m; ++i)
          if (!chains[i].empty()) which.push_back(i);
        idx.assign(which.size(), 0);
        std::vector<CellRange> cuts(which.size());
        while (true) {
          double val = 0.0;
          for (size_t u = 0; u < which.size(); ++u) cuts[u] = chain_cut[which[u]][idx[u]];
          SignedRanges terms = region_terms(g.dim, base_ranges, cuts);
          if (!terms.empty()) {
            if (g.dim == 1) {
              // merged xi segments of the tuple cubes, streamed against the
              // prefix columns of the truncation region
              std::vector<std::pair<int, int>> xiseg;
              for (size_t u = 0; u < which.size(); ++u) {
                const CellRange& qr = chain_rng[which[u]][idx[u]];
                if (qr.hi[0] > qr.lo[0]) xiseg.push_back({qr.lo[0], qr.hi[0]});
              }
              std::sort(xiseg.begin(), xiseg.end());
              size_t w = 0;
              for (size_t uu = 1; uu < xiseg.size(); ++uu) {
                if (xiseg[uu].first <= xiseg[w].second)
                  xiseg[w].second = std::max(xiseg[w].second, xiseg[uu].second);
                else
                  xiseg[++w] = xiseg[uu];
              }
              if (!xiseg.empty()) xiseg.resize(w + 1);
              for (auto& [s0, s1] : xiseg) {
                // every n=1 term carries sign +1 (disjoint segments)
                if (terms.size() == 1) {
                  const double* hi1 = cache.column(terms[0].first.hi[0]);
                  const double* lo1 = cache.column(terms[0].first.lo[0]);
                  for (int xi = s0; xi < s1; ++xi)
                    val = std::max(val, std::fabs(hi1[xi] - lo1[xi]));
                } else {
                  for (int xi = s0; xi < s1; ++xi) {
                    double tv = 0.0;
                    for (const auto& [rng, sign] : terms)
                      tv += cache.column(rng.hi[0])[xi] - cache.column(rng.lo[0])[xi];
                    val = std::max(val, std::fabs(tv));
                  }
                }
              }
            } else {
              for (size_t u = 0; u < which.size(); ++u) {
                const CellRange& qr = chain_rng[which[u]][idx[u]];
                for (int jy = qr.lo[1]; jy < qr.hi[1]; ++jy)
                  for (int jx = qr.lo[0]; jx < qr.hi[0]; ++jx) {
                    bool seen = false;
                    for (size_t v = 0; v < u && !seen; ++v) {
                      const CellRange& pr = chain_rng[which[v]][idx[v]];
                      seen = jx >= pr.lo[0] && jx < pr.hi[0] && jy >= pr.lo[1] && jy < pr.hi[1];
                    }
                    if (seen) continue;
                    std::int64_t xi = g.flat_index(jx, jy);
                    double tv = 0.0;
                    for (const auto& [rng, sign] : terms) tv += sign * cache.partial(xi, rng);
                    val = std::max(val, std::fabs(tv));
                  }
              }
            }
          }
          best = std::max(best, val);
          // next tuple
          size_t u = 0;
          while (u < idx.size()) {
            if (++idx[u] < static_cast<int>(chains[which[u]].size())) break;
            idx[u] = 0;
            ++u;
          }
          if (u == idx.size()) break;
        }
      }
      out.at(ix, iy) = best;
    }
  });
}

GridFunction grand_maximal_truncated_local(const OperatorSpec& spec, const GridFunction& f,
                                           const std::vector<Cube>& roots, TruncationCache* cache) {
  const Grid& g = f.grid();
  GridFunction out(g);
  std::unique_ptr<TruncationCache> own;
  if (!cache) {
    own = std::make_unique<TruncationCache>(spec, f);
    cache = own.get();
  }
  CellRange all;
  all.lo[0] = 0;
  all.hi[0] = g.cells_per_axis();
  all.lo[1] = 0;
  all.hi[1] = g.dim == 2 ? g.cells_per_axis() : 1;
  grand_maximal_truncated_local_on(spec, f, roots, *cache, all, out);
  return out;
}

}  // namespace sparsedom
