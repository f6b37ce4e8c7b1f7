#include "sparsedom/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace sparsedom {

GridFunction sparse_apply(const SparseFamily& S, const GridFunction& f, double alpha, double s,
                          const LinearMap& A) {
  const Grid& g = f.grid();
  GridFunction out(g);
  if (S.cubes.empty()) return out;
  LinearMap Ainv = A.inverse();
  int n = g.cells_per_axis();
  // precompute per-cube coefficients, then test membership of A^{-1}x exactly
  std::vector<double> coef(S.cubes.size());
  for (size_t k = 0; k < S.cubes.size(); ++k) {
    const Cube& q = S.cubes[k];
    coef[k] = std::pow(q.volume().to_double(), alpha / g.dim) * lr_average(f, q, s);
  }
  parallel_for(g.cell_count(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t t = lo; t < hi; ++t) {
      int ix = static_cast<int>(t % n), iy = static_cast<int>(t / n);
      Coord y = Ainv.apply(g.cell_center(ix, iy));
      double acc = 0.0;
      for (size_t k = 0; k < S.cubes.size(); ++k)
        if (S.cubes[k].contains(y)) acc += coef[k];
      out.values()[static_cast<size_t>(t)] = acc;
    }
  });
  return out;
}

GridFunction tilde_sparse_apply(const SparseFamily& S, const GridFunction& g, double t,
                                double beta) {
  if (!(t > 0.0)) throw std::invalid_argument("tilde_sparse_apply: need t > 0");
  if (!(beta > 0.0) || beta > 1.0)
    throw std::invalid_argument("tilde_sparse_apply: need beta in (0,1]");
  const Grid& gr = g.grid();
  GridFunction acc(gr);
  for (const Cube& q : S.cubes) {
    double term = std::pow(std::pow(q.volume().to_double(), -beta) * integrate(g, q), t);
    CellRange r;
    if (!cube_to_range(gr, q, &r))
      throw std::invalid_argument("tilde_sparse_apply: cube not cell-aligned");
    int ylo = gr.dim == 2 ? r.lo[1] : 0, yhi = gr.dim == 2 ? r.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) acc.at(ix, iy) += term;
  }
  return acc.map([t](double x) { return x > 0.0 ? std::pow(x, 1.0 / t) : 0.0; });
}

double comp_sparse_check(const SparseFamily& S, const GridFunction& f, double alpha, double r) {
  for (double v : f.values())
    if (v < 0.0) throw std::invalid_argument("comp_sparse_check: f must be nonnegative");
  const Grid& g = f.grid();
  GridFunction lhs = sparse_apply(S, f, alpha, r, LinearMap::identity(g.dim));
  GridFunction fr = f.pow(r);
  // identity: A_{alpha,r,S} f = (tilde A_{1/r}^{1-r alpha/n} (f^r))^{1/r}
  GridFunction rhs = tilde_sparse_apply(S, fr, 1.0 / r, 1.0 - r * alpha / g.dim).pow(1.0 / r);
  double dev = 0.0;
  for (size_t i = 0; i < lhs.values().size(); ++i) {
    double a = lhs.values()[i];
    double b = rhs.values()[i];
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-300});
    dev = std::max(dev, std::fabs(a - b) / denom);
  }
  return dev;
}

namespace {

CellRange range_of_cube(const Grid& g, const Cube& q) {
  CellRange r;
  if (!cube_to_range(g, q, &r))
    throw std::invalid_argument("sparse: cube " + q.str() + " not cell-aligned");
  return r;
}

std::int64_t cells_of(const Grid& g, const Cube& q) { return range_of_cube(g, q).count(g.dim); }

void fill_range(CellMask& m, const CellRange& r, bool b) {
  const Grid& g = m.grid();
  int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) m.set(ix, iy, b);
}

}  // namespace

SparsityAudit verify_sparsity(const SparseFamily& S, double eta, const Grid& grid) {
  SparsityAudit audit;
  size_t n = S.cubes.size();
  if (n == 0) {
    audit.ok = true;
    audit.witnesses_contained = audit.witnesses_disjoint = true;
    audit.min_ratio = 1.0;
    audit.note = "empty family";
    return audit;
  }
  std::vector<CellMask> witnesses = S.witnesses;
  if (witnesses.empty()) {
    // canonical witnesses: Q minus the maximal members strictly inside Q
    witnesses.assign(n, CellMask(grid));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    for (size_t i = 0; i < n; ++i) {
      CellMask& w = witnesses[i];
      fill_range(w, range_of_cube(grid, S.cubes[i]), true);
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (S.cubes[i].contains_cube(S.cubes[j]) && !(S.cubes[i] == S.cubes[j])) {
          // subtract only the maximal ones; subtracting every strict member
          // yields the same set
          fill_range(w, range_of_cube(grid, S.cubes[j]), false);
        }
      }
    }
    audit.note = "canonical witnesses";
  } else if (witnesses.size() != n) {
    audit.note = "witness count mismatch";
    return audit;
  }
  audit.witnesses_contained = true;
  audit.min_ratio = 1.0;
  std::vector<std::int64_t> overlap(static_cast<size_t>(grid.cell_count()), 0);
  for (size_t i = 0; i < n; ++i) {
    CellRange qr = range_of_cube(grid, S.cubes[i]);
    std::int64_t qcells = qr.count(grid.dim);
    std::int64_t inside = witnesses[i].count_in(qr);
    std::int64_t total = witnesses[i].count();
    if (inside != total) audit.witnesses_contained = false;
    if (qcells > 0)
      audit.min_ratio = std::min(audit.min_ratio,
                                 static_cast<double>(total) / static_cast<double>(qcells));
    const auto& raw = witnesses[i].raw();
    for (size_t c = 0; c < raw.size(); ++c)
      if (raw[c]) ++overlap[c];
    ++audit.checked;
  }
  audit.witnesses_disjoint = true;
  for (auto v : overlap)
    if (v > 1) {
      audit.witnesses_disjoint = false;
      break;
    }
  audit.ok = audit.witnesses_contained && audit.witnesses_disjoint &&
             audit.min_ratio >= eta - 1e-15;
  return audit;
}

CellMask exceptional_set(const OperatorSpec& spec, const GridFunction& f,
                         const std::vector<Cube>& roots, const SparseBuildParams& params,
                         TruncationCache* cache) {
  const Grid& g = f.grid();
  double s = params.s > 0.0 ? params.s : spec.s;
  double gamma = params.gamma;
  std::unique_ptr<TruncationCache> own;
  if (!cache) {
    own = std::make_unique<TruncationCache>(spec, f, params.override_budget);
    cache = own.get();
  }
  // thresholds from the tripled roots
  double mt_threshold = 0.0;
  std::vector<double> f_thresholds(roots.size());
  for (size_t i = 0; i < roots.size(); ++i) {
    double norm3 = lr_average(f, roots[i].triple(), s);
    f_thresholds[i] = gamma * norm3;
    double vol3 = roots[i].triple().volume().to_double();
    mt_threshold += (spec.alpha > 0.0 ? std::pow(vol3, spec.alpha / g.dim) : 1.0) * norm3;
  }
  mt_threshold *= gamma;

  GridFunction mt(g);
  CellMask mask(g);
  for (size_t i = 0; i < roots.size(); ++i) {
    CellRange rr = range_of_cube(g, roots[i]);
    grand_maximal_truncated_local_on(spec, f, roots, *cache, rr, mt);
    int ylo = g.dim == 2 ? rr.lo[1] : 0, yhi = g.dim == 2 ? rr.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = rr.lo[0]; ix < rr.hi[0]; ++ix) {
        bool in = mt.at(ix, iy) > mt_threshold;
        if (spec.alpha == 0.0 && std::fabs(f.at(ix, iy)) > f_thresholds[i]) in = true;
        if (in) mask.set(ix, iy, true);
      }
  }
  return mask;
}

std::vector<Cube> cz_decompose(const CellMask& mask, const Cube& root, double height) {
  const Grid& g = mask.grid();
  if (!(height > 0.0 && height < 1.0)) throw std::invalid_argument("cz_decompose: height in (0,1)");
  CellRange rootr = range_of_cube(g, root);
  std::int64_t root_cells = rootr.count(g.dim);
  std::int64_t root_count = mask.count_in(rootr);
  if (static_cast<double>(root_count) > height * static_cast<double>(root_cells))
    throw std::invalid_argument(
        "cz_decompose: mask average over the root exceeds the height; tune thresholds first");
  std::vector<Cube> selected;
  if (root_count == 0) return selected;
  std::vector<Cube> stack{root};
  while (!stack.empty()) {
    Cube q = stack.back();
    stack.pop_back();
    for (const Cube& ch : dyadic_children(q)) {
      CellRange cr = range_of_cube(g, ch);
      std::int64_t cells = cr.count(g.dim);
      if (cells == 0) continue;
      std::int64_t cnt = mask.count_in(cr);
      if (cnt == 0) continue;
      if (static_cast<double>(cnt) > height * static_cast<double>(cells)) {
        selected.push_back(ch);
      } else if (cells > 1) {
        stack.push_back(ch);
      }
      // a single cell with average <= height has count == 0, handled above
    }
  }
  return selected;
}

namespace {

struct BuildNode {
  Cube cube;
  std::vector<size_t> children;
};

struct PackingFailure {};

struct BuildContext {
  const OperatorSpec& spec;
  const GridFunction& f;
  const SparseBuildParams& params;
  TruncationCache& cache;
  double gamma;
  double height;
  double s;
  std::vector<BuildNode> nodes;
  CzAudit audit;
  int max_depth_reached = 0;
  std::map<std::string, std::vector<double>> mt_memo;  // root cube -> M values on its range
};

// local grand maximal values on the cells of root, memoized across gamma retries
const std::vector<double>& local_mt(BuildContext& ctx, const Cube& root) {
  std::string key = root.str();
  auto it = ctx.mt_memo.find(key);
  if (it != ctx.mt_memo.end()) return it->second;
  const Grid& g = ctx.f.grid();
  CellRange rr = range_of_cube(g, root);
  GridFunction scratch(g);
  std::vector<Cube> roots(static_cast<size_t>(ctx.spec.m()), root);
  grand_maximal_truncated_local_on(ctx.spec, ctx.f, roots, ctx.cache, rr, scratch);
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(rr.count(g.dim)));
  int ylo = g.dim == 2 ? rr.lo[1] : 0, yhi = g.dim == 2 ? rr.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = rr.lo[0]; ix < rr.hi[0]; ++ix) vals.push_back(scratch.at(ix, iy));
  return ctx.mt_memo.emplace(std::move(key), std::move(vals)).first->second;
}

size_t build_node(BuildContext& ctx, const Cube& root, int depth) {
  const Grid& g = ctx.f.grid();
  size_t index = ctx.nodes.size();
  ctx.nodes.push_back({root, {}});
  ctx.max_depth_reached = std::max(ctx.max_depth_reached, depth);
  CellRange rr = range_of_cube(g, root);
  std::int64_t root_cells = rr.count(g.dim);
  if (root_cells <= 1 || depth >= ctx.params.max_depth) return index;

  // exceptional set on this root (diagonal tuple)
  double norm3 = lr_average(ctx.f, root.triple(), ctx.s);
  double vol3 = root.triple().volume().to_double();
  double mt_threshold = ctx.gamma * ctx.spec.m() *
                        (ctx.spec.alpha > 0.0 ? std::pow(vol3, ctx.spec.alpha / g.dim) : 1.0) *
                        norm3;
  double f_threshold = ctx.gamma * norm3;

  const std::vector<double>& mt = local_mt(ctx, root);
  CellMask mask(g);
  std::int64_t count = 0;
  {
    size_t k = 0;
    int ylo = g.dim == 2 ? rr.lo[1] : 0, yhi = g.dim == 2 ? rr.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = rr.lo[0]; ix < rr.hi[0]; ++ix, ++k) {
        bool in = mt[k] > mt_threshold;
        if (ctx.spec.alpha == 0.0 && std::fabs(ctx.f.at(ix, iy)) > f_threshold) in = true;
        if (in) {
          mask.set(ix, iy, true);
          ++count;
        }
      }
  }
  ++ctx.audit.nodes;
  double packing_ratio =
      static_cast<double>(count) * std::ldexp(1.0, g.dim + 2) / static_cast<double>(root_cells);
  ctx.audit.max_packing_ratio = std::max(ctx.audit.max_packing_ratio, packing_ratio);
  if (count * (std::int64_t{1} << (g.dim + 2)) > root_cells) throw PackingFailure{};
  if (count == 0) return index;

  std::vector<Cube> selected = cz_decompose(mask, root, ctx.height);
  std::int64_t sel_cells = 0;
  for (const Cube& p : selected) sel_cells += cells_of(g, p);
  double sel_ratio = static_cast<double>(sel_cells) /
                     (std::ldexp(1.0, g.dim + 1) * static_cast<double>(count));
  ctx.audit.max_selection_ratio = std::max(ctx.audit.max_selection_ratio, sel_ratio);
  if (sel_cells > (std::int64_t{1} << (g.dim + 1)) * count) ctx.audit.selection_ok = false;

  for (const Cube& p : selected) {
    size_t child = build_node(ctx, p, depth + 1);  // may reallocate ctx.nodes
    ctx.nodes[index].children.push_back(child);
  }
  return index;
}

// dyadic chain box = Q^0 ⊃ Q^1 ⊃ ... down to the smallest cube containing
// supp f, largest first
std::vector<Cube> support_chain(const GridFunction& f) {
  const Grid& g = f.grid();
  int n = g.cells_per_axis();
  int lo[2] = {n, n}, hi[2] = {-1, -1};
  for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
    for (int ix = 0; ix < n; ++ix)
      if (f.at(ix, iy) != 0.0) {
        lo[0] = std::min(lo[0], ix);
        hi[0] = std::max(hi[0], ix);
        lo[1] = std::min(lo[1], iy);
        hi[1] = std::max(hi[1], iy);
      }
  std::vector<Cube> chain{g.box()};
  if (hi[0] < 0) return chain;  // f == 0, degenerate
  while (true) {
    bool descended = false;
    for (const Cube& ch : dyadic_children(chain.back())) {
      CellRange r = range_of_cube(g, ch);
      bool covers = lo[0] >= r.lo[0] && hi[0] < r.hi[0] &&
                    (g.dim == 1 || (lo[1] >= r.lo[1] && hi[1] < r.hi[1]));
      if (covers && r.count(g.dim) > 1) {
        chain.push_back(ch);
        descended = true;
        break;
      }
      if (covers) {
        chain.push_back(ch);
        return chain;
      }
    }
    if (!descended) return chain;
  }
}

// the support cube plus its congruent first ring, truncated at the box
std::vector<Cube> ring_roots(const Grid& g, const Cube& q0) {
  std::vector<Cube> roots{q0};
  Rational side = q0.side;
  if (g.dim == 1) {
    for (int dx : {-1, 1}) {
      Cube r = q0;
      r.corner[0] = q0.corner[0] + Rational(dx) * side;
      if (g.box().contains_cube(r)) roots.push_back(r);
    }
  } else {
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        Cube r = q0;
        r.corner[0] = q0.corner[0] + Rational(dx) * side;
        r.corner[1] = q0.corner[1] + Rational(dy) * side;
        if (g.box().contains_cube(r)) roots.push_back(r);
      }
  }
  return roots;
}

// coverage of the domination claim: every grid cell lies in some A_i(root)
bool roots_cover_box(const Grid& g, const std::vector<LinearMap>& invs,
                     const std::vector<Cube>& roots) {
  int n = g.cells_per_axis();
  for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
    for (int ix = 0; ix < n; ++ix) {
      Coord c = g.cell_center(ix, iy);
      bool covered = false;
      for (const auto& Ainv : invs) {
        Coord y = Ainv.apply(c);
        for (const Cube& r : roots)
          if (r.contains(y)) {
            covered = true;
            break;
          }
        if (covered) break;
      }
      if (!covered) return false;
    }
  return true;
}

}  // namespace

DominationCertificate build_sparse_domination(const OperatorSpec& spec, const GridFunction& f,
                                              const SparseBuildParams& params) {
  spec.validate();
  const Grid& g = f.grid();
  if (spec.dim != g.dim) throw std::invalid_argument("build_sparse_domination: dimension mismatch");
  if (!params.override_budget) {
    std::int64_t limit = g.dim == 1 ? (1 << 12) : 48 * 48;
    if (g.cell_count() > limit)
      throw BudgetError("build_sparse_domination: " + std::to_string(g.cell_count()) +
                        " cells exceed the builder budget of " + std::to_string(limit));
  }
  DominationCertificate cert;
  bool all_zero = true;
  for (double v : f.values())
    if (v != 0.0) all_zero = false;
  if (all_zero) {
    cert.note = "f == 0: empty certificate, constant undefined";
    cert.c_defined = false;
    return cert;
  }

  // Root covering: the support cube plus its congruent first ring, truncated
  // at the box. When the twisted preimages of the box spill past the ring,
  // the support cube is enlarged along its dyadic chain until the covering
  // closes (the outer rings of the untruncated construction are exactly what
  // the enlargement replaces).
  std::vector<LinearMap> invs;
  for (const auto& A : spec.maps) invs.push_back(A.inverse());
  std::vector<Cube> chain = support_chain(f);
  std::vector<Cube> roots;
  Cube q0 = chain.front();
  for (size_t k = chain.size(); k-- > 0;) {
    std::vector<Cube> candidate = ring_roots(g, chain[k]);
    if (roots_cover_box(g, invs, candidate)) {
      q0 = chain[k];
      roots = candidate;
      break;
    }
  }
  if (roots.empty())
    throw std::runtime_error(
        "build_sparse_domination: no dyadic root cube (up to the full box) covers the twisted "
        "preimages of the grid; the matrix set maps part of the box outside the covered region");
  cert.roots = roots;

  TruncationCache cache(spec, f, params.override_budget);
  double height = params.cz_height > 0.0 ? params.cz_height : std::ldexp(1.0, -(g.dim + 1));
  double s = params.s > 0.0 ? params.s : spec.s;

  BuildContext ctx{spec, f, params, cache, params.gamma, height, s, {}, {}, 0, {}};
  bool built = false;
  for (int attempt = 0; attempt <= params.max_gamma_doublings; ++attempt) {
    ctx.nodes.clear();
    ctx.audit = CzAudit{};
    ctx.max_depth_reached = 0;
    try {
      for (const Cube& r : roots) build_node(ctx, r, 0);
      built = true;
      break;
    } catch (const PackingFailure&) {
      ctx.gamma *= 2.0;
      ++cert.gamma_doublings;
    }
  }
  if (!built)
    throw std::runtime_error(
        "build_sparse_domination: no gamma within " + std::to_string(params.max_gamma_doublings) +
        " doublings achieves the packing bound |E ∩ Q| <= |Q|/2^{n+2} (last gamma " +
        std::to_string(ctx.gamma) + ")");
  cert.gamma = ctx.gamma;
  cert.cz_audit = ctx.audit;
  cert.max_depth_reached = ctx.max_depth_reached;

  // canonical witnesses from the tree
  cert.pre_family.lattice_tag = -1;
  cert.pre_family.eta_target = 0.5;
  for (const BuildNode& node : ctx.nodes) {
    CellMask w(g);
    fill_range(w, range_of_cube(g, node.cube), true);
    for (size_t ch : node.children) fill_range(w, range_of_cube(g, ctx.nodes[ch].cube), false);
    cert.pre_family.cubes.push_back(node.cube);
    cert.pre_family.witnesses.push_back(std::move(w));
  }
  cert.pre_audit = verify_sparsity(cert.pre_family, 0.5, g);

  // redistribute the triples into the 3^n shifted lattices anchored at the
  // support cube, coverage wide enough for the ring roots' triples
  int tree_depth = 0;
  {
    Rational ratio = q0.side / g.cell_side();
    while ((std::int64_t{1} << tree_depth) < ratio.num()) ++tree_depth;
  }
  int fams = g.dim == 1 ? 3 : 9;
  std::vector<DyadicLattice> lattices;
  for (int j = 0; j < fams; ++j) lattices.emplace_back(g.dim, j, q0, std::max(1, tree_depth), 9);
  cert.families.assign(static_cast<size_t>(fams), SparseFamily{});
  double post_eta = 1.0 / (2.0 * std::pow(9.0, g.dim));
  for (int j = 0; j < fams; ++j) {
    cert.families[static_cast<size_t>(j)].lattice_tag = j;
    cert.families[static_cast<size_t>(j)].eta_target = post_eta;
  }
  for (size_t k = 0; k < cert.pre_family.cubes.size(); ++k) {
    Cube triple = cert.pre_family.cubes[k].triple();
    int found = -1;
    for (int j = 0; j < fams; ++j)
      if (lattices[static_cast<size_t>(j)].is_member(triple)) {
        found = j;
        break;
      }
    if (found < 0)
      throw std::logic_error("build_sparse_domination: triple " + triple.str() +
                             " belongs to no shifted family (lattice construction violated)");
    cert.families[static_cast<size_t>(found)].cubes.push_back(triple);
    cert.families[static_cast<size_t>(found)].witnesses.push_back(cert.pre_family.witnesses[k]);
  }
  cert.post_audit.ok = true;
  cert.post_audit.min_ratio = 1.0;
  for (const SparseFamily& fam : cert.families) {
    if (fam.cubes.empty()) continue;
    SparsityAudit a = verify_sparsity(fam, post_eta, g);
    cert.post_audit.ok = cert.post_audit.ok && a.ok;
    cert.post_audit.min_ratio = std::min(cert.post_audit.min_ratio, a.min_ratio);
    cert.post_audit.witnesses_contained = a.witnesses_contained;
    cert.post_audit.witnesses_disjoint = a.witnesses_disjoint;
    cert.post_audit.checked += a.checked;
  }

  // measured pointwise constant; Tf read off the truncation cache (same
  // kernel matrix, full-box range)
  GridFunction tf(g);
  {
    CellRange full;
    full.lo[0] = 0;
    full.hi[0] = g.cells_per_axis();
    full.lo[1] = 0;
    full.hi[1] = g.dim == 2 ? g.cells_per_axis() : 1;
    int n = g.cells_per_axis();
    for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
      for (int ix = 0; ix < n; ++ix) tf.at(ix, iy) = cache.partial(g.flat_index(ix, iy), full);
  }
  GridFunction rhs(g);
  for (const SparseFamily& fam : cert.families) {
    if (fam.cubes.empty()) continue;
    for (const LinearMap& A : spec.maps) {
      GridFunction part = sparse_apply(fam, f, spec.alpha, s, A);
      for (size_t i = 0; i < rhs.values().size(); ++i) rhs.values()[i] += part.values()[i];
    }
  }
  double tf_max = 0.0;
  for (double v : tf.values()) tf_max = std::max(tf_max, std::fabs(v));
  cert.c_defined = true;
  for (size_t i = 0; i < rhs.values().size(); ++i) {
    double num = std::fabs(tf.values()[i]);
    double den = rhs.values()[i];
    if (den > 0.0)
      cert.c = std::max(cert.c, num / den);
    else if (num > 1e-12 * tf_max) {
      cert.c_defined = false;
      cert.note = "uncovered cell with nonzero Tf: domination fails at " +
                  g.cell_cube(static_cast<int>(i % g.cells_per_axis()),
                              static_cast<int>(i / g.cells_per_axis()))
                      .str();
    }
  }
  return cert;
}

namespace {

std::string witness_runs(const CellMask& m) {
  // flat-index runs "a:b" (half-open), comma separated
  std::string s;
  const auto& raw = m.raw();
  size_t i = 0;
  while (i < raw.size()) {
    if (!raw[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < raw.size() && raw[j]) ++j;
    if (!s.empty()) s += ",";
    s += std::to_string(i) + ":" + std::to_string(j);
    i = j;
  }
  return s;
}

Rational parse_rational_token(const std::string& t) {
  auto slash = t.find('/');
  if (slash == std::string::npos) return Rational(std::stoll(t));
  return Rational(std::stoll(t.substr(0, slash)), std::stoll(t.substr(slash + 1)));
}

// inverse of Cube::str(): "[a,b)" or "[a,b)x[c,d)"
Cube parse_cube(const std::string& s) {
  auto parse_interval = [](const std::string& part, Rational* lo, Rational* hi) {
    auto comma = part.find(',');
    *lo = parse_rational_token(part.substr(1, comma - 1));
    *hi = parse_rational_token(part.substr(comma + 1, part.size() - comma - 2));
  };
  auto x = s.find(")x[");
  Rational lo0, hi0;
  if (x == std::string::npos) {
    parse_interval(s, &lo0, &hi0);
    return Cube(lo0, hi0 - lo0);
  }
  Rational lo1, hi1;
  parse_interval(s.substr(0, x + 1), &lo0, &hi0);
  parse_interval(s.substr(x + 2), &lo1, &hi1);
  return Cube(lo0, lo1, hi0 - lo0);
}

}  // namespace

void write_certificate(const DominationCertificate& cert, const Grid& grid,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_certificate: cannot open " + path);
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  out << "sparse-domination-certificate v1\n";
  out << "grid dim=" << grid.dim << " box_exp=" << grid.box_exp << " cell_exp=" << grid.cell_exp
      << "\n";
  out << "gamma " << num(cert.gamma) << " doublings " << cert.gamma_doublings << "\n";
  out << "constant " << (cert.c_defined ? num(cert.c) : "undefined") << "\n";
  out << "pre-audit eta=0.5 ok=" << (cert.pre_audit.ok ? 1 : 0)
      << " min_ratio=" << num(cert.pre_audit.min_ratio) << "\n";
  out << "post-audit ok=" << (cert.post_audit.ok ? 1 : 0)
      << " min_ratio=" << num(cert.post_audit.min_ratio) << "\n";
  out << "cz nodes=" << cert.cz_audit.nodes
      << " packing_ok=" << (cert.cz_audit.packing_ok ? 1 : 0)
      << " selection_ok=" << (cert.cz_audit.selection_ok ? 1 : 0)
      << " max_packing=" << num(cert.cz_audit.max_packing_ratio)
      << " max_selection=" << num(cert.cz_audit.max_selection_ratio) << "\n";
  out << "roots " << cert.roots.size() << "\n";
  for (const Cube& r : cert.roots) out << "  " << r.str() << "\n";
  out << "families " << cert.families.size() << "\n";
  for (const SparseFamily& fam : cert.families) {
    out << "family tag=" << fam.lattice_tag << " cubes=" << fam.cubes.size()
        << " eta=" << num(fam.eta_target) << "\n";
    for (size_t k = 0; k < fam.cubes.size(); ++k) {
      out << "  " << fam.cubes[k].str() << " witness=" << witness_runs(fam.witnesses[k]) << "\n";
    }
  }
  if (!cert.note.empty()) out << "note " << cert.note << "\n";
}

LoadedCertificate load_certificate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_certificate: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "sparse-domination-certificate v1")
    throw std::runtime_error("load_certificate: unrecognized header");
  LoadedCertificate lc;
  int dim = 0, J = 0, L = 0;
  SparseFamily* current = nullptr;
  while (std::getline(in, line)) {
    if (line.rfind("grid ", 0) == 0) {
      if (std::sscanf(line.c_str(), "grid dim=%d box_exp=%d cell_exp=%d", &dim, &J, &L) != 3)
        throw std::runtime_error("load_certificate: malformed grid line");
      lc.grid = Grid(dim, J, L);
    } else if (line.rfind("gamma ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      ss >> lc.cert.gamma;
    } else if (line.rfind("constant ", 0) == 0) {
      std::string v = line.substr(9);
      lc.cert.c_defined = v != "undefined";
      if (lc.cert.c_defined) lc.cert.c = std::stod(v);
    } else if (line.rfind("family ", 0) == 0) {
      int tag = 0;
      long long cubes = 0;
      double eta = 0.5;
      if (std::sscanf(line.c_str(), "family tag=%d cubes=%lld eta=%lf", &tag, &cubes, &eta) < 2)
        throw std::runtime_error("load_certificate: malformed family line");
      lc.cert.families.push_back({});
      current = &lc.cert.families.back();
      current->lattice_tag = tag;
      current->eta_target = eta;
    } else if (line.rfind("  [", 0) == 0 && current) {
      auto wpos = line.find(" witness=");
      if (wpos == std::string::npos) continue;
      current->cubes.push_back(parse_cube(line.substr(2, wpos - 2)));
      CellMask mask(lc.grid);
      std::string runs = line.substr(wpos + 9);
      std::istringstream rs(runs);
      std::string run;
      while (std::getline(rs, run, ',')) {
        if (run.empty()) continue;
        auto colon = run.find(':');
        size_t a = std::stoull(run.substr(0, colon));
        size_t b = std::stoull(run.substr(colon + 1));
        for (size_t i = a; i < b; ++i) mask.raw()[i] = 1;
      }
      current->witnesses.push_back(std::move(mask));
    }
  }
  if (lc.grid.cell_count() == 0) throw std::runtime_error("load_certificate: missing grid line");
  return lc;
}

bool reverify_certificate(const LoadedCertificate& lc, std::string* detail) {
  bool ok = true;
  std::string note;
  for (const SparseFamily& fam : lc.cert.families) {
    if (fam.cubes.empty()) continue;
    SparsityAudit a = verify_sparsity(fam, fam.eta_target, lc.grid);
    if (!a.ok) {
      ok = false;
      note += "family tag " + std::to_string(fam.lattice_tag) + " fails at eta " +
              std::to_string(fam.eta_target) + "; ";
    }
  }
  if (detail) *detail = ok ? "all families re-audited at their declared eta" : note;
  return ok;
}

}  // namespace sparsedom
