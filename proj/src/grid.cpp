#include "sparsedom/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparsedom {

Grid::Grid(int n, int j, int l) : dim(n), box_exp(j), cell_exp(l) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("Grid: dimension must be 1 or 2");
  if (box_exp + cell_exp + 1 < 0 || box_exp + cell_exp + 1 > 24)
    throw std::invalid_argument("Grid: cells per axis out of range");
}

double Grid::cell_volume() const {
  double h = cell_side().to_double();
  return dim == 1 ? h : h * h;
}

Cube Grid::box() const {
  Rational h = half_width();
  return dim == 1 ? Cube(-h, h * Rational(2)) : Cube(-h, -h, h * Rational(2));
}

Cube Grid::cell_cube(int ix, int iy) const {
  Rational h = cell_side();
  Rational lo0 = -half_width() + Rational(ix) * h;
  if (dim == 1) return Cube(lo0, h);
  Rational lo1 = -half_width() + Rational(iy) * h;
  return Cube(lo0, lo1, h);
}

Coord Grid::cell_center(int ix, int iy) const { return cell_cube(ix, iy).center(); }

int Grid::axis_index(const Rational& x) const {
  Rational rel = (x + half_width()) / cell_side();
  std::int64_t i = rel.floor();
  if (i < 0 || i >= cells_per_axis()) return -1;
  return static_cast<int>(i);
}

bool cube_to_range(const Grid& g, const Cube& q, CellRange* out) {
  if (q.dim != g.dim) return false;
  Rational h = g.cell_side();
  Rational side_cells = q.side / h;
  if (!side_cells.is_integer() || side_cells.sign() <= 0) return false;
  int n = g.cells_per_axis();
  for (int a = 0; a < g.dim; ++a) {
    Rational lo = (q.corner[a] + g.half_width()) / h;
    if (!lo.is_integer()) return false;
    std::int64_t l = lo.num();
    std::int64_t r = l + side_cells.num();
    out->lo[a] = static_cast<int>(std::clamp<std::int64_t>(l, 0, n));
    out->hi[a] = static_cast<int>(std::clamp<std::int64_t>(r, 0, n));
  }
  if (g.dim == 1) {
    out->lo[1] = 0;
    out->hi[1] = 1;
  }
  return true;
}

GridFunction GridFunction::map(const std::function<double(double)>& f) const {
  GridFunction out(grid_);
  for (size_t i = 0; i < v_.size(); ++i) out.v_[i] = f(v_[i]);
  return out;
}

GridFunction GridFunction::pow(double e) const {
  return map([e](double x) { return std::pow(std::fabs(x), e); });
}

void check_weight(const GridFunction& w) {
  for (double x : w.values())
    if (!(x >= 0.0) || !std::isfinite(x))
      throw std::invalid_argument("weight has a negative or non-finite cell value");
}

std::int64_t CellMask::count() const {
  std::int64_t c = 0;
  for (auto b : m_) c += b;
  return c;
}

std::int64_t CellMask::count_in(const CellRange& r) const {
  std::int64_t c = 0;
  int ylo = grid_.dim == 2 ? r.lo[1] : 0, yhi = grid_.dim == 2 ? r.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) c += get(ix, iy) ? 1 : 0;
  return c;
}

void FieldPrefix::build(const GridFunction& f, const std::function<double(double)>& tr) {
  grid_ = f.grid();
  int n = grid_.cells_per_axis();
  if (grid_.dim == 1) {
    p_.assign(n + 1, 0.0);
    for (int i = 0; i < n; ++i) p_[i + 1] = p_[i] + tr(f.at(i));
  } else {
    p_.assign(static_cast<size_t>(n + 1) * (n + 1), 0.0);
    auto P = [&](int i, int j) -> double& { return p_[static_cast<size_t>(j) * (n + 1) + i]; };
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        P(i + 1, j + 1) = tr(f.at(i, j)) + P(i, j + 1) + P(i + 1, j) - P(i, j);
  }
}

FieldPrefix::FieldPrefix(const GridFunction& f) {
  build(f, [](double x) { return x; });
}
FieldPrefix::FieldPrefix(const GridFunction& f, const std::function<double(double)>& transform) {
  build(f, transform);
}

double FieldPrefix::cell_sum(const CellRange& r) const {
  if (r.empty(grid_.dim)) return 0.0;
  if (grid_.dim == 1) return p_[r.hi[0]] - p_[r.lo[0]];
  int n = grid_.cells_per_axis();
  auto P = [&](int i, int j) { return p_[static_cast<size_t>(j) * (n + 1) + i]; };
  return P(r.hi[0], r.hi[1]) - P(r.lo[0], r.hi[1]) - P(r.hi[0], r.lo[1]) + P(r.lo[0], r.lo[1]);
}

namespace {

CellRange aligned_range_or_throw(const Grid& g, const Cube& q) {
  CellRange r;
  if (!cube_to_range(g, q, &r))
    throw std::invalid_argument("cube " + q.str() + " is not aligned to the cell lattice");
  return r;
}

double range_sum(const GridFunction& f, const CellRange& r) {
  const Grid& g = f.grid();
  double s = 0.0;
  int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) s += f.at(ix, iy);
  return s;
}

}  // namespace

double integrate(const GridFunction& f, const Cube& q) {
  CellRange r = aligned_range_or_throw(f.grid(), q);
  return range_sum(f, r) * f.grid().cell_volume();
}

double integrate(const GridFunction& f, const CellMask& mask) {
  if (!(mask.grid() == f.grid())) throw std::invalid_argument("integrate: grid mismatch");
  double s = 0.0;
  const auto& m = mask.raw();
  const auto& v = f.values();
  for (size_t i = 0; i < v.size(); ++i)
    if (m[i]) s += v[i];
  return s * f.grid().cell_volume();
}

double lr_average(const GridFunction& f, const Cube& q, double r) {
  CellRange range = aligned_range_or_throw(f.grid(), q);
  const Grid& g = f.grid();
  if (r == kInfExponent) {
    double m = 0.0;
    int ylo = g.dim == 2 ? range.lo[1] : 0, yhi = g.dim == 2 ? range.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = range.lo[0]; ix < range.hi[0]; ++ix) m = std::max(m, std::fabs(f.at(ix, iy)));
    return m;
  }
  if (!(r >= 1.0)) throw std::invalid_argument("lr_average: exponent must be in [1, inf]");
  double s = 0.0;
  int ylo = g.dim == 2 ? range.lo[1] : 0, yhi = g.dim == 2 ? range.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = range.lo[0]; ix < range.hi[0]; ++ix) s += std::pow(std::fabs(f.at(ix, iy)), r);
  double avg = s * g.cell_volume() / q.volume().to_double();
  return std::pow(avg, 1.0 / r);
}

double lp_norm(const GridFunction& f, const GridFunction& powered_weight, double p) {
  if (!(p >= 1.0) || p == kInfExponent) throw std::invalid_argument("lp_norm: p must be in [1, inf)");
  if (!(powered_weight.grid() == f.grid())) throw std::invalid_argument("lp_norm: grid mismatch");
  double s = 0.0;
  const auto& v = f.values();
  const auto& w = powered_weight.values();
  for (size_t i = 0; i < v.size(); ++i) s += std::pow(std::fabs(v[i]), p) * w[i];
  return std::pow(s * f.grid().cell_volume(), 1.0 / p);
}

double weighted_level_measure(const GridFunction& w, const GridFunction& g, double lambda) {
  if (!(w.grid() == g.grid())) throw std::invalid_argument("weighted_level_measure: grid mismatch");
  double s = 0.0;
  const auto& wv = w.values();
  const auto& gv = g.values();
  for (size_t i = 0; i < wv.size(); ++i)
    if (gv[i] > lambda) s += wv[i];
  return s * w.grid().cell_volume();
}

namespace {

struct RationalBox {
  Coord lo, hi;  // per-axis bounds, lo < hi
};

// image of a cube under a monomial power-of-two map: an axis-aligned box
RationalBox image_box(const LinearMap& A, const Cube& cell) {
  RationalBox b;
  for (int r = 0; r < A.dim(); ++r) {
    int c = 0;
    while (A.entry(r, c).is_zero()) ++c;
    Rational e = A.entry(r, c);
    Rational v0 = e * cell.corner[c];
    Rational v1 = e * cell.upper(c);
    if (v1 < v0) std::swap(v0, v1);
    b.lo[r] = v0;
    b.hi[r] = v1;
  }
  return b;
}

// exact integral of f over box ∩ grid box (rational overlap per axis)
double box_integral(const GridFunction& f, const RationalBox& b) {
  const Grid& g = f.grid();
  Rational h = g.cell_side();
  Rational H = g.half_width();
  int n = g.cells_per_axis();
  // per-axis list of (cell index, overlap length)
  std::array<std::vector<std::pair<int, Rational>>, 2> ov;
  for (int a = 0; a < g.dim; ++a) {
    Rational lo = std::max(b.lo[a], -H);
    Rational hi = std::min(b.hi[a], H);
    if (!(lo < hi)) return 0.0;
    std::int64_t i0 = ((lo + H) / h).floor();
    std::int64_t i1 = ((hi + H) / h).floor();
    for (std::int64_t i = i0; i <= std::min<std::int64_t>(i1, n - 1); ++i) {
      Rational clo = -H + Rational(i) * h;
      Rational olo = std::max(lo, clo);
      Rational ohi = std::min(hi, clo + h);
      if (olo < ohi) ov[a].push_back({static_cast<int>(i), ohi - olo});
    }
  }
  double s = 0.0;
  if (g.dim == 1) {
    for (auto& [i, len] : ov[0]) s += f.at(i) * len.to_double();
  } else {
    for (auto& [i, lx] : ov[0])
      for (auto& [j, ly] : ov[1]) s += f.at(i, j) * lx.to_double() * ly.to_double();
  }
  return s;
}

}  // namespace

PullbackResult pullback(const GridFunction& f, const LinearMap& A, bool allow_resample) {
  const Grid& g = f.grid();
  if (A.dim() != g.dim) throw std::invalid_argument("pullback: dimension mismatch");
  PullbackResult res;
  res.value = GridFunction(g);
  int n = g.cells_per_axis();
  if (A.is_monomial_pow2()) {
    double img_vol = std::fabs(A.determinant().to_double()) * g.cell_volume();
    for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
      for (int ix = 0; ix < n; ++ix) {
        RationalBox y = image_box(A, g.cell_cube(ix, iy));
        res.value.at(ix, iy) = box_integral(f, y) / img_vol;
      }
    res.exact = true;
  } else {
    if (!allow_resample)
      throw std::invalid_argument(
          "pullback: map is not grid-compatible; pass allow_resample for the "
          "flagged nearest-cell path");
    for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
      for (int ix = 0; ix < n; ++ix) {
        Coord y = A.apply(g.cell_center(ix, iy));
        int jx = g.axis_index(y[0]);
        int jy = g.dim == 2 ? g.axis_index(y[1]) : 0;
        res.value.at(ix, iy) = (jx >= 0 && jy >= 0) ? f.at(jx, jy) : 0.0;
      }
    res.exact = false;
  }
  double mass = 0.0;
  for (double v : f.values()) mass += v;
  mass *= g.cell_volume();
  double pb_mass = 0.0;
  for (double v : res.value.values()) pb_mass += v;
  pb_mass *= g.cell_volume();
  res.residual = mass / std::fabs(A.determinant().to_double()) - pb_mass;
  return res;
}

double integrate_image(const GridFunction& f, const LinearMap& A, const Cube& q) {
  if (!A.is_monomial_pow2())
    throw std::invalid_argument("integrate_image: map is not grid-compatible");
  RationalBox b;
  for (int r = 0; r < A.dim(); ++r) {
    int c = 0;
    while (A.entry(r, c).is_zero()) ++c;
    Rational e = A.entry(r, c);
    Rational v0 = e * q.corner[c];
    Rational v1 = e * q.upper(c);
    if (v1 < v0) std::swap(v0, v1);
    b.lo[r] = v0;
    b.hi[r] = v1;
  }
  return box_integral(f, b);
}

double twisted_level_measure(const GridFunction& w, const GridFunction& g, const LinearMap& A,
                             double lambda) {
  if (!(w.grid() == g.grid())) throw std::invalid_argument("twisted_level_measure: grid mismatch");
  if (!A.is_monomial_pow2())
    throw std::invalid_argument("twisted_level_measure: map is not grid-compatible");
  const Grid& gr = w.grid();
  int n = gr.cells_per_axis();
  double s = 0.0;
  for (int iy = 0; iy < (gr.dim == 2 ? n : 1); ++iy)
    for (int ix = 0; ix < n; ++ix)
      if (g.at(ix, iy) > lambda) s += box_integral(w, image_box(A, gr.cell_cube(ix, iy)));
  return s;
}

void write_grid_csv(const GridFunction& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_grid_csv: cannot open " + path);
  const Grid& g = f.grid();
  char buf[64];
  out << "# grid dim=" << g.dim << " box_exp=" << g.box_exp << " cell_exp=" << g.cell_exp << "\n";
  if (g.dim == 1) {
    out << "i,value\n";
    for (int i = 0; i < g.cells_per_axis(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f.at(i));
      out << i << "," << buf << "\n";
    }
  } else {
    out << "i,j,value\n";
    for (int j = 0; j < g.cells_per_axis(); ++j)
      for (int i = 0; i < g.cells_per_axis(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", f.at(i, j));
        out << i << "," << j << "," << buf << "\n";
      }
  }
}

GridFunction read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_grid_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# grid", 0) != 0)
    throw std::runtime_error("read_grid_csv: missing grid header");
  int dim = 0, J = 0, L = 0;
  if (std::sscanf(line.c_str(), "# grid dim=%d box_exp=%d cell_exp=%d", &dim, &J, &L) != 3)
    throw std::runtime_error("read_grid_csv: malformed grid header");
  Grid g(dim, J, L);
  GridFunction f(g);
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    int idx[2] = {0, 0};
    for (int a = 0; a < dim; ++a) {
      std::getline(ss, tok, ',');
      idx[a] = std::stoi(tok);
    }
    std::getline(ss, tok, ',');
    f.at(idx[0], idx[1]) = std::stod(tok);
  }
  return f;
}

}  // namespace sparsedom
