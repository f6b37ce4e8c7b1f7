#include "sparsedom/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sparsedom {

void ExponentSet::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("ExponentSet: dimension must be 1 or 2");
  if (!(p >= 1.0) || !(q >= p) || q == kInfExponent)
    throw std::invalid_argument("ExponentSet: need 1 <= p <= q < inf");
  if (!(alpha >= 0.0) || alpha >= dim) throw std::invalid_argument("ExponentSet: need 0 <= alpha < n");
  if (!(s >= 1.0)) throw std::invalid_argument("ExponentSet: need s >= 1");
  if (!alpha_i.empty()) {
    double asum = 0.0;
    for (double a : alpha_i) asum += a;
    if (std::fabs(asum - (dim - alpha)) > 1e-12)
      throw std::invalid_argument("ExponentSet: kernel exponents must sum to n - alpha");
  }
  if (!r_i.empty()) {
    double rsum = 1.0 / s;
    for (double r : r_i)
      if (r != kInfExponent) rsum += 1.0 / r;
    if (std::fabs(rsum - 1.0) > 1e-12)
      throw std::invalid_argument("ExponentSet: 1/r_1 + ... + 1/r_m + 1/s must equal 1");
  }
}

bool trace_diverging(const std::vector<double>& trace) {
  size_t n = trace.size();
  if (n < 3) return false;
  return trace[n - 3] > 0.0 && trace[n - 1] >= 2.0 * trace[n - 3];
}

void write_weight_reports_csv(
    const std::vector<std::pair<std::string, WeightConstantReport>>& reports,
    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_weight_reports_csv: cannot open " + path);
  out << "check,depth,value,arg_sup,flag\n";
  char buf[64];
  for (const auto& [id, rep] : reports) {
    for (size_t d = 0; d < rep.trace.size(); ++d) {
      std::snprintf(buf, sizeof buf, "%.12g", rep.trace[d]);
      out << id << "," << d << "," << buf << ",\"" << rep.arg_sup.str() << "\","
          << (rep.diverging ? "diverging" : "stable") << "\n";
    }
  }
}

namespace {

bool inside_box(const Grid& g, const Cube& q) { return g.box().contains_cube(q); }

struct AverageMachine {
  const Grid& grid;
  FieldPrefix sum;      // powered values
  FieldPrefix zeros;    // 1 for zero cells
  AverageMachine(const Weight& w, double power)
      : grid(w.grid()),
        sum(w, [power](double x) { return x == 0.0 ? 0.0 : std::pow(x, power); }),
        zeros(w, [](double x) { return x == 0.0 ? 1.0 : 0.0; }) {}
  bool has_zero(const CellRange& r) const { return zeros.cell_sum(r) > 0.5; }
  double average(const CellRange& r, const Cube& q) const {
    return sum.cell_sum(r) * grid.cell_volume() / q.volume().to_double();
  }
};

double range_max(const GridFunction& f, const CellRange& r, const std::function<double(double)>& tr) {
  const Grid& g = f.grid();
  double m = 0.0;
  int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
  for (int iy = ylo; iy < yhi; ++iy)
    for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) m = std::max(m, tr(f.at(ix, iy)));
  return m;
}

void enforce_skip_budget(const WeightConstantReport& rep, const char* who) {
  std::int64_t total = rep.evaluated + rep.skipped;
  if (total > 0 && rep.skipped * 100 > total)
    throw std::domain_error(std::string(who) + ": weight fails validation, " +
                            std::to_string(rep.skipped) + "/" + std::to_string(total) +
                            " cubes skipped on zero cells");
}

// shared core of the rooted (p,q) constants
WeightConstantReport rooted_constant(const Weight& first, const Weight& w, const ExponentSet& e,
                                     const CubeFamily& family, const std::string& famtag) {
  e.validate();
  const Grid& g = w.grid();
  WeightConstantReport rep;
  rep.family = famtag;
  double pp = e.p_conj();
  AverageMachine aq(first, e.q);
  std::unique_ptr<AverageMachine> am;
  if (e.p > 1.0) am = std::make_unique<AverageMachine>(w, -pp);
  FieldPrefix wzeros(w, [](double x) { return x == 0.0 ? 1.0 : 0.0; });
  for (const Cube& q : family.cubes) {
    if (!inside_box(g, q)) continue;
    CellRange r;
    if (!cube_to_range(g, q, &r))
      throw std::invalid_argument("weight constant: family cube " + q.str() + " not cell-aligned");
    double second;
    if (e.p > 1.0) {
      if (wzeros.cell_sum(r) > 0.5) {
        ++rep.skipped;
        continue;
      }
      second = std::pow(am->average(r, q), 1.0 / pp);
    } else {
      if (wzeros.cell_sum(r) > 0.5) {
        ++rep.skipped;
        continue;
      }
      second = range_max(w, r, [](double x) { return 1.0 / x; });
    }
    double val = std::pow(aq.average(r, q), 1.0 / e.q) * second;
    ++rep.evaluated;
    if (val > rep.value) {
      rep.value = val;
      rep.arg_sup = q;
    }
  }
  rep.trace = {rep.value};
  return rep;
}

}  // namespace

WeightConstantReport apq_constant(const Weight& w, const ExponentSet& e, const CubeFamily& family) {
  check_weight(w);
  auto rep = rooted_constant(w, w, e, family, family.descriptor);
  enforce_skip_budget(rep, "apq_constant");
  return rep;
}

WeightConstantReport matrix_apq_constant(const Weight& w, const LinearMap& A, const ExponentSet& e,
                                         const CubeFamily& family, bool allow_resample) {
  check_weight(w);
  Weight wA = pullback(w, A, allow_resample).value;
  auto rep = rooted_constant(wA, w, e, family, family.descriptor + "|A=" + A.str());
  enforce_skip_budget(rep, "matrix_apq_constant");
  return rep;
}

WeightConstantReport matrix_ap_constant(const Weight& w, const LinearMap& A, double p,
                                        const CubeFamily& family, bool allow_resample) {
  check_weight(w);
  if (!(p >= 1.0)) throw std::invalid_argument("matrix_ap_constant: need p >= 1");
  const Grid& g = w.grid();
  Weight wA = pullback(w, A, allow_resample).value;
  WeightConstantReport rep;
  rep.family = family.descriptor + "|A=" + A.str() + "|classical";
  AverageMachine first(wA, 1.0);
  double sigma_pow = p > 1.0 ? 1.0 - p / (p - 1.0) : 0.0;  // 1 - p'
  std::unique_ptr<AverageMachine> am;
  if (p > 1.0) am = std::make_unique<AverageMachine>(w, sigma_pow);
  FieldPrefix wzeros(w, [](double x) { return x == 0.0 ? 1.0 : 0.0; });
  for (const Cube& q : family.cubes) {
    if (!inside_box(g, q)) continue;
    CellRange r;
    if (!cube_to_range(g, q, &r))
      throw std::invalid_argument("matrix_ap_constant: family cube not cell-aligned");
    if (wzeros.cell_sum(r) > 0.5) {
      ++rep.skipped;
      continue;
    }
    double val;
    if (p > 1.0)
      val = first.average(r, q) * std::pow(am->average(r, q), p - 1.0);
    else
      val = first.average(r, q) * range_max(w, r, [](double x) { return 1.0 / x; });
    ++rep.evaluated;
    if (val > rep.value) {
      rep.value = val;
      rep.arg_sup = q;
    }
  }
  rep.trace = {rep.value};
  enforce_skip_budget(rep, "matrix_ap_constant");
  return rep;
}

WeightConstantReport sawyer_testing_constant(const Weight& u, const Weight& v, const ExponentSet& e,
                                             const CubeFamily& family) {
  e.validate();
  check_weight(u);
  check_weight(v);
  if (!(e.p > 1.0)) throw std::invalid_argument("sawyer_testing_constant: needs p > 1");
  const Grid& g = v.grid();
  WeightConstantReport rep;
  rep.family = family.descriptor;
  FieldPrefix vpref(v);
  double cellvol = g.cell_volume();
  for (const Cube& q : family.cubes) {
    if (!inside_box(g, q)) continue;
    CellRange r;
    if (!cube_to_range(g, q, &r))
      throw std::invalid_argument("sawyer_testing_constant: family cube not cell-aligned");
    double vq = vpref.cell_sum(r) * cellvol;
    if (vq <= 0.0) {
      ++rep.skipped;
      continue;
    }
    // M_alpha(chi_Q v) over the same family, integrated over Q against u
    GridFunction vq_field(g);
    int ylo = g.dim == 2 ? r.lo[1] : 0, yhi = g.dim == 2 ? r.hi[1] : 1;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = r.lo[0]; ix < r.hi[0]; ++ix) vq_field.at(ix, iy) = v.at(ix, iy);
    GridFunction m = fractional_maximal(vq_field, e.alpha, 1.0, family);
    double integral = 0.0;
    for (int iy = ylo; iy < yhi; ++iy)
      for (int ix = r.lo[0]; ix < r.hi[0]; ++ix)
        integral += std::pow(m.at(ix, iy), e.q) * u.at(ix, iy);
    integral *= cellvol;
    double val = std::pow(vq, -1.0 / e.p) * std::pow(integral, 1.0 / e.q);
    ++rep.evaluated;
    if (val > rep.value) {
      rep.value = val;
      rep.arg_sup = q;
    }
  }
  if (rep.skipped > 0) rep.note = std::to_string(rep.skipped) + " cubes skipped (v(Q)=0)";
  rep.trace = {rep.value};
  return rep;
}

namespace {

// nested chain of lattice members containing r, outermost first
std::vector<Cube> lattice_ancestors(const std::vector<std::vector<Cube>>& per_scale, const Cube& r) {
  std::vector<Cube> chain;
  for (const auto& scale : per_scale) {
    for (const Cube& q : scale)
      if (q.contains_cube(r)) {
        chain.push_back(q);
        break;
      }
    if (!chain.empty() && chain.back() == r) break;
  }
  return chain;
}

double lq_norm_of_shells(const Grid& g, const std::vector<Cube>& chain,
                         const std::vector<double>& coef, const FieldPrefix& weight_pref,
                         double qexp) {
  // field sum_k coef[k] chi_{chain[k]} with chain nested decreasing; integrate
  // value^qexp against the weight by peeling shells outermost-in
  double integral = 0.0;
  double running = 0.0;
  double cellvol = g.cell_volume();
  for (size_t k = 0; k < chain.size(); ++k) {
    running += coef[k];
    CellRange rk, rnext;
    if (!cube_to_range(g, chain[k], &rk)) throw std::invalid_argument("testing: cube not aligned");
    double mass_k = weight_pref.cell_sum(rk) * cellvol;
    double mass_next = 0.0;
    if (k + 1 < chain.size()) {
      if (!cube_to_range(g, chain[k + 1], &rnext))
        throw std::invalid_argument("testing: cube not aligned");
      mass_next = weight_pref.cell_sum(rnext) * cellvol;
    }
    integral += std::pow(running, qexp) * (mass_k - mass_next);
  }
  return std::pow(integral, 1.0 / qexp);
}

}  // namespace

WeightConstantReport dyadic_testing_constants(const Weight& u_twisted, const Weight& v,
                                              const ExponentSet& e, double r,
                                              const DyadicLattice& lattice, TestingMode mode) {
  e.validate();
  check_weight(u_twisted);
  check_weight(v);
  if (!(r >= 1.0) || (e.alpha > 0.0 && r >= e.dim / e.alpha))
    throw std::invalid_argument("dyadic_testing_constants: need 1 <= r < n/alpha");
  const Grid& g = v.grid();
  WeightConstantReport rep;
  rep.family = "lattice(tag=" + std::to_string(lattice.tag()) + ",depth=" +
               std::to_string(lattice.depth()) + ")" + (mode.in ? "|in" : "|out") +
               (mode.dual ? "|dual" : "");
  FieldPrefix upref(u_twisted), vpref(v);
  double cellvol = g.cell_volume();
  double npow = e.alpha / e.dim - 1.0 / r;
  auto vmass = [&](const Cube& q) {
    CellRange rr;
    if (!cube_to_range(g, q, &rr)) throw std::invalid_argument("testing: cube not aligned");
    return vpref.cell_sum(rr) * cellvol;
  };
  auto umass = [&](const Cube& q) {
    CellRange rr;
    if (!cube_to_range(g, q, &rr)) throw std::invalid_argument("testing: cube not aligned");
    return upref.cell_sum(rr) * cellvol;
  };

  std::vector<std::vector<Cube>> per_scale;
  for (int k = 0; k <= lattice.depth(); ++k) per_scale.push_back(lattice.cubes_at_scale(k));

  int max_depth_seen = 0;
  for (int kR = 0; kR <= lattice.depth(); ++kR) {
    for (const Cube& R : per_scale[kR]) {
      if (!inside_box(g, R)) continue;
      double vR = vmass(R), uR = umass(R);
      if (!mode.dual && vR <= 0.0) {
        ++rep.skipped;
        continue;
      }
      if (mode.dual && uR <= 0.0) {
        ++rep.skipped;
        continue;
      }
      double val;
      if (!mode.in) {
        std::vector<Cube> chain = lattice_ancestors(per_scale, R);
        max_depth_seen = std::max<int>(max_depth_seen, static_cast<int>(chain.size()));
        std::vector<double> coef(chain.size());
        for (size_t k = 0; k < chain.size(); ++k) {
          double volq = chain[k].volume().to_double();
          if (!mode.dual)
            coef[k] = std::pow(volq, npow) * std::pow(vR, 1.0 / r);
          else
            coef[k] = std::pow(volq, npow) * std::pow(vmass(chain[k]), 1.0 / r - 1.0) * uR;
        }
        if (!mode.dual)
          val = std::pow(vR, -1.0 / e.p) * lq_norm_of_shells(g, chain, coef, upref, e.q);
        else
          val = std::pow(uR, -1.0 / e.q_conj()) * lq_norm_of_shells(g, chain, coef, vpref, e.p_conj());
      } else {
        // descendants of R inside the lattice: accumulate the summand field
        GridFunction field(g);
        for (int k = kR; k <= lattice.depth(); ++k) {
          for (const Cube& q : per_scale[k]) {
            if (!R.contains_cube(q)) continue;
            double volq = q.volume().to_double();
            double c;
            if (!mode.dual)
              c = std::pow(volq, npow) * std::pow(vmass(q), 1.0 / r);
            else
              c = std::pow(volq, npow) * std::pow(vmass(q), 1.0 / r - 1.0) * umass(q);
            CellRange rr;
            cube_to_range(g, q, &rr);
            int ylo = g.dim == 2 ? rr.lo[1] : 0, yhi = g.dim == 2 ? rr.hi[1] : 1;
            for (int iy = ylo; iy < yhi; ++iy)
              for (int ix = rr.lo[0]; ix < rr.hi[0]; ++ix) field.at(ix, iy) += c;
          }
        }
        const Weight& against = mode.dual ? v : u_twisted;
        double qexp = mode.dual ? e.p_conj() : e.q;
        double integral = 0.0;
        CellRange rr;
        cube_to_range(g, R, &rr);
        int ylo = g.dim == 2 ? rr.lo[1] : 0, yhi = g.dim == 2 ? rr.hi[1] : 1;
        for (int iy = ylo; iy < yhi; ++iy)
          for (int ix = rr.lo[0]; ix < rr.hi[0]; ++ix)
            integral += std::pow(field.at(ix, iy), qexp) * against.at(ix, iy);
        integral *= cellvol;
        double norm = std::pow(integral, 1.0 / qexp);
        val = mode.dual ? std::pow(uR, -1.0 / e.q_conj()) * norm : std::pow(vR, -1.0 / e.p) * norm;
      }
      ++rep.evaluated;
      if (val > rep.value) {
        rep.value = val;
        rep.arg_sup = R;
      }
    }
  }
  rep.note = "ancestor chains truncated at depth " + std::to_string(max_depth_seen);
  if (rep.skipped > 0)
    rep.note += "; " + std::to_string(rep.skipped) + " roots skipped (zero mass)";
  rep.trace = {rep.value};
  return rep;
}

std::pair<WeightConstantReport, WeightConstantReport> tilde_testing_constants(
    const Weight& u, const Weight& v, double t, double beta, const std::vector<Cube>& S,
    const ExponentSet& e) {
  e.validate();
  check_weight(u);
  check_weight(v);
  if (!(t > 0.0) || !(t < e.p)) throw std::invalid_argument("tilde_testing_constants: need t in (0,p)");
  if (!(beta > 0.0) || beta > 1.0)
    throw std::invalid_argument("tilde_testing_constants: need beta in (0,1]");
  const Grid& g = v.grid();
  FieldPrefix upref(u), vpref(v);
  double cellvol = g.cell_volume();
  auto mass = [&](const FieldPrefix& p, const Cube& q) {
    CellRange rr;
    if (!cube_to_range(g, q, &rr)) throw std::invalid_argument("tilde testing: cube not aligned");
    return p.cell_sum(rr) * cellvol;
  };
  WeightConstantReport plain, dual;
  plain.family = dual.family = "sparse(|S|=" + std::to_string(S.size()) + ")";
  double qt = e.q / t, pt_conj = (e.p / t) / (e.p / t - 1.0);
  for (const Cube& R : S) {
    double vR = mass(vpref, R), uR = mass(upref, R);
    // ancestors of R within S, nested
    std::vector<Cube> chain;
    for (const Cube& q : S)
      if (q.contains_cube(R)) chain.push_back(q);
    std::sort(chain.begin(), chain.end(),
              [](const Cube& a, const Cube& b) { return b.side < a.side; });
    if (vR > 0.0) {
      std::vector<double> coef(chain.size());
      for (size_t k = 0; k < chain.size(); ++k)
        coef[k] = std::pow(chain[k].volume().to_double(), -beta * t) * std::pow(vR, t);
      double norm = lq_norm_of_shells(g, chain, coef, upref, qt);
      double val = std::pow(vR, -t / e.p) * norm;
      ++plain.evaluated;
      if (val > plain.value) {
        plain.value = val;
        plain.arg_sup = R;
      }
    } else {
      ++plain.skipped;
    }
    if (uR > 0.0) {
      std::vector<double> coef(chain.size());
      for (size_t k = 0; k < chain.size(); ++k)
        coef[k] = std::pow(chain[k].volume().to_double(), -beta * t) *
                  std::pow(mass(vpref, chain[k]), t - 1.0) * uR;
      double norm = lq_norm_of_shells(g, chain, coef, vpref, pt_conj);
      double val = std::pow(uR, -1.0 / ((e.q / t) / (e.q / t - 1.0))) * norm;
      ++dual.evaluated;
      if (val > dual.value) {
        dual.value = val;
        dual.arg_sup = R;
      }
    } else {
      ++dual.skipped;
    }
  }
  plain.trace = {plain.value};
  dual.trace = {dual.value};
  return {plain, dual};
}

Weight conjugate_sigma(const Weight& v, const ExponentSet& e) {
  check_weight(v);
  if (!(e.p > e.s)) throw std::invalid_argument("conjugate_sigma: requires p > s");
  // sigma = v^{p'/(s (p/s)')}: the normalization that sends v = w^{-s(p/s)'}
  // to sigma = w^{-p'} and reduces to sigma = v at s = 1
  double ps = e.p / e.s;
  double exponent = e.p_conj() / (e.s * (ps / (ps - 1.0)));
  return v.pow(exponent);
}

namespace {

double max_cell_ratio(const GridFunction& a, const GridFunction& b) {
  double m = 0.0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i)
    if (bv[i] > 0.0) m = std::max(m, av[i] / bv[i]);
  return m;
}

}  // namespace

bool ClassPropertyReport::all_pass() const {
  for (const auto& r : rows)
    if (r.status == "fail") return false;
  return true;
}

ClassPropertyReport class_property_report(const Weight& w, const LinearMap& A, double p,
                                        const CubeFamily& family, bool allow_resample) {
  check_weight(w);
  if (!(p > 1.0)) throw std::invalid_argument("class_property_report: needs p > 1");
  const Grid& g = w.grid();
  ClassPropertyReport rep;
  const double tol = 1e-9;

  // family enriched with the dilates used by the doubling row
  CubeFamily enriched = family;
  std::vector<std::pair<int, Cube>> dilates;
  for (int lam : {2, 3, 4})
    for (const Cube& q : family.cubes) {
      Cube dq = q.dilate(Rational(lam));
      if (inside_box(g, dq)) {
        CellRange rr;
        if (cube_to_range(g, dq, &rr)) {
          enriched.cubes.push_back(dq);
          dilates.push_back({lam, q});
        }
      }
    }
  enriched.descriptor = family.descriptor + "+dilates";

  Weight wA = pullback(w, A, allow_resample).value;
  LinearMap Ainv = A.inverse();
  Weight wAinv = pullback(w, Ainv, allow_resample).value;

  WeightConstantReport cap = matrix_ap_constant(w, A, p, enriched, allow_resample);
  WeightConstantReport cap_inv = matrix_ap_constant(w, Ainv, p, enriched, allow_resample);
  WeightConstantReport cp = matrix_ap_constant(w, LinearMap::identity(g.dim), p, enriched, false);

  {  // PropwA at the Sobolev pair (alpha = 0, q = p): w(Ax) <= [w] w(x) cellwise
    ExponentSet e;
    e.dim = g.dim;
    e.p = p;
    e.q = p;
    WeightConstantReport capq = matrix_apq_constant(w, A, e, enriched, allow_resample);
    double lhs = max_cell_ratio(wA, w);
    rep.rows.push_back({"pointwise-twist-bound", lhs, capq.value,
                        lhs <= capq.value * (1.0 + tol) ? "pass" : "fail",
                        "max w_A/w vs [w]_{A_{A,p,q}}, q=p"});
  }

  {  // PropdetA
    double sup = 0.0;
    for (const Cube& q : family.cubes) {
      if (!inside_box(g, q)) continue;
      double ratio = cube_image_intersection_volume(A, q) / q.volume().to_double();
      sup = std::max(sup, std::pow(ratio, p));
    }
    double lhs = sup / std::fabs(A.determinant().to_double());
    rep.rows.push_back({"image-overlap-bound", lhs, cap.value,
                        lhs <= cap.value * (1.0 + tol) ? "pass" : "fail",
                        "|det A|^{-1} sup (|AQ∩Q|/|Q|)^p vs [w]_{A_{A,p}}"});
  }

  {  // A-doubling, lambda in {2,3,4}
    FieldPrefix wApref(wA), wpref(w);
    double cellvol = g.cell_volume();
    double worst = 0.0;
    std::int64_t checked = 0;
    for (auto& [lam, q] : dilates) {
      CellRange rq, rd;
      cube_to_range(g, q, &rq);
      cube_to_range(g, q.dilate(Rational(lam)), &rd);
      double wq = wpref.cell_sum(rq) * cellvol;
      if (wq <= 0.0) continue;
      double lhs = wApref.cell_sum(rd) * cellvol;
      double rhs = std::pow(lam, g.dim * p) * cap.value * wq;
      worst = std::max(worst, lhs / rhs);
      ++checked;
    }
    rep.rows.push_back({"twisted-doubling", worst, 1.0, worst <= 1.0 + tol ? "pass" : "fail",
                        "max over " + std::to_string(checked) +
                            " (Q,lambda) of w_A(lambda Q)/(lambda^{np}[w]w(Q))"});
  }

  {  // untwisted constant against the twisted product
    double lhs = cp.value;
    double rhs = cap.value * cap_inv.value;
    rep.rows.push_back({"untwisted-product-bound", lhs, rhs, lhs <= rhs * (1.0 + tol) ? "pass" : "fail",
                        "[w]_{A_p} vs [w]_{A_{A,p}}[w]_{A_{A^{-1},p}}"});
  }

  {  // composed-map constant, measured only (B = A)
    LinearMap AB = A * A;
    WeightConstantReport cab = matrix_ap_constant(w, AB, p, enriched, true);
    double ratio = cab.value / (cap.value * cap.value);
    rep.rows.push_back({"composed-map-ratio", cab.value, cap.value * cap.value, "measured",
                        "ratio " + std::to_string(ratio) + " with B=A; comparability constant unspecified, measured only"});
  }

  {  // averaged twist ratio
    GridFunction ratio_field(g);
    const auto& wav = wA.values();
    const auto& wv = w.values();
    for (size_t i = 0; i < wv.size(); ++i)
      ratio_field.values()[i] = wv[i] > 0.0 ? std::pow(wav[i] / wv[i], 1.0 / p) : 0.0;
    FieldPrefix rpref(ratio_field);
    double cellvol = g.cell_volume();
    double sup = 0.0;
    for (const Cube& q : family.cubes) {
      if (!inside_box(g, q)) continue;
      CellRange rr;
      cube_to_range(g, q, &rr);
      sup = std::max(sup, rpref.cell_sum(rr) * cellvol / q.volume().to_double());
    }
    double rhs = std::pow(cap.value, 1.0 / p);
    rep.rows.push_back({"ratio-average-bound", sup, rhs, sup <= rhs * (1.0 + tol) ? "pass" : "fail",
                        "sup_Q avg_Q (w_A/w)^{1/p} vs [w]_{A_{A,p}}^{1/p}"});
  }

  {  // factorization with a canonical A_1-type pair
    GridFunction w0(g), w1(g);
    int n = g.cells_per_axis();
    for (int iy = 0; iy < (g.dim == 2 ? n : 1); ++iy)
      for (int ix = 0; ix < n; ++ix) {
        Coord c = g.cell_center(ix, iy);
        double mag = std::fabs(c[0].to_double());
        if (g.dim == 2) mag = std::hypot(mag, c[1].to_double());
        double h = g.cell_side().to_double();
        w0.at(ix, iy) = std::pow(std::max(mag, 0.5 * h), -0.3);
        w1.at(ix, iy) = std::pow(std::max(mag, 0.5 * h), -0.2);
      }
    GridFunction wc(g);
    for (size_t i = 0; i < wc.values().size(); ++i)
      wc.values()[i] = w0.values()[i] * std::pow(w1.values()[i], 1.0 - p);
    WeightConstantReport c0 = matrix_ap_constant(w0, A, 1.0, enriched, allow_resample);
    WeightConstantReport c1 = matrix_ap_constant(w1, Ainv, 1.0, enriched, allow_resample);
    WeightConstantReport cw = matrix_ap_constant(wc, A, p, enriched, allow_resample);
    double rhs = c0.value * std::pow(c1.value, p - 1.0);
    rep.rows.push_back({"factorization", cw.value, rhs,
                        cw.value <= rhs * (1.0 + tol) ? "pass" : "fail",
                        "[w0 w1^{1-p}]_{A_{A,p}} vs [w0]_{A_{A,1}}[w1]_{A_{A^{-1},1}}^{p-1}"});
  }

  {  // characterization direction: [w]_{A_{A,p}} <= max(w_A/w) [w]_{A_p}
    double ratio = max_cell_ratio(wA, w);
    double rhs = ratio * cp.value;
    rep.rows.push_back({"characterization", cap.value, rhs,
                        cap.value <= rhs * (1.0 + tol) ? "pass" : "fail",
                        "[w]_{A_{A,p}} vs max(w_A/w)[w]_{A_p}"});
  }

  {  // corollary for involutions / periodic matrices
    if (A.inverse() == A) {
      double rhs = cap.value * cap.value;
      rep.rows.push_back({"involution-bound", cp.value, rhs,
                          cp.value <= rhs * (1.0 + tol) ? "pass" : "fail",
                          "[w]_{A_p} vs [w]_{A_{A,p}}^2"});
    } else {
      int N = -1;
      LinearMap power = A;
      for (int k = 2; k <= 8; ++k) {
        power = power * A;
        if (power == A) {
          N = k;
          break;
        }
      }
      if (N > 0) {
        double rhs = std::pow(cap.value, N);
        rep.rows.push_back({"periodic-map-ratio", cp.value, rhs, "measured",
                            "N=" + std::to_string(N) + "; comparability constant unspecified, measured only"});
      } else {
        rep.rows.push_back({"periodic-map-ratio", 0.0, 0.0, "n/a", "no period N<=8"});
      }
    }
  }

  {  // monotonicity p < q on the classical constants
    double q2 = p + 1.0;
    WeightConstantReport cq = matrix_ap_constant(w, A, q2, enriched, allow_resample);
    rep.rows.push_back({"monotonicity", cq.value, cap.value,
                        cq.value <= cap.value * (1.0 + tol) ? "pass" : "fail",
                        "[w]_{A_{A,q}} <= [w]_{A_{A,p}} with q=p+1"});
  }

  {  // sup-over-f characterization attains [w]_{A_{A,p}} at f = sigma
    double pp = p / (p - 1.0);
    GridFunction sigma = w.pow(1.0 - pp);
    FieldPrefix spref(sigma), wApref(wA);
    double cellvol = g.cell_volume();
    double best = 0.0;
    for (const Cube& q : enriched.cubes) {
      if (!inside_box(g, q)) continue;
      CellRange rr;
      cube_to_range(g, q, &rr);
      double savg = spref.cell_sum(rr) * cellvol / q.volume().to_double();
      double smass = spref.cell_sum(rr) * cellvol;  // ∫ sigma^p w = ∫ sigma
      double wAq = wApref.cell_sum(rr) * cellvol;
      if (smass <= 0.0 || wAq <= 0.0) continue;
      best = std::max(best, std::pow(savg, p) / (smass / wAq));
    }
    double diff = std::fabs(best - cap.value) / std::max(cap.value, 1e-300);
    rep.rows.push_back({"sup-over-f", best, cap.value, diff <= 1e-9 ? "pass" : "fail",
                        "extremal f = sigma attains [w]_{A_{A,p}}"});
  }

  return rep;
}

}  // namespace sparsedom
