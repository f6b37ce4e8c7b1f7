#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sparsedom/experiments.hpp"

using namespace sparsedom;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  int depth = -1;
  std::string grid_spec;  // "J,L"
  std::uint64_t seed = 0;
  bool has_seed = false;
  bool override_budget = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment config file");
  cmd->add_option("--out", o.out_path, "output CSV path (default stdout)");
  cmd->add_option("--depth", o.depth, "override lattice/trace depth");
  cmd->add_option("--grid", o.grid_spec, "override grid as J,L");
  cmd->add_option("--seed", o.seed, "override suite seed")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_flag("--override-budget", o.override_budget, "bypass the dense-quadrature cost guards");
}

ExperimentConfig load_config(const CommonOpts& o) {
  ExperimentConfig cfg =
      o.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(o.config_path);
  if (o.depth > 0) cfg.trace_depths = o.depth;
  if (!o.grid_spec.empty()) {
    auto comma = o.grid_spec.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--grid expects J,L");
    cfg.box_exp = std::stoi(o.grid_spec.substr(0, comma));
    cfg.cell_exp = std::stoi(o.grid_spec.substr(comma + 1));
  }
  if (o.has_seed) cfg.seed = o.seed;
  if (o.override_budget) cfg.override_budget = true;
  return cfg;
}

int finish(std::vector<ReportRow> rows, const CommonOpts& o) {
  int fails = count_failures(rows);
  if (o.out_path.empty())
    std::cout << render_report(std::move(rows));
  else
    emit_report(std::move(rows), o.out_path);
  return fails == 0 ? 0 : 1;
}

std::vector<ReportRow> lattice_check_rows(int dim, int depth) {
  std::vector<ReportRow> rows;
  Cube base = dim == 1 ? Cube(Rational(0), Rational(8)) : Cube(Rational(0), Rational(0), Rational(8));
  auto lattices = make_shifted_lattices(dim, depth, base);
  auto refs = reference_cubes(base, depth);
  std::int64_t triple_fail = 0, containing_fail = 0, side_fail = 0;
  for (const Cube& q : refs) {
    int members = 0;
    for (const auto& lat : lattices)
      if (lat.is_member(q.triple())) ++members;
    if (members != 1) ++triple_fail;
    for (const auto& lat : lattices) {
      try {
        Cube r = lat.containing_triple(q);
        if (!(r.side == q.side * Rational(3)) || !r.contains_cube(q)) ++side_fail;
      } catch (const std::exception&) {
        ++containing_fail;
      }
    }
  }
  std::int64_t nesting_fail = 0;
  for (const auto& lat : lattices) {
    auto cubes = lat.cubes();
    for (size_t a = 0; a < cubes.size(); ++a)
      for (size_t b = a + 1; b < cubes.size(); ++b) {
        bool nested = cubes[a].contains_cube(cubes[b]) || cubes[b].contains_cube(cubes[a]);
        if (!nested && cubes[a].intersects(cubes[b])) ++nesting_fail;
      }
  }
  auto row = [&](const std::string& what, std::int64_t fails, std::int64_t total) {
    rows.push_back({"lattice-check", what, depth, static_cast<double>(fails), 0.0, true,
                    fails == 0 ? "pass" : "fail",
                    std::to_string(total) + " cases, dim=" + std::to_string(dim)});
  };
  row("triple-membership", triple_fail, static_cast<std::int64_t>(refs.size()));
  row("containing-triple", containing_fail + side_fail,
      static_cast<std::int64_t>(refs.size() * lattices.size()));
  row("nesting", nesting_fail, 0);
  return rows;
}

std::vector<ReportRow> kernel_rows(const ExperimentConfig& cfg) {
  OperatorSpec spec = cfg.operator_spec();
  std::vector<ReportRow> rows;
  for (int i = 0; i < spec.m(); ++i) {
    auto size = kernel_size_constant(spec.kernels[static_cast<size_t>(i)], spec.alpha_i[i],
                                     spec.r_i[i], cfg.dim, -6, 4);
    rows.push_back({"kernels", "size-constant-k" + std::to_string(i + 1), 0, size.constant, 0.0,
                    false, size.diverging ? "fail" : "measured",
                    size.stable ? "stable" : "diverging"});
    std::vector<Coord> probes;
    for (int k = -2; k <= 0; ++k) probes.push_back(Coord{pow2(k), Rational(0)});
    auto horm = kernel_hormander_constant(spec.kernels[static_cast<size_t>(i)], spec.alpha_i[i],
                                          spec.r_i[i], cfg.dim, probes, 2.0, 12);
    rows.push_back({"kernels", "hormander-constant-k" + std::to_string(i + 1), 0, horm.constant,
                    0.0, false, horm.stable ? "measured" : "fail",
                    horm.stable ? "stable partial sums" : "tail above 1%"});
  }
  return rows;
}

std::vector<ReportRow> weight_rows(const ExperimentConfig& cfg, const std::string& detail_path) {
  std::vector<ReportRow> rows;
  ExponentSet e = cfg.exponents;
  e.dim = cfg.dim;
  const LinearMap A = cfg.matrices.empty() ? LinearMap::identity(cfg.dim) : cfg.matrices[0];
  WeightConstantReport traced;
  for (int d = 0; d < cfg.trace_depths; ++d) {
    Grid g = cfg.grid(d);
    Weight w = cfg.make_weight(g);
    CubeFamily fam = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
    WeightConstantReport rep = matrix_apq_constant(w, A, e, fam);
    traced.trace.push_back(rep.value);
    traced.value = rep.value;
    traced.arg_sup = rep.arg_sup;
    traced.family = rep.family;
    rows.push_back({"weights", "matrix-apq", d, rep.value, 0.0, false, "measured", rep.family});
  }
  traced.diverging = trace_diverging(traced.trace);
  rows.push_back({"weights", "divergence-flag", cfg.trace_depths - 1,
                  traced.diverging ? 1.0 : 0.0, 0.0, false, "measured",
                  traced.diverging ? "diverging (>=x2 over last two steps)" : "stable"});
  if (!detail_path.empty()) write_weight_reports_csv({{"matrix-apq", traced}}, detail_path);
  return rows;
}

std::vector<ReportRow> sparse_rows(const ExperimentConfig& cfg, const std::string& cert_path) {
  OperatorSpec spec = cfg.operator_spec();
  Grid g = cfg.grid();
  CubeFamily fam = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
  auto suite = test_function_suite(g, fam, cfg.seed, 1, true);
  SparseBuildParams params;
  params.override_budget = cfg.override_budget;
  params.s = spec.s;
  DominationCertificate cert = build_sparse_domination(spec, suite[0], params);
  if (!cert_path.empty()) write_certificate(cert, g, cert_path);
  std::vector<ReportRow> rows;
  rows.push_back({"sparse", "constant", 0, cert.c, 0.0, false,
                  cert.c_defined ? "measured" : "fail", cert.note});
  rows.push_back({"sparse", "gamma", 0, cert.gamma, 0.0, false, "measured",
                  std::to_string(cert.gamma_doublings) + " doublings"});
  rows.push_back({"sparse", "pre-sparsity", 0, cert.pre_audit.min_ratio, 0.5, true,
                  cert.pre_audit.ok ? "pass" : "fail", "eta = 1/2 with canonical witnesses"});
  rows.push_back({"sparse", "post-sparsity", 0, cert.post_audit.min_ratio,
                  1.0 / (2.0 * std::pow(9.0, g.dim)), true,
                  cert.post_audit.ok ? "pass" : "fail", "redistributed families"});
  rows.push_back({"sparse", "cz-packing", 0, cert.cz_audit.max_packing_ratio, 1.0, true,
                  cert.cz_audit.packing_ok ? "pass" : "fail", "|E∩Q| <= |Q|/2^{n+2}"});
  rows.push_back({"sparse", "cz-selection", 0, cert.cz_audit.max_selection_ratio, 1.0, true,
                  cert.cz_audit.selection_ok ? "pass" : "fail", "sum|P_j| <= 2^{n+1}|E|"});
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted-inequality and sparse-domination verification toolkit"};
  app.require_subcommand(1);

  CommonOpts o;
  int lat_dim = 1, lat_depth = 4;
  std::string scenario, cert_path;
  std::vector<std::string> merge_inputs;

  CLI::App* lat = app.add_subcommand("lattice-check", "exhaustive shifted-lattice verification");
  lat->add_option("--dim", lat_dim, "dimension (1 or 2)");
  lat->add_option("--lattice-depth", lat_depth, "scale count");
  add_common(lat, o);

  CLI::App* ker = app.add_subcommand("kernels", "kernel size and Hormander condition reports");
  add_common(ker, o);

  CLI::App* wgt = app.add_subcommand("weights", "weight class constant traces");
  std::string weight_detail;
  wgt->add_option("--detail-out", weight_detail,
                  "per-depth constants CSV (check, depth, value, arg-sup cube, flag)");
  add_common(wgt, o);

  CLI::App* spr = app.add_subcommand("sparse", "build and audit a sparse domination certificate");
  spr->add_option("--certificate", cert_path, "certificate output path");
  std::string reverify_path;
  spr->add_option("--verify-certificate", reverify_path,
                  "re-audit a stored certificate instead of building");
  add_common(spr, o);

  CLI::App* ver = app.add_subcommand("verify", "run a theorem-level verification scenario");
  ver->add_option("scenario", scenario,
                  "one of: weak-type, sawyer, necessity, scaling, pointwise")
      ->required();
  add_common(ver, o);

  CLI::App* rep = app.add_subcommand("report", "merge scenario CSVs into one sorted report");
  rep->add_option("--in", merge_inputs, "input CSVs")->required();
  add_common(rep, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (lat->parsed()) return finish(lattice_check_rows(lat_dim, lat_depth), o);
    ExperimentConfig cfg = load_config(o);
    if (ker->parsed()) return finish(kernel_rows(cfg), o);
    if (wgt->parsed()) return finish(weight_rows(cfg, weight_detail), o);
    if (spr->parsed()) {
      if (!reverify_path.empty()) {
        LoadedCertificate lc = load_certificate(reverify_path);
        std::string detail;
        bool ok = reverify_certificate(lc, &detail);
        std::vector<ReportRow> rows;
        rows.push_back({"sparse", "certificate-reverify", 0, ok ? 1.0 : 0.0, 1.0, true,
                        ok ? "pass" : "fail", detail});
        return finish(std::move(rows), o);
      }
      return finish(sparse_rows(cfg, cert_path), o);
    }
    if (ver->parsed()) {
      cfg.scenario = scenario;
      std::vector<ReportRow> rows;
      if (scenario == "weak-type") rows = run_weak_type(cfg);
      else if (scenario == "sawyer") rows = run_sawyer(cfg);
      else if (scenario == "necessity") rows = run_necessity(cfg);
      else if (scenario == "scaling") rows = run_scaling(cfg);
      else if (scenario == "pointwise") rows = run_pointwise_lemmas(cfg);
      else throw std::invalid_argument("unknown scenario '" + scenario + "'");
      return finish(std::move(rows), o);
    }
    if (rep->parsed()) {
      std::vector<ReportRow> rows;
      for (const std::string& path : merge_inputs) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("report: cannot open " + path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          ReportRow r;
          std::istringstream ss(line);
          std::string tok;
          std::getline(ss, r.scenario, ',');
          std::getline(ss, r.quantity, ',');
          std::getline(ss, tok, ',');
          r.depth = std::stoi(tok);
          std::getline(ss, tok, ',');
          r.value = std::stod(tok);
          std::getline(ss, tok, ',');
          r.has_target = !tok.empty();
          if (r.has_target) r.target = std::stod(tok);
          std::getline(ss, r.status, ',');
          std::getline(ss, r.note);
          if (r.note.size() >= 2 && r.note.front() == '"' && r.note.back() == '"')
            r.note = r.note.substr(1, r.note.size() - 2);
          rows.push_back(r);
        }
      }
      return finish(std::move(rows), o);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
