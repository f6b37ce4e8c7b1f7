#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsedom/sparse.hpp"
#include "sparsedom/weights.hpp"

namespace sparsedom {

// One line of a scenario report. Asserted rows carry status pass/fail and
// the invariant id in `quantity`; everything else is measured.
struct ReportRow {
  std::string scenario;
  std::string quantity;
  int depth = 0;
  double value = 0.0;
  double target = 0.0;
  bool has_target = false;
  std::string status;  // pass | fail | measured
  std::string note;
};

struct ExperimentConfig {
  std::string scenario;
  int dim = 1;
  int box_exp = 2;
  int cell_exp = 6;

  std::string weight_recipe = "ones";  // ones | power | product | piecewise | exp
  std::vector<double> weight_params;   // recipe parameters (power: beta; ...)
  std::vector<double> beta_family;     // boundary-approaching family for the scaling scenario

  std::vector<LinearMap> matrices;
  ExponentSet exponents;

  std::vector<double> kernel_alphas;  // power-profile exponents alpha_i
  std::vector<double> kernel_rs;      // r_i (inf allowed)
  std::vector<std::string> kernel_tables;  // optional CSV paths; empty = power

  std::uint64_t seed = 42;
  int suite_size = 20;
  int trace_depths = 4;

  double identity_tol = 1e-12;
  double truncation_budget = 1e-3;
  bool override_budget = false;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_string(const std::string& text);

  Grid grid(int extra_depth = 0) const;
  Weight make_weight(const Grid& g) const;
  Weight make_weight(const Grid& g, double beta_override) const;
  OperatorSpec operator_spec() const;
};

// Deterministic seeded suite: indicators of family cubes, sums of two
// indicators, random nonnegative fields and (unless nonneg_only) one
// oscillating field.
std::vector<GridFunction> test_function_suite(const Grid& g, const CubeFamily& family,
                                              std::uint64_t seed, int size, bool nonneg_only);

std::vector<ReportRow> run_weak_type(const ExperimentConfig& cfg);
std::vector<ReportRow> run_sawyer(const ExperimentConfig& cfg);
std::vector<ReportRow> run_necessity(const ExperimentConfig& cfg);
std::vector<ReportRow> run_scaling(const ExperimentConfig& cfg);
std::vector<ReportRow> run_pointwise_lemmas(const ExperimentConfig& cfg);

// Deterministic CSV: rows sorted by (scenario, quantity, depth, note),
// identical inputs produce identical bytes.
void emit_report(std::vector<ReportRow> rows, const std::string& path);
std::string render_report(std::vector<ReportRow> rows);
int count_failures(const std::vector<ReportRow>& rows);

}  // namespace sparsedom
