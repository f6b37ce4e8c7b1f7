#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sparsedom/operators.hpp"

namespace sparsedom {

// Exponent bundle (n, alpha, p, q, s) plus optional kernel exponents.
struct ExponentSet {
  int dim = 1;
  double alpha = 0.0;
  double p = 2.0;
  double q = 2.0;
  double s = 1.0;
  std::vector<double> r_i;
  std::vector<double> alpha_i;

  double p_conj() const { return p > 1.0 ? p / (p - 1.0) : kInfExponent; }
  double q_conj() const { return q / (q - 1.0); }
  bool sobolev_linked(double tol = 1e-12) const {
    return std::fabs(1.0 / q - (1.0 / p - alpha / dim)) <= tol;
  }
  void validate() const;
};

// A computed weight/testing constant: the value is a supremum over the named
// finite cube family, hence family-relative; traced drivers append the
// refinement trace and the divergence flag.
struct WeightConstantReport {
  double value = 0.0;
  Cube arg_sup;
  std::string family;
  std::vector<double> trace;
  bool diverging = false;
  std::int64_t evaluated = 0;
  std::int64_t skipped = 0;
  std::string note;
};

// Divergence rule shared by all traced constants: the value at least doubled
// over the last two recorded steps.
bool trace_diverging(const std::vector<double>& trace);

// CSV serialization of computed constants: one row per trace entry with
// columns (check id, family depth, value, arg-sup cube, flag).
void write_weight_reports_csv(
    const std::vector<std::pair<std::string, WeightConstantReport>>& reports,
    const std::string& path);

// sup over Q of (avg_Q w^q)^{1/q} (avg_Q w^{-p'})^{1/p'}; the p = 1 branch
// replaces the second factor by the grid max of w^{-1} on Q. Cubes with a
// zero cell are skipped and counted; more than 1% skipped cubes rejects the
// weight.
WeightConstantReport apq_constant(const Weight& w, const ExponentSet& e, const CubeFamily& family);

// Same with w_A^q = w(A.)^q in the first factor.
WeightConstantReport matrix_apq_constant(const Weight& w, const LinearMap& A, const ExponentSet& e,
                                         const CubeFamily& family, bool allow_resample = false);

// Classical A_p normalization sup (avg_Q w_A)(avg_Q w^{1-p'})^{p-1} used by
// the class property suite (p = 1: (avg_Q w_A) * max_Q w^{-1}).
WeightConstantReport matrix_ap_constant(const Weight& w, const LinearMap& A, double p,
                                        const CubeFamily& family, bool allow_resample = false);

// Sawyer testing constant sup_Q v(Q)^{-1/p} (∫_Q M_alpha(chi_Q v)^q u)^{1/q};
// the maximal operator runs over the same family.
WeightConstantReport sawyer_testing_constant(const Weight& u, const Weight& v, const ExponentSet& e,
                                             const CubeFamily& family);

// The four dyadic testing constants over one truncated lattice.
struct TestingMode {
  bool in = false;    // sum over descendants instead of ancestors
  bool dual = false;  // the starred constant
};
WeightConstantReport dyadic_testing_constants(const Weight& u_twisted, const Weight& v,
                                              const ExponentSet& e, double r,
                                              const DyadicLattice& lattice, TestingMode mode);

// The two testing constants of the tilde sparse operator over a sparse
// collection of cubes.
std::pair<WeightConstantReport, WeightConstantReport> tilde_testing_constants(
    const Weight& u, const Weight& v, double t, double beta, const std::vector<Cube>& S,
    const ExponentSet& e);

// sigma = v^{p'/(p/s)'}; requires p > s.
Weight conjugate_sigma(const Weight& v, const ExponentSet& e);

// Property suite for the twisted weight classes on one (w, A, p)
// configuration: pointwise twist bound, image-overlap bound, twisted
// doubling, product/composition bounds, factorization, characterization,
// monotonicity and the extremal-function identity.
struct ClassPropertyRow {
  std::string id;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string status;  // pass | fail | measured | n/a
  std::string note;
};
struct ClassPropertyReport {
  std::vector<ClassPropertyRow> rows;
  bool all_pass() const;
};
ClassPropertyReport class_property_report(const Weight& w, const LinearMap& A, double p,
                                        const CubeFamily& family, bool allow_resample = false);

}  // namespace sparsedom
