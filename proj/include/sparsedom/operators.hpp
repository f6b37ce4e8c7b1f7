#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/grid.hpp"
#include "sparsedom/kernels.hpp"

namespace sparsedom {

struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cube source for the maximal operators and weight constants. The family is
// part of every result that depends on it, hence the descriptor.
struct CubeFamily {
  std::vector<Cube> cubes;
  std::string descriptor;
};

// Union of the 3^n shifted lattices and the reference lattice over the grid
// box, scales 0..depth (depth <= J+L+1 so everything stays cell-aligned).
CubeFamily lattice_union_family(const Grid& g, int depth);
CubeFamily reference_family(const Grid& g, int depth);
CubeFamily single_lattice_family(const DyadicLattice& lat);
// All grid-aligned intervals, n = 1 only. O(N^2) cubes; refuses more than
// max_cells cells per axis.
CubeFamily interval_family(const Grid& g, int max_cells = 512);

// At each cell x, sup over family cubes Q containing x of
// |Q|^{alpha/n} * ((1/|Q|) ∫_Q |f|^s)^{1/s}. Reduces to the plain fractional
// maximal operator at s = 1.
GridFunction fractional_maximal(const GridFunction& f, double alpha, double s,
                                const CubeFamily& family);

// x -> M_{alpha,s} f(A^{-1} x), the twisted maximal operator.
GridFunction composed_maximal(const GridFunction& f, double alpha, double s, const LinearMap& A,
                              const CubeFamily& family, bool allow_resample = false);

// (M(|g|^delta))^{1/delta} with M the maximal operator at alpha = 0, s = 1.
GridFunction delta_smoothed_maximal(const GridFunction& g, double delta, const CubeFamily& family);

// The product-kernel operator T_{alpha,m}.
struct OperatorSpec {
  int dim = 1;
  double alpha = 0.0;
  std::vector<KernelSpec> kernels;   // k_1..k_m
  std::vector<LinearMap> maps;       // A_1..A_m
  std::vector<double> alpha_i;       // kernel exponents, sum = n - alpha
  std::vector<double> r_i;           // integrability indices (inf allowed)
  double s = 1.0;

  int m() const { return static_cast<int>(kernels.size()); }
  void validate() const;  // throws on any violated structural invariant
};

// Dense quadrature for T f(x) = sum_cells K(x, y) f(y) |cell| with the
// singular-cell rule (profile replaced by its cell-ball average when the
// kernel argument falls within half a cell of the singularity).
GridFunction apply_T(const OperatorSpec& spec, const GridFunction& f, bool override_budget = false);

// Prefix sums of K(xi, .) f(.): O(1) evaluation of T(f chi_R)(xi) for
// grid-aligned boxes R. Shared by the grand maximal operator and the sparse
// builder, which reuse them across many truncations of the same f. In one
// dimension the storage is column-major (fixed y-boundary, contiguous xi) so
// that per-tuple scans over xi stream sequentially.
class TruncationCache {
 public:
  TruncationCache(const OperatorSpec& spec, const GridFunction& f, bool override_budget = false);

  const Grid& grid() const { return f_.grid(); }
  // T(f chi_{cells in r})(center of cell xi)
  double partial(std::int64_t xi_flat, const CellRange& r) const;
  void ensure_rows(const CellRange& xi_range);  // prebuild (no-op for n = 1)

  // n = 1 only: pointer to the column of prefix values at y-boundary b,
  // indexed by xi. partial over [a,b) at xi is col(b)[xi] - col(a)[xi].
  const double* column(int y_boundary) const {
    return col_.data() + static_cast<size_t>(y_boundary) * static_cast<size_t>(cells_);
  }

 private:
  void build_columns();
  void build_row(std::int64_t xi_flat) const;

  const OperatorSpec spec_;
  GridFunction f_;
  int cells_ = 0;
  std::vector<double> col_;                                // n = 1
  mutable std::vector<std::unique_ptr<double[]>> rows_;    // n = 2
};

// Local grand maximal truncated operator on the given root cubes
// Q_0^1..Q_0^m (all grid-aligned and inside the box): at each cell x the sup
// over tuples Q_i in D(Q_0^i) with A_i^{-1}x in Q_i — capped to the dyadic
// ancestors of the cell of A_i^{-1}x — of
//   max_{xi in cells(∪ Q_i)} |T(f chi_{∪3Q_0^i \ ∪3Q_i})(xi)|.
GridFunction grand_maximal_truncated_local(const OperatorSpec& spec, const GridFunction& f,
                                           const std::vector<Cube>& roots,
                                           TruncationCache* cache = nullptr);

// Internal building block exposed for the sparse engine: the same operator,
// evaluated only at the cells of eval_range, writing into out (grid-sized).
void grand_maximal_truncated_local_on(const OperatorSpec& spec, const GridFunction& f,
                                      const std::vector<Cube>& roots, TruncationCache& cache,
                                      const CellRange& eval_range, GridFunction& out);

// Simple deterministic parallel loop (blocks of indices, stable writes).
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace sparsedom
