#pragma once

#include <string>
#include <vector>

#include "sparsedom/operators.hpp"

namespace sparsedom {

// eta-sparse cube collection: each member owns a disjoint witness set E_Q
// with |E_Q| >= eta |Q|. lattice_tag >= 0 marks one of the 3^n shifted
// families after redistribution; -1 is the pre-redistribution tree family.
struct SparseFamily {
  int lattice_tag = -1;
  std::vector<Cube> cubes;
  std::vector<CellMask> witnesses;  // parallel to cubes; may be empty
  double eta_target = 0.5;
};

struct SparseBuildParams {
  double gamma = 1.0;       // starting threshold multiplier, doubled until packing holds
  double cz_height = -1.0;  // Calderon-Zygmund height; < 0 means the default 2^{-(n+1)}
  int max_depth = 64;
  double s = 1.0;           // defaults to the operator's s when <= 0
  int max_gamma_doublings = 20;
  bool override_budget = false;
};

struct SparsityAudit {
  bool ok = false;
  double min_ratio = 0.0;  // min |E_Q|/|Q| over the family
  bool witnesses_contained = false;
  bool witnesses_disjoint = false;
  std::int64_t checked = 0;
  std::string note;
};

struct CzAudit {
  bool selection_ok = true;  // sum |P_j| <= 2^{n+1} |E ∩ root| at every node
  bool packing_ok = true;    // |E ∩ root| <= |root| / 2^{n+2} at every node
  double max_selection_ratio = 0.0;
  double max_packing_ratio = 0.0;
  std::int64_t nodes = 0;
};

struct DominationCertificate {
  std::vector<SparseFamily> families;  // the 3^n redistributed families
  SparseFamily pre_family;             // the union tree F with canonical witnesses
  std::vector<Cube> roots;
  double gamma = 1.0;
  int gamma_doublings = 0;
  double c = 0.0;  // measured pointwise constant
  bool c_defined = false;
  SparsityAudit pre_audit;   // eta = 1/2
  SparsityAudit post_audit;  // eta = 1/(2*9^n), worst family
  CzAudit cz_audit;
  int max_depth_reached = 0;
  std::string note;
};

// x -> sum_{Q in S} |Q|^{alpha/n} ||f||_{s,Q} chi_Q(A^{-1} x).
GridFunction sparse_apply(const SparseFamily& S, const GridFunction& f, double alpha, double s,
                          const LinearMap& A);

// x -> (sum_{Q in S} (|Q|^{-beta} ∫_Q g)^t chi_Q(x))^{1/t}.
GridFunction tilde_sparse_apply(const SparseFamily& S, const GridFunction& g, double t, double beta);

// Max relative deviation between the sparse operator and its tilde-route
// rewrite (an algebraic identity; the two evaluations share nothing but the
// cube integrals).
double comp_sparse_check(const SparseFamily& S, const GridFunction& f, double alpha, double r);

// Witness containment, pairwise disjointness and the measure bound. When the
// family carries no witnesses the canonical choice E_Q = Q minus the union
// of the maximal members strictly inside Q is audited instead.
SparsityAudit verify_sparsity(const SparseFamily& S, double eta, const Grid& grid);

// Cells of the roots where |f| (alpha = 0 only) or the local grand maximal
// operator exceed the build thresholds.
CellMask exceptional_set(const OperatorSpec& spec, const GridFunction& f,
                         const std::vector<Cube>& roots, const SparseBuildParams& params,
                         TruncationCache* cache = nullptr);

// Maximal dyadic subcubes of root with mask-average > height. Requires the
// root average to be at most height.
std::vector<Cube> cz_decompose(const CellMask& mask, const Cube& root, double height);

// The full constructive sparse domination.
DominationCertificate build_sparse_domination(const OperatorSpec& spec, const GridFunction& f,
                                              const SparseBuildParams& params);

// Certificate snapshot: grid, families with witness runs, gamma, c and the
// audits; enough to re-verify the sparsity structure without re-running the
// builder.
void write_certificate(const DominationCertificate& cert, const Grid& grid,
                       const std::string& path);
struct LoadedCertificate {
  Grid grid;
  DominationCertificate cert;
};
LoadedCertificate load_certificate(const std::string& path);
// Re-audits every family of a loaded certificate at its declared eta.
bool reverify_certificate(const LoadedCertificate& lc, std::string* detail = nullptr);

}  // namespace sparsedom
