#pragma once

// Discrete exterior calculus on the simplicial complexes of mesh.hpp:
// cochains, exact coboundaries, Whitney-form Galerkin mass matrices (Hodge
// stars), codifferentials, Hodge Laplacians, Hodge decomposition, clustered
// eigensolves, and weighted kernel extraction.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

#include "sasdef/mesh.hpp"

namespace sasdef::dec {

using mesh::SpMat;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Cochain {
  int degree = 0;
  Vec values;
};

// Dense-solver ceiling: problems at or below this size use dense symmetric
// eigensolvers, larger ones go through sparse shift-invert paths.
constexpr long kDenseThreshold = 3000;

class FormOperators {
public:
  int dim = 0; // n
  std::array<long, 3> betti{};

  // Coboundaries (shared with the complex): d[0] is E x V, d[1] is F x E.
  SpMat d[2];
  // Whitney Galerkin mass matrices per degree, symmetric positive definite.
  SpMat star[3];

  long n_forms(int k) const;
  const SpMat& d_matrix(int k) const;   // Lambda^k -> Lambda^{k+1}
  bool has_degree(int k) const { return k >= 0 && k <= dim; }

  Vec d_apply(int k, const Vec& x) const;
  Vec codiff_apply(int k, const Vec& x) const;    // Lambda^k -> Lambda^{k-1}
  Vec laplacian_apply(int k, const Vec& x) const;
  Vec mass_apply(int k, const Vec& x) const { return star[k] * x; }
  Vec mass_solve(int k, const Vec& x) const;
  double inner(int k, const Vec& x, const Vec& y) const;
  double norm(int k, const Vec& x) const;

  // Weak Laplacian S_k Delta_k as an explicit dense matrix (small problems
  // only; symmetric by construction).
  Mat weak_laplacian_dense(int k) const;
  // Sparse weak Laplacian for 0-forms: d0^T S1 d0.
  SpMat weak_stiffness0() const;

  const Eigen::SimplicialLLT<SpMat>& mass_factor(int k) const;

private:
  friend FormOperators assemble_operators(const mesh::SimplicialComplex&,
                                          const mesh::MetricData&);
  std::shared_ptr<Eigen::SimplicialLLT<SpMat>> llt_[3];
};

FormOperators assemble_operators(const mesh::SimplicialComplex& sc,
                                 const mesh::MetricData& metric);

struct HodgeParts {
  Vec exact, coexact, harmonic;
};

// Star-orthogonal splitting c = d p + delta q + h. Error(SolverFailure) with
// the residual if an inner CG stalls.
HodgeParts hodge_decompose(const FormOperators& ops, int k, const Vec& c);

struct EigenCluster {
  std::vector<double> values;
  Mat vectors; // columns, star_k-orthonormal
  // Set when some eigenvalue sits within 10% of the window edge, inside or
  // out; the count is then sensitive to the window choice.
  bool edge_ambiguity = false;
};

// All generalized eigenpairs of (Delta_k, star_k) with |lambda - target| <=
// delta*max(target, 1), sorted ascending.
EigenCluster eigen_cluster(const FormOperators& ops, int k, double target,
                           double delta);

// Star-orthonormal basis of the span of eigenvectors with lambda < tol.
std::vector<Vec> harmonic_basis(const FormOperators& ops, int k, double tol);

struct KernelResult {
  long dim = 0;
  Mat basis; // columns, S_dom-orthonormal
  Vec singular_values;
};

// Singular values of A between star-weighted spaces; counts those below
// tol * sigma_max. Dense path (suitable below kDenseThreshold unknowns).
KernelResult kernel_dim(const Mat& A, const SpMat& S_dom, const SpMat& S_cod,
                        double tol);

} // namespace sasdef::dec
