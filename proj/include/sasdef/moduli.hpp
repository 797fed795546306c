#pragma once

// Moduli-tangent computation: the near-kernel of each deformation operator,
// built from the characterization that the corresponding theorem proves
// (Laplace eigenvalue clusters, harmonic forms, closed cochains, exterior
// derivative graphs), verified by applying the assembled operator to every
// candidate, and cross-checked against a dense singular-value count on
// problems small enough to afford one.

#include <vector>

#include "sasdef/operators.hpp"

namespace sasdef::deform {

struct ModuliReport {
  Kind kind = Kind::SpecialLegendrian;
  double kappa = 0;

  long kernel_dim = 0;    // verified moduli-tangent dimension
  long predicted_dim = 0; // the characterization's count
  long cokernel_dim = 0;  // cod - dom + kernel_dim (rank-nullity)
  bool match = false;

  // Laplace eigenvalues consulted (empty for the kinds that do not use a
  // cluster) and the flag carried over from the eigensolve window.
  std::vector<double> clusters;
  bool cluster_ambiguity = false;

  // Worst star-norm residual ‖D1 b‖/‖b‖ over the verified basis candidates.
  double basis_residual = 0;

  // Dense singular-value cross-check: -1 when the problem was too large.
  long cross_dim = -1;

  // Whether (1,0), the Reeb direction, lies in the kernel; meaningless for
  // the kind without a Lambda^0 domain block.
  bool reeb_applicable = false;
  bool reeb_in_kernel = false;
  double reeb_residual = 0;

  double tol_cluster = 0; // relative eigenvalue window
  double tol_residual = 0;
  double tol_svd = 0;

  // S_dom-orthonormal kernel basis, packed domain layout; left empty when
  // the dimension is large.
  Mat basis;
};

ModuliReport moduli_tangent(Kind kind, const dec::FormOperators& ops,
                            double kappa, double delta = 0.05);

// Block-diagonal mass matrix over a degree list, matching the packed vector
// layout of BlockOperator.
SpMat block_mass_matrix(const dec::FormOperators& ops,
                        const std::vector<int>& degs);

} // namespace sasdef::deform
