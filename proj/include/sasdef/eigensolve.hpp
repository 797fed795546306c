#pragma once

// Symmetric-pencil eigensolvers and Krylov utilities shared by the DEC and
// deformation layers. All routines are deterministic: starting vectors come
// from a fixed-seed generator, never from entropy.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>

#include "sasdef/mesh.hpp"

namespace sasdef::la {

using mesh::SpMat;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using LinOp = std::function<Vec(const Vec&)>;

struct EigenPairs {
  Vec values;   // ascending
  Mat vectors;  // M-orthonormal columns
};

// Full spectrum of the pencil (K, M), K symmetric, M SPD. Dense.
EigenPairs dense_pencil(const Mat& K, const Mat& M);

// Eigenpairs of (K, M) nearest sigma via shift-invert Lanczos with full
// reorthogonalization (SparseLU factorization of K - sigma*M; the shift is
// nudged if that matrix is numerically singular). Returns nev pairs sorted
// ascending by eigenvalue.
EigenPairs shift_invert_nearest(const SpMat& K, const SpMat& M, double sigma,
                                int nev, double tol = 1e-10,
                                int max_steps = 600);

// Smallest nev eigenpairs of an SPD pencil where K is available only as an
// operator apply. `proxy` is a sparse SPD stand-in for K + shift*M used purely
// as a preconditioner, so it affects iteration counts but not answers.
EigenPairs smallest_apply_only(const LinOp& K_apply, const SpMat& M,
                               const SpMat& proxy, int nev, double shift,
                               int max_outer = 80, double tol = 1e-11);

// Preconditioned CG for symmetric positive semidefinite operators with a
// consistent right-hand side. `project` (optional) is applied to the initial
// residual and every direction update, used to deflate a known kernel.
// Throws Error(SolverFailure) if the residual never reaches rel_tol.
Vec pcg(const LinOp& A, const Vec& b, const LinOp& precond, double rel_tol,
        int max_iter, const LinOp* project = nullptr);

} // namespace sasdef::la
