#pragma once

// Nonlinear residual evaluation, the Green-operator corrector (Newton
// iteration v <- v - D1* G F(v) with G the pseudo-inverse of the weak normal
// operator), continuation along kernel directions, and the Taylor-remainder
// check that ties each assembled operator to its nonlinear map.

#include <cstdint>
#include <string>
#include <vector>

#include "sasdef/moduli.hpp"
#include "sasdef/normal_field.hpp"
#include "sasdef/operators.hpp"
#include "sasdef/pullback.hpp"

namespace sasdef::deform {

// Weak-form phase defect: S0^{-1} applied to hat-function integrals of
// Im(e^{-i theta} z) over the current embedding. Pairs with the consistent
// mass in the operators' first row, which keeps the corrector's linear model
// accurate down to grid scale; the lumped average in phase_defect_vertex has
// an O(1) symbol error at the Nyquist modes and is only used for
// classification.
Vec galerkin_phase_defect(const ambient::Structure& s,
                          const mesh::SimplicialComplex& sc,
                          const mesh::Embedding& emb,
                          const dec::FormOperators& base_ops, double theta);

// Residual in the codomain layout of the kind: weak phase defect against
// theta_bar, eta edge integrals, omega^T triangle integrals, with d of the
// phase defect feeding the first row of the minimal kind. theta_bar is
// ignored by the kind whose codomain carries no phase block.
Vec nonlinear_residual(const ambient::Structure& s,
                       const mesh::SimplicialComplex& sc,
                       const mesh::Embedding& emb, const BlockOperator& B,
                       double theta_bar);

struct NewtonLog {
  std::vector<double> residuals; // star norms; front() is the input residual
  int iterations = 0;
  bool converged = false;
  bool stalled = false; // returned the best iterate after a ratio near 1
};

struct NewtonResult {
  mesh::Embedding embedding;
  NewtonLog log;
};

// The phase reference is frozen at the input embedding; the linearization
// itself (metric, operators, frames, identification) is rebuilt at every
// iterate, which keeps the contraction quadratic instead of stalling at a
// rate set by the input error. Each step solves K2 u = S_cod F, pulls back
// through D1*, and walks the vertices by exp_deform with t = -1. Inputs
// whose starting residual exceeds `basin` are rejected as not near
// Legendrian.
NewtonResult newton_green_correct(const ambient::Structure& s,
                                  const mesh::SimplicialComplex& sc,
                                  const mesh::Embedding& emb, Kind kind,
                                  double kappa, int max_iter = 8,
                                  double tol = 1e-10, double basin = 2.0);

struct PathRecord {
  int step = 0;
  double res_psi_im = 0; // density max norms after correction
  double res_omega_T = 0;
  double res_eta = 0;
  int newton_iters = 0;
};

struct DeformationPath {
  std::vector<mesh::Embedding> embeddings; // index 0 is the base
  std::vector<PathRecord> records;         // one row per embedding
  bool truncated = false;
  std::string error;
};

// March along the direction (f_dir, a_dir), re-identified on the current
// embedding at every step, correcting with the named system after each move.
// A corrector failure truncates the path instead of throwing.
DeformationPath continuation(const ambient::Structure& s,
                             const mesh::SimplicialComplex& sc,
                             const mesh::Embedding& emb,
                             const dec::Cochain& f_dir,
                             const dec::Cochain& a_dir, Kind corrector,
                             double kappa, int steps, double step_size);

// Convenience: the i-th harmonic 1-form direction (f = 0), star-normalized,
// corrected on the nx system at the structure's kappa.
DeformationPath continuation_harmonic(const ambient::Structure& s,
                                      const mesh::SimplicialComplex& sc,
                                      const mesh::Embedding& emb,
                                      int harmonic_index, int steps = 10,
                                      double step_size = 0.01);

struct LinearizationCheck {
  std::vector<double> ts;
  std::vector<double> ratios; // ||F(exp_tv) - F(0) - t D1 x|| / t^2
  double variation = 0;       // max/min - 1 across ts
};

// Taylor-remainder ratios for a caller-supplied field. The field is
// reprojected through the normal frames (and made pointwise transverse for
// the alpha-only kind), identified and re-inverted so the cochain data and
// the walked field agree, then rescaled to the given sup amplitude. The
// kappa-free contact kind is checked against the kappa-inclusive first row
// on the weighted background. Larger amplitudes weight the genuine
// quadratic remainder against the operator's O(h^2) consistency floor.
LinearizationCheck linearization_check(
    const ambient::Structure& s, const mesh::SimplicialComplex& sc,
    const mesh::Embedding& emb, Kind kind, double kappa,
    const NormalField& field,
    const std::vector<double>& ts = {1e-2, 5e-3, 2.5e-3},
    double amplitude = 1.0);

// Same check with a seeded white-noise normal field.
LinearizationCheck linearization_check(
    const ambient::Structure& s, const mesh::SimplicialComplex& sc,
    const mesh::Embedding& emb, Kind kind, double kappa, std::uint64_t seed,
    const std::vector<double>& ts = {1e-2, 5e-3, 2.5e-3},
    double amplitude = 1.0);

} // namespace sasdef::deform
