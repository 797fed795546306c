#pragma once

#include <complex>
#include <functional>
#include <string>

#include "sasdef/ambient.hpp"
#include "sasdef/dec.hpp"
#include "sasdef/mesh.hpp"

// Pullbacks of ambient differential forms onto the chordal mesh, phase
// extraction, and the banded classifier that decides whether an embedded
// curve/surface is Legendrian / special Legendrian at the resolution the mesh
// can support.
//
// Conventions: cochain coefficients are integrals over the straight chordal
// simplices, matching the incidence/mass conventions in dec.  Residual sizes
// are reported as densities (integral divided by simplex measure) so they are
// comparable across resolutions and carry the natural O(h^2) scaling of a
// chordal approximation to a genuinely (special) Legendrian submanifold.

namespace sasdef::pullback {

using mesh::Embedding;
using mesh::SimplicialComplex;
using ambient::Cx;
using ambient::Mat;
using ambient::Structure;
using ambient::Vec;
using dec::Cochain;

using ScalarField = std::function<double(const Vec&)>;
using OneForm = std::function<double(const Vec&, const Vec&)>;
using TwoForm = std::function<double(const Vec&, const Vec&, const Vec&)>;

// Gauss-Legendre rule of the given order on [0,1] (nodes, weights), computed
// by Newton refinement of the Chebyshev initial guess; deterministic to
// rounding.  order in [1, 16].
std::pair<Vec, Vec> gauss_rule(int order);

// Vertex samples of a scalar field (0-cochain).
Cochain vertex_scalar(const SimplicialComplex& sc, const Embedding& emb,
                      const ScalarField& f);

// Line integrals of an ambient 1-form over every chordal edge.
Cochain edge_integrals(const SimplicialComplex& sc, const Embedding& emb,
                       const OneForm& form, int quad_order = 4);

// Surface integrals of an ambient 2-form over every chordal triangle
// (Duffy-mapped tensor Gauss).
Cochain triangle_integrals(const SimplicialComplex& sc, const Embedding& emb,
                           const TwoForm& form, int quad_order = 4);

// Chordal measures of the degree-k simplices (lengths or areas), used to turn
// integrated coefficients into densities.
Vec simplex_measures(const SimplicialComplex& sc, const Embedding& emb,
                     int degree);

// Per-simplex integrated pullback of one of the structure forms, with the two
// density norms used by the classifier.  form is one of "eta" (degree 1),
// "omega_T" (degree 2, surfaces only), "psi_im" / "psi_re" (top degree,
// structure phase applied).  Degree above the manifold dimension is an error.
struct PullbackResidual {
  std::string form;
  Cochain values;      // integrated over chordal simplices
  double l2_norm = 0;  // sqrt(sum measure * density^2)
  double max_norm = 0; // max |density|
};
PullbackResidual pullback_form(const Structure& s, const SimplicialComplex& sc,
                               const Embedding& emb, const std::string& form,
                               int quad_order = 4);

// Per-top-simplex phase density: psi evaluated on the simplex frame divided
// by the simplex volume form, i.e. the pointwise Hodge dual of the pulled
// back form.  For an exact special Legendrian this is a constant unimodular
// number; |z|-1 measures the Legendrian defect.
Eigen::VectorXcd phase_density(const Structure& s, const SimplicialComplex& sc,
                               const Embedding& emb);

struct PhaseExtract {
  Eigen::VectorXcd density;   // z per top simplex
  Vec theta;                  // arg z per top simplex
  double mean_theta = 0;      // volume-weighted circular mean
  double max_theta_dev = 0;   // max angular distance to the mean
  double max_modulus_dev = 0; // max ||z| - 1|
};
// Error(NotNearLegendrian) when any |z| < 0.5: the phase of a far-from-
// Legendrian mesh is meaningless.
PhaseExtract phase_extract(const Structure& s, const SimplicialComplex& sc,
                           const Embedding& emb);

// Vertex-averaged Im(e^{-i theta} z_T): the scalar component of the special
// Legendrian defect in the 0-cochain slot used by the deformation operators.
// theta is applied on top of the structure phase.
Cochain phase_defect_vertex(const Structure& s, const SimplicialComplex& sc,
                            const Embedding& emb, double theta);

enum class Verdict { Yes, Ambiguous, No };

// Band thresholds for the verdicts, relative to h^2.
inline constexpr double kPassBand = 10.0;
inline constexpr double kFailBand = 100.0;

struct ClassifyReport {
  double h = 0.0; // max chordal edge length

  // Density-normalized sup residuals with their banded verdicts.
  double legendrian_residual = 0.0; // eta over edges
  Verdict legendrian = Verdict::No;

  double special_residual = 0.0; // Im z at the structure phase
  Verdict special_legendrian = Verdict::No;

  double theta_hat = 0.0;      // extracted phase (on top of structure phase)
  double theta_residual = 0.0; // Im(e^{-i theta_hat} z)
  Verdict theta_special = Verdict::No;

  double minimal_residual = 0.0; // discrete codifferential of the Im density
  Verdict minimal_legendrian = Verdict::No;

  double transverse_residual = 0.0; // d eta density over triangles (info only)
};

ClassifyReport classify(const Structure& s, const SimplicialComplex& sc,
                        const Embedding& emb);

} // namespace sasdef::pullback
