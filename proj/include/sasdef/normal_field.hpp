#pragma once

// Discrete normal bundle of a Legendrian mesh: per-vertex orthonormal normal
// frames, the identification v <-> (f, alpha) between normal fields and
// (function, 1-form) pairs, mean curvature of the chordal embedding, the
// phase/curvature compatibility check, and geodesic deformation steps.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <vector>

#include "sasdef/ambient.hpp"
#include "sasdef/dec.hpp"
#include "sasdef/mesh.hpp"

namespace sasdef::deform {

using ambient::Mat;
using ambient::Structure;
using ambient::Vec;
using dec::Cochain;
using mesh::Embedding;
using mesh::SimplicialComplex;
using mesh::SpMat;

// Orthonormal basis of the discrete normal space at each vertex: the
// orthogonal complement, inside the sphere's tangent space at x_v, of the
// least-squares tangent plane of the incident chords. Codimension inside the
// sphere is n+1, so each block is (2n+2) x (n+1).
struct NormalFrames {
  std::vector<Mat> basis;
  int codim = 0;

  long n_vertices() const { return static_cast<long>(basis.size()); }
};

// Error(FrameError) names the first vertex whose chord star fails to span an
// n-dimensional tangent plane.
NormalFrames normal_frames(const SimplicialComplex& sc, const Embedding& emb);

// Vertex vector field with ambient values, one row per vertex.
struct NormalField {
  Mat vectors;
};

// Stacked frame coefficients (n+1 per vertex) <-> ambient field. The reverse
// direction orthogonally projects each row onto the local frame span.
NormalField field_from_coeffs(const NormalFrames& fr, const Vec& coeffs);
Vec coeffs_from_field(const NormalFrames& fr, const NormalField& v);

struct Identified {
  Cochain f;     // degree 0, eta(v) at vertices
  Cochain alpha; // degree 1, integrated (1/2) i_v d eta per edge
};

// Forward identification; v is interpolated linearly along each chord and the
// edge integral uses 2-point Gauss quadrature.
Identified identify(const Structure& s, const SimplicialComplex& sc,
                    const Embedding& emb, const NormalField& v);

// Inverse identification. The forward map couples the two endpoint values of
// every edge, so the inverse solves one sparse weighted least-squares system
// for all frame coefficients at once; for fields in the frame span the round
// trip is exact to solver precision. The factorization is kept so Newton
// loops can reuse it.
class Identification {
public:
  Identification(const Structure& s, const SimplicialComplex& sc,
                 const Embedding& emb, const NormalFrames& fr);

  NormalField invert(const Cochain& f, const Cochain& alpha) const;

  const NormalFrames& frames() const { return frames_; }

  // Exact null directions of the forward map (edgewise-alternating modes the
  // cochain data cannot see); solutions are returned with zero component
  // along them.
  long kernel_dim() const { return kernel_.cols(); }

private:
  NormalFrames frames_;
  SpMat A_;  // (V + E) x (V * codim) forward map on frame coefficients
  Vec weights_;
  Eigen::SimplicialLDLT<SpMat> solver_;
  Mat kernel_;
  long n_vertices_ = 0;
  long n_edges_ = 0;
};

// Discrete mean curvature vector: minus the gradient of total chordal volume
// with respect to the vertex position, divided by the lumped vertex mass and
// projected to the sphere's tangent space. Error(SingularMetric) on a
// degenerate simplex.
NormalField mean_curvature(const SimplicialComplex& sc, const Embedding& emb,
                           const mesh::MetricData& metric);

struct PhaseCurvatureCheck {
  double max_residual = 0; // max over edges of |d theta - integrated i_H w^T|
  double lhs_max = 0;      // max |d theta| edge value
  double rhs_max = 0;      // max |integrated i_H w^T| edge value
};

// Compares d of the vertex-interpolated phase against the edge integrals of
// the mean-curvature contraction of the transverse Kahler form.
PhaseCurvatureCheck check_phase_curvature_relation(const Structure& s,
                                                   const SimplicialComplex& sc,
                                                   const Embedding& emb);

// Great-circle step x -> cos(t|v|) x + sin(t|v|) v/|v| per vertex. Rows of v
// that are not tangent to the sphere are projected first; when `projected` is
// non-null it receives the number of such rows. Error(StepSize) if t|v|
// exceeds max_step at some vertex.
Embedding exp_deform(const SimplicialComplex& sc, const Embedding& emb,
                     const NormalField& v, double t, double max_step = 0.5,
                     int* projected = nullptr);

// Seeded random field in the frame span, rescaled so max_v |v_v| = amplitude.
// With transverse = true the Reeb-dual component is removed per vertex
// (eta(v) = 0 everywhere), which needs the structure and embedding.
NormalField random_normal_field(const Structure& s, const Embedding& emb,
                                const NormalFrames& fr, std::uint64_t seed,
                                double amplitude, bool transverse = false);

} // namespace sasdef::deform
