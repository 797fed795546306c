#pragma once

// Simplicial complexes for compact curves and surfaces embedded in unit
// spheres: builders for the two exact builtin examples, midpoint refinement,
// induced (chord) metrics, and exact combinatorial invariants.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <utility>
#include <vector>

#include "sasdef/error.hpp"

namespace sasdef::mesh {

using SpMat = Eigen::SparseMatrix<double>;

struct SimplicialComplex {
  int dim = 0;         // manifold dimension n (1 or 2)
  long n_vertices = 0;
  Eigen::MatrixXi edges;     // E x 2, orientation = tuple order
  Eigen::MatrixXi triangles; // F x 3, empty when dim == 1

  // Coboundary matrices with integer entries (stored as doubles, all +-1):
  // d0 : Lambda^0 -> Lambda^1  (E x V),  d1 : Lambda^1 -> Lambda^2  (F x E).
  SpMat d0, d1;

  long count(int k) const;
  // b0, b1, b2 via exact combinatorial rank identities (union-find).
  std::array<long, 3> betti() const;

  // Checks face closure, d1*d0 = 0, and global orientation consistency
  // (throws Error(InvalidMesh) naming the offending simplex).
  void validate() const;
};

struct Embedding {
  Eigen::MatrixXd coords; // V x (2n+2)
  double sphere_tol = 1e-9;

  int ambient_dim() const { return static_cast<int>(coords.cols()); }
  // Error(InvalidMesh) if any vertex leaves the unit sphere by more than
  // sphere_tol.
  void validate_on_sphere() const;
};

struct MetricData {
  // Per top simplex: Gram matrix of the chord edge vectors x_i - x_0 in the
  // induced metric, and the simplex measure sqrt(det G)/n!.
  std::vector<Eigen::Matrix2d> gram; // 1x1 content in (0,0) when n == 1
  Eigen::VectorXd top_volumes;
  Eigen::VectorXd edge_lengths; // chord length per edge
  double total_volume = 0.0;
  int dim = 0;

  double max_edge_length() const { return edge_lengths.maxCoeff(); }
  // D-homothety bookkeeping: metric g -> a*g rescales Gram by a, k-volumes by
  // a^{k/2}.
  MetricData scaled(double a) const;
};

// Assembles a complex from raw simplex tables: builds the coboundaries and
// runs validate(). Used by deserialization and by tests that need
// deliberately broken inputs.
SimplicialComplex make_complex(int dim, long n_vertices,
                               const Eigen::MatrixXi& edges,
                               const Eigen::MatrixXi& triangles);

// Minimal Legendrian circle t -> (e^{it}, e^{-it})/sqrt(2) in S^3, sampled at
// `segments` equispaced parameters. Error(InvalidMesh) if segments < 3.
std::pair<SimplicialComplex, Embedding> build_clifford_circle(int segments);

// Clifford torus (t1,t2) -> (e^{i t1}, e^{i t2}, e^{-i(t1+t2)})/sqrt(3) in
// S^5 on an n1 x n2 grid, each square split into 2 triangles.
// Error(InvalidMesh) if n1 < 3 or n2 < 3.
std::pair<SimplicialComplex, Embedding> build_clifford_torus(int n1, int n2);

// Midpoint subdivision; new vertices are chord midpoints reprojected to the
// unit sphere. Circles double their edge count, triangles split 1-to-4.
std::pair<SimplicialComplex, Embedding> refine(const SimplicialComplex& sc,
                                               const Embedding& emb);

// Chord Gram matrices and measures; `metric_scale` multiplies the ambient
// round metric (used by the D-homothety tests). Error(SingularMetric) names
// the first degenerate simplex.
MetricData induced_metric(const SimplicialComplex& sc, const Embedding& emb,
                          double metric_scale = 1.0);

// Complex multiplication by i on R^{2n+2} = C^{n+1} (pairs (re, im)).
Eigen::VectorXd ambient_J(const Eigen::VectorXd& x);

} // namespace sasdef::mesh
