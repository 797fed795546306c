#pragma once

// Weighted Sasaki structure tensors on the unit sphere S^{2n+1} inside
// C^{n+1} = R^{2n+2} (coordinates interleaved re/im), parametrized by the
// basic Reeb weight kappa > 0. kappa = n+1 is the round Sasaki-Einstein
// structure; other weights arise from it by the homothety with parameter
// a = (n+1)/kappa:
//   eta_a = a eta,  xi_a = xi/a,  psi_a = a^{n/2} psi,  r_a = r^a,
//   Omega_a = a^{(n+2)/2} dz_1 ^ ... ^ dz_{n+1}.
// All evaluators work at arbitrary points of the punctured ambient space and
// are exact up to rounding; finite differences only enter the two derivative
// identities, which is what the order-2 convergence checks exercise.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sasdef::ambient {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Cx = std::complex<double>;

struct Structure {
  int n = 0;          // transverse complex dimension
  double kappa = 0.0; // Reeb weight
  double a = 0.0;     // homothety parameter (n+1)/kappa
  double theta = 0.0; // phase convention: psi and Omega carry e^{i theta}

  int ambient_dim() const { return 2 * n + 2; }
};

// Error(InvalidArgument) for n < 1 or kappa <= 0 (no compact spherical model
// below weight zero).  theta rotates the holomorphic volume form, which is
// only ever fixed up to phase; every identity is phase covariant, so checks
// are unaffected by it.
Structure make_structure(int n, double kappa, double theta = 0.0);

// c_n = (1/n!) (-1)^{n(n-1)/2} (2/i)^n, the constant in psi ^ conj(psi) =
// c_n (omega^T)^n. c_1 = -2i, c_2 = 2.
Cx structure_constant(int n);

double r_weighted(const Structure& s, const Vec& x); // |x|^a
Vec reeb(const Structure& s, const Vec& x);          // J x / a
Vec euler_field(const Structure& s, const Vec& x);   // x / a

double eta(const Structure& s, const Vec& x, const Vec& v);
double deta(const Structure& s, const Vec& x, const Vec& u, const Vec& v);
// Transverse Kahler form, normalized so d eta = 2 omega^T.
double omega_transverse(const Structure& s, const Vec& x, const Vec& u,
                        const Vec& v);
// Cone Kahler form (1/2) d(r_a^2 eta_a); reduces to <Ju, v> at a = 1.
double omega_cone(const Structure& s, const Vec& x, const Vec& u,
                  const Vec& v);

// psi_a evaluated on an n-column frame: a^{n/2} det_C [z(x/|x|) | z(frame)].
Cx psi(const Structure& s, const Vec& x, const Mat& frame);
// Cone holomorphic volume form on an (n+1)-column frame (point independent).
Cx holo_volume(const Structure& s, const Mat& frame);

// --- small exterior-algebra helpers used by the identity checks ---

// A k-form at a fixed point: columns of the argument are the k vectors.
using FrameForm = std::function<Cx(const Mat&)>;
// Shuffle-sum wedge product evaluation on a (p+q)-column frame.
Cx wedge_eval(int p, const FrameForm& A, int q, const FrameForm& B,
              const Mat& frame);

// A k-form field for finite differencing: (point, k-column frame) -> value.
using FieldForm = std::function<Cx(const Vec&, const Mat&)>;
// Central-difference exterior derivative with constant vector extensions,
// evaluated on a (k+1)-column frame. Second-order accurate in h.
Cx fd_exterior_derivative(const FieldForm& F, int k, const Vec& x,
                          const Mat& frame, double h);

// --- identity suite ---

struct IdentityReport {
  std::string identity;
  double max_residual = 0.0;
  long samples = 0;
  double fd_step = 0.0; // 0 for purely algebraic identities
};

// Runs the full structure-identity suite on seeded random points and frames:
// algebraic identities once, finite-difference identities once per step in
// fd_steps. Radial identities are sampled at |x| in {0.5, 1, 2}.
std::vector<IdentityReport> identity_checks(const Structure& s, long samples,
                                            std::uint64_t seed,
                                            const std::vector<double>& fd_steps);

} // namespace sasdef::ambient
