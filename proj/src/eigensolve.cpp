#include "sasdef/eigensolve.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sasdef/error.hpp"
#include "sasdef/rng.hpp"

namespace sasdef::la {

namespace {

constexpr std::uint64_t kStartSeed = 0x5eedbeef1234ULL;

Vec seeded_vector(long n, Rng& rng) {
  Vec v(n);
  for (long i = 0; i < n; ++i) v[i] = rng.next_normal();
  return v;
}

struct RitzSet {
  Vec theta;
  Mat s;
  std::vector<int> order; // by |theta| descending, i.e. nearest the shift
};

RitzSet tridiag_ritz(const std::vector<double>& alpha,
                     const std::vector<double>& beta) {
  const int m = static_cast<int>(alpha.size());
  Mat T = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) T(i, i) = alpha[i];
  for (int i = 0; i + 1 < m; ++i) {
    T(i, i + 1) = beta[i];
    T(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(T);
  RitzSet rs;
  rs.theta = es.eigenvalues();
  rs.s = es.eigenvectors();
  rs.order.resize(m);
  for (int i = 0; i < m; ++i) rs.order[i] = i;
  std::sort(rs.order.begin(), rs.order.end(), [&](int x, int y) {
    return std::abs(rs.theta[x]) > std::abs(rs.theta[y]);
  });
  return rs;
}

} // namespace

EigenPairs dense_pencil(const Mat& K, const Mat& M) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(K, M);
  if (es.info() != Eigen::Success)
    fail(ErrorCode::SolverFailure, "dense generalized eigensolve failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

EigenPairs shift_invert_nearest(const SpMat& K, const SpMat& M, double sigma,
                                int nev, double tol, int max_steps) {
  const long n = K.rows();
  if (n == 0 || nev <= 0) return {Vec(0), Mat(n, 0)};
  nev = static_cast<int>(std::min<long>(nev, n));

  // Factor K - sigma*M, nudging the shift if it lands on an eigenvalue.
  Eigen::SparseLU<SpMat> lu;
  double s = sigma;
  bool ok = false;
  for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
    SpMat A = K - s * M;
    A.makeCompressed();
    lu.compute(A);
    if (lu.info() == Eigen::Success) {
      // Nearly singular factorizations can still report success; probe.
      Vec probe = lu.solve(Vec::Ones(n));
      ok = probe.allFinite();
    }
    if (!ok) s += (attempt + 1) * 1e-8 * (1.0 + std::abs(sigma));
  }
  if (!ok) fail(ErrorCode::SolverFailure, "shift-invert factorization failed");

  Rng rng(kStartSeed);
  Mat V(n, 0), MV(n, 0); // Lanczos vectors and their M-images
  std::vector<double> alpha, beta;

  auto m_orthogonalize = [&](Vec& w) {
    for (int pass = 0; pass < 2; ++pass) {
      if (V.cols() == 0) break;
      Vec c = MV.transpose() * w;
      w.noalias() -= V * c;
    }
  };
  auto append_vector = [&](const Vec& v, const Vec& mv) {
    V.conservativeResize(Eigen::NoChange, V.cols() + 1);
    MV.conservativeResize(Eigen::NoChange, MV.cols() + 1);
    V.col(V.cols() - 1) = v;
    MV.col(MV.cols() - 1) = mv;
  };
  auto fresh_start = [&]() -> bool {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Vec w = seeded_vector(n, rng);
      m_orthogonalize(w);
      Vec mw = M * w;
      double nrm = std::sqrt(std::max(0.0, w.dot(mw)));
      if (nrm > 1e-10) {
        append_vector(w / nrm, mw / nrm);
        return true;
      }
    }
    return false;
  };
  auto extract = [&](const RitzSet& rs, int take) -> EigenPairs {
    std::vector<int> sel(rs.order.begin(), rs.order.begin() + take);
    std::sort(sel.begin(), sel.end(), [&](int x, int y) {
      return s + 1.0 / rs.theta[x] < s + 1.0 / rs.theta[y];
    });
    EigenPairs out;
    out.values.resize(take);
    out.vectors.resize(n, take);
    const int m = static_cast<int>(alpha.size());
    for (int i = 0; i < take; ++i) {
      out.values[i] = s + 1.0 / rs.theta[sel[i]];
      Vec x = V.leftCols(m) * rs.s.col(sel[i]);
      double nrm = std::sqrt(std::max(1e-300, x.dot(M * x)));
      out.vectors.col(i) = x / nrm;
    }
    return out;
  };

  if (!fresh_start())
    fail(ErrorCode::SolverFailure, "could not seed Krylov iteration");

  for (int j = 0; j < max_steps; ++j) {
    Vec rhs = MV.col(V.cols() - 1);
    Vec w = lu.solve(rhs);
    if (!w.allFinite())
      fail(ErrorCode::SolverFailure, "shift-invert apply produced non-finite values");
    alpha.push_back(w.dot(rhs));
    m_orthogonalize(w);
    Vec mw = M * w;
    double b = std::sqrt(std::max(0.0, w.dot(mw)));

    const int m = static_cast<int>(alpha.size());
    if (m >= nev || b <= 1e-13 || m >= n) {
      RitzSet rs = tridiag_ritz(alpha, beta);
      if (m >= n) return extract(rs, std::min(m, nev)); // full space, exact
      int converged = 0;
      for (int i = 0; i < std::min(m, nev); ++i) {
        int idx = rs.order[i];
        double resid = std::abs(b * rs.s(m - 1, idx));
        if (std::abs(rs.theta[idx]) > 1e-14 &&
            resid <= tol * std::max(std::abs(rs.theta[idx]), 1e-12))
          ++converged;
        else
          break;
      }
      if (converged >= nev) return extract(rs, nev);
    }

    if (b <= 1e-13) {
      // Invariant subspace before enough pairs converged; restart with a new
      // orthogonal direction (zero coupling keeps the tridiagonal honest).
      beta.push_back(0.0);
      if (!fresh_start())
        fail(ErrorCode::SolverFailure, "Krylov restart found no new direction");
    } else {
      beta.push_back(b);
      append_vector(w / b, mw / b);
    }
  }
  fail(ErrorCode::SolverFailure, "shift-invert Lanczos did not converge");
}

EigenPairs smallest_apply_only(const LinOp& K_apply, const SpMat& M,
                               const SpMat& proxy, int nev, double shift,
                               int max_outer, double tol) {
  const long n = M.rows();
  int block = static_cast<int>(std::min<long>(nev + 4, n));

  Eigen::SimplicialLLT<SpMat> proxy_llt(proxy);
  if (proxy_llt.info() != Eigen::Success)
    fail(ErrorCode::SolverFailure, "preconditioner factorization failed");
  Eigen::SimplicialLLT<SpMat> m_llt(M);
  if (m_llt.info() != Eigen::Success)
    fail(ErrorCode::SolverFailure, "mass factorization failed");

  LinOp precond = [&](const Vec& r) { return proxy_llt.solve(r); };
  LinOp shifted = [&](const Vec& x) -> Vec {
    return K_apply(x) + shift * (M * x);
  };

  Rng rng(kStartSeed ^ 0x77);
  Mat X(n, block);
  for (int c = 0; c < block; ++c) X.col(c) = seeded_vector(n, rng);

  auto m_orthonormalize = [&](Mat& Y) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int c = 0; c < Y.cols(); ++c) {
        for (int p = 0; p < c; ++p)
          Y.col(c) -= Y.col(p).dot(M * Y.col(c)) * Y.col(p);
        double nrm = std::sqrt(std::max(1e-300, Y.col(c).dot(M * Y.col(c))));
        Y.col(c) /= nrm;
      }
    }
  };

  m_orthonormalize(X);
  Vec theta_old = Vec::Constant(block, 1e300);

  for (int outer = 0; outer < max_outer; ++outer) {
    // Rayleigh-Ritz on the M-orthonormal block.
    Mat KX(n, block);
    for (int c = 0; c < block; ++c) KX.col(c) = K_apply(X.col(c));
    Mat Kr = X.transpose() * KX;
    Kr = 0.5 * (Kr + Kr.transpose()).eval();
    EigenPairs small = dense_pencil(Kr, Mat::Identity(block, block));
    X = (X * small.vectors).eval();
    KX = (KX * small.vectors).eval();
    Vec theta = small.values;

    double scale = std::max(std::abs(theta[block - 1]), shift);
    bool done = true;
    for (int i = 0; i < nev; ++i) {
      Vec resid = KX.col(i) - theta[i] * (M * X.col(i));
      double rnorm = std::sqrt(std::max(0.0, resid.dot(m_llt.solve(resid))));
      if (rnorm > tol * scale ||
          std::abs(theta[i] - theta_old[i]) > tol * scale)
        done = false;
    }
    theta_old = theta;
    if (done) return {theta.head(nev), X.leftCols(nev)};

    Mat Y(n, block);
    for (int c = 0; c < block; ++c) {
      Vec rhs = M * X.col(c);
      Y.col(c) = pcg(shifted, rhs, precond, 1e-12, 4000);
    }
    m_orthonormalize(Y);
    X = Y;
  }
  fail(ErrorCode::SolverFailure, "block inverse iteration did not converge");
}

Vec pcg(const LinOp& A, const Vec& b, const LinOp& precond, double rel_tol,
        int max_iter, const LinOp* project) {
  const long n = b.size();
  Vec x = Vec::Zero(n);
  Vec r = b;
  if (project) r = (*project)(r);
  double bnorm = r.norm();
  if (bnorm <= 1e-300) return x;

  Vec z = precond(r);
  if (project) z = (*project)(z);
  Vec p = z;
  double rz = r.dot(z);

  for (int it = 0; it < max_iter; ++it) {
    Vec ap = A(p);
    if (project) ap = (*project)(ap);
    double pap = p.dot(ap);
    if (!(pap > 0.0) || !std::isfinite(pap)) {
      if (r.norm() <= rel_tol * bnorm) return x;
      fail(ErrorCode::SolverFailure, "pcg hit a non-positive curvature direction");
    }
    double a = rz / pap;
    x += a * p;
    r -= a * ap;
    if (r.norm() <= rel_tol * bnorm) return x;
    Vec z2 = precond(r);
    if (project) z2 = (*project)(z2);
    double rz2 = r.dot(z2);
    p = z2 + (rz2 / rz) * p;
    rz = rz2;
  }
  std::ostringstream msg;
  msg << "pcg stalled at relative residual " << (r.norm() / bnorm)
      << " (target " << rel_tol << ")";
  fail(ErrorCode::SolverFailure, msg.str());
}

} // namespace sasdef::la
