#include "sasdef/ambient.hpp"

#include <cmath>
#include <vector>

#include "sasdef/error.hpp"
#include "sasdef/mesh.hpp"
#include "sasdef/rng.hpp"

namespace sasdef::ambient {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

VectorXcd complexify(const Vec& x) {
  VectorXcd z(x.size() / 2);
  for (long j = 0; 2 * j + 1 < x.size(); ++j) z[j] = Cx(x[2 * j], x[2 * j + 1]);
  return z;
}

Mat drop_column(const Mat& frame, int i) {
  Mat out(frame.rows(), frame.cols() - 1);
  int c = 0;
  for (int j = 0; j < frame.cols(); ++j)
    if (j != i) out.col(c++) = frame.col(j);
  return out;
}

double radius2(const Vec& x) {
  const double r2 = x.squaredNorm();
  if (r2 < 1e-24)
    fail(ErrorCode::InvalidArgument, "structure tensors blow up at the cone tip");
  return r2;
}

} // namespace

Structure make_structure(int n, double kappa, double theta) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "transverse dimension must be >= 1");
  if (!(kappa > 0.0))
    fail(ErrorCode::InvalidArgument,
         "weight kappa must be positive: the spherical model degenerates otherwise");
  if (!std::isfinite(theta))
    fail(ErrorCode::InvalidArgument, "phase must be finite");
  return {n, kappa, (n + 1) / kappa, theta};
}

Cx structure_constant(int n) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "structure constant needs n >= 1");
  Cx c(1.0, 0.0);
  double fact = 1.0;
  for (int k = 1; k <= n; ++k) {
    c *= Cx(0.0, -2.0); // 2/i
    fact *= k;
  }
  if ((n * (n - 1) / 2) % 2 == 1) c = -c;
  return c / fact;
}

double r_weighted(const Structure& s, const Vec& x) {
  return std::pow(std::sqrt(radius2(x)), s.a);
}

Vec reeb(const Structure& s, const Vec& x) {
  return mesh::ambient_J(x) / s.a;
}

Vec euler_field(const Structure& s, const Vec& x) { return x / s.a; }

double eta(const Structure& s, const Vec& x, const Vec& v) {
  return s.a * mesh::ambient_J(x).dot(v) / radius2(x);
}

double deta(const Structure& s, const Vec& x, const Vec& u, const Vec& v) {
  const double r2 = radius2(x);
  const Vec jx = mesh::ambient_J(x);
  const Vec ju = mesh::ambient_J(u);
  const double flat = 2.0 * ju.dot(v) / r2;
  const double radial =
      2.0 * (x.dot(u) * jx.dot(v) - x.dot(v) * jx.dot(u)) / (r2 * r2);
  return s.a * (flat - radial);
}

double omega_transverse(const Structure& s, const Vec& x, const Vec& u,
                        const Vec& v) {
  return 0.5 * deta(s, x, u, v);
}

double omega_cone(const Structure& s, const Vec& x, const Vec& u,
                  const Vec& v) {
  // (1/2) d(r_a^2 eta_a) = a r^{2a-2} [ a (r dr)^eta + (r^2/2) d eta ]
  // written with the unweighted eta, deta.
  const double r2 = radius2(x);
  const Vec jx = mesh::ambient_J(x);
  const double eta_u = jx.dot(u) / r2, eta_v = jx.dot(v) / r2;
  const double rdr_wedge_eta = x.dot(u) * eta_v - x.dot(v) * eta_u;
  const double deta_uv = deta(s, x, u, v) / s.a;
  const double bracket = s.a * rdr_wedge_eta + 0.5 * r2 * deta_uv;
  return s.a * std::pow(r2, s.a - 1.0) * bracket;
}

Cx psi(const Structure& s, const Vec& x, const Mat& frame) {
  if (frame.cols() != s.n || frame.rows() != s.ambient_dim())
    fail(ErrorCode::InvalidArgument, "psi expects an n-column ambient frame");
  MatrixXcd m(s.n + 1, s.n + 1);
  m.col(0) = complexify(x / std::sqrt(radius2(x)));
  for (int j = 0; j < s.n; ++j) m.col(j + 1) = complexify(frame.col(j));
  return std::polar(std::pow(s.a, 0.5 * s.n), s.theta) * m.determinant();
}

Cx holo_volume(const Structure& s, const Mat& frame) {
  if (frame.cols() != s.n + 1 || frame.rows() != s.ambient_dim())
    fail(ErrorCode::InvalidArgument,
         "holomorphic volume form expects an (n+1)-column frame");
  MatrixXcd m(s.n + 1, s.n + 1);
  for (int j = 0; j <= s.n; ++j) m.col(j) = complexify(frame.col(j));
  return std::polar(std::pow(s.a, 0.5 * (s.n + 2)), s.theta) * m.determinant();
}

Cx wedge_eval(int p, const FrameForm& A, int q, const FrameForm& B,
              const Mat& frame) {
  const int k = p + q;
  if (frame.cols() != k)
    fail(ErrorCode::InvalidArgument, "wedge frame has the wrong arity");
  std::vector<int> comb(p);
  for (int i = 0; i < p; ++i) comb[i] = i;

  Cx total(0.0, 0.0);
  for (;;) {
    Mat fa(frame.rows(), p), fb(frame.rows(), q);
    std::vector<bool> used(k, false);
    long shift = 0;
    for (int i = 0; i < p; ++i) {
      fa.col(i) = frame.col(comb[i]);
      used[comb[i]] = true;
      shift += comb[i] - i;
    }
    int c = 0;
    for (int j = 0; j < k; ++j)
      if (!used[j]) fb.col(c++) = frame.col(j);
    const double sign = (shift % 2 == 0) ? 1.0 : -1.0;
    total += sign * A(fa) * B(fb);

    // next combination
    int i = p - 1;
    while (i >= 0 && comb[i] == k - p + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < p; ++j) comb[j] = comb[j - 1] + 1;
  }
  return total;
}

Cx fd_exterior_derivative(const FieldForm& F, int k, const Vec& x,
                          const Mat& frame, double h) {
  if (frame.cols() != k + 1)
    fail(ErrorCode::InvalidArgument, "exterior derivative frame has the wrong arity");
  if (!(h > 0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  Cx total(0.0, 0.0);
  for (int i = 0; i <= k; ++i) {
    Mat sub = drop_column(frame, i);
    Cx diff = F(x + h * frame.col(i), sub) - F(x - h * frame.col(i), sub);
    total += ((i % 2 == 0) ? 1.0 : -1.0) * diff / (2.0 * h);
  }
  return total;
}

namespace {

struct SamplePool {
  Rng rng;
  int dim;
  explicit SamplePool(std::uint64_t seed, int d) : rng(seed), dim(d) {}

  Vec vec() {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.next_normal();
    return v;
  }
  Vec unit() {
    for (;;) {
      Vec v = vec();
      double n = v.norm();
      if (n > 1e-3) return v / n;
    }
  }
  Vec point(double radius) { return radius * unit(); }
  Vec tangent(const Vec& xhat) {
    for (;;) {
      Vec v = unit();
      v -= v.dot(xhat) * xhat;
      double n = v.norm();
      if (n > 1e-3) return v / n;
    }
  }
  Mat tangent_frame(const Vec& xhat, int cols) {
    Mat f(dim, cols);
    for (int c = 0; c < cols; ++c) f.col(c) = tangent(xhat);
    return f;
  }
  Mat ambient_frame(int cols) {
    Mat f(dim, cols);
    for (int c = 0; c < cols; ++c) f.col(c) = unit();
    return f;
  }
};

constexpr double kRadii[3] = {0.5, 1.0, 2.0};

} // namespace

std::vector<IdentityReport> identity_checks(const Structure& s, long samples,
                                            std::uint64_t seed,
                                            const std::vector<double>& fd_steps) {
  if (samples < 1) fail(ErrorCode::InvalidArgument, "need at least one sample");
  SamplePool pool(seed, s.ambient_dim());
  const int n = s.n;
  std::vector<IdentityReport> out;

  auto omega_t_form = [&s](const Vec& x) -> FrameForm {
    return [&s, x](const Mat& f) -> Cx {
      return Cx(omega_transverse(s, x, f.col(0), f.col(1)), 0.0);
    };
  };
  auto omega_cone_form = [&s](const Vec& x) -> FrameForm {
    return [&s, x](const Mat& f) -> Cx {
      return Cx(omega_cone(s, x, f.col(0), f.col(1)), 0.0);
    };
  };
  auto omega_cone_power = [&](const Vec& x, int power) -> FrameForm {
    FrameForm w = omega_cone_form(x);
    FrameForm acc = w;
    int deg = 2;
    for (int p = 1; p < power; ++p) {
      FrameForm prev = acc;
      int prev_deg = deg;
      acc = [prev, w, prev_deg](const Mat& f) -> Cx {
        return wedge_eval(prev_deg, prev, 2, w, f);
      };
      deg += 2;
    }
    return acc;
  };

  // eta_a(xi_a) = 1 at arbitrary radius.
  {
    IdentityReport r{"eta(reeb)=1", 0.0, samples, 0.0};
    for (long i = 0; i < samples; ++i) {
      Vec x = pool.point(kRadii[i % 3]);
      r.max_residual =
          std::max(r.max_residual, std::abs(eta(s, x, reeb(s, x)) - 1.0));
    }
    out.push_back(r);
  }

  // i_{xi_a} d eta_a = 0 at arbitrary radius.
  {
    IdentityReport r{"reeb_contract_deta", 0.0, samples, 0.0};
    for (long i = 0; i < samples; ++i) {
      Vec x = pool.point(kRadii[i % 3]);
      Vec v = pool.unit();
      r.max_residual =
          std::max(r.max_residual, std::abs(deta(s, x, reeb(s, x), v)));
    }
    out.push_back(r);
  }

  // psi_a ^ omega^T_a = 0 on sphere tangent frames (primitivity).
  {
    IdentityReport r{"psi_wedge_omegaT", 0.0, samples, 0.0};
    for (long i = 0; i < samples; ++i) {
      Vec x = pool.point(1.0);
      Mat f = pool.tangent_frame(x, n + 2);
      FrameForm pf = [&s, x](const Mat& m) -> Cx { return psi(s, x, m); };
      r.max_residual =
          std::max(r.max_residual, std::abs(wedge_eval(n, pf, 2, omega_t_form(x), f)));
    }
    out.push_back(r);
  }

  // psi_a ^ conj(psi_a) = c_n (omega^T_a)^n on sphere tangent frames.
  {
    IdentityReport r{"psi_wedge_conj_psi", 0.0, samples, 0.0};
    const Cx cn = structure_constant(n);
    for (long i = 0; i < samples; ++i) {
      Vec x = pool.point(1.0);
      Mat f = pool.tangent_frame(x, 2 * n);
      FrameForm pf = [&s, x](const Mat& m) -> Cx { return psi(s, x, m); };
      FrameForm pc = [&s, x](const Mat& m) -> Cx { return std::conj(psi(s, x, m)); };
      Cx lhs = wedge_eval(n, pf, n, pc, f);
      FrameForm wt = omega_t_form(x);
      Cx rhs = (n == 1) ? cn * wt(f) : cn * wedge_eval(2, wt, 2, wt, f);
      r.max_residual = std::max(r.max_residual, std::abs(lhs - rhs));
    }
    out.push_back(r);
  }

  // Omega_a ^ conj(Omega_a) = r_a^{2(kappa-n-1)} c_{n+1} omega_a^{n+1} on
  // full ambient frames away from the unit sphere too.
  {
    IdentityReport r{"holo_volume_pairing", 0.0, samples, 0.0};
    const Cx cn1 = structure_constant(n + 1);
    for (long i = 0; i < samples; ++i) {
      Vec x = pool.point(kRadii[i % 3]);
      Mat f = pool.ambient_frame(2 * n + 2);
      FrameForm vol = [&s](const Mat& m) -> Cx { return holo_volume(s, m); };
      FrameForm volc = [&s](const Mat& m) -> Cx { return std::conj(holo_volume(s, m)); };
      Cx lhs = wedge_eval(n + 1, vol, n + 1, volc, f);
      double ra = r_weighted(s, x);
      Cx rhs = std::pow(ra, 2.0 * (s.kappa - n - 1)) * cn1 *
               omega_cone_power(x, n + 1)(f);
      r.max_residual = std::max(r.max_residual, std::abs(lhs - rhs));
    }
    out.push_back(r);
  }

  // d psi_a = kappa i eta_a ^ psi_a on sphere tangent frames; finite
  // differences in the ambient space, one report per step.  The sample set is
  // drawn once and shared across steps so residual ratios measure the FD
  // order and nothing else.
  if (!fd_steps.empty()) {
    std::vector<Vec> pts(samples);
    std::vector<Mat> frames(samples);
    for (long i = 0; i < samples; ++i) {
      pts[i] = pool.point(1.0);
      frames[i] = pool.tangent_frame(pts[i], n + 1);
    }
    FieldForm psi_field = [&s](const Vec& y, const Mat& m) -> Cx {
      return psi(s, y, m);
    };
    for (double h : fd_steps) {
      IdentityReport r{"d_psi", 0.0, samples, h};
      for (long i = 0; i < samples; ++i) {
        const Vec& x = pts[i];
        Cx lhs = fd_exterior_derivative(psi_field, n, x, frames[i], h);
        FrameForm eta_form = [&s, &x](const Mat& m) -> Cx {
          return Cx(eta(s, x, m.col(0)), 0.0);
        };
        FrameForm pf = [&s, &x](const Mat& m) -> Cx { return psi(s, x, m); };
        Cx rhs = s.kappa * Cx(0.0, 1.0) * wedge_eval(1, eta_form, n, pf, frames[i]);
        r.max_residual = std::max(r.max_residual, std::abs(lhs - rhs));
      }
      out.push_back(r);
    }
  }

  // L_{E_a} Omega_a = kappa Omega_a, differenced along the exact flow of the
  // Euler field (uniform scaling phi_t(x) = e^{t/a} x, with differential
  // e^{t/a} Id). Cartan's formula would be differenced away here: the form
  // has constant coefficients and the field is linear, so every central
  // difference of it is exact. Flow time is the honest FD variable.
  if (!fd_steps.empty()) {
    std::vector<Mat> frames(samples);
    for (long i = 0; i < samples; ++i) frames[i] = pool.ambient_frame(n + 1);
    auto pulled_back = [&s](double t, const Mat& f) -> Cx {
      const double scale = std::exp(t / s.a);
      return holo_volume(s, Mat(scale * f)); // the form is point independent
    };
    for (double h : fd_steps) {
      IdentityReport r{"lie_euler_holo_volume", 0.0, samples, h};
      for (long i = 0; i < samples; ++i) {
        Cx lhs = (pulled_back(h, frames[i]) - pulled_back(-h, frames[i])) / (2.0 * h);
        Cx rhs = s.kappa * holo_volume(s, frames[i]);
        r.max_residual = std::max(r.max_residual, std::abs(lhs - rhs));
      }
      out.push_back(r);
    }
  }

  return out;
}

} // namespace sasdef::ambient
