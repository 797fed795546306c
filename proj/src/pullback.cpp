#include "sasdef/pullback.hpp"

#include <cmath>

#include "sasdef/error.hpp"

namespace sasdef::pullback {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec vertex(const Embedding& emb, int i) {
  return emb.coords.row(i).transpose();
}

void check_pair(const SimplicialComplex& sc, const Embedding& emb) {
  if (emb.coords.rows() != sc.n_vertices)
    fail(ErrorCode::InvalidMesh, "embedding and complex disagree on vertex count");
}

double triangle_area(const Vec& e1, const Vec& e2) {
  const double g11 = e1.squaredNorm(), g22 = e2.squaredNorm(), g12 = e1.dot(e2);
  const double det = g11 * g22 - g12 * g12;
  if (det <= 0.0)
    fail(ErrorCode::SingularMetric, "degenerate chordal triangle");
  return 0.5 * std::sqrt(det);
}

Verdict band_verdict(double residual, double h2) {
  if (residual < kPassBand * h2) return Verdict::Yes;
  if (residual > kFailBand * h2) return Verdict::No;
  return Verdict::Ambiguous;
}

// Angular distance folded into [0, pi].
double circle_dist(double t1, double t2) {
  double d = std::fmod(std::abs(t1 - t2), 2.0 * kPi);
  return (d > kPi) ? 2.0 * kPi - d : d;
}

} // namespace

std::pair<Vec, Vec> gauss_rule(int order) {
  if (order < 1 || order > 16)
    fail(ErrorCode::InvalidArgument, "quadrature order must be in [1, 16]");
  const int m = order;
  Vec nodes(m), weights(m);
  // Roots of the Legendre polynomial P_m on [-1,1] by Newton from the
  // Chebyshev guess, then mapped to [0,1].
  for (int i = 0; i < m; ++i) {
    double x = std::cos(kPi * (4.0 * i + 3.0) / (4.0 * m + 2.0));
    double dp = 0.0;
    for (int it = 0; it < 80; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    // recompute derivative at the converged root for the weight
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
    }
    nodes[i] = 0.5 * (1.0 + x);
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp); // includes the 1/2 interval factor
  }
  return {nodes, weights};
}

Cochain vertex_scalar(const SimplicialComplex& sc, const Embedding& emb,
                      const ScalarField& f) {
  check_pair(sc, emb);
  Cochain c{0, Vec(sc.n_vertices)};
  for (long i = 0; i < sc.n_vertices; ++i) c.values[i] = f(vertex(emb, i));
  return c;
}

Cochain edge_integrals(const SimplicialComplex& sc, const Embedding& emb,
                       const OneForm& form, int quad_order) {
  check_pair(sc, emb);
  const auto [qx, qw] = gauss_rule(quad_order);
  const long E = sc.edges.rows();
  Cochain c{1, Vec(E)};
  for (long e = 0; e < E; ++e) {
    const Vec p0 = vertex(emb, sc.edges(e, 0));
    const Vec t = vertex(emb, sc.edges(e, 1)) - p0;
    double acc = 0.0;
    for (int q = 0; q < qx.size(); ++q) acc += qw[q] * form(p0 + qx[q] * t, t);
    c.values[e] = acc;
  }
  return c;
}

Cochain triangle_integrals(const SimplicialComplex& sc, const Embedding& emb,
                           const TwoForm& form, int quad_order) {
  check_pair(sc, emb);
  const auto [qx, qw] = gauss_rule(quad_order);
  const long F = sc.triangles.rows();
  Cochain c{2, Vec(F)};
  for (long f = 0; f < F; ++f) {
    const Vec p0 = vertex(emb, sc.triangles(f, 0));
    const Vec e1 = vertex(emb, sc.triangles(f, 1)) - p0;
    const Vec e2 = vertex(emb, sc.triangles(f, 2)) - p0;
    double acc = 0.0;
    // Duffy map (s,t) -> (u,v) = (s(1-t), st) from the unit square onto the
    // reference triangle, Jacobian s; tensor Gauss in s,t.
    for (int qs = 0; qs < qx.size(); ++qs) {
      for (int qt = 0; qt < qx.size(); ++qt) {
        const double u = qx[qs] * (1.0 - qx[qt]), v = qx[qs] * qx[qt];
        acc += qw[qs] * qw[qt] * qx[qs] * form(p0 + u * e1 + v * e2, e1, e2);
      }
    }
    c.values[f] = acc;
  }
  return c;
}

Vec simplex_measures(const SimplicialComplex& sc, const Embedding& emb,
                     int degree) {
  check_pair(sc, emb);
  if (degree == 1) {
    Vec m(sc.edges.rows());
    for (long e = 0; e < sc.edges.rows(); ++e)
      m[e] = (vertex(emb, sc.edges(e, 1)) - vertex(emb, sc.edges(e, 0))).norm();
    return m;
  }
  if (degree == 2 && sc.dim == 2) {
    Vec m(sc.triangles.rows());
    for (long f = 0; f < sc.triangles.rows(); ++f) {
      const Vec p0 = vertex(emb, sc.triangles(f, 0));
      m[f] = triangle_area(vertex(emb, sc.triangles(f, 1)) - p0,
                           vertex(emb, sc.triangles(f, 2)) - p0);
    }
    return m;
  }
  fail(ErrorCode::InvalidArgument, "no simplices of that degree in this complex");
}

Eigen::VectorXcd phase_density(const Structure& s, const SimplicialComplex& sc,
                               const Embedding& emb) {
  check_pair(sc, emb);
  if (2 * sc.dim + 2 != s.ambient_dim())
    fail(ErrorCode::InvalidArgument,
         "mesh dimension does not match the structure");
  if (sc.dim == 1) {
    const long E = sc.edges.rows();
    Eigen::VectorXcd z(E);
    for (long e = 0; e < E; ++e) {
      const Vec p0 = vertex(emb, sc.edges(e, 0));
      const Vec p1 = vertex(emb, sc.edges(e, 1));
      Vec t = p1 - p0;
      const double len = t.norm();
      if (len <= 0.0) fail(ErrorCode::InvalidMesh, "zero-length edge");
      z[e] = ambient::psi(s, Vec(0.5 * (p0 + p1)), Mat(t / len));
    }
    return z;
  }
  const long F = sc.triangles.rows();
  Eigen::VectorXcd z(F);
  for (long f = 0; f < F; ++f) {
    const Vec p0 = vertex(emb, sc.triangles(f, 0));
    Mat frame(emb.coords.cols(), 2);
    frame.col(0) = vertex(emb, sc.triangles(f, 1)) - p0;
    frame.col(1) = vertex(emb, sc.triangles(f, 2)) - p0;
    const double area = triangle_area(frame.col(0), frame.col(1));
    const Vec centroid =
        (p0 + vertex(emb, sc.triangles(f, 1)) + vertex(emb, sc.triangles(f, 2))) / 3.0;
    z[f] = ambient::psi(s, centroid, frame) / (2.0 * area);
  }
  return z;
}

PullbackResidual pullback_form(const Structure& s, const SimplicialComplex& sc,
                               const Embedding& emb, const std::string& form,
                               int quad_order) {
  PullbackResidual out;
  out.form = form;
  if (form == "eta") {
    out.values = edge_integrals(
        sc, emb,
        [&s](const Vec& x, const Vec& v) { return ambient::eta(s, x, v); },
        quad_order);
  } else if (form == "omega_T") {
    if (sc.dim < 2)
      fail(ErrorCode::InvalidArgument,
           "omega_T has degree 2: nothing to pull back on a curve");
    out.values = triangle_integrals(
        sc, emb,
        [&s](const Vec& x, const Vec& u, const Vec& v) {
          return ambient::omega_transverse(s, x, u, v);
        },
        quad_order);
  } else if (form == "psi_im" || form == "psi_re") {
    const Eigen::VectorXcd z = phase_density(s, sc, emb);
    const Vec m = simplex_measures(sc, emb, sc.dim);
    out.values.degree = sc.dim;
    out.values.values = Vec(z.size());
    for (long i = 0; i < z.size(); ++i)
      out.values.values[i] =
          m[i] * ((form == "psi_im") ? z[i].imag() : z[i].real());
  } else {
    fail(ErrorCode::InvalidArgument, "unknown form name: " + form);
  }
  const Vec m = simplex_measures(sc, emb, out.values.degree);
  double l2 = 0.0, mx = 0.0;
  for (long i = 0; i < out.values.values.size(); ++i) {
    const double density = out.values.values[i] / m[i];
    l2 += m[i] * density * density;
    mx = std::max(mx, std::abs(density));
  }
  out.l2_norm = std::sqrt(l2);
  out.max_norm = mx;
  return out;
}

PhaseExtract phase_extract(const Structure& s, const SimplicialComplex& sc,
                           const Embedding& emb) {
  PhaseExtract out;
  out.density = phase_density(s, sc, emb);
  const Vec m = simplex_measures(sc, emb, sc.dim);
  out.theta = Vec(out.density.size());
  Cx acc(0.0, 0.0);
  for (long i = 0; i < out.density.size(); ++i) {
    const double mod = std::abs(out.density[i]);
    if (mod < 0.5)
      fail(ErrorCode::NotNearLegendrian,
           "phase modulus below 0.5 on simplex " + std::to_string(i) +
               ": mesh is far from Legendrian");
    out.theta[i] = std::arg(out.density[i]);
    out.max_modulus_dev = std::max(out.max_modulus_dev, std::abs(mod - 1.0));
    acc += m[i] * out.density[i];
  }
  out.mean_theta = std::arg(acc);
  for (long i = 0; i < out.theta.size(); ++i)
    out.max_theta_dev =
        std::max(out.max_theta_dev, circle_dist(out.theta[i], out.mean_theta));
  return out;
}

Cochain phase_defect_vertex(const Structure& s, const SimplicialComplex& sc,
                            const Embedding& emb, double theta) {
  const Eigen::VectorXcd z = phase_density(s, sc, emb);
  const Vec m = simplex_measures(sc, emb, sc.dim);
  const Cx rot = std::polar(1.0, -theta);
  Vec num = Vec::Zero(sc.n_vertices), den = Vec::Zero(sc.n_vertices);
  const Eigen::MatrixXi& top = (sc.dim == 1) ? sc.edges : sc.triangles;
  for (long t = 0; t < top.rows(); ++t) {
    const double defect = (rot * z[t]).imag();
    for (int k = 0; k < top.cols(); ++k) {
      num[top(t, k)] += m[t] * defect;
      den[top(t, k)] += m[t];
    }
  }
  Cochain c{0, Vec(sc.n_vertices)};
  for (long v = 0; v < sc.n_vertices; ++v) {
    if (den[v] <= 0.0)
      fail(ErrorCode::InvalidMesh, "isolated vertex in phase averaging");
    c.values[v] = num[v] / den[v];
  }
  return c;
}

ClassifyReport classify(const Structure& s, const SimplicialComplex& sc,
                        const Embedding& emb) {
  check_pair(sc, emb);
  ClassifyReport rep;
  const Vec lens = simplex_measures(sc, emb, 1);
  rep.h = lens.maxCoeff();
  const double h2 = rep.h * rep.h;

  const PullbackResidual etas = pullback_form(s, sc, emb, "eta");
  rep.legendrian_residual = etas.max_norm;
  rep.legendrian = band_verdict(rep.legendrian_residual, h2);

  if (sc.dim == 2)
    rep.transverse_residual = pullback_form(s, sc, emb, "omega_T").max_norm;

  const Eigen::VectorXcd z = phase_density(s, sc, emb);
  const Vec m = simplex_measures(sc, emb, sc.dim);
  Cx acc(0.0, 0.0);
  double special = 0.0;
  for (long i = 0; i < z.size(); ++i) {
    special = std::max(special, std::abs(z[i].imag()));
    acc += m[i] * z[i];
  }
  rep.special_residual = std::max(special, rep.legendrian_residual);
  rep.special_legendrian = band_verdict(rep.special_residual, h2);

  if (std::abs(acc) > 1e-10 * m.sum()) {
    rep.theta_hat = std::arg(acc);
    const Cx rot = std::polar(1.0, -rep.theta_hat);
    double worst = 0.0;
    for (long i = 0; i < z.size(); ++i)
      worst = std::max(worst, std::abs((rot * z[i]).imag()));
    rep.theta_residual = std::max(worst, rep.legendrian_residual);
    rep.theta_special = band_verdict(rep.theta_residual, h2);
  } else {
    // Phases average out: no coherent calibration phase exists.
    rep.theta_hat = 0.0;
    rep.theta_residual = 1.0;
    rep.theta_special = Verdict::No;
  }

  // Minimal test: discrete codifferential of the Im density across shared
  // faces.  Exactly zero when the phase density is constant, which is the
  // discrete shadow of dtheta = 0.
  Vec im_density(z.size());
  for (long i = 0; i < z.size(); ++i) im_density[i] = z[i].imag();
  const Vec jumps = (sc.dim == 1) ? Vec(sc.d0.transpose() * im_density)
                                  : Vec(sc.d1.transpose() * im_density);
  rep.minimal_residual =
      std::max(jumps.cwiseAbs().maxCoeff(), rep.legendrian_residual);
  rep.minimal_legendrian = band_verdict(rep.minimal_residual, h2);
  return rep;
}

} // namespace sasdef::pullback
