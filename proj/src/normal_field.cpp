#include "sasdef/normal_field.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "sasdef/error.hpp"
#include "sasdef/pullback.hpp"
#include "sasdef/rng.hpp"

namespace sasdef::deform {

namespace {

std::vector<std::vector<long>> vertex_stars(const SimplicialComplex& sc) {
  std::vector<std::vector<long>> star(sc.n_vertices);
  for (long e = 0; e < sc.edges.rows(); ++e) {
    star[sc.edges(e, 0)].push_back(e);
    star[sc.edges(e, 1)].push_back(e);
  }
  return star;
}

// Lumped vertex masses: each top simplex spreads its measure evenly over its
// vertices.
Vec lumped_vertex_mass(const SimplicialComplex& sc, const Embedding& emb) {
  Vec top = pullback::simplex_measures(sc, emb, sc.dim);
  Vec m = Vec::Zero(sc.n_vertices);
  if (sc.dim == 1) {
    for (long e = 0; e < sc.edges.rows(); ++e)
      for (int k = 0; k < 2; ++k) m[sc.edges(e, k)] += top[e] / 2.0;
  } else {
    for (long t = 0; t < sc.triangles.rows(); ++t)
      for (int k = 0; k < 3; ++k) m[sc.triangles(t, k)] += top[t] / 3.0;
  }
  return m;
}

} // namespace

NormalFrames normal_frames(const SimplicialComplex& sc, const Embedding& emb) {
  const int amb = emb.ambient_dim();
  const int n = sc.dim;
  const int nb = n + 1;
  auto star = vertex_stars(sc);

  NormalFrames fr;
  fr.codim = nb;
  fr.basis.resize(sc.n_vertices);

  for (long v = 0; v < sc.n_vertices; ++v) {
    if (star[v].empty())
      fail(ErrorCode::FrameError,
           "vertex " + std::to_string(v) + " has no incident edges");
    Vec x = emb.coords.row(v).transpose();

    // Scatter matrix of the incident chord directions, projected to the
    // sphere's tangent space at x.
    Mat M = Mat::Zero(amb, amb);
    for (long e : star[v]) {
      long w = sc.edges(e, 0) == v ? sc.edges(e, 1) : sc.edges(e, 0);
      Vec d = (emb.coords.row(w) - emb.coords.row(v)).transpose();
      double len = d.norm();
      if (len <= 0)
        fail(ErrorCode::FrameError,
             "zero-length chord at vertex " + std::to_string(v));
      d /= len;
      d -= x * x.dot(d);
      M += d * d.transpose();
    }

    // Restrict to x^perp: the last amb-1 columns of a Householder Q whose
    // first column is +-x.
    Eigen::HouseholderQR<Mat> qr(x);
    Mat Q = qr.householderQ();
    Mat H = Q.rightCols(amb - 1);
    Mat Mh = H.transpose() * M * H;

    Eigen::SelfAdjointEigenSolver<Mat> es(Mh);
    if (es.info() != Eigen::Success)
      fail(ErrorCode::FrameError,
           "tangent estimation failed at vertex " + std::to_string(v));
    const Vec& ev = es.eigenvalues(); // ascending
    const int dim_perp = amb - 1;     // = 2n+1
    double lam_tan_min = ev[nb];      // smallest of the n tangent values
    double lam_tan_max = ev[dim_perp - 1];
    // The chord star must span an n-plane cleanly: all tangent eigenvalues
    // comparable to the largest, normal ones well below.
    if (lam_tan_max <= 0 || lam_tan_min < 0.02 * lam_tan_max)
      fail(ErrorCode::FrameError,
           "degenerate chord star at vertex " + std::to_string(v));

    fr.basis[v] = H * es.eigenvectors().leftCols(nb);
  }
  return fr;
}

NormalField field_from_coeffs(const NormalFrames& fr, const Vec& coeffs) {
  const long V = fr.n_vertices();
  const int nb = fr.codim;
  if (coeffs.size() != V * nb)
    fail(ErrorCode::InvalidArgument, "coefficient vector has wrong length");
  NormalField out;
  out.vectors.resize(V, fr.basis.empty() ? 0 : fr.basis[0].rows());
  for (long v = 0; v < V; ++v)
    out.vectors.row(v) = (fr.basis[v] * coeffs.segment(v * nb, nb)).transpose();
  return out;
}

Vec coeffs_from_field(const NormalFrames& fr, const NormalField& v) {
  const long V = fr.n_vertices();
  const int nb = fr.codim;
  if (v.vectors.rows() != V)
    fail(ErrorCode::InvalidArgument, "field has wrong number of rows");
  Vec c(V * nb);
  for (long i = 0; i < V; ++i)
    c.segment(i * nb, nb) =
        fr.basis[i].transpose() * v.vectors.row(i).transpose();
  return c;
}

Identified identify(const Structure& s, const SimplicialComplex& sc,
                    const Embedding& emb, const NormalField& v) {
  if (v.vectors.rows() != sc.n_vertices ||
      v.vectors.cols() != emb.ambient_dim())
    fail(ErrorCode::InvalidArgument, "normal field shape mismatch");

  Identified out;
  out.f.degree = 0;
  out.f.values.resize(sc.n_vertices);
  for (long i = 0; i < sc.n_vertices; ++i)
    out.f.values[i] = ambient::eta(s, emb.coords.row(i).transpose(),
                                   v.vectors.row(i).transpose());

  auto [nodes, wts] = pullback::gauss_rule(2);
  out.alpha.degree = 1;
  out.alpha.values.resize(sc.edges.rows());
  for (long e = 0; e < sc.edges.rows(); ++e) {
    Vec p0 = emb.coords.row(sc.edges(e, 0)).transpose();
    Vec p1 = emb.coords.row(sc.edges(e, 1)).transpose();
    Vec v0 = v.vectors.row(sc.edges(e, 0)).transpose();
    Vec v1 = v.vectors.row(sc.edges(e, 1)).transpose();
    Vec chord = p1 - p0;
    double acc = 0;
    for (int g = 0; g < nodes.size(); ++g) {
      double q = nodes[g];
      Vec xg = p0 + q * chord;
      Vec vg = (1.0 - q) * v0 + q * v1;
      acc += wts[g] * 0.5 * ambient::deta(s, xg, vg, chord);
    }
    out.alpha.values[e] = acc;
  }
  return out;
}

Identification::Identification(const Structure& s, const SimplicialComplex& sc,
                               const Embedding& emb, const NormalFrames& fr)
    : frames_(fr), n_vertices_(sc.n_vertices), n_edges_(sc.edges.rows()) {
  const int nb = fr.codim;
  const long V = n_vertices_, E = n_edges_;

  // Row weights make the residual a discrete L2 norm: vertex rows carry the
  // lumped mass, edge rows 1/length (integrated values have an extra h).
  weights_.resize(V + E);
  weights_.head(V) = lumped_vertex_mass(sc, emb);
  Vec len = pullback::simplex_measures(sc, emb, 1);
  for (long e = 0; e < E; ++e) weights_[V + e] = 1.0 / len[e];

  auto [nodes, wts] = pullback::gauss_rule(2);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(V * nb + E * 2 * nb);
  for (long v = 0; v < V; ++v) {
    Vec x = emb.coords.row(v).transpose();
    for (int j = 0; j < nb; ++j)
      trip.emplace_back(v, v * nb + j,
                        ambient::eta(s, x, fr.basis[v].col(j)));
  }
  for (long e = 0; e < E; ++e) {
    long a = sc.edges(e, 0), b = sc.edges(e, 1);
    Vec p0 = emb.coords.row(a).transpose();
    Vec p1 = emb.coords.row(b).transpose();
    Vec chord = p1 - p0;
    for (int j = 0; j < nb; ++j) {
      double ca = 0, cb = 0;
      for (int g = 0; g < nodes.size(); ++g) {
        double q = nodes[g];
        Vec xg = p0 + q * chord;
        ca += wts[g] * 0.5 * (1.0 - q) *
              ambient::deta(s, xg, fr.basis[a].col(j), chord);
        cb += wts[g] * 0.5 * q *
              ambient::deta(s, xg, fr.basis[b].col(j), chord);
      }
      trip.emplace_back(V + e, a * nb + j, ca);
      trip.emplace_back(V + e, b * nb + j, cb);
    }
  }
  A_.resize(V + E, V * nb);
  A_.setFromTriplets(trip.begin(), trip.end());

  SpMat AtW = A_.transpose() * weights_.asDiagonal();
  SpMat N = AtW * A_;
  // The (f, alpha) data cannot see edgewise-alternating tangent-rotated
  // modes (every symmetric edge quadrature of a linear interpolant only sees
  // endpoint averages), so A has a small exact kernel. Regularize just enough
  // to factorize, then find the kernel by block inverse iteration and deflate
  // it explicitly; invert() returns the zero-kernel-component solution.
  double diag_scale = 0;
  for (long j = 0; j < N.rows(); ++j) diag_scale += N.coeff(j, j);
  diag_scale /= static_cast<double>(N.rows());
  SpMat reg(N.rows(), N.cols());
  reg.setIdentity();
  N += (1e-14 * diag_scale) * reg;
  solver_.compute(N);
  if (solver_.info() != Eigen::Success)
    fail(ErrorCode::SolverFailure, "normal identification system singular");

  const long dofs = N.rows();
  const int probes = static_cast<int>(std::min<long>(6, dofs));
  Rng rng(0xdef1a7edULL);
  Mat Y(dofs, probes);
  for (long i = 0; i < dofs; ++i)
    for (int j = 0; j < probes; ++j) Y(i, j) = rng.next_normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < probes; ++j) Y.col(j) = solver_.solve(Y.col(j));
    Eigen::HouseholderQR<Mat> qr(Y);
    Y = qr.householderQ() * Mat::Identity(dofs, probes);
  }
  Mat T = Y.transpose() * (AtW * (A_ * Y));
  Eigen::SelfAdjointEigenSolver<Mat> es(T);
  int n_ker = 0;
  for (int j = 0; j < probes; ++j)
    if (es.eigenvalues()[j] < 1e-8 * diag_scale) ++n_ker;
  kernel_ = Y * es.eigenvectors().leftCols(n_ker);
}

NormalField Identification::invert(const Cochain& f,
                                   const Cochain& alpha) const {
  if (f.values.size() != n_vertices_ || alpha.values.size() != n_edges_)
    fail(ErrorCode::InvalidArgument, "cochain sizes do not match the mesh");
  Vec b(n_vertices_ + n_edges_);
  b.head(n_vertices_) = f.values;
  b.tail(n_edges_) = alpha.values;
  Vec rhs = A_.transpose() * (weights_.asDiagonal() * b);
  Vec c = solver_.solve(rhs);
  if (solver_.info() != Eigen::Success)
    fail(ErrorCode::SolverFailure, "normal identification solve failed");
  if (kernel_.cols() > 0) c -= kernel_ * (kernel_.transpose() * c);
  return field_from_coeffs(frames_, c);
}

NormalField mean_curvature(const SimplicialComplex& sc, const Embedding& emb,
                           const mesh::MetricData& metric) {
  const int amb = emb.ambient_dim();
  const long V = sc.n_vertices;
  Mat grad = Mat::Zero(V, amb);
  Vec m = Vec::Zero(V);

  if (sc.dim == 1) {
    for (long e = 0; e < sc.edges.rows(); ++e) {
      long a = sc.edges(e, 0), b = sc.edges(e, 1);
      double len = metric.edge_lengths[e];
      if (!(len > 0))
        fail(ErrorCode::SingularMetric,
             "degenerate edge " + std::to_string(e));
      Vec d = (emb.coords.row(a) - emb.coords.row(b)).transpose() / len;
      grad.row(a) += d.transpose();
      grad.row(b) -= d.transpose();
      m[a] += len / 2.0;
      m[b] += len / 2.0;
    }
  } else {
    for (long t = 0; t < sc.triangles.rows(); ++t) {
      long i0 = sc.triangles(t, 0), i1 = sc.triangles(t, 1),
           i2 = sc.triangles(t, 2);
      double area = metric.top_volumes[t];
      if (!(area > 0))
        fail(ErrorCode::SingularMetric,
             "degenerate triangle " + std::to_string(t));
      Vec e1 = (emb.coords.row(i1) - emb.coords.row(i0)).transpose();
      Vec e2 = (emb.coords.row(i2) - emb.coords.row(i0)).transpose();
      const auto& g = metric.gram[t];
      // A = sqrt(g11 g22 - g12^2)/2, so dA/de1 = (g22 e1 - g12 e2)/(4A).
      Vec g1 = (g(1, 1) * e1 - g(0, 1) * e2) / (4.0 * area);
      Vec g2 = (g(0, 0) * e2 - g(0, 1) * e1) / (4.0 * area);
      grad.row(i1) += g1.transpose();
      grad.row(i2) += g2.transpose();
      grad.row(i0) -= (g1 + g2).transpose();
      double third = area / 3.0;
      m[i0] += third;
      m[i1] += third;
      m[i2] += third;
    }
  }

  NormalField out;
  out.vectors.resize(V, amb);
  for (long v = 0; v < V; ++v) {
    Vec x = emb.coords.row(v).transpose();
    Vec g = grad.row(v).transpose();
    g -= x * x.dot(g); // tangent to the sphere
    out.vectors.row(v) = (-g / m[v]).transpose();
  }
  return out;
}

PhaseCurvatureCheck check_phase_curvature_relation(const Structure& s,
                                                   const SimplicialComplex& sc,
                                                   const Embedding& emb) {
  auto pe = pullback::phase_extract(s, sc, emb);
  Vec top = pullback::simplex_measures(sc, emb, sc.dim);
  const long V = sc.n_vertices;

  // Volume-weighted circular mean of the incident simplex phases, rebased at
  // the global mean so the branch cut stays away from the data.
  std::vector<std::complex<double>> acc(V, 0.0);
  const auto& tops = sc.dim == 1 ? sc.edges : sc.triangles;
  for (long t = 0; t < tops.rows(); ++t) {
    std::complex<double> u =
        std::polar(top[t], pe.theta[t] - pe.mean_theta);
    for (int k = 0; k < tops.cols(); ++k) acc[tops(t, k)] += u;
  }
  Vec theta_v(V);
  for (long v = 0; v < V; ++v)
    theta_v[v] = pe.mean_theta + std::arg(acc[v]);

  Vec lhs = sc.d0 * theta_v;

  NormalField H = mean_curvature(sc, emb, mesh::induced_metric(sc, emb));
  auto [nodes, wts] = pullback::gauss_rule(2);
  PhaseCurvatureCheck out;
  for (long e = 0; e < sc.edges.rows(); ++e) {
    long a = sc.edges(e, 0), b = sc.edges(e, 1);
    Vec p0 = emb.coords.row(a).transpose();
    Vec p1 = emb.coords.row(b).transpose();
    Vec chord = p1 - p0;
    double rhs = 0;
    for (int g = 0; g < nodes.size(); ++g) {
      double q = nodes[g];
      Vec xg = p0 + q * chord;
      Vec Hg = ((1.0 - q) * H.vectors.row(a) + q * H.vectors.row(b))
                   .transpose();
      // With omega^T(u,v) = <Ju,v> and H = J grad(theta), the Lagrangian
      // angle relation contracts H into the second slot.
      rhs += wts[g] * ambient::omega_transverse(s, xg, chord, Hg);
    }
    out.max_residual = std::max(out.max_residual, std::abs(lhs[e] - rhs));
    out.lhs_max = std::max(out.lhs_max, std::abs(lhs[e]));
    out.rhs_max = std::max(out.rhs_max, std::abs(rhs));
  }
  return out;
}

Embedding exp_deform(const SimplicialComplex& sc, const Embedding& emb,
                     const NormalField& v, double t, double max_step,
                     int* projected) {
  if (v.vectors.rows() != sc.n_vertices ||
      v.vectors.cols() != emb.ambient_dim())
    fail(ErrorCode::InvalidArgument, "normal field shape mismatch");
  Embedding out = emb;
  int n_proj = 0;
  for (long i = 0; i < sc.n_vertices; ++i) {
    Vec x = emb.coords.row(i).transpose();
    Vec w = v.vectors.row(i).transpose();
    double radial = x.dot(w);
    if (std::abs(radial) > 1e-12 * (1.0 + w.norm())) {
      w -= x * radial;
      ++n_proj;
    }
    double speed = w.norm();
    double step = std::abs(t) * speed;
    if (step > max_step)
      fail(ErrorCode::StepSize,
           "step " + std::to_string(step) + " exceeds bound at vertex " +
               std::to_string(i));
    if (speed > 0) {
      double ang = t * speed;
      out.coords.row(i) =
          (std::cos(ang) * x + std::sin(ang) * (w / speed)).transpose();
    }
  }
  if (projected) *projected = n_proj;
  return out;
}

NormalField random_normal_field(const Structure& s, const Embedding& emb,
                                const NormalFrames& fr, std::uint64_t seed,
                                double amplitude, bool transverse) {
  const long V = fr.n_vertices();
  const int nb = fr.codim;
  Rng rng(seed);
  Vec c(V * nb);
  for (long i = 0; i < c.size(); ++i) c[i] = rng.next_normal();

  if (transverse) {
    for (long v = 0; v < V; ++v) {
      Vec x = emb.coords.row(v).transpose();
      Vec d(nb);
      for (int j = 0; j < nb; ++j)
        d[j] = ambient::eta(s, x, fr.basis[v].col(j));
      double n2 = d.squaredNorm();
      if (n2 > 0)
        c.segment(v * nb, nb) -=
            d * (d.dot(c.segment(v * nb, nb)) / n2);
    }
  }

  NormalField out = field_from_coeffs(fr, c);
  double peak = 0;
  for (long v = 0; v < V; ++v)
    peak = std::max(peak, out.vectors.row(v).norm());
  if (peak > 0) out.vectors *= amplitude / peak;
  return out;
}

} // namespace sasdef::deform
