#include "sasdef/newton.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <sstream>
#include <utility>

#include "sasdef/error.hpp"

namespace sasdef::deform {

using mesh::SpMat;

Vec galerkin_phase_defect(const ambient::Structure& s,
                          const mesh::SimplicialComplex& sc,
                          const mesh::Embedding& emb,
                          const dec::FormOperators& base_ops, double theta) {
  const std::complex<double> rot = std::polar(1.0, -theta);
  Vec b = Vec::Zero(sc.n_vertices);
  if (sc.dim == 1) {
    // integral of Im(e^{-i theta} z) against each vertex hat function; the
    // hat integrates to half the length on every incident edge
    const Eigen::VectorXcd z = pullback::phase_density(s, sc, emb);
    const Vec m = pullback::simplex_measures(sc, emb, 1);
    for (long e = 0; e < sc.edges.rows(); ++e) {
      const double c = (rot * z[e]).imag() * m[e] * 0.5;
      b[sc.edges(e, 0)] += c;
      b[sc.edges(e, 1)] += c;
    }
  } else {
    // On triangles the hat pairing needs a quadrature that is exact for
    // linearly varying density, otherwise the derivative of this functional
    // picks up an O(1) error at grid frequencies. The symmetric edge-midpoint
    // rule is exact for quadratics: weights 1/3, hat values 1/2, 1/2, 0.
    for (long t = 0; t < sc.triangles.rows(); ++t) {
      const int i0 = sc.triangles(t, 0), i1 = sc.triangles(t, 1),
                i2 = sc.triangles(t, 2);
      const Vec p0 = emb.coords.row(i0), p1 = emb.coords.row(i1),
                p2 = emb.coords.row(i2);
      Mat frame(emb.coords.cols(), 2);
      frame.col(0) = p1 - p0;
      frame.col(1) = p2 - p0;
      const double g00 = frame.col(0).squaredNorm();
      const double g11 = frame.col(1).squaredNorm();
      const double g01 = frame.col(0).dot(frame.col(1));
      const double twoA = std::sqrt(std::max(g00 * g11 - g01 * g01, 0.0));
      if (twoA <= 0.0) fail(ErrorCode::InvalidMesh, "degenerate triangle");
      auto im = [&](const Vec& x) {
        return (rot * ambient::psi(s, x, frame)).imag() / twoA;
      };
      const double m01 = im(0.5 * (p0 + p1));
      const double m12 = im(0.5 * (p1 + p2));
      const double m20 = im(0.5 * (p2 + p0));
      const double w = twoA / 12.0; // area/3 * hat value 1/2
      b[i0] += w * (m01 + m20);
      b[i1] += w * (m01 + m12);
      b[i2] += w * (m12 + m20);
    }
  }
  return base_ops.mass_factor(0).solve(b);
}

Vec nonlinear_residual(const ambient::Structure& s,
                       const mesh::SimplicialComplex& sc,
                       const mesh::Embedding& emb, const BlockOperator& B,
                       double theta_bar) {
  const auto& ops = B.ops();
  const auto& cods = B.codomain_degrees();
  const auto offs = B.codomain_offsets();
  Vec F = Vec::Zero(B.codomain_size());
  auto put = [&](std::size_t j, const Vec& v) {
    F.segment(offs[j], ops.n_forms(cods[j])) = v;
  };
  auto phase = [&] {
    return galerkin_phase_defect(s, sc, emb, ops, theta_bar);
  };
  auto eta = [&] {
    return pullback::pullback_form(s, sc, emb, "eta").values.values;
  };
  auto omega = [&] {
    return pullback::pullback_form(s, sc, emb, "omega_T").values.values;
  };

  switch (B.kind()) {
  case Kind::SpecialLegendrian:
    put(0, phase());
    put(1, eta());
    break;
  case Kind::NxComplex:
  case Kind::Transverse:
    put(0, phase());
    if (cods.size() > 1) put(1, omega());
    break;
  case Kind::LegendrianComplex:
    put(0, eta());
    if (cods.size() > 1) put(1, omega());
    break;
  case Kind::ContactCY:
    put(0, phase());
    put(1, eta());
    if (cods.size() > 2) put(2, omega());
    break;
  case Kind::MinimalLegendrian:
    put(0, ops.d_matrix(0) * phase());
    put(1, eta());
    break;
  }
  return F;
}

namespace {

// Largest codomain the dense pseudo-inverse route accepts; the nx kind has a
// sparse block factorization and skips this limit.
constexpr long kDenseCorrector = 1600;

class K2Solver {
public:
  virtual ~K2Solver() = default;
  // Pseudo-inverse of the weak normal operator applied to a codomain vector.
  virtual Vec solve(const Vec& rhs) const = 0;
};

class DenseK2Solver final : public K2Solver {
public:
  explicit DenseK2Solver(const BlockOperator& B) {
    const long m = B.codomain_size();
    Mat K(m, m);
    Vec e = Vec::Zero(m);
    for (long j = 0; j < m; ++j) {
      e[j] = 1.0;
      K.col(j) = B.apply_K2(e);
      e[j] = 0.0;
    }
    Mat Ks = 0.5 * (K + K.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(Ks);
    if (es.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure, "corrector eigensolve did not converge");
    vecs_ = es.eigenvectors();
    const Vec& vals = es.eigenvalues();
    const double cut = 1e-10 * std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
    inv_ = (vals.array() > cut).select(vals.array().inverse(), 0.0);
  }

  Vec solve(const Vec& rhs) const override {
    return vecs_ * (inv_ * (vecs_.transpose() * rhs).array()).matrix();
  }

private:
  Mat vecs_;
  Eigen::ArrayXd inv_;
};

// The nx normal operator decouples: the Lambda^0/Lambda^2 couplings carry
// d1 d0 = 0, leaving kappa^2 S0 + d0^T S1 d0 on vertices and
// S2 d1 S1^{-1} d1^T S2 on triangles. The top block gets a sparse Cholesky
// (ridge plus mean deflation when kappa = 0 makes it singular); the bottom is
// CG with the assembled lumped-S1 proxy as preconditioner and the S2^{-1} 1
// null direction projected out of rhs, iterates, and preconditioner alike.
class NxK2Solver final : public K2Solver {
public:
  explicit NxK2Solver(const BlockOperator& B) : B_(&B) {
    const auto& ops = B.ops();
    nv_ = ops.n_forms(0);
    nf_ = B.codomain_size() - nv_;

    const double k2 = B.kappa() * B.kappa();
    SpMat top = ops.weak_stiffness0();
    if (k2 > 1e-12) {
      top = top + SpMat(k2 * ops.star[0]);
    } else {
      deflate_top_ = true;
      top = top + SpMat(1e-8 * ops.star[0]);
    }
    top_.compute(top);
    if (top_.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure, "nx corrector: vertex block not SPD");

    if (nf_ > 0) {
      const SpMat& S1 = ops.star[1];
      const SpMat& S2 = ops.star[2];
      Vec d1inv = S1.diagonal().cwiseInverse();
      SpMat d1tS2 = SpMat(ops.d_matrix(1).transpose()) * S2;
      SpMat proxy = SpMat(d1tS2.transpose()) * SpMat(d1inv.asDiagonal()) * d1tS2;
      const double ridge =
          1e-8 * proxy.diagonal().sum() / std::max(S2.diagonal().sum(), 1e-300);
      proxy = proxy + SpMat(ridge * S2);
      pre_.compute(proxy);
      if (pre_.info() != Eigen::Success)
        fail(ErrorCode::SolverFailure, "nx corrector: triangle proxy not SPD");
      null_ = ops.mass_solve(2, Vec::Ones(nf_));
      null_ /= null_.norm();
    }
  }

  Vec solve(const Vec& rhs) const override {
    Vec out(nv_ + nf_);
    Vec r0 = rhs.head(nv_);
    if (deflate_top_) r0.array() -= r0.mean();
    Vec x0 = top_.solve(r0);
    if (deflate_top_) x0.array() -= x0.mean();
    out.head(nv_) = x0;
    if (nf_ > 0) out.tail(nf_) = solve_bottom(rhs.tail(nf_));
    return out;
  }

private:
  Vec project(Vec x) const {
    x -= null_ * null_.dot(x);
    return x;
  }

  Vec apply_bottom(const Vec& x) const {
    const auto& ops = B_->ops();
    Vec t = ops.d_matrix(1).transpose() * (ops.star[2] * x);
    return ops.star[2] * (ops.d_matrix(1) * ops.mass_solve(1, t));
  }

  Vec solve_bottom(const Vec& rhs_in) const {
    Vec b = project(rhs_in);
    Vec x = Vec::Zero(nf_);
    Vec r = b;
    Vec z = project(pre_.solve(r));
    Vec p = z;
    double rz = r.dot(z);
    const double tol2 = 1e-24 * std::max(b.squaredNorm(), 1e-300);
    for (int it = 0; it < 2000; ++it) {
      if (r.squaredNorm() <= tol2) break;
      Vec Ap = project(apply_bottom(p));
      const double pAp = p.dot(Ap);
      if (pAp <= 0)
        fail(ErrorCode::SolverFailure,
             "nx corrector: CG lost positive curvature");
      const double a = rz / pAp;
      x += a * p;
      r -= a * Ap;
      z = project(pre_.solve(r));
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    return x;
  }

  const BlockOperator* B_;
  long nv_ = 0, nf_ = 0;
  bool deflate_top_ = false;
  Eigen::SimplicialLLT<SpMat> top_;
  Eigen::SimplicialLLT<SpMat> pre_;
  Vec null_;
};

std::unique_ptr<K2Solver> make_k2_solver(const BlockOperator& B) {
  if (B.kind() == Kind::NxComplex && B.codomain_size() > kDenseCorrector)
    return std::make_unique<NxK2Solver>(B);
  if (B.codomain_size() <= kDenseCorrector)
    return std::make_unique<DenseK2Solver>(B);
  fail(ErrorCode::Unsupported,
       "corrector for kind '" + kind_name(B.kind()) + "' needs a dense normal "
       "operator (" + std::to_string(B.codomain_size()) + " rows > " +
       std::to_string(kDenseCorrector) + "); use the nx system or a coarser mesh");
}

// Split a packed domain vector into (f, alpha); kinds without a Lambda^0
// block get f = 0.
std::pair<dec::Cochain, dec::Cochain> split_domain(const BlockOperator& B,
                                                   const Vec& w) {
  const auto& ops = B.ops();
  dec::Cochain f{0, Vec::Zero(ops.n_forms(0))};
  dec::Cochain a{1, Vec::Zero(ops.n_forms(1))};
  const auto& doms = B.domain_degrees();
  const auto offs = B.domain_offsets();
  for (std::size_t j = 0; j < doms.size(); ++j) {
    Vec seg = w.segment(offs[j], ops.n_forms(doms[j]));
    if (doms[j] == 0)
      f.values = seg;
    else
      a.values = seg;
  }
  return {f, a};
}

double frozen_theta(const ambient::Structure& s,
                    const mesh::SimplicialComplex& sc,
                    const mesh::Embedding& emb, Kind kind) {
  // The Legendrian complex has no phase block; every other kind measures its
  // defect against the volume-weighted mean phase of the input.
  if (kind == Kind::LegendrianComplex) return 0.0;
  return pullback::phase_extract(s, sc, emb).mean_theta;
}

std::string log_string(const std::vector<double>& residuals) {
  std::ostringstream os;
  for (std::size_t i = 0; i < residuals.size(); ++i)
    os << (i ? ", " : "") << residuals[i];
  return os.str();
}

} // namespace

namespace {

// One linearization point: everything the corrector needs at one embedding.
// The block operator points into ops, so the members live together and ops
// must be settled before the operator is built.
struct Linearization {
  mesh::MetricData metric;
  dec::FormOperators ops;
  std::unique_ptr<BlockOperator> B;
  NormalFrames fr;
  std::unique_ptr<Identification> id;
};

std::unique_ptr<Linearization> linearize(const ambient::Structure& s,
                                         const mesh::SimplicialComplex& sc,
                                         const mesh::Embedding& emb, Kind kind,
                                         double kappa, bool with_frames) {
  auto L = std::make_unique<Linearization>();
  L->metric = mesh::induced_metric(sc, emb);
  L->ops = dec::assemble_operators(sc, L->metric);
  L->B = std::make_unique<BlockOperator>(kind, L->ops, kappa);
  if (with_frames) {
    L->fr = normal_frames(sc, emb);
    L->id = std::make_unique<Identification>(s, sc, emb, L->fr);
  }
  return L;
}

} // namespace

NewtonResult newton_green_correct(const ambient::Structure& s,
                                  const mesh::SimplicialComplex& sc,
                                  const mesh::Embedding& emb, Kind kind,
                                  double kappa, int max_iter, double tol,
                                  double basin) {
  if (max_iter < 0)
    fail(ErrorCode::InvalidArgument, "max_iter must be nonnegative");
  if (tol <= 0) fail(ErrorCode::InvalidArgument, "tol must be positive");
  if (basin <= 0) fail(ErrorCode::InvalidArgument, "basin must be positive");

  // The phase target stays frozen at the input; the linearization itself is
  // rebuilt at every iterate, which keeps the contraction at the quadratic
  // O(residual) rate instead of the O(input error) rate of a frozen model.
  const double theta_bar = frozen_theta(s, sc, emb, kind);
  auto L = linearize(s, sc, emb, kind, kappa, false);

  NewtonResult out;
  out.embedding = emb;
  Vec F = nonlinear_residual(s, sc, emb, *L->B, theta_bar);
  double r = L->B->norm_cod(F);
  out.log.residuals.push_back(r);
  if (r <= tol) {
    out.log.converged = true;
    return out;
  }
  if (r > basin)
    fail(ErrorCode::NotNearLegendrian,
         "initial residual " + std::to_string(r) +
             " is outside the corrector's basin");

  mesh::Embedding cur = emb;
  mesh::Embedding best = emb;
  double best_r = r;
  int rises = 0;
  for (int it = 1; it <= max_iter; ++it) {
    if (!L->id) {
      L->fr = normal_frames(sc, cur);
      L->id = std::make_unique<Identification>(s, sc, cur, L->fr);
    }
    std::unique_ptr<K2Solver> solver = make_k2_solver(*L->B);
    Vec u = solver->solve(L->B->mass_cod_apply(F));
    Vec w = L->B->apply_D1_star(u);
    auto [f, a] = split_domain(*L->B, w);
    NormalField v = L->id->invert(f, a);
    cur = exp_deform(sc, cur, v, -1.0);
    L = linearize(s, sc, cur, kind, kappa, false);
    F = nonlinear_residual(s, sc, cur, *L->B, theta_bar);
    const double prev = r;
    r = L->B->norm_cod(F);
    out.log.residuals.push_back(r);
    out.log.iterations = it;
    if (r < best_r) {
      best_r = r;
      best = cur;
    }
    if (r <= tol) {
      out.log.converged = true;
      break;
    }
    if (r > 1.5 * prev) {
      // genuine growth; tiny wobbles at a residual floor land in the stall
      // branch instead
      if (++rises >= 2)
        fail(ErrorCode::Divergence,
             "corrector diverged; residuals " + log_string(out.log.residuals));
    } else {
      rises = 0;
      if (r > 0.9 * prev) {
        out.log.stalled = true;
        break;
      }
    }
  }
  out.embedding = best;
  return out;
}

namespace {

PathRecord measure_record(const ambient::Structure& s,
                          const mesh::SimplicialComplex& sc,
                          const mesh::Embedding& emb, int step, int iters) {
  PathRecord rec;
  rec.step = step;
  rec.newton_iters = iters;
  rec.res_psi_im = pullback::pullback_form(s, sc, emb, "psi_im").max_norm;
  // psi and omega_T are density residuals, comparable against h^2 bands; the
  // eta column reports the absolute contact integrals over edges, which is
  // the natural drift measure along a transverse (eta-changing) path
  rec.res_eta = pullback::pullback_form(s, sc, emb, "eta")
                    .values.values.cwiseAbs().maxCoeff();
  rec.res_omega_T =
      sc.dim >= 2 ? pullback::pullback_form(s, sc, emb, "omega_T").max_norm
                  : 0.0;
  return rec;
}

} // namespace

DeformationPath continuation(const ambient::Structure& s,
                             const mesh::SimplicialComplex& sc,
                             const mesh::Embedding& emb,
                             const dec::Cochain& f_dir,
                             const dec::Cochain& a_dir, Kind corrector,
                             double kappa, int steps, double step_size) {
  if (steps < 0) fail(ErrorCode::InvalidArgument, "steps must be nonnegative");
  if (step_size < 0)
    fail(ErrorCode::InvalidArgument, "step size must be nonnegative");

  DeformationPath path;
  path.embeddings.push_back(emb);
  path.records.push_back(measure_record(s, sc, emb, 0, 0));
  mesh::Embedding cur = emb;
  for (int k = 1; k <= steps; ++k) {
    try {
      // Re-identify the direction on the current embedding so the cochain
      // data keeps meaning "the same" deformation as the frame rotates.
      NormalFrames fr = normal_frames(sc, cur);
      Identification id(s, sc, cur, fr);
      NormalField v = id.invert(f_dir, a_dir);
      mesh::Embedding moved = exp_deform(sc, cur, v, step_size);
      NewtonResult corr = newton_green_correct(s, sc, moved, corrector, kappa);
      cur = corr.embedding;
      path.embeddings.push_back(cur);
      path.records.push_back(
          measure_record(s, sc, cur, k, corr.log.iterations));
    } catch (const Error& e) {
      path.truncated = true;
      path.error = e.what();
      break;
    }
  }
  return path;
}

DeformationPath continuation_harmonic(const ambient::Structure& s,
                                      const mesh::SimplicialComplex& sc,
                                      const mesh::Embedding& emb,
                                      int harmonic_index, int steps,
                                      double step_size) {
  mesh::MetricData metric = mesh::induced_metric(sc, emb);
  dec::FormOperators ops = dec::assemble_operators(sc, metric);
  std::vector<Vec> h = dec::harmonic_basis(ops, 1, 1e-8);
  if (harmonic_index < 0 ||
      harmonic_index >= static_cast<int>(h.size()))
    fail(ErrorCode::InvalidArgument,
         "harmonic index " + std::to_string(harmonic_index) +
             " out of range; " + std::to_string(h.size()) +
             " harmonic 1-forms available");
  dec::Cochain f{0, Vec::Zero(ops.n_forms(0))};
  dec::Cochain a{1, h[static_cast<std::size_t>(harmonic_index)]};
  return continuation(s, sc, emb, f, a, Kind::NxComplex, s.kappa, steps,
                      step_size);
}

LinearizationCheck linearization_check(const ambient::Structure& s,
                                       const mesh::SimplicialComplex& sc,
                                       const mesh::Embedding& emb, Kind kind,
                                       double kappa, const NormalField& field,
                                       const std::vector<double>& ts,
                                       double amplitude) {
  if (ts.empty()) fail(ErrorCode::InvalidArgument, "no step sizes given");
  if (amplitude <= 0)
    fail(ErrorCode::InvalidArgument, "amplitude must be positive");
  if (field.vectors.rows() != sc.n_vertices ||
      field.vectors.cols() != emb.ambient_dim())
    fail(ErrorCode::InvalidArgument, "field shape does not match the mesh");

  mesh::MetricData metric = mesh::induced_metric(sc, emb);
  dec::FormOperators ops = dec::assemble_operators(sc, metric);
  BlockOperator B = assemble_operator(kind, ops, kappa);
  const double theta_bar = frozen_theta(s, sc, emb, kind);
  NormalFrames fr = normal_frames(sc, emb);
  Identification id(s, sc, emb, fr);

  // Reproject the raw field through the frames so it is genuinely normal;
  // the alpha-only kind additionally drops the pointwise Reeb-dual
  // component so the identified pair has no function part.
  const bool transverse_only = (kind == Kind::Transverse);
  NormalField v0;
  v0.vectors.resize(sc.n_vertices, emb.ambient_dim());
  for (long vi = 0; vi < sc.n_vertices; ++vi) {
    Vec c = fr.basis[vi].transpose() * field.vectors.row(vi).transpose();
    if (transverse_only) {
      Vec x = emb.coords.row(vi).transpose();
      Vec d(fr.codim);
      for (int j = 0; j < fr.codim; ++j)
        d[j] = ambient::eta(s, x, fr.basis[vi].col(j));
      double n2 = d.squaredNorm();
      if (n2 > 0) c -= d * (d.dot(c) / n2);
    }
    v0.vectors.row(vi) = (fr.basis[vi] * c).transpose();
  }
  Identified xf = identify(s, sc, emb, v0);
  if (transverse_only) xf.f.values.setZero();
  // Walk along the recoverable representative so the cochain pair and the
  // moved vertices describe the same deformation.
  NormalField v = id.invert(xf.f, xf.alpha);
  const double peak = v.vectors.rowwise().norm().maxCoeff();
  if (peak <= 0)
    fail(ErrorCode::SolverFailure, "identified direction vanished");
  const double scale = amplitude / peak;
  v.vectors *= scale;
  xf.f.values *= scale;
  xf.alpha.values *= scale;

  Vec x = Vec::Zero(B.domain_size());
  const auto& doms = B.domain_degrees();
  const auto offs = B.domain_offsets();
  for (std::size_t j = 0; j < doms.size(); ++j)
    x.segment(offs[j], ops.n_forms(doms[j])) =
        doms[j] == 0 ? xf.f.values : xf.alpha.values;

  Vec Dx = B.apply_D1(x);
  if (kind == Kind::ContactCY) {
    // The kappa-free complex drops the kappa f term its weighted background
    // restores; put it back for the comparison with the nonlinear map.
    Dx.head(ops.n_forms(0)) += kappa * xf.f.values;
  }

  Vec F0 = nonlinear_residual(s, sc, emb, B, theta_bar);

  LinearizationCheck out;
  out.ts = ts;
  for (double t : ts) {
    if (t <= 0) fail(ErrorCode::InvalidArgument, "step sizes must be positive");
    mesh::Embedding moved = exp_deform(sc, emb, v, t);
    Vec Ft = nonlinear_residual(s, sc, moved, B, theta_bar);
    out.ratios.push_back(B.norm_cod(Ft - F0 - t * Dx) / (t * t));
  }
  const double mx = *std::max_element(out.ratios.begin(), out.ratios.end());
  const double mn = *std::min_element(out.ratios.begin(), out.ratios.end());
  out.variation = mx / std::max(mn, 1e-300) - 1.0;
  return out;
}

LinearizationCheck linearization_check(const ambient::Structure& s,
                                       const mesh::SimplicialComplex& sc,
                                       const mesh::Embedding& emb, Kind kind,
                                       double kappa, std::uint64_t seed,
                                       const std::vector<double>& ts,
                                       double amplitude) {
  NormalFrames fr = normal_frames(sc, emb);
  NormalField v0 = random_normal_field(s, emb, fr, seed, 1.0, false);
  return linearization_check(s, sc, emb, kind, kappa, v0, ts, amplitude);
}

} // namespace sasdef::deform
