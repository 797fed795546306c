#include "sasdef/dec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <vector>

#include "sasdef/eigensolve.hpp"
#include "sasdef/error.hpp"
#include "sasdef/rng.hpp"

namespace sasdef::dec {

namespace {

using Triplet = Eigen::Triplet<double>;

// Local vertex pairs of the three edges of a triangle, matching the face
// ordering used when d1 was built.
constexpr int kLocalEdge[3][2] = {{0, 1}, {0, 2}, {1, 2}};

SpMat mass_p1_curve(const mesh::SimplicialComplex& sc,
                    const mesh::MetricData& metric) {
  std::vector<Triplet> trip;
  trip.reserve(4 * sc.edges.rows());
  for (long e = 0; e < sc.edges.rows(); ++e) {
    double l = metric.edge_lengths[e];
    int i = sc.edges(e, 0), j = sc.edges(e, 1);
    trip.emplace_back(i, i, l / 3.0);
    trip.emplace_back(j, j, l / 3.0);
    trip.emplace_back(i, j, l / 6.0);
    trip.emplace_back(j, i, l / 6.0);
  }
  SpMat m(sc.n_vertices, sc.n_vertices);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

SpMat mass_p1_surface(const mesh::SimplicialComplex& sc,
                      const mesh::MetricData& metric) {
  std::vector<Triplet> trip;
  trip.reserve(9 * sc.triangles.rows());
  for (long f = 0; f < sc.triangles.rows(); ++f) {
    double a = metric.top_volumes[f];
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        trip.emplace_back(sc.triangles(f, p), sc.triangles(f, q),
                          a * (p == q ? 2.0 : 1.0) / 12.0);
  }
  SpMat m(sc.n_vertices, sc.n_vertices);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

// Whitney 1-form mass on a surface. Per triangle the local matrix comes from
// <w_ab, w_cd> = P(a,c)Q(b,d) - P(a,d)Q(b,c) - P(b,c)Q(a,d) + P(b,d)Q(a,c)
// with P the P1 mass moments and Q the barycentric gradient inner products.
SpMat mass_whitney1(const mesh::SimplicialComplex& sc,
                    const mesh::MetricData& metric) {
  const long V = sc.n_vertices;
  std::unordered_map<long long, long> edge_index;
  edge_index.reserve(sc.edges.rows() * 2);
  for (long e = 0; e < sc.edges.rows(); ++e) {
    int i = sc.edges(e, 0), j = sc.edges(e, 1);
    long long key = static_cast<long long>(std::min(i, j)) * V + std::max(i, j);
    edge_index[key] = e;
  }

  std::vector<Triplet> trip;
  trip.reserve(9 * sc.triangles.rows());
  for (long f = 0; f < sc.triangles.rows(); ++f) {
    const double area = metric.top_volumes[f];
    Eigen::Matrix2d ginv = metric.gram[f].inverse();

    Eigen::Matrix3d Q; // <dlambda_a, dlambda_b>
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) Q(i + 1, j + 1) = ginv(i, j);
    for (int j = 0; j < 2; ++j) {
      Q(0, j + 1) = -(ginv(0, j) + ginv(1, j));
      Q(j + 1, 0) = Q(0, j + 1);
    }
    Q(0, 0) = ginv.sum();

    Eigen::Matrix3d P; // integrals of lambda_p lambda_q
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) P(p, q) = area * (p == q ? 2.0 : 1.0) / 12.0;

    long ge[3];
    double sign[3];
    for (int le = 0; le < 3; ++le) {
      int va = sc.triangles(f, kLocalEdge[le][0]);
      int vb = sc.triangles(f, kLocalEdge[le][1]);
      long long key =
          static_cast<long long>(std::min(va, vb)) * V + std::max(va, vb);
      auto it = edge_index.find(key);
      if (it == edge_index.end())
        fail(ErrorCode::InvalidMesh, "triangle references a missing edge");
      ge[le] = it->second;
      sign[le] = (sc.edges(it->second, 0) == va) ? 1.0 : -1.0;
    }

    for (int le1 = 0; le1 < 3; ++le1) {
      int a = kLocalEdge[le1][0], b = kLocalEdge[le1][1];
      for (int le2 = 0; le2 < 3; ++le2) {
        int c = kLocalEdge[le2][0], d = kLocalEdge[le2][1];
        double val = P(a, c) * Q(b, d) - P(a, d) * Q(b, c) -
                     P(b, c) * Q(a, d) + P(b, d) * Q(a, c);
        trip.emplace_back(ge[le1], ge[le2], sign[le1] * sign[le2] * val);
      }
    }
  }
  SpMat m(sc.edges.rows(), sc.edges.rows());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

SpMat diag_inverse_volumes(const Vec& vols) {
  std::vector<Triplet> trip;
  trip.reserve(vols.size());
  for (long i = 0; i < vols.size(); ++i) trip.emplace_back(i, i, 1.0 / vols[i]);
  SpMat m(vols.size(), vols.size());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

} // namespace

long FormOperators::n_forms(int k) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  return star[k].rows();
}

const SpMat& FormOperators::d_matrix(int k) const {
  if (k < 0 || k >= dim) fail(ErrorCode::InvalidArgument, "bad coboundary degree");
  return d[k];
}

Vec FormOperators::d_apply(int k, const Vec& x) const {
  return d_matrix(k) * x;
}

Vec FormOperators::codiff_apply(int k, const Vec& x) const {
  if (k <= 0 || k > dim)
    fail(ErrorCode::InvalidArgument, "bad codifferential degree");
  return llt_[k - 1]->solve(d[k - 1].transpose() * (star[k] * x));
}

Vec FormOperators::laplacian_apply(int k, const Vec& x) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  Vec out = Vec::Zero(x.size());
  if (k < dim) out += codiff_apply(k + 1, d_apply(k, x));
  if (k > 0) out += d_apply(k - 1, codiff_apply(k, x));
  return out;
}

Vec FormOperators::mass_solve(int k, const Vec& x) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  return llt_[k]->solve(x);
}

double FormOperators::inner(int k, const Vec& x, const Vec& y) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  return x.dot(star[k] * y);
}

double FormOperators::norm(int k, const Vec& x) const {
  return std::sqrt(std::max(0.0, inner(k, x, x)));
}

Mat FormOperators::weak_laplacian_dense(int k) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  const long nk = n_forms(k);
  Mat W = Mat::Zero(nk, nk);
  if (k < dim) {
    SpMat stiff = d[k].transpose() * star[k + 1] * d[k];
    W += Mat(stiff);
  }
  if (k > 0) {
    Mat Bd = Mat(SpMat(star[k] * d[k - 1]));
    Mat X = llt_[k - 1]->solve(Bd.transpose());
    W.noalias() += Bd * X;
  }
  return 0.5 * (W + W.transpose());
}

SpMat FormOperators::weak_stiffness0() const {
  if (dim < 1) fail(ErrorCode::InvalidArgument, "no 1-forms available");
  SpMat K = d[0].transpose() * star[1] * d[0];
  K.makeCompressed();
  return K;
}

const Eigen::SimplicialLLT<SpMat>& FormOperators::mass_factor(int k) const {
  if (!has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  return *llt_[k];
}

FormOperators assemble_operators(const mesh::SimplicialComplex& sc,
                                 const mesh::MetricData& metric) {
  if (sc.dim != metric.dim)
    fail(ErrorCode::InvalidArgument, "complex and metric dimensions differ");
  FormOperators ops;
  ops.dim = sc.dim;
  ops.betti = sc.betti();
  ops.d[0] = sc.d0;
  if (sc.dim == 2) ops.d[1] = sc.d1;

  if (sc.dim == 1) {
    ops.star[0] = mass_p1_curve(sc, metric);
    ops.star[1] = diag_inverse_volumes(metric.top_volumes);
  } else {
    ops.star[0] = mass_p1_surface(sc, metric);
    ops.star[1] = mass_whitney1(sc, metric);
    ops.star[2] = diag_inverse_volumes(metric.top_volumes);
  }

  for (int k = 0; k <= ops.dim; ++k) {
    ops.llt_[k] = std::make_shared<Eigen::SimplicialLLT<SpMat>>(ops.star[k]);
    if (ops.llt_[k]->info() != Eigen::Success)
      fail(ErrorCode::SingularMetric, "mass matrix is not positive definite");
  }
  return ops;
}

HodgeParts hodge_decompose(const FormOperators& ops, int k, const Vec& c) {
  if (!ops.has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  const long nk = ops.n_forms(k);
  if (c.size() != nk) fail(ErrorCode::InvalidArgument, "cochain size mismatch");
  HodgeParts parts;
  parts.exact = Vec::Zero(nk);
  parts.coexact = Vec::Zero(nk);

  if (k > 0) {
    // Least-squares potential: (d^T S d) p = d^T S c. The system is singular
    // on ker(d) but consistent; for 0-form potentials the null space is the
    // constants, which we deflate explicitly so rounding never feeds the
    // preconditioner a null direction it would amplify.
    const SpMat& dm = ops.d[k - 1];
    SpMat K = dm.transpose() * ops.star[k] * dm;
    K.makeCompressed();
    double eps = 1e-8 * K.diagonal().sum() /
                 std::max(1e-300, ops.star[k - 1].diagonal().sum());
    SpMat P = K + eps * ops.star[k - 1];
    Eigen::SimplicialLLT<SpMat> pllt(P);
    if (pllt.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure, "hodge preconditioner factorization failed");
    const bool deflate = (k == 1 && ops.betti[0] == 1);
    auto project = [&](Vec x) -> Vec {
      if (deflate) x.array() -= x.mean();
      return x;
    };
    la::LinOp A = [&](const Vec& x) -> Vec { return project(K * x); };
    la::LinOp Pre = [&](const Vec& r) -> Vec { return project(pllt.solve(r)); };
    Vec rhs = project(dm.transpose() * (ops.star[k] * c));
    Vec p = la::pcg(A, rhs, Pre, 1e-13, 5000);
    parts.exact = dm * p;
  }

  if (k < ops.dim) {
    // Coexact part from the weak normal equation on (k+1)-forms.
    const SpMat& dm = ops.d[k];
    const SpMat& Sup = ops.star[k + 1];
    la::LinOp A = [&](const Vec& x) -> Vec {
      return Sup * (dm * ops.mass_solve(k, dm.transpose() * (Sup * x)));
    };
    SpMat Sk_diag_inv(nk, nk);
    {
      std::vector<Triplet> trip;
      Vec diag = ops.star[k].diagonal();
      for (long i = 0; i < nk; ++i) trip.emplace_back(i, i, 1.0 / diag[i]);
      Sk_diag_inv.setFromTriplets(trip.begin(), trip.end());
    }
    SpMat proxy = Sup * dm * Sk_diag_inv * dm.transpose() * Sup;
    double eps = 1e-8 * proxy.diagonal().sum() /
                 std::max(1e-300, Sup.diagonal().sum());
    proxy = proxy + eps * Sup;
    Eigen::SimplicialLLT<SpMat> pllt(proxy);
    if (pllt.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure, "hodge preconditioner factorization failed");
    // At the top degree the normal operator has the one-dimensional null
    // space S^{-1} 1 (column sums of d vanish on an oriented closed
    // complex); deflate it for the same reason as the constants above.
    const bool deflate = (k + 1 == ops.dim && ops.betti[ops.dim] == 1);
    Vec null_dir;
    double null_norm2 = 1.0;
    if (deflate) {
      null_dir = ops.mass_solve(k + 1, Vec::Ones(ops.n_forms(k + 1)));
      null_norm2 = null_dir.squaredNorm();
    }
    auto project = [&](Vec x) -> Vec {
      if (deflate) x -= null_dir * (null_dir.dot(x) / null_norm2);
      return x;
    };
    la::LinOp Ap = [&](const Vec& x) -> Vec { return project(A(x)); };
    la::LinOp Pre = [&](const Vec& r) -> Vec { return project(pllt.solve(r)); };
    Vec rhs = project(Sup * (dm * c));
    Vec q = la::pcg(Ap, rhs, Pre, 1e-13, 5000);
    parts.coexact = ops.mass_solve(k, dm.transpose() * (Sup * q));
  }

  parts.harmonic = c - parts.exact - parts.coexact;
  return parts;
}

EigenCluster eigen_cluster(const FormOperators& ops, int k, double target,
                           double delta) {
  if (!ops.has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  if (delta <= 0) fail(ErrorCode::InvalidArgument, "cluster width must be positive");
  const long nk = ops.n_forms(k);
  const double w = delta * std::max(target, 1.0);

  Vec all_values;
  Mat all_vectors;
  if (nk <= kDenseThreshold) {
    la::EigenPairs full =
        la::dense_pencil(ops.weak_laplacian_dense(k), Mat(ops.star[k]));
    all_values = full.values;
    all_vectors = full.vectors;
  } else if (k == 0) {
    SpMat K = ops.weak_stiffness0();
    int nev = 8;
    for (;;) {
      int ask = static_cast<int>(std::min<long>(nev, nk));
      la::EigenPairs near =
          la::shift_invert_nearest(K, ops.star[0], target, ask);
      double dmax = 0;
      for (long i = 0; i < near.values.size(); ++i)
        dmax = std::max(dmax, std::abs(near.values[i] - target));
      if (dmax > 1.5 * w || ask >= nk || ask >= 96) {
        all_values = near.values;
        all_vectors = near.vectors;
        break;
      }
      nev *= 2;
    }
  } else {
    fail(ErrorCode::Unsupported,
         "clustered eigensolve beyond the dense ceiling is only available "
         "for 0-forms");
  }

  EigenCluster cluster;
  std::vector<long> keep;
  for (long i = 0; i < all_values.size(); ++i) {
    double dist = std::abs(all_values[i] - target);
    if (dist <= w) keep.push_back(i);
    if (std::abs(dist - w) <= 0.1 * w) cluster.edge_ambiguity = true;
  }
  cluster.vectors.resize(nk, static_cast<long>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) {
    cluster.values.push_back(all_values[keep[i]]);
    cluster.vectors.col(i) = all_vectors.col(keep[i]);
  }
  return cluster;
}

std::vector<Vec> harmonic_basis(const FormOperators& ops, int k, double tol) {
  if (!ops.has_degree(k)) fail(ErrorCode::InvalidArgument, "bad form degree");
  const long nk = ops.n_forms(k);
  const long expected = ops.betti[k];

  if (nk <= kDenseThreshold || k == 0) {
    EigenCluster cl = eigen_cluster(ops, k, 0.0, tol);
    if (static_cast<long>(cl.values.size()) != expected)
      fail(ErrorCode::SolverFailure,
           "harmonic space dimension disagrees with the betti number");
    std::vector<Vec> basis;
    for (size_t i = 0; i < cl.values.size(); ++i)
      basis.push_back(cl.vectors.col(i));
    return basis;
  }

  if (k == 2) {
    // Harmonic top cochains are S2^{-1} of per-component indicators; the
    // coboundary transpose kills them exactly because interior edges see the
    // two adjacent triangles with opposite signs.
    std::vector<long> comp(nk, -1);
    // Union by edge adjacency, read off the columns of d1.
    std::vector<long> parent(nk);
    for (long i = 0; i < nk; ++i) parent[i] = i;
    std::function<long(long)> find = [&](long a) -> long {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    const SpMat& dm = ops.d[1];
    for (int col = 0; col < dm.outerSize(); ++col) {
      long first = -1;
      for (SpMat::InnerIterator it(dm, col); it; ++it) {
        if (first < 0)
          first = it.row();
        else
          parent[find(first)] = find(it.row());
      }
    }
    std::unordered_map<long, long> roots;
    for (long f = 0; f < nk; ++f) {
      long r = find(f);
      auto ins = roots.emplace(r, static_cast<long>(roots.size()));
      comp[f] = ins.first->second;
    }
    if (static_cast<long>(roots.size()) != expected)
      fail(ErrorCode::SolverFailure,
           "harmonic space dimension disagrees with the betti number");
    std::vector<Vec> basis;
    for (long c = 0; c < expected; ++c) {
      Vec ind = Vec::Zero(nk);
      for (long f = 0; f < nk; ++f)
        if (comp[f] == c) ind[f] = 1.0;
      Vec h = ops.mass_solve(2, ind);
      basis.push_back(h / ops.norm(2, h));
    }
    return basis;
  }

  // Large 1-form case: Hodge-project seeded probes and keep the dominant
  // span in the star inner product. Random probes have a generic component
  // along every harmonic direction, so the projected Gram matrix splits
  // cleanly into the harmonic block and solver-noise residue.
  const int probes = static_cast<int>(expected) + 3;
  Rng rng(0x4a11c0deULL);
  Mat H(nk, probes);
  double probe_scale2 = 0.0;
  for (int p = 0; p < probes; ++p) {
    Vec probe(nk);
    for (long i = 0; i < nk; ++i) probe[i] = rng.next_normal();
    probe_scale2 += ops.inner(k, probe, probe);
    HodgeParts parts = hodge_decompose(ops, k, probe);
    H.col(p) = parts.harmonic;
  }
  probe_scale2 /= probes;

  Mat G = H.transpose() * (ops.star[k] * H);
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const Vec& ev = es.eigenvalues(); // ascending
  long first = probes - expected;   // index of the smallest kept eigenvalue
  double noise = (first > 0) ? std::max(ev[first - 1], 0.0) : 0.0;
  bool split_ok = noise <= 1e-12 * probe_scale2 &&
                  (expected == 0 || ev[first] > 1e-8 * probe_scale2);
  if (!split_ok)
    fail(ErrorCode::SolverFailure,
         "harmonic space dimension disagrees with the betti number");

  std::vector<Vec> basis;
  for (long j = first; j < probes; ++j) {
    Vec b = H * es.eigenvectors().col(j) / std::sqrt(ev[j]);
    if (ops.norm(k, ops.laplacian_apply(k, b)) > tol)
      fail(ErrorCode::SolverFailure, "harmonic candidate fails the residual check");
    basis.push_back(b);
  }
  return basis;
}

KernelResult kernel_dim(const Mat& A, const SpMat& S_dom, const SpMat& S_cod,
                        double tol) {
  if (A.rows() != S_cod.rows() || A.cols() != S_dom.rows())
    fail(ErrorCode::InvalidArgument, "operator and star sizes disagree");
  if (std::max(A.rows(), A.cols()) > 4096)
    fail(ErrorCode::Unsupported, "dense kernel extraction limited to small problems");

  Mat G = A.transpose() * Mat(S_cod) * A;
  G = 0.5 * (G + G.transpose()).eval();
  la::EigenPairs pairs = la::dense_pencil(G, Mat(S_dom));

  KernelResult res;
  res.singular_values.resize(pairs.values.size());
  for (long i = 0; i < pairs.values.size(); ++i)
    res.singular_values[i] = std::sqrt(std::max(0.0, pairs.values[i]));
  double smax = res.singular_values.size()
                    ? res.singular_values[res.singular_values.size() - 1]
                    : 0.0;
  double cut = tol * smax;
  long dim = 0;
  while (dim < res.singular_values.size() && res.singular_values[dim] <= cut)
    ++dim;
  res.dim = dim;
  res.basis = pairs.vectors.leftCols(dim);
  return res;
}

} // namespace sasdef::dec
