#include "sasdef/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace sasdef::mesh {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Union-find for the combinatorial Betti computation.
struct DisjointSet {
  std::vector<long> parent;
  explicit DisjointSet(long n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  long find(long a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(long a, long b) { parent[find(a)] = find(b); }
  long components() {
    long c = 0;
    for (long i = 0; i < static_cast<long>(parent.size()); ++i)
      if (find(i) == i) ++c;
    return c;
  }
};

using EdgeKey = std::pair<int, int>;

EdgeKey key_of(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

// Builds d0 and, for surfaces, d1 from the simplex tables. Edge lookup is by
// unordered pair; the sign records agreement with the stored orientation.
void build_incidence(SimplicialComplex& sc) {
  const long V = sc.n_vertices;
  const long E = sc.edges.rows();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * E);
  for (long e = 0; e < E; ++e) {
    const int a = sc.edges(e, 0), b = sc.edges(e, 1);
    if (a == b || a < 0 || b < 0 || a >= V || b >= V)
      fail(ErrorCode::InvalidMesh, "edge " + std::to_string(e) + " is degenerate or out of range");
    trip.emplace_back(e, a, -1.0);
    trip.emplace_back(e, b, 1.0);
  }
  sc.d0.resize(E, V);
  sc.d0.setFromTriplets(trip.begin(), trip.end());

  if (sc.dim == 1) {
    sc.d1.resize(0, E);
    return;
  }

  std::map<EdgeKey, long> edge_index;
  for (long e = 0; e < E; ++e)
    edge_index[key_of(sc.edges(e, 0), sc.edges(e, 1))] = e;

  const long F = sc.triangles.rows();
  trip.clear();
  trip.reserve(3 * F);
  for (long t = 0; t < F; ++t) {
    const int v[3] = {sc.triangles(t, 0), sc.triangles(t, 1), sc.triangles(t, 2)};
    // faces opposite vertex i with the boundary sign (-1)^i:
    // +(v1,v2), -(v0,v2), +(v0,v1)
    const int face[3][2] = {{v[1], v[2]}, {v[0], v[2]}, {v[0], v[1]}};
    const double base_sign[3] = {1.0, -1.0, 1.0};
    for (int i = 0; i < 3; ++i) {
      auto it = edge_index.find(key_of(face[i][0], face[i][1]));
      if (it == edge_index.end())
        fail(ErrorCode::InvalidMesh,
             "triangle " + std::to_string(t) + " has a face missing from the edge table");
      const long e = it->second;
      const double orient = (sc.edges(e, 0) == face[i][0]) ? 1.0 : -1.0;
      trip.emplace_back(t, e, base_sign[i] * orient);
    }
  }
  sc.d1.resize(F, E);
  sc.d1.setFromTriplets(trip.begin(), trip.end());
}

Eigen::VectorXd circle_point(double t) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::VectorXd x(4);
  x << std::cos(t) * s, std::sin(t) * s, std::cos(t) * s, -std::sin(t) * s;
  return x;
}

Eigen::VectorXd torus_point(double t1, double t2) {
  const double s = 1.0 / std::sqrt(3.0);
  Eigen::VectorXd x(6);
  x << std::cos(t1) * s, std::sin(t1) * s, std::cos(t2) * s, std::sin(t2) * s,
      std::cos(t1 + t2) * s, -std::sin(t1 + t2) * s;
  return x;
}

} // namespace

long SimplicialComplex::count(int k) const {
  switch (k) {
    case 0: return n_vertices;
    case 1: return edges.rows();
    case 2: return dim >= 2 ? triangles.rows() : 0;
    default: return 0;
  }
}

std::array<long, 3> SimplicialComplex::betti() const {
  // b0 from vertex components; for closed oriented surfaces b2 equals the
  // number of top components and rank d1 = F - b2, rank d0 = V - b0.
  DisjointSet verts(n_vertices);
  for (long e = 0; e < edges.rows(); ++e) verts.unite(edges(e, 0), edges(e, 1));
  const long b0 = verts.components();

  if (dim == 1) {
    const long E = edges.rows();
    return {b0, E - (n_vertices - b0), 0};
  }

  // Triangle adjacency across shared edges.
  std::map<EdgeKey, std::vector<long>> by_edge;
  for (long t = 0; t < triangles.rows(); ++t)
    for (int i = 0; i < 3; ++i)
      by_edge[key_of(triangles(t, i), triangles(t, (i + 1) % 3))].push_back(t);
  DisjointSet tris(triangles.rows());
  for (const auto& [k, ts] : by_edge)
    for (size_t i = 1; i < ts.size(); ++i) tris.unite(ts[0], ts[i]);
  const long b2 = tris.components();

  const long E = edges.rows(), V = n_vertices, F = triangles.rows();
  return {b0, E - (V - b0) - (F - b2), b2};
}

void SimplicialComplex::validate() const {
  if (dim != 1 && dim != 2)
    fail(ErrorCode::Unsupported, "only 1- and 2-dimensional complexes are supported");
  if (n_vertices < 3) fail(ErrorCode::InvalidMesh, "fewer than 3 vertices");

  // d1 * d0 must vanish identically; entries are signed sums of +-1 so the
  // check is exact in floating point.
  if (dim == 2) {
    SpMat dd = (d1 * d0).pruned();
    if (dd.nonZeros() != 0)
      fail(ErrorCode::InvalidMesh, "boundary-of-boundary is nonzero");
    // Closed oriented surface: every edge lies in exactly two triangles with
    // opposite induced orientations, i.e. each d1 column sums to zero and has
    // two entries.
    Eigen::VectorXd colsum = Eigen::RowVectorXd::Ones(d1.rows()) * d1;
    for (long e = 0; e < d1.cols(); ++e) {
      if (std::abs(colsum[e]) > 0.5)
        fail(ErrorCode::InvalidMesh,
             "edge " + std::to_string(e) + " has inconsistent triangle orientations");
    }
  }
}

void Embedding::validate_on_sphere() const {
  for (long v = 0; v < coords.rows(); ++v) {
    const double r = coords.row(v).norm();
    if (std::abs(r - 1.0) > sphere_tol)
      fail(ErrorCode::InvalidMesh,
           "vertex " + std::to_string(v) + " is off the unit sphere: |x| = " + std::to_string(r));
  }
}

MetricData MetricData::scaled(double a) const {
  if (!(a > 0.0)) fail(ErrorCode::InvalidArgument, "metric scale must be positive");
  MetricData out = *this;
  const double vol_factor = (dim == 1) ? std::sqrt(a) : a; // a^{n/2}
  for (auto& g : out.gram) g *= a;
  out.top_volumes *= vol_factor;
  out.edge_lengths *= std::sqrt(a);
  out.total_volume *= vol_factor;
  return out;
}

SimplicialComplex make_complex(int dim, long n_vertices,
                               const Eigen::MatrixXi& edges,
                               const Eigen::MatrixXi& triangles) {
  SimplicialComplex sc;
  sc.dim = dim;
  sc.n_vertices = n_vertices;
  sc.edges = edges;
  if (dim >= 2) sc.triangles = triangles;
  if (dim == 1 || dim == 2) build_incidence(sc);
  sc.validate();
  return sc;
}

std::pair<SimplicialComplex, Embedding> build_clifford_circle(int segments) {
  if (segments < 3)
    fail(ErrorCode::InvalidMesh, "clifford circle needs at least 3 segments");
  SimplicialComplex sc;
  sc.dim = 1;
  sc.n_vertices = segments;
  sc.edges.resize(segments, 2);
  Embedding emb;
  emb.coords.resize(segments, 4);
  for (int i = 0; i < segments; ++i) {
    emb.coords.row(i) = circle_point(kTau * i / segments);
    sc.edges(i, 0) = i;
    sc.edges(i, 1) = (i + 1) % segments;
  }
  build_incidence(sc);
  return {std::move(sc), std::move(emb)};
}

std::pair<SimplicialComplex, Embedding> build_clifford_torus(int n1, int n2) {
  if (n1 < 3 || n2 < 3)
    fail(ErrorCode::InvalidMesh, "clifford torus grid must be at least 3x3");
  SimplicialComplex sc;
  sc.dim = 2;
  sc.n_vertices = static_cast<long>(n1) * n2;
  Embedding emb;
  emb.coords.resize(sc.n_vertices, 6);

  auto vid = [&](int a, int b) {
    return static_cast<long>(((a % n1) + n1) % n1) * n2 + (((b % n2) + n2) % n2);
  };
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b)
      emb.coords.row(vid(a, b)) = torus_point(kTau * a / n1, kTau * b / n2);

  // Three edge families per vertex (+1,0), (0,+1), (+1,+1); two triangles per
  // grid square, both positively oriented in (t1,t2).
  sc.edges.resize(3 * sc.n_vertices, 2);
  sc.triangles.resize(2 * sc.n_vertices, 3);
  long e = 0, t = 0;
  for (int a = 0; a < n1; ++a) {
    for (int b = 0; b < n2; ++b) {
      const int p = static_cast<int>(vid(a, b));
      sc.edges.row(e++) << p, static_cast<int>(vid(a + 1, b));
      sc.edges.row(e++) << p, static_cast<int>(vid(a, b + 1));
      sc.edges.row(e++) << p, static_cast<int>(vid(a + 1, b + 1));
      sc.triangles.row(t++) << p, static_cast<int>(vid(a + 1, b)),
          static_cast<int>(vid(a + 1, b + 1));
      sc.triangles.row(t++) << p, static_cast<int>(vid(a + 1, b + 1)),
          static_cast<int>(vid(a, b + 1));
    }
  }
  build_incidence(sc);
  return {std::move(sc), std::move(emb)};
}

std::pair<SimplicialComplex, Embedding> refine(const SimplicialComplex& sc,
                                               const Embedding& emb) {
  sc.validate();
  const long V = sc.n_vertices;
  const long E = sc.edges.rows();

  SimplicialComplex out;
  out.dim = sc.dim;
  out.n_vertices = V + E;
  Embedding eout;
  eout.sphere_tol = emb.sphere_tol;
  eout.coords.resize(out.n_vertices, emb.coords.cols());
  eout.coords.topRows(V) = emb.coords;

  std::map<EdgeKey, long> mid;
  for (long e = 0; e < E; ++e) {
    Eigen::RowVectorXd m =
        0.5 * (emb.coords.row(sc.edges(e, 0)) + emb.coords.row(sc.edges(e, 1)));
    const double r = m.norm();
    if (r < 1e-12)
      fail(ErrorCode::InvalidMesh, "edge midpoint collapses to the origin");
    eout.coords.row(V + e) = m / r;
    mid[key_of(sc.edges(e, 0), sc.edges(e, 1))] = V + e;
  }

  if (sc.dim == 1) {
    out.edges.resize(2 * E, 2);
    for (long e = 0; e < E; ++e) {
      const int a = sc.edges(e, 0), b = sc.edges(e, 1);
      const int m = static_cast<int>(V + e);
      out.edges.row(2 * e) << a, m;
      out.edges.row(2 * e + 1) << m, b;
    }
    build_incidence(out);
    return {std::move(out), std::move(eout)};
  }

  const long F = sc.triangles.rows();
  out.triangles.resize(4 * F, 3);
  std::map<EdgeKey, long> new_edges;
  std::vector<std::array<int, 2>> edge_list;
  auto add_edge = [&](int a, int b) {
    auto k = key_of(a, b);
    if (new_edges.emplace(k, static_cast<long>(edge_list.size())).second)
      edge_list.push_back({a, b});
  };
  long t = 0;
  for (long f = 0; f < F; ++f) {
    const int p = sc.triangles(f, 0), q = sc.triangles(f, 1), r = sc.triangles(f, 2);
    const int mpq = static_cast<int>(mid.at(key_of(p, q)));
    const int mqr = static_cast<int>(mid.at(key_of(q, r)));
    const int mpr = static_cast<int>(mid.at(key_of(p, r)));
    out.triangles.row(t++) << p, mpq, mpr;
    out.triangles.row(t++) << mpq, q, mqr;
    out.triangles.row(t++) << mpr, mqr, r;
    out.triangles.row(t++) << mpq, mqr, mpr;
    add_edge(p, mpq); add_edge(mpq, q);
    add_edge(q, mqr); add_edge(mqr, r);
    add_edge(p, mpr); add_edge(mpr, r);
    add_edge(mpq, mqr); add_edge(mqr, mpr); add_edge(mpq, mpr);
  }
  out.edges.resize(edge_list.size(), 2);
  for (size_t i = 0; i < edge_list.size(); ++i)
    out.edges.row(i) << edge_list[i][0], edge_list[i][1];
  build_incidence(out);
  return {std::move(out), std::move(eout)};
}

MetricData induced_metric(const SimplicialComplex& sc, const Embedding& emb,
                          double metric_scale) {
  if (!(metric_scale > 0.0))
    fail(ErrorCode::InvalidArgument, "metric scale must be positive");
  MetricData md;
  md.dim = sc.dim;
  const long E = sc.edges.rows();
  md.edge_lengths.resize(E);
  const double len_scale = std::sqrt(metric_scale);
  for (long e = 0; e < E; ++e) {
    md.edge_lengths[e] =
        (emb.coords.row(sc.edges(e, 1)) - emb.coords.row(sc.edges(e, 0))).norm() * len_scale;
    if (md.edge_lengths[e] < 1e-14)
      fail(ErrorCode::SingularMetric, "edge " + std::to_string(e) + " has zero length");
  }

  const long T = sc.count(sc.dim);
  md.gram.resize(T);
  md.top_volumes.resize(T);
  if (sc.dim == 1) {
    for (long e = 0; e < E; ++e) {
      md.gram[e].setZero();
      md.gram[e](0, 0) = md.edge_lengths[e] * md.edge_lengths[e];
      md.top_volumes[e] = md.edge_lengths[e];
    }
  } else {
    for (long f = 0; f < T; ++f) {
      Eigen::RowVectorXd e1 =
          emb.coords.row(sc.triangles(f, 1)) - emb.coords.row(sc.triangles(f, 0));
      Eigen::RowVectorXd e2 =
          emb.coords.row(sc.triangles(f, 2)) - emb.coords.row(sc.triangles(f, 0));
      Eigen::Matrix2d g;
      g << e1.dot(e1), e1.dot(e2), e1.dot(e2), e2.dot(e2);
      g *= metric_scale;
      const double det = g.determinant();
      if (!(det > 1e-24 * std::pow(g.trace() + 1e-300, 2)) || !(g(0, 0) > 0))
        fail(ErrorCode::SingularMetric,
             "triangle " + std::to_string(f) + " has a degenerate Gram matrix");
      md.gram[f] = g;
      md.top_volumes[f] = 0.5 * std::sqrt(det);
    }
  }
  md.total_volume = md.top_volumes.sum();
  return md;
}

Eigen::VectorXd ambient_J(const Eigen::VectorXd& x) {
  Eigen::VectorXd y(x.size());
  for (long k = 0; k + 1 < x.size(); k += 2) {
    y[k] = -x[k + 1];
    y[k + 1] = x[k];
  }
  return y;
}

} // namespace sasdef::mesh
