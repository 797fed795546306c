#include "sasdef/operators.hpp"

#include <algorithm>
#include <cctype>

#include "sasdef/error.hpp"

namespace sasdef::deform {

namespace {

using Triplet = Eigen::Triplet<double>;

void add_block(std::vector<Triplet>& out, const SpMat& A, long row_off,
               long col_off, double scale) {
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      out.emplace_back(row_off + it.row(), col_off + it.col(),
                       scale * it.value());
}

void add_identity(std::vector<Triplet>& out, long n, long row_off,
                  long col_off, double scale) {
  for (long i = 0; i < n; ++i)
    out.emplace_back(row_off + i, col_off + i, scale);
}

long sizes_total(const dec::FormOperators& ops, const std::vector<int>& degs) {
  long t = 0;
  for (int k : degs) t += ops.n_forms(k);
  return t;
}

} // namespace

Kind kind_from_string(const std::string& name) {
  std::string s;
  s.reserve(name.size());
  for (char c : name)
    s.push_back(c == '-' ? '_' : char(std::tolower(unsigned(c))));
  if (s == "special_legendrian") return Kind::SpecialLegendrian;
  if (s == "nx_complex") return Kind::NxComplex;
  if (s == "legendrian_complex") return Kind::LegendrianComplex;
  if (s == "transverse") return Kind::Transverse;
  if (s == "contact_cy") return Kind::ContactCY;
  if (s == "minimal_legendrian") return Kind::MinimalLegendrian;
  fail(ErrorCode::InvalidArgument,
       "unknown operator kind '" + name +
           "' (expected special-legendrian, nx-complex, legendrian-complex, "
           "transverse, contact-cy, or minimal-legendrian)");
}

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::SpecialLegendrian: return "special_legendrian";
    case Kind::NxComplex: return "nx_complex";
    case Kind::LegendrianComplex: return "legendrian_complex";
    case Kind::Transverse: return "transverse";
    case Kind::ContactCY: return "contact_cy";
    case Kind::MinimalLegendrian: return "minimal_legendrian";
  }
  fail(ErrorCode::InvalidArgument, "invalid operator kind value");
}

BlockOperator::BlockOperator(Kind kind, const dec::FormOperators& ops,
                             double kappa)
    : kind_(kind), kappa_(kappa), ops_(&ops) {
  const bool surf = ops.dim >= 2; // Lambda^2 blocks survive only on surfaces
  switch (kind_) {
    case Kind::SpecialLegendrian:
      dom1_ = {0, 1};
      cod1_ = {0, 1};
      break;
    case Kind::NxComplex:
      dom1_ = {0, 1};
      cod1_ = {0};
      if (surf) cod1_.push_back(2);
      break;
    case Kind::LegendrianComplex:
      dom1_ = {0, 1};
      cod1_ = {1};
      if (surf) {
        cod1_.push_back(2);
        cod2_ = {2}; // the dbeta row lands in Lambda^3 and is dropped
      }
      break;
    case Kind::Transverse:
      dom1_ = {1};
      cod1_ = {0};
      if (surf) cod1_.push_back(2);
      break;
    case Kind::ContactCY:
      dom1_ = {0, 1};
      cod1_ = {0, 1};
      if (surf) cod1_.push_back(2);
      break;
    case Kind::MinimalLegendrian:
      dom1_ = {0, 1};
      cod1_ = {1, 1}; // d(d*alpha + kappa f) and df + 2 alpha
      break;
  }
  dom_size_ = sizes_total(ops, dom1_);
  cod_size_ = sizes_total(ops, cod1_);
  sec_size_ = sizes_total(ops, cod2_);

  const long V = ops.n_forms(0), E = ops.n_forms(1);
  const long F = surf ? ops.n_forms(2) : 0;
  const SpMat S1d0 = ops.star[1] * ops.d[0];
  const SpMat d0tS1 = SpMat(S1d0.transpose());
  SpMat S2d1;
  if (surf) S2d1 = ops.star[2] * ops.d[1];

  // Weak matrices W1 = S_cod D1: the codifferential rows become d^T S, so
  // every kind except minimal assembles sparsely.
  std::vector<Triplet> t1;
  switch (kind_) {
    case Kind::SpecialLegendrian:
      add_block(t1, ops.star[0], 0, 0, kappa_);
      add_block(t1, d0tS1, 0, V, 1.0);
      add_block(t1, S1d0, V, 0, 1.0);
      add_block(t1, ops.star[1], V, V, 2.0);
      break;
    case Kind::NxComplex:
      add_block(t1, ops.star[0], 0, 0, kappa_);
      add_block(t1, d0tS1, 0, V, 1.0);
      if (surf) add_block(t1, S2d1, V, V, 1.0);
      break;
    case Kind::LegendrianComplex:
      add_block(t1, S1d0, 0, 0, 1.0);
      add_block(t1, ops.star[1], 0, V, 2.0);
      if (surf) add_block(t1, S2d1, E, V, 1.0);
      break;
    case Kind::Transverse:
      add_block(t1, d0tS1, 0, 0, 1.0);
      if (surf) add_block(t1, S2d1, V, 0, 1.0);
      break;
    case Kind::ContactCY:
      add_block(t1, d0tS1, 0, V, 1.0);
      add_block(t1, S1d0, V, 0, 1.0);
      add_block(t1, ops.star[1], V, V, 2.0);
      if (surf) add_block(t1, S2d1, V + E, V, 1.0);
      break;
    case Kind::MinimalLegendrian:
      break; // first row needs S1 d0 S0^{-1} d0^T S1: not sparse, use applies
  }
  if (!t1.empty()) {
    W1_.resize(cod_size_, dom_size_);
    W1_.setFromTriplets(t1.begin(), t1.end());
    W1_.makeCompressed();
  }

  if (has_second()) { // legendrian complex on a surface
    std::vector<Triplet> t2, ts;
    add_block(t2, S2d1, 0, 0, 1.0);
    add_block(t2, ops.star[2], 0, E, -2.0);
    W2_.resize(sec_size_, cod_size_);
    W2_.setFromTriplets(t2.begin(), t2.end());
    W2_.makeCompressed();
    add_block(ts, ops.d[1], 0, 0, 1.0);
    add_identity(ts, F, 0, E, -2.0);
    D2s_.resize(sec_size_, cod_size_);
    D2s_.setFromTriplets(ts.begin(), ts.end());
    D2s_.makeCompressed();
  }
}

std::vector<long> BlockOperator::domain_offsets() const {
  std::vector<long> off(dom1_.size());
  long acc = 0;
  for (size_t i = 0; i < dom1_.size(); ++i) {
    off[i] = acc;
    acc += ops_->n_forms(dom1_[i]);
  }
  return off;
}

std::vector<long> BlockOperator::codomain_offsets() const {
  std::vector<long> off(cod1_.size());
  long acc = 0;
  for (size_t i = 0; i < cod1_.size(); ++i) {
    off[i] = acc;
    acc += ops_->n_forms(cod1_[i]);
  }
  return off;
}

Vec BlockOperator::apply_D1(const Vec& x) const {
  if (x.size() != dom_size_)
    fail(ErrorCode::InvalidArgument, "domain vector has wrong size");
  const auto& o = *ops_;
  const long V = o.n_forms(0), E = o.n_forms(1);
  const bool surf = o.dim >= 2;
  Vec y(cod_size_);
  switch (kind_) {
    case Kind::SpecialLegendrian: {
      Vec f = x.head(V), a = x.tail(E);
      y.head(V) = kappa_ * f + o.codiff_apply(1, a);
      y.tail(E) = o.d_apply(0, f) + 2.0 * a;
      return y;
    }
    case Kind::NxComplex: {
      Vec f = x.head(V), a = x.tail(E);
      y.head(V) = kappa_ * f + o.codiff_apply(1, a);
      if (surf) y.tail(y.size() - V) = o.d_apply(1, a);
      return y;
    }
    case Kind::LegendrianComplex: {
      Vec f = x.head(V), a = x.tail(E);
      y.head(E) = o.d_apply(0, f) + 2.0 * a;
      if (surf) y.tail(y.size() - E) = o.d_apply(1, a);
      return y;
    }
    case Kind::Transverse: {
      y.head(V) = o.codiff_apply(1, x);
      if (surf) y.tail(y.size() - V) = o.d_apply(1, x);
      return y;
    }
    case Kind::ContactCY: {
      Vec f = x.head(V), a = x.tail(E);
      y.head(V) = o.codiff_apply(1, a);
      y.segment(V, E) = o.d_apply(0, f) + 2.0 * a;
      if (surf) y.tail(y.size() - V - E) = o.d_apply(1, a);
      return y;
    }
    case Kind::MinimalLegendrian: {
      Vec f = x.head(V), a = x.tail(E);
      y.head(E) = o.d_apply(0, o.codiff_apply(1, a) + kappa_ * f);
      y.tail(E) = o.d_apply(0, f) + 2.0 * a;
      return y;
    }
  }
  fail(ErrorCode::InvalidArgument, "invalid operator kind value");
}

Vec BlockOperator::apply_D1_star(const Vec& y) const {
  if (y.size() != cod_size_)
    fail(ErrorCode::InvalidArgument, "codomain vector has wrong size");
  const auto& o = *ops_;
  const long V = o.n_forms(0), E = o.n_forms(1);
  const bool surf = o.dim >= 2;
  Vec x(dom_size_);
  switch (kind_) {
    case Kind::SpecialLegendrian: {
      Vec y0 = y.head(V), y1 = y.tail(E);
      x.head(V) = kappa_ * y0 + o.codiff_apply(1, y1);
      x.tail(E) = o.d_apply(0, y0) + 2.0 * y1;
      return x;
    }
    case Kind::NxComplex: {
      Vec y0 = y.head(V);
      x.head(V) = kappa_ * y0;
      x.tail(E) = o.d_apply(0, y0);
      if (surf) x.tail(E) += o.codiff_apply(2, y.tail(y.size() - V));
      return x;
    }
    case Kind::LegendrianComplex: {
      Vec y1 = y.head(E);
      x.head(V) = o.codiff_apply(1, y1);
      x.tail(E) = 2.0 * y1;
      if (surf) x.tail(E) += o.codiff_apply(2, y.tail(y.size() - E));
      return x;
    }
    case Kind::Transverse: {
      x = o.d_apply(0, y.head(V));
      if (surf) x += o.codiff_apply(2, y.tail(y.size() - V));
      return x;
    }
    case Kind::ContactCY: {
      Vec y0 = y.head(V), y1 = y.segment(V, E);
      x.head(V) = o.codiff_apply(1, y1);
      x.tail(E) = o.d_apply(0, y0) + 2.0 * y1;
      if (surf) x.tail(E) += o.codiff_apply(2, y.tail(y.size() - V - E));
      return x;
    }
    case Kind::MinimalLegendrian: {
      Vec y1 = y.head(E), y2 = y.tail(E);
      Vec dy1 = o.codiff_apply(1, y1);
      x.head(V) = kappa_ * dy1 + o.codiff_apply(1, y2);
      x.tail(E) = o.d_apply(0, dy1) + 2.0 * y2;
      return x;
    }
  }
  fail(ErrorCode::InvalidArgument, "invalid operator kind value");
}

Vec BlockOperator::apply_D2(const Vec& y) const {
  if (!has_second()) return Vec::Zero(0);
  if (y.size() != cod_size_)
    fail(ErrorCode::InvalidArgument, "codomain vector has wrong size");
  return D2s_ * y;
}

Vec BlockOperator::apply_D2_star(const Vec& z) const {
  if (!has_second()) return Vec::Zero(cod_size_);
  if (z.size() != sec_size_)
    fail(ErrorCode::InvalidArgument, "second-space vector has wrong size");
  const auto& o = *ops_;
  const long E = o.n_forms(1);
  Vec y(cod_size_);
  y.head(E) = o.codiff_apply(2, z);
  y.tail(cod_size_ - E) = -2.0 * z;
  return y;
}

Vec BlockOperator::apply_P1(const Vec& x) const {
  return apply_D1_star(apply_D1(x));
}

Vec BlockOperator::apply_P2(const Vec& y) const {
  Vec out = apply_D1(apply_D1_star(y));
  if (has_second()) out += apply_D2_star(apply_D2(y));
  return out;
}

Vec BlockOperator::apply_K2(const Vec& y) const {
  return mass_cod_apply(apply_P2(y));
}

const SpMat& BlockOperator::W1() const {
  if (!sparse_W1())
    fail(ErrorCode::Unsupported,
         "minimal_legendrian has no sparse weak matrix; use the applies");
  return W1_;
}

const SpMat& BlockOperator::W2() const {
  if (!has_second())
    fail(ErrorCode::Unsupported, kind_name(kind_) + " has no second operator");
  return W2_;
}

const SpMat& BlockOperator::D2_matrix() const {
  if (!has_second())
    fail(ErrorCode::Unsupported, kind_name(kind_) + " has no second operator");
  return D2s_;
}

Vec BlockOperator::block_mass_op(const std::vector<int>& degs, const Vec& x,
                                 bool solve) const {
  Vec out(x.size());
  long off = 0;
  for (int k : degs) {
    long n = ops_->n_forms(k);
    out.segment(off, n) = solve ? ops_->mass_solve(k, x.segment(off, n))
                                : ops_->mass_apply(k, x.segment(off, n));
    off += n;
  }
  return out;
}

double BlockOperator::block_inner(const std::vector<int>& degs, const Vec& a,
                                  const Vec& b) const {
  double acc = 0;
  long off = 0;
  for (int k : degs) {
    long n = ops_->n_forms(k);
    acc += ops_->inner(k, a.segment(off, n), b.segment(off, n));
    off += n;
  }
  return acc;
}

Vec BlockOperator::mass_dom_apply(const Vec& x) const {
  return block_mass_op(dom1_, x, false);
}
Vec BlockOperator::mass_dom_solve(const Vec& x) const {
  return block_mass_op(dom1_, x, true);
}
Vec BlockOperator::mass_cod_apply(const Vec& y) const {
  return block_mass_op(cod1_, y, false);
}
Vec BlockOperator::mass_cod_solve(const Vec& y) const {
  return block_mass_op(cod1_, y, true);
}
double BlockOperator::inner_dom(const Vec& a, const Vec& b) const {
  return block_inner(dom1_, a, b);
}
double BlockOperator::inner_cod(const Vec& a, const Vec& b) const {
  return block_inner(cod1_, a, b);
}

Mat BlockOperator::dense_D1() const {
  if (dom_size_ > dec::kDenseThreshold)
    fail(ErrorCode::Unsupported,
         "domain too large for a dense operator matrix");
  Mat A(cod_size_, dom_size_);
  Vec e = Vec::Zero(dom_size_);
  for (long j = 0; j < dom_size_; ++j) {
    e[j] = 1.0;
    A.col(j) = apply_D1(e);
    e[j] = 0.0;
  }
  return A;
}

double BlockOperator::complex_defect() const {
  if (!has_second()) return 0.0;
  // Strong-form composite: the legendrian D1 is itself sparse, so the
  // product is exact integer-and-doubling arithmetic.
  const auto& o = *ops_;
  const long V = o.n_forms(0), E = o.n_forms(1);
  std::vector<Triplet> t;
  add_block(t, o.d[0], 0, 0, 1.0);
  add_identity(t, E, 0, V, 2.0);
  add_block(t, o.d[1], E, V, 1.0);
  SpMat D1s(cod_size_, dom_size_);
  D1s.setFromTriplets(t.begin(), t.end());
  SpMat comp = D2s_ * D1s;
  double m = 0;
  for (int k = 0; k < comp.outerSize(); ++k)
    for (SpMat::InnerIterator it(comp, k); it; ++it)
      m = std::max(m, std::abs(it.value()));
  return m;
}

double BlockOperator::symmetry_defect() const {
  if (kind_ != Kind::SpecialLegendrian)
    fail(ErrorCode::Unsupported,
         "symmetry defect is defined for the self-adjoint kind only");
  SpMat diff = W1_ - SpMat(W1_.transpose());
  return diff.norm() / W1_.norm();
}

BlockOperator assemble_operator(Kind kind, const dec::FormOperators& ops,
                                double kappa) {
  return BlockOperator(kind, ops, kappa);
}

} // namespace sasdef::deform
