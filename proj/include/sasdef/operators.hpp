#pragma once

// Linearized deformation operators as block maps between packed cochain
// spaces. Each kind bundles a first-order operator D1, its star adjoint, an
// optional second operator D2 forming a complex, and the associated normal
// operators P1 = D1*D1, P2 = D1 D1* + D2*D2. Vectors are concatenations of
// cochain blocks in the listed degree order.

#include <Eigen/Sparse>

#include <string>
#include <vector>

#include "sasdef/dec.hpp"

namespace sasdef::deform {

using dec::Mat;
using dec::Vec;
using mesh::SpMat;

enum class Kind {
  SpecialLegendrian,
  NxComplex,
  LegendrianComplex,
  Transverse,
  ContactCY,
  MinimalLegendrian,
};

// Accepts hyphen or underscore separators ("nx-complex" == "nx_complex").
Kind kind_from_string(const std::string& name);
std::string kind_name(Kind kind);

class BlockOperator {
public:
  BlockOperator(Kind kind, const dec::FormOperators& ops, double kappa);

  Kind kind() const { return kind_; }
  double kappa() const { return kappa_; }
  const dec::FormOperators& ops() const { return *ops_; }

  // Degrees of the cochain blocks in domain, codomain, and the codomain of
  // D2. On curves the Lambda^2 blocks are dropped; second_degrees() is empty
  // whenever the kind has no surviving D2.
  const std::vector<int>& domain_degrees() const { return dom1_; }
  const std::vector<int>& codomain_degrees() const { return cod1_; }
  const std::vector<int>& second_degrees() const { return cod2_; }
  long domain_size() const { return dom_size_; }
  long codomain_size() const { return cod_size_; }
  long second_size() const { return sec_size_; }
  bool has_second() const { return !cod2_.empty(); }
  std::vector<long> domain_offsets() const;
  std::vector<long> codomain_offsets() const;

  Vec apply_D1(const Vec& x) const;
  Vec apply_D1_star(const Vec& y) const;
  Vec apply_D2(const Vec& y) const;
  Vec apply_D2_star(const Vec& z) const;
  Vec apply_P1(const Vec& x) const;
  Vec apply_P2(const Vec& y) const;
  // Weak normal operator S_cod * P2; Euclidean-symmetric positive
  // semidefinite, the matrix the corrector actually inverts.
  Vec apply_K2(const Vec& y) const;

  // W1 = S_cod D1 and W2 = S_cod2 D2 as sparse matrices. W1 exists for every
  // kind except minimal_legendrian, whose first row contains a mass inverse;
  // use the applies there. D2_matrix is the strong sparse form of D2.
  bool sparse_W1() const { return W1_.size() > 0; }
  const SpMat& W1() const;
  const SpMat& W2() const;
  const SpMat& D2_matrix() const;

  Vec mass_dom_apply(const Vec& x) const;
  Vec mass_dom_solve(const Vec& x) const;
  Vec mass_cod_apply(const Vec& y) const;
  Vec mass_cod_solve(const Vec& y) const;
  double inner_dom(const Vec& a, const Vec& b) const;
  double inner_cod(const Vec& a, const Vec& b) const;
  double norm_dom(const Vec& a) const { return std::sqrt(inner_dom(a, a)); }
  double norm_cod(const Vec& a) const { return std::sqrt(inner_cod(a, a)); }

  // Strong D1 as a dense matrix, column by column; refuses domains above the
  // dense threshold.
  Mat dense_D1() const;

  // Largest entry of the strong composite D2 D1 (exactly zero for the
  // complexes; zero by construction when D2 is absent).
  double complex_defect() const;
  // Relative Frobenius asymmetry of W1; only the self-adjoint kind has
  // matching spaces, others refuse.
  double symmetry_defect() const;

private:
  Vec block_mass_op(const std::vector<int>& degs, const Vec& x,
                    bool solve) const;
  double block_inner(const std::vector<int>& degs, const Vec& a,
                     const Vec& b) const;

  Kind kind_;
  double kappa_ = 0;
  const dec::FormOperators* ops_ = nullptr;
  std::vector<int> dom1_, cod1_, cod2_;
  long dom_size_ = 0, cod_size_ = 0, sec_size_ = 0;
  SpMat W1_, W2_, D2s_;
};

BlockOperator assemble_operator(Kind kind, const dec::FormOperators& ops,
                                double kappa);

} // namespace sasdef::deform
