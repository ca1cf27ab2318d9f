#pragma once

// Gamma-matrix representations of the complexified Clifford algebra for
// signature (-,+,...,+), together with the spinor/cospinor conjugations.
//
// Conventions (fixed here, used everywhere):
//   {gamma^mu, gamma^nu} = 2 eta^{mu nu} I,   eta = diag(-1,+1,...,+1)
//   gamma^0 anti-Hermitian, gamma^a (a >= 1) Hermitian
//   beta = -i gamma^0 is Hermitian with beta^2 = I
//   spinor conjugate  z+  = -i z^dagger gamma^0      (row)
//   cospinor conjugate z'+ = -i gamma^0 z'^dagger    (column)
//   matrix Dirac adjoint  M+ = beta M^dagger beta
// In this representation (z+)+ = z exactly, and the Dirac adjoint of every
// gamma^mu is -gamma^mu.

#include <Eigen/Dense>
#include <vector>

namespace hdirac {

struct GammaRep {
  int n = 0;  // spacetime dimension
  int N = 0;  // spinor dimension 2^floor(n/2)
  std::vector<Eigen::MatrixXcd> gamma;
  Eigen::MatrixXcd beta;  // -i gamma[0]

  Eigen::MatrixXcd commutator(int mu, int nu) const {
    return gamma[mu] * gamma[nu] - gamma[nu] * gamma[mu];
  }
};

// Tensor-product recursion from the n=2 seed; odd n appends the scaled
// product of the even gammas (first-summand restriction). Entries are
// exactly in {0, +-1, +-i}.
GammaRep build_gamma(int n);

// Largest anticommutation residual max |{g^mu,g^nu} - 2 eta^{mu nu} I|.
double anticommutation_residual(const GammaRep& rep);

// z (column spinor) -> -i z^dagger gamma^0, as a row vector.
Eigen::RowVectorXcd spinor_conjugate(const GammaRep& rep, const Eigen::VectorXcd& z);
// z' (row cospinor) -> -i gamma^0 z'^dagger, as a column spinor.
Eigen::VectorXcd cospinor_conjugate(const GammaRep& rep, const Eigen::RowVectorXcd& zp);
// M -> beta M^dagger beta.
Eigen::MatrixXcd dirac_adjoint(const GammaRep& rep, const Eigen::MatrixXcd& M);

}  // namespace hdirac
