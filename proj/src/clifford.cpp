#include "hdirac/clifford.hpp"

#include <stdexcept>

namespace hdirac {

using Eigen::MatrixXcd;
using cd = std::complex<double>;

static MatrixXcd kron(const MatrixXcd& A, const MatrixXcd& B) {
  MatrixXcd R(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) R.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return R;
}

GammaRep build_gamma(int n) {
  if (n < 2) throw std::invalid_argument("spacetime dimension must be >= 2");

  const cd I(0.0, 1.0);
  MatrixXcd s1(2, 2), s2(2, 2), s3(2, 2), id2 = MatrixXcd::Identity(2, 2);
  s1 << 0, 1, 1, 0;
  s2 << 0, -I, I, 0;
  s3 << 1, 0, 0, -1;

  // even seed: gamma^0 = i s2 (anti-Hermitian, square -1), gamma^1 = s1
  std::vector<MatrixXcd> g;
  g.push_back(I * s2);
  g.push_back(s1);

  int even = (n % 2 == 0) ? n : n - 1;
  while (static_cast<int>(g.size()) < even) {
    std::vector<MatrixXcd> next;
    int N = static_cast<int>(g[0].rows());
    MatrixXcd idN = MatrixXcd::Identity(N, N);
    for (const auto& gm : g) next.push_back(kron(gm, s3));
    next.push_back(kron(idN, s1));
    next.push_back(kron(idN, s2));
    g = std::move(next);
  }

  if (n % 2 == 1) {
    MatrixXcd prod = g[0];
    for (int mu = 1; mu < even; ++mu) prod = prod * g[mu];
    MatrixXcd sq = prod * prod;
    cd diag = sq(0, 0);
    MatrixXcd extra = (std::abs(diag.real() + 1.0) < 1e-12) ? MatrixXcd(I * prod) : prod;
    if ((extra * extra - MatrixXcd::Identity(extra.rows(), extra.cols())).norm() > 1e-12)
      throw std::logic_error("odd-dimension gamma construction failed");
    g.push_back(extra);
  }

  GammaRep rep;
  rep.n = n;
  rep.N = static_cast<int>(g[0].rows());
  rep.gamma = std::move(g);
  rep.beta = -I * rep.gamma[0];
  return rep;
}

double anticommutation_residual(const GammaRep& rep) {
  double worst = 0.0;
  MatrixXcd id = MatrixXcd::Identity(rep.N, rep.N);
  for (int mu = 0; mu < rep.n; ++mu)
    for (int nu = 0; nu < rep.n; ++nu) {
      double eta = (mu == nu) ? (mu == 0 ? -1.0 : 1.0) : 0.0;
      MatrixXcd r = rep.gamma[mu] * rep.gamma[nu] + rep.gamma[nu] * rep.gamma[mu] - 2.0 * eta * id;
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
  return worst;
}

Eigen::RowVectorXcd spinor_conjugate(const GammaRep& rep, const Eigen::VectorXcd& z) {
  if (z.size() != rep.N) throw std::invalid_argument("spinor dimension mismatch");
  return cd(0.0, -1.0) * (z.adjoint() * rep.gamma[0]);
}

Eigen::VectorXcd cospinor_conjugate(const GammaRep& rep, const Eigen::RowVectorXcd& zp) {
  if (zp.size() != rep.N) throw std::invalid_argument("cospinor dimension mismatch");
  return cd(0.0, -1.0) * (rep.gamma[0] * zp.adjoint());
}

Eigen::MatrixXcd dirac_adjoint(const GammaRep& rep, const Eigen::MatrixXcd& M) {
  if (M.rows() != rep.N || M.cols() != rep.N) throw std::invalid_argument("matrix dimension mismatch");
  return rep.beta * M.adjoint() * rep.beta;
}

}  // namespace hdirac
