#pragma once

// Finite-mode graded functional algebra: wedge product, left functional
// derivatives, Peierls bracket, the star products, and the exponential
// kernel maps used for Hadamard ordering and for changing between states.
//
// Generators psi_i are the coordinate functionals on a mode space C^M of
// antisymmetrized on-shell configurations; hbar is a formal grading, so
// coefficients are polynomials in hbar and every exponential series stops
// by nilpotency.

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "hdirac/exprjet.hpp"

namespace hdirac {

// polynomial in the formal parameter hbar
class HPoly {
 public:
  HPoly() = default;
  explicit HPoly(std::complex<double> c0) : c_{c0} { trim(); }
  static HPoly hbar_power(std::complex<double> c, int k) {
    HPoly p;
    p.c_.assign(k + 1, {0.0, 0.0});
    p.c_[k] = c;
    p.trim();
    return p;
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  std::complex<double> coeff(int k) const {
    return (k >= 0 && k < static_cast<int>(c_.size())) ? c_[k] : std::complex<double>(0.0);
  }
  bool zero() const { return c_.empty(); }
  double norm() const {
    double s = 0.0;
    for (auto& c : c_) s += std::abs(c);
    return s;
  }

  HPoly& operator+=(const HPoly& o);
  HPoly operator*(const HPoly& o) const;
  HPoly scaled(std::complex<double> f) const;
  HPoly shifted(int k) const;  // multiply by hbar^k
  HPoly conjugated() const;    // conjugate coefficients (hbar is real)
  HPoly truncated(int cap) const;

 private:
  void trim();
  std::vector<std::complex<double>> c_;
};

enum class KernelRole {
  CommutatorFunction,  // S-oplus restricted to modes: symmetric matrix
  HalfIS,              // (i/2) S
  TwoPoint,            // a two-point kernel omega
  AntisymmetricPart,   // omega_a or a difference of such: antisymmetric matrix
  SmoothDifference     // omega - H: antisymmetric matrix
};

struct KernelMatrix {
  KernelRole role;
  Eigen::MatrixXcd K;
  void validate() const;  // role-specific symmetry checks
};

class GrassmannPoly {
 public:
  GrassmannPoly() = default;
  explicit GrassmannPoly(int modes) : modes_(modes) {}
  static GrassmannPoly unit(int modes) {
    GrassmannPoly p(modes);
    p.terms_[{}] = HPoly(std::complex<double>(1.0));
    return p;
  }
  static GrassmannPoly generator(int modes, int i);
  // linear field psi(u) = sum_i u_i psi_i
  static GrassmannPoly linear(int modes, const Eigen::VectorXcd& u);

  int modes() const { return modes_; }
  const std::map<std::vector<int>, HPoly>& terms() const { return terms_; }
  bool zero() const { return terms_.empty(); }
  double norm() const;

  // grade structure
  bool homogeneous(int* grade = nullptr) const;
  std::vector<GrassmannPoly> graded_parts() const;

  void add_term(std::vector<int> idx, const HPoly& c);  // idx strictly increasing

  GrassmannPoly operator+(const GrassmannPoly& o) const;
  GrassmannPoly operator-(const GrassmannPoly& o) const;
  GrassmannPoly scaled(std::complex<double> f) const;
  GrassmannPoly scaled_h(const HPoly& f) const;
  GrassmannPoly truncated(int cap) const;

 private:
  int modes_ = 0;
  std::map<std::vector<int>, HPoly> terms_;
};

GrassmannPoly wedge(const GrassmannPoly& F, const GrassmannPoly& G);

// left functional derivative against a mode vector u
GrassmannPoly func_derivative(const GrassmannPoly& F, const Eigen::VectorXcd& u);

GrassmannPoly peierls(const GrassmannPoly& F, const GrassmannPoly& G, const KernelMatrix& S);

// F star G = wedge exp(hbar Gamma_K^tensor)(F tensor G); exact by nilpotency.
GrassmannPoly star(const GrassmannPoly& F, const GrassmannPoly& G, const KernelMatrix& kernel,
                   int hbar_cap);

// exp(hbar Gamma_K) with Gamma_K F = (1/2) sum K_ij D_j D_i F
GrassmannPoly gamma_map(const GrassmannPoly& F, const KernelMatrix& K, int hbar_cap);

// F*(B) = conj(F(B+)) where B+ = C conj(B) on the mode space.
GrassmannPoly involution(const GrassmannPoly& F, const Eigen::MatrixXcd& C);

}  // namespace hdirac
