#pragma once

// Hadamard coefficients via the transport equation, the model singular
// kernels of the squared-geodesic-distance, and assembly of the truncated
// parametrices h^+-, H^+- and the double-spinor kernel.
//
// Transport: along the geodesic gamma(s) = exp_{x'}(s u), the coefficients
// satisfy a first-order transport equation in s whose homogeneous solution
// is V_0; V_1 follows by variation of constants,
//   V_1(s) = -(V_0(s)/s) Int_0^s V_0^{-1} (P V_0) dsigma,
// with P V_0 evaluated by second-order transverse differencing. The
// transport coefficient is read off Jacobi (geodesic deviation) fields
// integrated along the same geodesic.
//
// Branch rule for the singular kernels: at timelike separation the powers
// and logarithms of -Gamma -+ i eps theta0 are resolved analytically with
// phase +-pi sgn(theta0) for T_+-, the orientation for which
// T_+ - T_- = 2 pi i (R_+ - R_-) and h^+ - h^- matches i S.

#include <functional>
#include <optional>

#include "hdirac/geometry.hpp"

namespace hdirac {

// --- singular kernels -------------------------------------------------------

// 1/z! with the reciprocal-gamma continuation (0 at negative integers).
double reciprocal_factorial(double z);

double riesz_C(double alpha, int n);
double riesz_Cprime(int j, int n);

// R_+-(alpha) evaluated off the light cone; inside = point in the causal set.
double riesz_R(double alpha, int n, double gamma_val, bool inside);

// T_+-(j) for even j >= 2; sign = +1 or -1 selects T_+ / T_-.
std::complex<double> singular_T(int j, int n, double lambda, double gamma_val, double theta0,
                                int sign);

// d T_+-(j) / d Gamma at fixed branch (off the cone the theta0-dependence is
// locally constant, so this is the full derivative along point variations).
std::complex<double> singular_T_dgamma(int j, int n, double lambda, double gamma_val,
                                       double theta0, int sign);

// --- transport --------------------------------------------------------------

struct TransportOptions {
  int steps = 64;           // geodesic / transport integration steps
  int source_nodes = 16;    // quadrature intervals for the V1 source
  double fan_step = 5e-3;   // transverse stencil step for P V0
  GeoOptions geo;
};

struct TransportResult {
  std::vector<double> s;                 // nodes in (0, 1]
  std::vector<Eigen::MatrixXcd> V0;      // V_0(gamma(s), x')
  std::vector<Eigen::MatrixXcd> V1;      // V_1(gamma(s), x'); empty if k_max = 0
};

// Solve the transport system along the geodesic from xp to x.
TransportResult transport_along(const BackgroundSpec& bg, const GammaRep& rep,
                                const Eigen::VectorXd& xp, const Eigen::VectorXd& x, int k_max,
                                const TransportOptions& opt = {});

// Fan evaluation: one coefficient field per direction.
struct FanSpec {
  std::vector<Eigen::VectorXd> directions;  // chart displacements from the base point
  double extent = 0.2;                      // geodesic runs to base + extent*direction
  TransportOptions transport;
};

struct HadamardCoefficientField {
  int k = 0;
  Eigen::VectorXd base;
  Eigen::VectorXd direction;
  std::vector<double> s;                // geodesic parameter grid
  std::vector<Eigen::MatrixXcd> samples;
};

std::vector<HadamardCoefficientField> transport_V(const BackgroundSpec& bg, const GammaRep& rep,
                                                  const Eigen::VectorXd& xp, int k_max,
                                                  const FanSpec& fan);

// Coinciding-point limits assembled from curvature data (closed form).
struct V1Limits {
  Eigen::MatrixXcd V1;
  std::vector<Eigen::MatrixXcd> gradV1;  // [mu]
};
V1Limits coinciding_V1(const BackgroundSpec& bg, const GammaRep& rep, std::span<const double> x);

// Transport-route extrapolations toward coinciding points.
Eigen::MatrixXcd transport_V1_limit(const BackgroundSpec& bg, const GammaRep& rep,
                                    const Eigen::VectorXd& xp, const FanSpec& fan);
std::vector<Eigen::MatrixXcd> transport_gradV1_limit(const BackgroundSpec& bg,
                                                     const GammaRep& rep,
                                                     const Eigen::VectorXd& xp,
                                                     const FanSpec& fan);

// --- parametrix -------------------------------------------------------------

struct PreParametrix {
  Eigen::MatrixXcd h_plus, h_minus;  // scalar-operator parametrices at (x, x')
  Eigen::MatrixXcd H_plus, H_minus;  // -Dtilde h^+- in the first argument
  double gamma_val = 0.0;
  double theta0 = 0.0;
};

PreParametrix pre_parametrix(const BackgroundSpec& bg, const GammaRep& rep,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& xp, int k_max,
                             double lambda, const TransportOptions& opt = {});

// M -> beta M^dagger beta (kernel-level Dirac adjoint).
Eigen::MatrixXcd dirac_adjoint_kernel(const GammaRep& rep, const Eigen::MatrixXcd& M);

// Double-spinor kernel at an ordered point pair (x, y). Contraction
// convention: pack u = (f, f') in C^{2N} (spinor test then cospinor test);
// value(u@x, v@y) = u^T pair() v. Diagonal blocks vanish.
struct DoubleSpinorKernel {
  int N = 0;
  Eigen::MatrixXcd cs;  // kernel of the (f'@x, f@y) slot
  Eigen::MatrixXcd sc;  // kernel of the (f@x, f'@y) slot
  Eigen::MatrixXcd pair() const;
  std::complex<double> value(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) const;
};

// Four-line assembly from frequency-split kernels evaluated at both
// orderings of the pair. state = true gives the two-point-function signs
// (+1/2 on both blocks, no remainder); state = false the parametrix signs
// (+1/2, -1/2, -1/4 remainder terms).
DoubleSpinorKernel assemble_double_kernel(const GammaRep& rep, const Eigen::MatrixXcd& Kp_xy,
                                          const Eigen::MatrixXcd& Kp_yx,
                                          const Eigen::MatrixXcd& Km_xy,
                                          const Eigen::MatrixXcd& Km_yx,
                                          const Eigen::MatrixXcd& r_xy,
                                          const Eigen::MatrixXcd& r_yx, bool state);

// Conjugate of a double-spinor argument: (f, f') -> (f'^+, f^+) in the
// packed column convention.
Eigen::VectorXcd double_spinor_plus(const GammaRep& rep, const Eigen::VectorXcd& u);

using SKernelFn =
    std::function<Eigen::MatrixXcd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

struct ParametrixEval {
  Eigen::VectorXd x, xp;
  int k_max = 1;
  double lambda = 1.0;
  PreParametrix fwd;   // at (x, xp)
  PreParametrix rev;   // at (xp, x)
  DoubleSpinorKernel H_double;
  DoubleSpinorKernel H_double_rev;  // kernel at the reversed ordering (xp, x)
  Eigen::MatrixXcd remainder_r;     // H^+ - H^- - iS at (x, xp); zero if no S given
};

ParametrixEval assemble_parametrix(const BackgroundSpec& bg, const GammaRep& rep,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& xp, int k_max,
                                   double lambda, const SKernelFn* S = nullptr,
                                   const TransportOptions& opt = {});

}  // namespace hdirac
