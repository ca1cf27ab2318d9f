#pragma once

// Background rescaling, the log-Lambda derivative of the parametrix, and
// extraction of the scaling coefficient of the composite interaction
// squares: the coefficients of m1 box m0, R m0 m1, m1 m0^3 and
// A1^mu del^lam F_{lam mu} in the nontrivial scaling of
// m1 <psi+ psi> + i A1_mu <psi+ gamma^mu psi>.

#include "hdirac/observables.hpp"

namespace hdirac {

// g -> lambda^{-2} g, m -> lambda m, A -> lambda A (exact scale fields)
BackgroundSpec rescale_background(const BackgroundSpec& bg, double lambda);

// d h^+ / d log Lambda at a point pair: analytic (the scale only enters the
// logarithmic kernels) and, for cross-checking, by central differences of
// the assembled h at two scales.
Eigen::MatrixXcd lambda_derivative(const BackgroundSpec& bg, const GammaRep& rep,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                                   int k_max, double lambda,
                                   const TransportOptions& opt = {}, bool numeric = false);

// d/d log Lambda of the physical Wick matrix <psi+_A psi^B> at x, assembled
// in closed form from the coinciding-point limits of the Hadamard
// coefficients (valid for k_max = 1 truncation; local, no state needed).
Eigen::MatrixXcd lambda_derivative_wick(const BackgroundSpec& bg, const GammaRep& rep,
                                        std::span<const double> x);

struct RGCoefficient {
  double c_box = 0.0;  // m1 del^lam del_lam m0
  double c_R = 0.0;    // R m0 m1
  double c_m3 = 0.0;   // m1 m0^3
  double c_F = 0.0;    // A1^mu del^lam F0_{lam mu}
};

// Decompose the scaling coefficient onto the four monomials by evaluating
// on backgrounds that isolate each term (n = 4).
RGCoefficient rg_coefficient(const GammaRep& rep4);

// the scaling coefficient of the composite at a given background and point,
// for perturbations (m1, A1_mu) given as values at x
double composite_scaling(const BackgroundSpec& bg, const GammaRep& rep, std::span<const double> x,
                         double m1, const Eigen::VectorXd& A1_lower);

struct ScalingReport {
  std::vector<double> lambdas;
  std::vector<double> values;     // lambda^{-d} (Wick square on the rescaled background)
  double fitted_value = 0.0;      // Psi
  double log_coefficient = 0.0;   // the hbar r term
  double fit_residual = 0.0;
  double scaling_dimension = 0.0;
  double analytic_log_coefficient = 0.0;  // from the local Lambda derivative
};

// Wick squares compared across jointly rescaled circle backgrounds at a
// fixed scale Lambda; fits lambda^{-d} S_lambda Psi = Psi + r log(lambda).
ScalingReport scaling_check(const UltrastaticCircle& circle, const GammaRep& rep,
                            const std::vector<double>& lambdas, int cutoff,
                            const PointSplitOptions& split);

}  // namespace hdirac
