#pragma once

// Renormalized Wick squares, current, and stress-energy from point-split
// data; conservation residuals; local redefinitions; ambiguity tensors.
//
// Conventions: the Wick-square matrices are stored in the (A, B) layout of
// psi+_A psi^B; for a constant matrix M the spinor trace of M times a Wick
// square is the elementwise contraction sum_{AB} M(A,B) W(A,B). The overall
// normalization of the expectation dictionary (a single global sign relative
// to the raw functional contraction) is fixed by positivity of the
// anticommutator and checked against the spectral oracles.

#include "hdirac/modesum.hpp"

namespace hdirac {

struct WickData {
  Eigen::VectorXd x;
  Eigen::MatrixXcd Psi;                       // <psi+_A psi^B>
  std::vector<Eigen::MatrixXcd> Psi_mu;       // <nabla_mu psi+ . psi>
  std::vector<Eigen::MatrixXcd> Psi_mu_r;     // <psi+ . nabla_mu psi>
  std::vector<Eigen::MatrixXcd> dPsi;         // field derivative of Psi
  double observed_order = 0.0;
  double residual = 0.0;
  bool converged = false;
};

// spinor trace of (M acting on the square W): sum_{AB} M(A,B) W(A,B)
std::complex<double> wick_trace(const Eigen::MatrixXcd& M, const Eigen::MatrixXcd& W);

double scalar_wick(const WickData& wd);                                  // <psi+ psi>
Eigen::VectorXd current(const WickData& wd, const CurvaturePackage& pkg, const GammaRep& rep);
// the component of tr(gamma Psi) that should vanish by reality
double current_reality_defect(const WickData& wd, const CurvaturePackage& pkg,
                              const GammaRep& rep);
Eigen::MatrixXd stress_energy(const WickData& wd, const CurvaturePackage& pkg,
                              const GammaRep& rep);
// displayed combination for g^{mu nu} T_{mu nu}
double stress_trace_identity(const WickData& wd, const CurvaturePackage& pkg,
                             const GammaRep& rep);

// --- grid pipeline on the ultrastatic circle --------------------------------

struct GridOptions {
  int grid = 64;
  double t0 = 0.0;
  PointSplitOptions split;
};

// Point-split Wick data at every grid point x_k = k L / grid; the field
// derivative of Psi comes from the spectral derivative over the grid, the
// time derivative from stationarity.
std::vector<WickData> wick_grid(const StateKernel& state, const BackgroundSpec& bg,
                                const GammaRep& rep, const GridOptions& opt);

// spectral derivative of periodic samples
std::vector<double> spectral_derivative(const std::vector<double>& f, double L);

struct ConservationReport {
  std::vector<double> div_j;          // del_mu j^mu per grid point
  std::vector<Eigen::VectorXd> div_T; // del^mu T_{mu nu} per grid point
  std::vector<double> trace_T;        // g^{mu nu} T_{mu nu}
  std::vector<double> trace_identity; // displayed Wick combination
  double max_div_j = 0.0;
  double max_div_T = 0.0;
};

ConservationReport conservation_residual(const std::vector<WickData>& grid,
                                         const BackgroundSpec& bg, const GammaRep& rep,
                                         double L);

// Q^mu with del_mu Q^mu equal to the measured del_mu j^mu (circle: zero-mean
// Fourier solve; the time component vanishes on static data).
std::vector<Eigen::VectorXd> measure_Q(const std::vector<double>& div_j, double L);

// --- local redefinitions -----------------------------------------------------

// scalar part delta H = -2^{-[n/2]} gamma^mu Q_mu from grid samples of Q
// (periodic interpolation); mass dimension n-1
DeltaH current_correction(const std::vector<Eigen::VectorXd>& Q, double L,
                          const GammaRep& rep);

// menu term delta H = c * m^3 (mass dimension 3); the background evaluates m
DeltaH scalar_menu_m3(double c, const BackgroundSpec& bg);

// full scalar menu from the background's coefficient list:
//   delta H = a0 m^3 + a1 m R + a2 i m gamma^mu gamma^nu F_{mu nu} + a4 gamma^mu del_mu R
// (empty when all coefficients vanish)
std::optional<DeltaH> scalar_menu(const BackgroundSpec& bg, const GammaRep& rep);

// stress ambiguity shift from the background's beta list, evaluated at x:
//   b2 m^2 G_{mu nu} + b3 m^4 g_{mu nu}  (+ b0 I + b1 J in four dimensions)
Eigen::MatrixXd stress_ambiguity_shift(const BackgroundSpec& bg, std::span<const double> x,
                                       const GammaRep& rep);

// vector redefinition realizing Psi_mu -> Psi_mu + X_mu(x)
DeltaH psi_mu_shift(std::function<std::vector<Eigen::MatrixXcd>(const Eigen::VectorXd&)> X,
                    int mass_dimension);

// the displayed stress-energy shift built from grid samples of Q_{mu nu}
DeltaH stress_correction(const std::vector<Eigen::MatrixXd>& Q, double L, const GammaRep& rep);

// --- ambiguity tensors (n = 4) ----------------------------------------------

struct AmbiguityTensors {
  Eigen::MatrixXd I;    // variation of R^2
  Eigen::MatrixXd J;    // variation of R_{ab} R^{ab}
  Eigen::MatrixXd mG;   // m^2 G_{mu nu}
  Eigen::MatrixXd m4g;  // m^4 g_{mu nu}
};

AmbiguityTensors ambiguity_tensors(const BackgroundSpec& bg, std::span<const double> x,
                                   const GammaRep& rep);

// numerical covariant divergence of a tensor field given as an evaluator,
// by central differences of the field plus connection terms
Eigen::VectorXd covariant_divergence(
    const BackgroundSpec& bg, std::span<const double> x,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& field, double step = 1e-3);

}  // namespace hdirac
