#pragma once

// Connection, curvature, geodesics, the world function and its
// d'Alembertian, parallel transport, and the Dirac operators on jets.
//
// Curvature conventions used throughout:
//   R^rho_{sigma mu nu} = d_mu Gamma^rho_{nu sigma} - d_nu Gamma^rho_{mu sigma}
//                         + Gamma^rho_{mu lam} Gamma^lam_{nu sigma}
//                         - Gamma^rho_{nu lam} Gamma^lam_{mu sigma}
//   R_{sigma nu} = R^mu_{sigma mu nu},  R = g^{sigma nu} R_{sigma nu}
// (R > 0 on de Sitter slices; this is the sign for which the second-order
// identity P = -D Dtilde holds with the +R/4 term.)
//
// World function: Gamma(x,x') = -g_{mu nu}(x) v^mu v^nu with
// v = exp_x^{-1}(x'), so Gamma > 0 at timelike separation.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "hdirac/background.hpp"
#include "hdirac/clifford.hpp"
#include "hdirac/exprjet.hpp"

namespace hdirac {

// ---------------------------------------------------------------------------
// Matrix-valued and spinor-valued jets

struct MatJet {
  int N = 0;
  std::vector<CJet> e;  // row-major N*N

  MatJet() = default;
  MatJet(int n, std::shared_ptr<const JetSpace> sp, bool identity = false);
  static MatJet from_value(const Eigen::MatrixXcd& M, std::shared_ptr<const JetSpace> sp);

  CJet& at(int i, int j) { return e[i * N + j]; }
  const CJet& at(int i, int j) const { return e[i * N + j]; }
  std::shared_ptr<const JetSpace> space() const { return e[0].space(); }

  Eigen::MatrixXcd value() const;
  Eigen::MatrixXcd partial(int mu) const;
  MatJet derivative(int mu) const;
  MatJet truncated(int order) const;

  MatJet operator+(const MatJet& o) const;
  MatJet operator-(const MatJet& o) const;
  MatJet operator*(const MatJet& o) const;
  MatJet scaled(const std::complex<double>& c) const;
  MatJet scaled_jet(const CJet& c) const;
};

using SpinJet = std::vector<CJet>;     // column spinor components
using CospinJet = std::vector<CJet>;   // row cospinor components

SpinJet matjet_apply(const MatJet& M, const SpinJet& v);
CospinJet matjet_apply_right(const CospinJet& v, const MatJet& M);

// ---------------------------------------------------------------------------
// Curvature data at a point

struct CurvaturePackage {
  int n = 0;
  std::vector<double> x;
  int order = 0;  // metric jet order used

  std::vector<std::vector<Jet>> g, ginv;                  // order p
  std::vector<std::vector<std::vector<Jet>>> christoffel; // [lam][mu][nu], order p-1
  std::vector<std::vector<Jet>> frame;    // e_a^mu, [a][mu], order p
  std::vector<std::vector<Jet>> coframe;  // e^a_mu, [a][mu]
  std::vector<MatJet> sigma;              // spin connection sigma_mu, order p-1
  std::vector<Jet> Apot;                  // A_mu, order p
  std::vector<std::vector<Jet>> F;        // F_{mu nu}, order p-1
  Jet m;                                  // order p
  std::vector<std::vector<std::vector<std::vector<Jet>>>> riemann;  // R^r_{s m n}, order p-2
  std::vector<std::vector<Jet>> ricci;    // order p-2
  Jet ricci_scalar;                       // order p-2
  std::vector<std::vector<MatJet>> spin_curvature;  // r_{mu nu}, order p-2

  // Values at x
  Eigen::MatrixXd g_val() const;
  Eigen::MatrixXd ginv_val() const;
  double R() const { return ricci_scalar.value(); }
  Eigen::MatrixXd F_val() const;
  double m_val() const { return m.value(); }
  Eigen::VectorXd dm_val() const;
  Eigen::MatrixXd hessian_m() const;  // covariant nabla_mu d_nu m
  double box_m() const;

  // gamma^mu in the chart at x: e^mu_a gamma^a
  std::vector<Eigen::MatrixXcd> gamma_chart(const GammaRep& rep) const;
  std::vector<MatJet> gamma_chart_jet(const GammaRep& rep) const;

  // covariant divergence del^lam r_{mu lam} and del^lam F_{mu lam} at x
  std::vector<Eigen::MatrixXcd> div_spin_curvature() const;
  Eigen::VectorXd div_F() const;
  Eigen::VectorXd grad_R() const;                       // del_mu R
  std::vector<Eigen::MatrixXd> grad_F() const;          // del_mu F_{lam rho}, [mu](lam,rho)
};

CurvaturePackage curvature_package(const BackgroundSpec& bg, std::span<const double> x,
                                   const GammaRep& rep, int order = 4);

// Christoffel values only (cheap; used by the geodesic integrator).
std::vector<Eigen::MatrixXd> christoffel_values(const BackgroundSpec& bg,
                                                std::span<const double> x);

// ---------------------------------------------------------------------------
// Geodesics

struct GeodesicPath {
  std::vector<Eigen::VectorXd> pos;  // nodes 0..nsteps
  std::vector<Eigen::VectorXd> vel;
  double ds = 0.0;
};

struct GeoOptions {
  int steps = 64;
  int max_newton = 30;
  double tol = 1e-12;
  double boxgamma_step = 1e-3;
};

struct GeodesicLink {
  Eigen::VectorXd x, xp;
  Eigen::VectorXd tangent;  // exp_x^{-1}(x')
  double world_function = 0.0;
  double theta0 = 0.0;
  double box_gamma = 0.0;
  Eigen::MatrixXd u_vec;    // vector transport, fiber x' -> fiber x
  Eigen::MatrixXcd u_spin;  // spinor transport incl. U(1) phase, fiber x' -> fiber x
  Eigen::VectorXd midpoint;
  double bvp_residual = 0.0;
};

GeodesicPath shoot_geodesic(const BackgroundSpec& bg, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& v, int steps);

// exp_x^{-1}(x') by shooting + Newton. Throws on non-convergence.
Eigen::VectorXd geodesic_inverse(const BackgroundSpec& bg, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& xp, const GeoOptions& opt = {});

GeodesicLink geodesic_connect(const BackgroundSpec& bg, const GammaRep& rep,
                              const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                              const GeoOptions& opt = {});

// Spinor transporters along a path (U(0) = I, U(s) maps fiber at pos[0]
// to fiber at pos[k]); last entry is transport to the far end.
std::vector<Eigen::MatrixXcd> spin_transport(const BackgroundSpec& bg, const GammaRep& rep,
                                             const GeodesicPath& path);

// Box Gamma with respect to the first argument at y, second argument fixed.
double box_world_function(const BackgroundSpec& bg, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& xp, const GeoOptions& opt = {});

// ---------------------------------------------------------------------------
// Dirac operators

enum class DiracVariant { D, DTilde, DStar, DTildeStar };

// Apply the operator at x to a spinor-valued (or cospinor-valued for the
// starred variants) jet of order >= 1; the result has one order less.
SpinJet dirac_apply_jet(const CurvaturePackage& pkg, const GammaRep& rep, const SpinJet& field,
                        DiracVariant variant);
Eigen::VectorXcd dirac_apply(const CurvaturePackage& pkg, const GammaRep& rep,
                             const SpinJet& field, DiracVariant variant);
CospinJet dirac_apply_jet_cospinor(const CurvaturePackage& pkg, const GammaRep& rep,
                                   const CospinJet& field, DiracVariant variant);

// The second-order operator P = -D Dtilde evaluated directly from its
// displayed form on an order >= 2 spinor jet.
Eigen::VectorXcd apply_P_direct(const CurvaturePackage& pkg, const GammaRep& rep,
                                const SpinJet& field);

// Same operator applied to each column of an order >= 2 matrix jet.
Eigen::MatrixXcd apply_P_matrix(const CurvaturePackage& pkg, const GammaRep& rep,
                                const MatJet& field);

}  // namespace hdirac
