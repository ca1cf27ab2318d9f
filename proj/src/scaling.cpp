#include "hdirac/scaling.hpp"

#include <cmath>
#include <sstream>

namespace hdirac {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

BackgroundSpec rescale_background(const BackgroundSpec& bg, double lambda) {
  if (lambda <= 0.0) throw EvalError("rescale_background: lambda must be positive");
  BackgroundSpec out = bg;
  out.metric_scale = bg.metric_scale / (lambda * lambda);
  out.m_scale = bg.m_scale * lambda;
  out.A_scale = bg.A_scale * lambda;
  return out;
}

namespace {

// d T(j) / d log Lambda: only the even-n logarithmic kernels carry the scale
cd dT_dlogLambda(int j, int n, double gamma_val) {
  if (n % 2 != 0 || j < n) return cd(0.0);
  return cd(-2.0 * riesz_C(j, n) * std::pow(gamma_val, 0.5 * (j - n)), 0.0);
}

}  // namespace

Eigen::MatrixXcd lambda_derivative(const BackgroundSpec& bg, const GammaRep& rep,
                                   const VectorXd& x, const VectorXd& xp, int k_max,
                                   double lambda, const TransportOptions& opt, bool numeric) {
  if (numeric) {
    double s = 0.5 * std::log(2.0);
    PreParametrix hp = pre_parametrix(bg, rep, x, xp, k_max, lambda * std::exp(s), opt);
    PreParametrix hm = pre_parametrix(bg, rep, x, xp, k_max, lambda * std::exp(-s), opt);
    return (hp.h_plus - hm.h_plus) / (2.0 * s);
  }
  const int n = bg.n;
  TransportResult tr = transport_along(bg, rep, xp, x, k_max, opt);
  VectorXd u = geodesic_inverse(bg, xp, x, opt.geo);
  MatrixXd gxp(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      gxp(i, j) = bg.metric_jet(i, j, std::span<const double>(xp.data(), n), 0).value();
  double gamma_val = -u.dot(gxp * u);
  MatrixXcd out = (0.5 / M_PI) * tr.V0.back() * dT_dlogLambda(2, n, gamma_val);
  if (k_max >= 1) out += (0.5 / M_PI) * tr.V1.back() * dT_dlogLambda(4, n, gamma_val);
  return out;
}

Eigen::MatrixXcd lambda_derivative_wick(const BackgroundSpec& bg, const GammaRep& rep,
                                        std::span<const double> x) {
  // d/dlogLambda h = c_n (V0-part + V-part); applying -Dtilde and taking the
  // coinciding limit leaves X = c_n (gamma^mu [del_mu V] + m [V]) with
  //   n = 2: V-part = V0 + Gamma V1 / 4 -> [V] = 1, [del V] = [del V0] = 0
  //   n = 4: V-part = V1             -> [V] = [V1], [del V] = [del V1]
  // (for n = 2 the V0 kernel T(2) is itself logarithmic.)
  const int n = bg.n;
  const int N = rep.N;
  CurvaturePackage pkg = curvature_package(bg, x, rep, 4);
  auto gam = pkg.gamma_chart(rep);
  MatrixXcd V, X;
  std::vector<MatrixXcd> dV(n, MatrixXcd::Zero(N, N));
  double cn;
  if (n == 2) {
    cn = -riesz_C(2, 2) / M_PI;  // = -1/(2 pi)
    V = MatrixXcd::Identity(N, N);
    // [del V0] = 0; the Gamma V1 / 4 term has vanishing limit and gradient
  } else if (n == 4) {
    cn = -2.0 * riesz_C(4, 4) / (2.0 * M_PI);  // = -1/(8 pi^2)
    V1Limits lim = coinciding_V1(bg, rep, x);
    V = lim.V1;
    dV = lim.gradV1;
  } else {
    throw EvalError("lambda_derivative_wick: n must be 2 or 4");
  }
  X = pkg.m_val() * V;
  for (int mu = 0; mu < n; ++mu) X += gam[mu] * dV[mu];
  X *= cn;
  // assembled pre-parametrix blocks and the physical dictionary:
  // dPsi_phys = dH_sc = -(1/2)([X]^T + (beta X^dag beta)^T)
  MatrixXcd adj = dirac_adjoint_kernel(rep, X);
  return -0.5 * (X.transpose() + adj.transpose());
}

double composite_scaling(const BackgroundSpec& bg, const GammaRep& rep, std::span<const double> x,
                         double m1, const VectorXd& A1_lower) {
  MatrixXcd dPsi = lambda_derivative_wick(bg, rep, x);
  CurvaturePackage pkg = curvature_package(bg, x, rep, 2);
  auto gam = pkg.gamma_chart(rep);
  MatrixXd gi = pkg.ginv_val();
  // m1 <psi+ psi> + i A1_mu <psi+ gamma^mu psi>: the current bilinear's -i
  // makes the physical combination m1 tr(Psi) + A1_mu j^mu
  double val = m1 * dPsi.trace().real();
  for (int mu = 0; mu < bg.n; ++mu) {
    double A1up = 0.0;
    for (int nu = 0; nu < bg.n; ++nu) A1up += gi(mu, nu) * A1_lower(nu);
    val += A1up * (-wick_trace(gam[mu], dPsi).imag());
  }
  return val;
}

RGCoefficient rg_coefficient(const GammaRep& rep4) {
  if (rep4.n != 4) throw EvalError("rg_coefficient: four-dimensional representation required");
  RGCoefficient rg;
  double mu = 0.7;

  // flat, constant m0: only the m1 m0^3 monomial
  {
    std::ostringstream os;
    os << "dim = 4\ncoords = t, x, y, z\n"
          "metric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nmetric[2][2] = \"1\"\nmetric[3][3] = "
          "\"1\"\nm = \""
       << mu << "\"\n";
    auto bg = BackgroundSpec::parse(os.str());
    double x[4] = {0.0, 0.0, 0.0, 0.0};
    double rho = composite_scaling(bg, rep4, x, 1.0, VectorXd::Zero(4));
    rg.c_m3 = rho / (mu * mu * mu);
  }

  // flat, quadratic mass bump: adds m1 box m0
  {
    double h = 0.31;
    std::ostringstream os;
    os << "dim = 4\ncoords = t, x, y, z\n"
          "metric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nmetric[2][2] = \"1\"\nmetric[3][3] = "
          "\"1\"\nm = \""
       << mu << " + " << 0.5 * h << "*x^2\"\n";
    auto bg = BackgroundSpec::parse(os.str());
    double x[4] = {0.0, 0.0, 0.0, 0.0};
    double rho = composite_scaling(bg, rep4, x, 1.0, VectorXd::Zero(4));
    rg.c_box = (rho - rg.c_m3 * mu * mu * mu) / h;
  }

  // weakly curved metric, constant m0: adds R m0 m1
  {
    std::ostringstream os;
    os << "dim = 4\ncoords = t, x, y, z\n"
          "metric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nmetric[2][2] = "
          "\"1 + 0.2*x^2\"\nmetric[3][3] = \"1 + 0.1*sin(x)\"\nm = \""
       << mu << "\"\n";
    auto bg = BackgroundSpec::parse(os.str());
    double x[4] = {0.0, 0.3, 0.0, 0.0};
    GammaRep rep = rep4;
    CurvaturePackage pkg = curvature_package(bg, x, rep, 4);
    double R = pkg.R();
    double rho = composite_scaling(bg, rep4, x, 1.0, VectorXd::Zero(4));
    rg.c_R = (rho - rg.c_m3 * mu * mu * mu) / (R * mu);
  }

  // flat, cubic potential: only the current monomial
  {
    double c = 0.43;
    std::ostringstream os;
    os.precision(16);
    os << "dim = 4\ncoords = t, x, y, z\n"
          "metric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nmetric[2][2] = \"1\"\nmetric[3][3] = "
          "\"1\"\nA[2] = \""
       << c / 6.0 << "*x^3\"\nm = \"0\"\n";
    auto bg = BackgroundSpec::parse(os.str());
    double x[4] = {0.0, 1.0, 0.0, 0.0};
    // del^lam F_{lam 2} = d_1 F_{12} = c x; at x = 1 it equals c
    VectorXd A1 = VectorXd::Zero(4);
    A1(2) = 1.0;
    double rho = composite_scaling(bg, rep4, x, 0.0, A1);
    rg.c_F = rho / c;
  }
  return rg;
}

ScalingReport scaling_check(const UltrastaticCircle& circle, const GammaRep& rep,
                            const std::vector<double>& lambdas, int cutoff,
                            const PointSplitOptions& split) {
  ScalingReport report;
  report.scaling_dimension = 1.0;  // psi+ psi in two dimensions
  report.lambdas = lambdas;

  double probe[2] = {0.0, 0.0};
  double mu0 = circle.bg.m_jet(probe, 0).value();
  if (!circle.m_expr.is_constant())
    throw EvalError("scaling_check: constant-mass circle expected");

  for (double lam : lambdas) {
    // jointly rescaled background in unit-metric coordinates:
    // circumference L/lambda, mass lambda mu, wilson lambda a
    std::ostringstream ms;
    ms.precision(16);
    ms << lam * mu0;
    auto scaled = UltrastaticCircle::from_background(BackgroundSpec::circle(
        circle.L / lam, ms.str(), lam * circle.wilson_a, circle.spin));
    ModeBasis b = build_modes(scaled, cutoff);
    StateKernel state(b, rep);
    GridOptions gopt;
    gopt.grid = 2;
    gopt.split = split;
    // separations live in the rescaled chart
    for (auto& s : gopt.split.separations) s /= lam;
    auto grid = wick_grid(state, scaled.bg, rep, gopt);
    report.values.push_back(scalar_wick(grid[0]) / lam);
  }

  // least squares fit value = Psi + r log(lambda)
  int K = static_cast<int>(lambdas.size());
  Eigen::MatrixXd A(K, 2);
  Eigen::VectorXd y(K);
  for (int k = 0; k < K; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::log(lambdas[k]);
    y(k) = report.values[k];
  }
  Eigen::Vector2d sol = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  report.fitted_value = sol(0);
  report.log_coefficient = sol(1);
  report.fit_residual = (A * sol - y).cwiseAbs().maxCoeff();

  double x0[2] = {0.0, 0.0};
  report.analytic_log_coefficient =
      lambda_derivative_wick(circle.bg, rep, x0).trace().real();
  return report;
}

}  // namespace hdirac
