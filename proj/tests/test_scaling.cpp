#include "doctest.h"
#include "hdirac/scaling.hpp"

using namespace hdirac;
using Eigen::MatrixXcd;
using Eigen::VectorXd;

TEST_CASE("background rescaling: group action and curvature scaling") {
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"exp(2*t)\"\n"
      "A[1] = \"0.4\"\nm = \"0.9\"\n");
  GammaRep rep = build_gamma(2);

  CHECK_THROWS(rescale_background(bg, 0.0));
  auto same = rescale_background(bg, 1.0);
  CHECK(same.metric_scale == bg.metric_scale);

  auto b2 = rescale_background(bg, 2.0);
  double x[2] = {0.1, 0.2};
  CHECK(b2.metric_jet(0, 0, x, 0).value() == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(b2.m_jet(x, 0).value() == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(b2.A_jet(1, x, 0).value() == doctest::Approx(0.8).epsilon(1e-15));

  // inverse rescale restores the data exactly (dyadic factors)
  auto back = rescale_background(b2, 0.5);
  CHECK(back.metric_scale == bg.metric_scale);
  CHECK(back.m_scale == bg.m_scale);

  // group action at the background level
  auto ab = rescale_background(rescale_background(bg, 1.5), 2.0);
  auto ba = rescale_background(bg, 3.0);
  CHECK(ab.metric_scale == doctest::Approx(ba.metric_scale).epsilon(1e-15));

  // curvature of the rescaled background is lambda^2 R
  auto p1 = curvature_package(bg, x, rep, 4);
  auto p2 = curvature_package(b2, x, rep, 4);
  CHECK(p2.R() == doctest::Approx(4.0 * p1.R()).epsilon(1e-10));
}

TEST_CASE("lambda derivative: analytic equals numeric, with the expected value") {
  GammaRep rep = build_gamma(2);
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nm = \"0.8\"\n");
  VectorXd x(2), xp(2);
  x << 0.02, 0.3;
  xp << 0.0, 0.0;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  MatrixXcd da = lambda_derivative(bg, rep, x, xp, 1, 1.0, opt, false);
  MatrixXcd dn = lambda_derivative(bg, rep, x, xp, 1, 1.0, opt, true);
  CHECK((da - dn).norm() <= 1e-12 * (1.0 + da.norm()));

  // n = 2 massless: the j = 0 log kernel alone carries the scale
  auto bg0 = BackgroundSpec::minkowski(2);
  MatrixXcd d0 = lambda_derivative(bg0, rep, x, xp, 1, 0.7, opt, false);
  CHECK((d0 + (1.0 / (2.0 * M_PI)) * MatrixXcd::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("flat constant-mass 4d: wick scaling derivative is +m^2/(8 pi^2)") {
  GammaRep rep4 = build_gamma(4);
  auto bg = BackgroundSpec::parse(
      "dim = 4\ncoords = t, x, y, z\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\n"
      "metric[2][2] = \"1\"\nmetric[3][3] = \"1\"\nm = \"0.9\"\n");
  double x[4] = {0.0, 0.0, 0.0, 0.0};
  // d h / d log Lambda = -(1/8 pi^2) V1 = +m^2/(8 pi^2) at small separation
  VectorXd xv(4), xpv(4);
  xv << 0.0, 0.21, 0.0, 0.0;
  xpv << 0.0, 0.0, 0.0, 0.0;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  MatrixXcd dh = lambda_derivative(bg, rep4, xv, xpv, 1, 1.0, opt, false);
  double expect = 0.81 / (8.0 * M_PI * M_PI);
  CHECK((dh - expect * MatrixXcd::Identity(4, 4)).norm() <= 1e-6);

  // the wick-square scaling derivative: dPsi = -X with X = c4 m [V1] and
  // [V1] = -m^2, so the trace is -4 m^3/(8 pi^2)
  MatrixXcd dpsi = lambda_derivative_wick(bg, rep4, x);
  CHECK(std::abs(dpsi.trace().real() + 4.0 * 0.9 * 0.81 / (8.0 * M_PI * M_PI)) <= 1e-12);
}

TEST_CASE("rg coefficient ratios match the displayed proportions") {
  GammaRep rep4 = build_gamma(4);
  RGCoefficient rg = rg_coefficient(rep4);
  CHECK(rg.c_box / rg.c_m3 == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(rg.c_R / rg.c_m3 == doctest::Approx(1.0 / 12.0).epsilon(1e-6));
  CHECK(rg.c_F / rg.c_m3 == doctest::Approx(-1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("scaling coefficient is background-local") {
  GammaRep rep4 = build_gamma(4);
  auto bg = BackgroundSpec::parse(
      "dim = 4\ncoords = t, x, y, z\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\n"
      "metric[2][2] = \"1\"\nmetric[3][3] = \"1\"\nm = \"0.55\"\n");
  double x1[4] = {0.0, 0.1, 0.0, 0.0};
  double x2[4] = {0.3, -0.4, 0.2, 0.1};
  double r1 = composite_scaling(bg, rep4, x1, 1.0, VectorXd::Zero(4));
  double r2 = composite_scaling(bg, rep4, x2, 1.0, VectorXd::Zero(4));
  CHECK(std::abs(r1 - r2) <= 1e-8 * (1.0 + std::abs(r1)));
}

TEST_CASE("scaling of wick squares across rescaled circles") {
  GammaRep rep = build_gamma(2);
  PointSplitOptions split;
  split.separations = {1.0 / 12, 1.0 / 16, 1.0 / 24, 1.0 / 32};
  split.transport.steps = 16;
  split.transport.source_nodes = 8;
  std::vector<double> lambdas = {0.8, 0.9, 1.0, 1.15, 1.3};

  // massless: the log coefficient vanishes for psi+ psi
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0", 0.0, SpinStructure::Antiperiodic));
    ScalingReport r = scaling_check(circle, rep, lambdas, 512, split);
    CHECK(std::abs(r.log_coefficient) <= 1e-8);
    CHECK(r.fit_residual <= 1e-8);
    CHECK(std::abs(r.analytic_log_coefficient) <= 1e-14);
  }

  // massive: the fitted log slope matches the local Lambda derivative, and
  // two disjoint sub-grids agree on it
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0.6", 0.0, SpinStructure::Antiperiodic));
    ScalingReport r = scaling_check(circle, rep, lambdas, 1024, split);
    CHECK(r.log_coefficient ==
          doctest::Approx(r.analytic_log_coefficient).epsilon(2e-4));
    std::vector<double> l1 = {0.8, 0.9}, l2 = {1.15, 1.3};
    ScalingReport ra = scaling_check(circle, rep, l1, 1024, split);
    ScalingReport rb = scaling_check(circle, rep, l2, 1024, split);
    CHECK(std::abs(ra.log_coefficient - rb.log_coefficient) <= 1e-4);
    // lambda = 1 reproduces the unscaled value
    ScalingReport r1 = scaling_check(circle, rep, {1.0, 1.0}, 1024, split);
    CHECK(std::abs(r1.values[0] - r1.values[1]) <= 1e-14);
  }
}
