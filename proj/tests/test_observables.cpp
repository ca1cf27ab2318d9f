#include "doctest.h"
#include "hdirac/observables.hpp"

#include <random>

using namespace hdirac;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

namespace {

GridOptions default_grid(int g) {
  GridOptions opt;
  opt.grid = g;
  opt.split.separations = {1.0 / 12, 1.0 / 16, 1.0 / 24, 1.0 / 32};
  opt.split.transport.steps = 16;
  opt.split.transport.source_nodes = 8;
  return opt;
}

// zeta-regularized Casimir energy density for the antiperiodic massless
// circle: two chiralities, Hurwitz zeta(-1, 1/2) = 1/24
double casimir_zeta(double L) { return -M_PI / (6.0 * L * L); }

// zeta/Abel spectral oracle for <psi+ psi> on the constant-mass circle,
// sharing the log(Lambda^2) convention of the subtraction kernels:
//   <Psi> = -(mu/L) sum_n [1/E_n - 1/|k_n|] - (mu/pi) log(2L/(pi Lambda))
double psisq_zeta(double mu, double L, double lambda, int terms = 400000) {
  double acc = 0.0;
  for (int n = 0; n < terms; ++n) {
    double k = 2.0 * M_PI * (n + 0.5) / L;
    double E = std::sqrt(k * k + mu * mu);
    acc += 2.0 * (1.0 / E - 1.0 / k);  // both signs of k
  }
  return -(mu / L) * acc - (mu / M_PI) * std::log(2.0 * L / (M_PI * lambda));
}

}  // namespace

TEST_CASE("casimir energy density against the zeta oracle") {
  GammaRep rep = build_gamma(2);
  for (double L : {1.0, 1.7}) {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(L, "0", 0.0, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 512);
    StateKernel state(b, rep);
    GridOptions gopt = default_grid(4);
    for (auto& s : gopt.split.separations) s *= L;
    auto grid = wick_grid(state, circle.bg, rep, gopt);
    auto pkg = curvature_package(circle.bg, std::span<const double>(grid[0].x.data(), 2), rep, 3);
    MatrixXd T = stress_energy(grid[0], pkg, rep);
    CHECK(T(0, 0) == doctest::Approx(casimir_zeta(L)).epsilon(2e-5));
    CHECK(std::abs(T(0, 1)) <= 1e-8);
    // chiral symmetry of the massless spectrum
    CHECK(std::abs(scalar_wick(grid[0])) <= 1e-8);
  }
}

TEST_CASE("massive wick square against the zeta/abel oracle") {
  GammaRep rep = build_gamma(2);
  double mu = 0.8, L = 1.0;
  for (double lambda : {1.0, 0.5}) {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(L, "0.8", 0.0, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 1024);
    StateKernel state(b, rep);
    GridOptions gopt = default_grid(4);
    gopt.split.lambda = lambda;
    auto grid = wick_grid(state, circle.bg, rep, gopt);
    double got = scalar_wick(grid[0]);
    double expect = psisq_zeta(mu, L, lambda);
    CHECK(got == doctest::Approx(expect).epsilon(2e-5));
  }
}

TEST_CASE("wilson current: spectral asymmetry and stationarity") {
  GammaRep rep = build_gamma(2);
  // between level crossings the induced current is linear in a; the
  // eta-style oracle is d E_vac / da = -a/pi for |a| < pi (antiperiodic)
  for (double a : {0.6, -1.1}) {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0", a, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 512);
    StateKernel state(b, rep);
    GridOptions gopt = default_grid(4);
    auto grid = wick_grid(state, circle.bg, rep, gopt);
    auto pkg = curvature_package(circle.bg, std::span<const double>(grid[0].x.data(), 2), rep, 3);
    VectorXd j = current(grid[0], pkg, rep);
    CHECK(j(1) == doctest::Approx(a / M_PI).epsilon(2e-5));
    CHECK(std::abs(j(0)) <= 1e-8);  // half filling
    CHECK(current_reality_defect(grid[0], pkg, rep) <= 1e-8);
  }
  // parity: a = 0 with even mass profile has no current
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0.6 + 0.2*cos(2*pi*x)", 0.0, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 128);
    StateKernel state(b, rep);
    GridOptions gopt = default_grid(8);
    auto grid = wick_grid(state, circle.bg, rep, gopt);
    auto pkg = curvature_package(circle.bg, std::span<const double>(grid[0].x.data(), 2), rep, 3);
    VectorXd j = current(grid[0], pkg, rep);
    CHECK(std::abs(j(1)) <= 1e-6);
  }
}

TEST_CASE("trace identity and stress symmetry on the massive circle") {
  GammaRep rep = build_gamma(2);
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.7", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 512);
  StateKernel state(b, rep);
  GridOptions gopt = default_grid(4);
  auto grid = wick_grid(state, circle.bg, rep, gopt);
  auto pkg = curvature_package(circle.bg, std::span<const double>(grid[1].x.data(), 2), rep, 3);
  MatrixXd T = stress_energy(grid[1], pkg, rep);
  CHECK((T - T.transpose()).norm() <= 1e-10);
  double tr1 = (pkg.ginv_val().array() * T.array()).sum();
  double tr2 = stress_trace_identity(grid[1], pkg, rep);
  CHECK(tr1 == doctest::Approx(tr2).epsilon(1e-8).scale(1.0));
}

TEST_CASE("delta H menu: scalar shift moves the wick square, not the current") {
  GammaRep rep = build_gamma(2);
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.7", 0.3, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 256);
  StateKernel state(b, rep);

  GridOptions base = default_grid(4);
  auto g0 = wick_grid(state, circle.bg, rep, base);

  GridOptions shifted = base;
  double c = 0.37;
  shifted.split.delta_h = scalar_menu_m3(c, circle.bg);
  auto g1 = wick_grid(state, circle.bg, rep, shifted);

  auto pkg = curvature_package(circle.bg, std::span<const double>(g0[0].x.data(), 2), rep, 3);
  double m3 = std::pow(0.7, 3);
  // <psi+ psi> shifts by tr(delta H) = c m^3 N
  CHECK(scalar_wick(g1[0]) - scalar_wick(g0[0]) ==
        doctest::Approx(c * m3 * 2.0).epsilon(1e-8));
  VectorXd j0 = current(g0[0], pkg, rep), j1 = current(g1[0], pkg, rep);
  CHECK((j1 - j0).norm() <= 1e-10);
}

TEST_CASE("delta H redefinitions are additive and commute") {
  GammaRep rep = build_gamma(2);
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.5", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 128);
  StateKernel state(b, rep);

  DeltaH d1 = scalar_menu_m3(0.2, circle.bg);
  DeltaH d2 = scalar_menu_m3(-0.45, circle.bg);
  DeltaH d12;
  d12.mass_dimension = 3;
  d12.scalar = [&](const VectorXd& s) { return MatrixXcd(d1.scalar(s) + d2.scalar(s)); };

  GridOptions o1 = default_grid(2), o2 = default_grid(2), o12 = default_grid(2);
  o1.split.delta_h = d1;
  o2.split.delta_h = d2;
  o12.split.delta_h = d12;
  auto g0 = wick_grid(state, circle.bg, rep, default_grid(2));
  auto g1 = wick_grid(state, circle.bg, rep, o1);
  auto g2 = wick_grid(state, circle.bg, rep, o2);
  auto g12 = wick_grid(state, circle.bg, rep, o12);
  // H enters linearly: shifts add exactly
  CHECK((g12[0].Psi - g1[0].Psi - g2[0].Psi + g0[0].Psi).norm() <= 1e-12);
}

TEST_CASE("vector redefinition shifts derivative squares only") {
  GammaRep rep = build_gamma(2);
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.5", 0.2, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 256);
  StateKernel state(b, rep);

  // Psi_mu -> Psi_mu + X_mu with a gamma-odd X (as in the displayed shift)
  auto X = [&](const VectorXd& s) {
    std::vector<MatrixXcd> out(2);
    out[0] = 0.3 * rep.gamma[1];
    out[1] = -0.2 * rep.gamma[0];
    return out;
  };
  GridOptions o = default_grid(4);
  o.split.delta_h = psi_mu_shift(X, 2);
  auto g0 = wick_grid(state, circle.bg, rep, default_grid(4));
  auto g1 = wick_grid(state, circle.bg, rep, o);

  auto pkg = curvature_package(circle.bg, std::span<const double>(g0[0].x.data(), 2), rep, 3);
  // scalar square and current untouched
  CHECK(std::abs(scalar_wick(g1[0]) - scalar_wick(g0[0])) <= 1e-10);
  CHECK((current(g1[0], pkg, rep) - current(g0[0], pkg, rep)).norm() <= 1e-12);
  // derivative squares shift by X (in the (A,B) layout: X^T)
  for (int mu = 0; mu < 2; ++mu) {
    MatrixXcd shift = g1[0].Psi_mu[mu] - g0[0].Psi_mu[mu];
    MatrixXcd expect = X(g0[0].x)[mu].transpose();
    CHECK((shift - expect).norm() <= 1e-8);
  }
}

TEST_CASE("conservation on the varying-mass circle via the measured correction") {
  GammaRep rep = build_gamma(2);
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.8 + 0.2*sin(2*pi*x)", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 256);
  StateKernel state(b, rep);

  GridOptions gopt = default_grid(16);
  auto grid = wick_grid(state, circle.bg, rep, gopt);
  auto before = conservation_residual(grid, circle.bg, rep, 1.0);

  auto Q = measure_Q(before.div_j, 1.0);
  GridOptions fixed = gopt;
  fixed.split.delta_h = current_correction(Q, 1.0, rep);
  auto grid2 = wick_grid(state, circle.bg, rep, fixed);
  auto after = conservation_residual(grid2, circle.bg, rep, 1.0);
  CHECK(after.max_div_j <= std::max(1e-7, 1e-3 * before.max_div_j));

  // time direction is exactly stationary
  for (auto& wd : grid) CHECK(wd.dPsi[0].norm() <= 1e-12);
}

TEST_CASE("ambiguity tensors: flat zero, conservation, trace ratios") {
  GammaRep rep4 = build_gamma(4);

  // flat: everything built from curvature vanishes
  auto flat = BackgroundSpec::minkowski(4);
  double origin[4] = {0.1, 0.2, -0.1, 0.05};
  auto flat_t = ambiguity_tensors(flat, origin, rep4);
  CHECK(flat_t.I.norm() == 0.0);
  CHECK(flat_t.J.norm() == 0.0);

  // curved analytic metric
  auto bg = BackgroundSpec::parse(
      "dim = 4\ncoords = t, x, y, z\n"
      "metric[0][0] = \"-1 - 0.05*x^2 - 0.02*y^2\"\n"
      "metric[1][1] = \"1 + 0.04*sin(y)*sin(y)\"\n"
      "metric[2][2] = \"1 + 0.03*exp(-(x^2))\"\n"
      "metric[3][3] = \"1 + 0.05*x*y*0.5\"\n"
      "m = \"0.3\"\n");
  double x0[4] = {0.1, 0.3, -0.2, 0.15};

  // conservation of I and J by the numerical covariant divergence
  auto fieldI = [&](const VectorXd& y) {
    return ambiguity_tensors(bg, std::span<const double>(y.data(), 4), rep4).I;
  };
  auto fieldJ = [&](const VectorXd& y) {
    return ambiguity_tensors(bg, std::span<const double>(y.data(), 4), rep4).J;
  };
  VectorXd dI = covariant_divergence(bg, x0, fieldI, 2e-3);
  VectorXd dJ = covariant_divergence(bg, x0, fieldJ, 2e-3);
  auto t0 = ambiguity_tensors(bg, x0, rep4);
  CHECK(dI.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + t0.I.norm() / 1e-2));
  CHECK(dJ.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + t0.J.norm() / 1e-2));

  // traces proportional to box R with the variational coefficients 6 and 2
  auto pkg = curvature_package(bg, x0, rep4, 4);
  MatrixXd gi = pkg.ginv_val();
  double trI = (gi.array() * t0.I.array()).sum();
  double trJ = (gi.array() * t0.J.array()).sum();
  CHECK(trI / trJ == doctest::Approx(3.0).epsilon(1e-6));

  // constant m: the Einstein-tensor term is conserved too
  VectorXd dG = covariant_divergence(
      bg, x0,
      [&](const VectorXd& y) {
        return ambiguity_tensors(bg, std::span<const double>(y.data(), 4), rep4).mG;
      },
      2e-3);
  CHECK(dG.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + t0.mG.norm() / 1e-2));
}

TEST_CASE("coefficient menus from the background file") {
  GammaRep rep = build_gamma(2);
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\n"
      "m = \"0.6\"\nspin_structure = antiperiodic\nL = 1.0\n"
      "alpha = 0.5 0 0 0\nbeta = 0 0 0 0.3\n");
  auto menu = scalar_menu(bg, rep);
  REQUIRE(menu.has_value());
  Eigen::VectorXd s(2);
  s << 0.0, 0.2;
  // flat circle: only the m^3 term survives
  Eigen::MatrixXcd D = menu->scalar(s);
  CHECK((D - 0.5 * std::pow(0.6, 3) * Eigen::MatrixXcd::Identity(2, 2)).norm() <= 1e-12);

  double x0[2] = {0.0, 0.2};
  Eigen::MatrixXd shift = stress_ambiguity_shift(bg, x0, rep);
  // 2d: the Einstein tensor vanishes identically, so only beta3 m^4 g acts
  Eigen::MatrixXd expect(2, 2);
  expect << -0.3 * std::pow(0.6, 4), 0.0, 0.0, 0.3 * std::pow(0.6, 4);
  CHECK((shift - expect).norm() <= 1e-12);

  // empty menu on a plain background
  auto none = scalar_menu(BackgroundSpec::minkowski(2), rep);
  CHECK(!none.has_value());
}
