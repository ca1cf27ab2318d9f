#include "doctest.h"
#include "hdirac/hadamard.hpp"

#include <random>

using namespace hdirac;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cd = std::complex<double>;

TEST_CASE("riesz constants") {
  // C(n, n) = 2^{1-n} pi^{(2-n)/2} / ((n/2 - 1)! 0!)
  CHECK(riesz_C(4, 4) == doctest::Approx(std::pow(2.0, -3) / M_PI).epsilon(1e-14));
  CHECK(riesz_C(2, 2) == doctest::Approx(0.5).epsilon(1e-14));
  // gamma pole: 1/(-1)! = 0
  CHECK(riesz_C(2, 4) == 0.0);
  CHECK(riesz_Cprime(2, 4) == doctest::Approx(-1.0 / (2.0 * M_PI)).epsilon(1e-14));
  // outside the causal set the distribution vanishes
  CHECK(riesz_R(4, 2, 0.3, false) == 0.0);
  CHECK(riesz_R(4, 2, 0.3, true) != 0.0);
}

TEST_CASE("kernel relation: T_+ - T_- = 2 pi i (R_+ - R_-)") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> U(0.05, 2.0);
  std::uniform_int_distribution<int> coin(0, 1);
  double lambda = 0.7;
  for (int n = 2; n <= 5; ++n) {
    for (int j = 2; j <= 8; j += 2) {
      for (int trial = 0; trial < 250; ++trial) {
        bool timelike = coin(rng);
        double gam = timelike ? U(rng) : -U(rng);
        double th = (coin(rng) ? 1.0 : -1.0) * U(rng);
        cd lhs = singular_T(j, n, lambda, gam, th, +1) - singular_T(j, n, lambda, gam, th, -1);
        double rp = riesz_R(j, n, std::abs(gam), timelike && th > 0);
        double rm = riesz_R(j, n, std::abs(gam), timelike && th < 0);
        cd rhs = cd(0.0, 2.0 * M_PI) * (rp - rm);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
        if (!timelike) CHECK(std::abs(lhs) <= 1e-14);
      }
    }
  }
}

TEST_CASE("spacelike values are real for the even-n power kernels") {
  // j = 2, n = 4, spacelike: C'(2,4) (-Gamma)^{-1}
  double gam = -0.8;
  cd v = singular_T(2, 4, 1.0, gam, 0.4, +1);
  CHECK(v.imag() == doctest::Approx(0.0));
  CHECK(v.real() == doctest::Approx(-1.0 / (2.0 * M_PI) / 0.8).epsilon(1e-13));
}

TEST_CASE("flat massless transport: V0 = 1, V1 = 0") {
  auto bg = BackgroundSpec::minkowski(2);
  GammaRep rep = build_gamma(2);
  VectorXd xp(2), x(2);
  xp << 0.0, 0.0;
  x << 0.1, 0.6;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  auto tr = transport_along(bg, rep, xp, x, 1, opt);
  for (std::size_t k = 0; k < tr.s.size(); ++k) {
    CHECK((tr.V0[k] - MatrixXcd::Identity(2, 2)).norm() <= 1e-13);
    if (tr.V1[k].size()) CHECK(tr.V1[k].norm() <= 1e-13);
  }
}

TEST_CASE("flat constant mass: V1 = -m^2 along the geodesic") {
  double m = 0.8;
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nm = \"0.8\"\n");
  GammaRep rep = build_gamma(2);
  VectorXd xp(2), x(2);
  xp << 0.0, 0.2;
  x << 0.05, 0.7;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  auto tr = transport_along(bg, rep, xp, x, 1, opt);
  for (std::size_t k = 0; k < tr.s.size(); ++k)
    if (tr.V1[k].size())
      CHECK((tr.V1[k] + m * m * MatrixXcd::Identity(2, 2)).norm() <= 1e-10);
}

TEST_CASE("constant potential: V0 is the transport phase") {
  auto bg = BackgroundSpec::circle(1.0, "0", 0.9, SpinStructure::Antiperiodic);
  GammaRep rep = build_gamma(2);
  VectorXd xp(2), x(2);
  xp << 0.0, 0.1;
  x << 0.0, 0.4;
  TransportOptions opt;
  opt.steps = 8;
  auto tr = transport_along(bg, rep, xp, x, 0, opt);
  // V0(gamma(s), xp) transports from xp toward x: phase exp(+i a dx)
  cd expect = std::polar(1.0, 0.9 * (x(1) - xp(1)));
  CHECK((tr.V0.back() - expect * MatrixXcd::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("coinciding limits: flat constant mass") {
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nm = \"0.8\"\n");
  GammaRep rep = build_gamma(2);
  double x[2] = {0.0, 0.0};
  auto lim = coinciding_V1(bg, rep, x);
  CHECK((lim.V1 + 0.64 * MatrixXcd::Identity(2, 2)).norm() <= 1e-13);
  for (auto& g : lim.gradV1) CHECK(g.norm() <= 1e-13);
}

TEST_CASE("transport route reproduces the electric-field limit") {
  // A = (0, E0 t): F_{01} = -E0 with F = dA; closed form picks up the
  // commutator term, and the transport route must match it.
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\n"
      "A[1] = \"0.6*t\"\nm = \"0\"\n");
  GammaRep rep = build_gamma(2);
  VectorXd xp(2);
  xp << 0.2, -0.1;
  auto closed = coinciding_V1(bg, rep, std::span<const double>(xp.data(), 2));

  FanSpec fan;
  fan.extent = 0.25;
  for (int mu = 0; mu < 2; ++mu)
    for (int sgn : {+1, -1}) {
      VectorXd d = VectorXd::Zero(2);
      d(mu) = sgn;
      fan.directions.push_back(d);
    }
  fan.transport.steps = 32;
  fan.transport.source_nodes = 8;
  fan.transport.fan_step = 4e-3;
  MatrixXcd got = transport_V1_limit(bg, rep, xp, fan);
  CHECK((got - closed.V1).norm() <= 1e-3 * (1.0 + closed.V1.norm()));
}

TEST_CASE("transport route on a curved background with varying mass (smoke)") {
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\n"
      "metric[0][0] = \"-1 - 0.1*x^2\"\nmetric[1][1] = \"1 + 0.1*t^2\"\n"
      "m = \"0.4 + 0.2*x\"\n");
  GammaRep rep = build_gamma(2);
  VectorXd xp(2);
  xp << 0.1, 0.2;
  auto closed = coinciding_V1(bg, rep, std::span<const double>(xp.data(), 2));

  FanSpec fan;
  fan.extent = 0.18;
  VectorXd d1(2), d2(2);
  d1 << 0.3, 1.0;
  d2 << -0.3, -1.0;
  fan.directions = {d1, d2};
  fan.transport.steps = 24;
  fan.transport.source_nodes = 8;
  fan.transport.fan_step = 6e-3;
  MatrixXcd got = transport_V1_limit(bg, rep, xp, fan);
  CHECK((got - closed.V1).norm() <= 5e-3 * (1.0 + closed.V1.norm()));
}

TEST_CASE("2d flat massless parametrix is the logarithmic kernel") {
  auto bg = BackgroundSpec::minkowski(2);
  GammaRep rep = build_gamma(2);
  VectorXd x(2), xp(2);
  x << 0.0, 0.3;
  xp << 0.0, 0.0;
  double lambda = 0.8;
  TransportOptions opt;
  opt.steps = 8;
  auto pre = pre_parametrix(bg, rep, x, xp, 0, lambda, opt);
  double gam = -0.09;  // -(dx)^2
  cd expect = (1.0 / (4.0 * M_PI)) * std::log(std::abs(gam) / (lambda * lambda));
  CHECK((pre.h_plus - expect * MatrixXcd::Identity(2, 2)).norm() <= 1e-10);
  CHECK((pre.h_plus - pre.h_minus).norm() <= 1e-12);  // spacelike: no branch

  // direction independence at equal Gamma
  VectorXd x2(2);
  x2 << 0.0, -0.3;
  auto pre2 = pre_parametrix(bg, rep, x2, xp, 0, lambda, opt);
  CHECK((pre2.h_plus - pre.h_plus).norm() <= 1e-8);
}

TEST_CASE("lambda dependence of the parametrix is exactly log-linear") {
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nm = \"0.5\"\n");
  GammaRep rep = build_gamma(2);
  VectorXd x(2), xp(2);
  x << 0.02, 0.25;
  xp << 0.0, 0.0;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  auto h1 = pre_parametrix(bg, rep, x, xp, 1, 0.5, opt);
  auto h2 = pre_parametrix(bg, rep, x, xp, 1, 1.0, opt);
  auto h4 = pre_parametrix(bg, rep, x, xp, 1, 2.0, opt);
  MatrixXcd d1 = h2.h_plus - h1.h_plus;
  MatrixXcd d2 = h4.h_plus - h2.h_plus;
  CHECK((d1 - d2).norm() <= 1e-12 * (1.0 + d1.norm()));
  MatrixXcd D1 = h2.H_plus - h1.H_plus;
  MatrixXcd D2 = h4.H_plus - h2.H_plus;
  CHECK((D1 - D2).norm() <= 1e-12 * (1.0 + D1.norm()));

  // n = 2: d h / d log Lambda = -(1/2pi) V0 (the j = 0 log kernel alone
  // carries Lambda; the V1 term of the massive case adds -(1/2pi) V1 Gamma/4
  // times zero since C(4,2) Gamma^{1} log' picks the same -2; check against
  // the assembled finite difference instead of a hand formula)
  MatrixXcd deriv = d1 / std::log(2.0);
  auto tr = transport_along(bg, rep, xp, x, 1, opt);
  MatrixXcd v0 = tr.V0.back(), v1 = tr.V1.back();
  double gam = h2.gamma_val;
  MatrixXcd expect = -(1.0 / (2.0 * M_PI)) * (v0 + riesz_C(4, 2) / riesz_C(2, 2) * gam * v1);
  CHECK((deriv - expect).norm() <= 1e-10 * (1.0 + expect.norm()));
}

TEST_CASE("double-spinor kernel: conjugation pattern and zero diagonal blocks") {
  auto bg = BackgroundSpec::parse(
      "dim = 2\ncoords = t, x\nmetric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\nm = \"0.5\"\n");
  GammaRep rep = build_gamma(2);
  VectorXd x(2), y(2);
  x << 0.03, 0.3;
  y << 0.0, 0.05;
  TransportOptions opt;
  opt.steps = 16;
  opt.source_nodes = 8;
  auto ev = assemble_parametrix(bg, rep, x, y, 1, 1.0, nullptr, opt);
  auto ev_rev = assemble_parametrix(bg, rep, y, x, 1, 1.0, nullptr, opt);

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXcd u(4), v(4);
    for (int i = 0; i < 4; ++i) {
      u(i) = cd(U(rng), U(rng));
      v(i) = cd(U(rng), U(rng));
    }
    cd val = ev.H_double.value(u, v);
    cd conj_pattern = ev_rev.H_double.value(double_spinor_plus(rep, v), double_spinor_plus(rep, u));
    CHECK(std::abs(std::conj(val) - conj_pattern) <= 1e-10 * (1.0 + std::abs(val)));

    // diagonal blocks vanish: pure-spinor against pure-spinor pairs
    VectorXcd us = u, vs = v;
    us.tail(2).setZero();
    vs.tail(2).setZero();
    CHECK(std::abs(ev.H_double.value(us, vs)) <= 1e-14);
    VectorXcd uc = u, vc = v;
    uc.head(2).setZero();
    vc.head(2).setZero();
    CHECK(std::abs(ev.H_double.value(uc, vc)) <= 1e-14);
  }
}
