#include "doctest.h"
#include "hdirac/modesum.hpp"

#include <random>

using namespace hdirac;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cd = std::complex<double>;

namespace {

VectorXd pt(double t, double x) {
  VectorXd p(2);
  p << t, x;
  return p;
}

}  // namespace

TEST_CASE("mode basis: antiperiodic massless spectrum") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(2.0 * M_PI, "0", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 16);
  CHECK(b.evals.cwiseAbs().minCoeff() == doctest::Approx(0.5).epsilon(1e-12));
  // spectrum symmetric about zero
  for (int k = 0; k < b.evals.size(); ++k) {
    double e = b.evals(k);
    bool found = false;
    for (int l = 0; l < b.evals.size(); ++l)
      if (std::abs(b.evals(l) + e) < 1e-10) found = true;
    CHECK(found);
  }
}

TEST_CASE("mode basis: constant mass dispersion and zero-mode rejection") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.7", 0.3, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 16);
  for (int k = 0; k < b.evals.size(); ++k) {
    double q = b.k_of(b.mode_n[k]) - 0.3;
    CHECK(std::abs(std::abs(b.evals(k)) - std::sqrt(q * q + 0.49)) <= 1e-12);
  }

  auto zero = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0", 0.0, SpinStructure::Periodic));
  CHECK_THROWS_AS(build_modes(zero, 16), EvalError);
}

TEST_CASE("mode basis: eigен residual and orthonormality for varying mass") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.8 + 0.2*sin(2*pi*x)", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 32);
  CHECK(!b.diagonal);
  // orthonormality of the eigenvector matrix
  MatrixXcd G = b.vecs.adjoint() * b.vecs;
  CHECK((G - MatrixXcd::Identity(G.rows(), G.cols())).norm() <= 1e-10);

  // spectral eigen-residual: apply K in the Fourier basis (rebuild)
  // indirectly: check the dispersion approaches the constant-mass one at
  // large |n| (the perturbation is bounded)
  double emax = b.evals.maxCoeff();
  CHECK(emax > 2.0 * M_PI * (16 - 1.5));
}

TEST_CASE("perturbation theory oracle for a weak mass modulation") {
  double mu = 0.9, L = 1.0;
  for (double epsb : {0.01, 0.02}) {
    std::ostringstream os;
    os.precision(16);
    os << mu << " + " << epsb << "*sin(2*pi*x)";
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(L, os.str(), 0.0, SpinStructure::Antiperiodic));
    ModeBasis pert = build_modes(circle, 32);
    auto base_circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(L, std::to_string(mu), 0.0, SpinStructure::Antiperiodic));
    ModeBasis base = build_modes(base_circle, 32);

    // second-order PT in the unperturbed eigenbasis, using the dense matrix
    // of the perturbation V = sigma2 * eps sin(2 pi x)
    int M2 = static_cast<int>(base.evals.size());
    MatrixXcd V = MatrixXcd::Zero(M2, M2);
    // unperturbed modes are single-Fourier: V couples n and n+-1
    const cd I(0.0, 1.0);
    for (int r = 0; r < M2; ++r)
      for (int c = 0; c < M2; ++c) {
        int dn = base.mode_n[r] - base.mode_n[c];
        if (std::abs(dn) != 1) continue;
        // <n| eps sin(2 pi x) |n'> = eps/(2i) (delta_{dn,1} - delta_{dn,-1})
        cd amp = (dn == 1) ? epsb / (2.0 * I) : -epsb / (2.0 * I);
        // sigma2 between the 2-spinor amplitudes
        MatrixXcd s2(2, 2);
        s2 << 0, -I, I, 0;
        V(r, c) = amp * (base.amp[r].adjoint() * s2 * base.amp[c])(0, 0);
      }
    // degenerate perturbation theory: diagonalize V inside each degenerate
    // group, then the usual second-order sum in the rotated basis
    std::vector<double> pt2;
    std::vector<bool> used(M2, false);
    for (int r = 0; r < M2; ++r) {
      if (used[r]) continue;
      std::vector<int> group;
      for (int c = 0; c < M2; ++c)
        if (!used[c] && std::abs(base.evals(r) - base.evals(c)) < 1e-9) {
          group.push_back(c);
          used[c] = true;
        }
      int g = static_cast<int>(group.size());
      MatrixXcd Vg(g, g);
      for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) Vg(i, j) = V(group[i], group[j]);
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Vg);
      for (int i = 0; i < g; ++i) {
        // rotated state
        VectorXcd chi = VectorXcd::Zero(M2);
        for (int j = 0; j < g; ++j) chi(group[j]) = es.eigenvectors()(j, i);
        double e2 = 0.0;
        for (int c = 0; c < M2; ++c) {
          if (std::abs(base.evals(c) - base.evals(r)) < 1e-9) continue;
          cd amp = 0.0;
          for (int j = 0; j < g; ++j) amp += V(c, group[j]) * chi(group[j]);
          e2 += std::norm(amp) / (base.evals(r) - base.evals(c));
        }
        pt2.push_back(base.evals(r) + es.eigenvalues()(i) + e2);
      }
    }
    std::sort(pt2.begin(), pt2.end());
    Eigen::VectorXd got = pert.evals;
    std::sort(got.data(), got.data() + got.size());
    // compare central eigenvalues (edges feel the truncation)
    double worst = 0.0;
    for (int k = M2 / 4; k < 3 * M2 / 4; ++k) worst = std::max(worst, std::abs(got(k) - pt2[k]));
    CHECK(worst <= 20.0 * epsb * epsb * epsb + 1e-10);
  }
}

TEST_CASE("state kernels: anticommutator, conjugation, bisolution, stationarity") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.6", 0.2, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 64);
  GammaRep rep = build_gamma(2);
  StateKernel state(b, rep);

  std::mt19937 rng(71);
  std::uniform_real_distribution<double> U(-0.3, 0.3);

  for (int trial = 0; trial < 6; ++trial) {
    VectorXd x = pt(U(rng), U(rng)), y = pt(U(rng), U(rng));
    auto W_xy = state.omega_pair(x, y);
    auto W_yx = state.omega_pair(y, x);

    // omega(u,v) + omega(v,u) = i S^oplus(u,v) as pair matrices
    MatrixXcd Spair = MatrixXcd::Zero(4, 4);
    Spair.block(2, 0, 2, 2) = state.S(x, y);
    Spair.block(0, 2, 2, 2) = state.S(y, x).transpose();
    MatrixXcd lhs = W_xy.pair() + W_yx.pair().transpose();
    CHECK((lhs - cd(0.0, 1.0) * Spair).norm() <= 1e-10 * (1.0 + Spair.norm()));

    // conjugation pattern
    std::uniform_real_distribution<double> V(-1.0, 1.0);
    for (int t2 = 0; t2 < 5; ++t2) {
      VectorXcd u(4), v(4);
      for (int i = 0; i < 4; ++i) {
        u(i) = cd(V(rng), V(rng));
        v(i) = cd(V(rng), V(rng));
      }
      cd val = W_xy.value(u, v);
      cd pat = W_yx.value(double_spinor_plus(rep, v), double_spinor_plus(rep, u));
      CHECK(std::abs(std::conj(val) - pat) <= 1e-12 * (1.0 + std::abs(val)));
    }

    // stationarity: joint time shift
    VectorXd shift = pt(0.17, 0.0);
    auto W_sh = state.omega_pair(x + shift, y + shift);
    CHECK((W_sh.pair() - W_xy.pair()).norm() <= 1e-12 * (1.0 + W_xy.pair().norm()));
  }

  // bisolution: apply the Dirac operator in the first slot of omega^+ with
  // exact term-wise derivatives (plain windowed sums)
  {
    StateOptions wopt;
    wopt.mode = SumMode::PlainWindowed;
    StateKernel wstate(b, rep, wopt);
    VectorXd y = pt(0.0, 0.21);
    VectorXd x0 = pt(0.13, 0.44);
    auto pkg = curvature_package(circle.bg, std::span<const double>(x0.data(), 2), rep, 3);
    auto sp = JetSpace::get(2, 1);
    MatJet jet(2, sp);
    MatrixXcd v0 = wstate.omega_plus(x0, y);

    MatrixXcd ddt = wstate.block_derivative(x0, y, +1, 1, 0);
    MatrixXcd ddx = wstate.block_derivative(x0, y, +1, 1, 1);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        CJet c(sp);
        c[0] = v0(i, j);
        std::vector<int> mi = {1, 0};
        c[sp->position(mi)] = ddt(i, j);
        mi = {0, 1};
        c[sp->position(mi)] = ddx(i, j);
        jet.at(i, j) = c;
      }
    for (int col = 0; col < 2; ++col) {
      SpinJet colj(2);
      for (int i = 0; i < 2; ++i) colj[i] = jet.at(i, col);
      VectorXcd r = dirac_apply(pkg, rep, colj, DiracVariant::D);
      CHECK(r.norm() <= 1e-10);
    }
    // and in the second (cospinor) slot with Dstar
    MatrixXcd ddt2 = wstate.block_derivative(x0, y, +1, 2, 0);
    MatrixXcd ddx2 = wstate.block_derivative(x0, y, +1, 2, 1);
    auto pkg_y = curvature_package(circle.bg, std::span<const double>(y.data(), 2), rep, 3);
    for (int row = 0; row < 2; ++row) {
      CospinJet rowj(2);
      for (int j = 0; j < 2; ++j) {
        CJet c(sp);
        c[0] = v0(row, j);
        std::vector<int> mi = {1, 0};
        c[sp->position(mi)] = ddt2(row, j);
        mi = {0, 1};
        c[sp->position(mi)] = ddx2(row, j);
        rowj[j] = c;
      }
      VectorXcd r = dirac_apply(pkg_y, rep, rowj, DiracVariant::DStar);
      CHECK(r.norm() <= 1e-10);
    }
  }
}

TEST_CASE("accelerated sums agree with exact closed forms and plain sums") {
  GammaRep rep = build_gamma(2);

  // massless: corrections vanish, the closed form is exact; check against a
  // large plain-windowed sum at a safely resolved separation
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0", 0.0, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 64);
    StateKernel fast(b, rep);
    CHECK(fast.accelerated());
    ModeBasis bigb = build_modes(circle, 4096);
    StateOptions wopt;
    wopt.mode = SumMode::PlainWindowed;
    StateKernel slow(bigb, rep, wopt);
    VectorXd x = pt(0.03, 0.41), y = pt(-0.05, 0.15);
    CHECK((fast.omega_plus(x, y) - slow.omega_plus(x, y)).norm() <= 2e-4);
    CHECK((fast.S(x, y) - slow.S(x, y)).norm() <= 2e-4);
  }

  // massive: self-consistency of the accelerated construction under cutoff
  // growth, and rough agreement with the plain sum at its own window-error
  // level
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0.6", 0.15, SpinStructure::Antiperiodic));
    VectorXd x = pt(0.02, 0.33), y = pt(-0.03, 0.11);
    ModeBasis b2k = build_modes(circle, 2048);
    StateKernel refk(b2k, rep);
    double prev = 1e9;
    for (int c : {128, 256, 512}) {
      ModeBasis bc = build_modes(circle, c);
      StateKernel fast(bc, rep);
      double d = (fast.omega_plus(x, y) - refk.omega_plus(x, y)).norm();
      CHECK(d < prev);
      prev = d;
    }
    CHECK(prev <= 2e-6);

    ModeBasis bp = build_modes(circle, 4096);
    StateOptions wopt;
    wopt.mode = SumMode::PlainWindowed;
    StateKernel slow(bp, rep, wopt);
    CHECK((refk.omega_plus(x, y) - slow.omega_plus(x, y)).norm() <= 1e-4);
  }

  // varying mass: dense diagonalization with sorted-rank pairing
  {
    auto circle = UltrastaticCircle::from_background(
        BackgroundSpec::circle(1.0, "0.7 + 0.15*sin(2*pi*x)", 0.1, SpinStructure::Antiperiodic));
    ModeBasis b = build_modes(circle, 128);
    StateKernel fast(b, rep);
    CHECK(fast.accelerated());
    ModeBasis bigb = build_modes(circle, 512);
    StateKernel fast2(bigb, rep);
    VectorXd x = pt(0.02, 0.63), y = pt(-0.01, 0.44);
    CHECK((fast.omega_plus(x, y) - fast2.omega_plus(x, y)).norm() <= 1e-4);
  }
}

TEST_CASE("equal-time anticommutator against band-limited smearing") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0.5", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 64);
  GammaRep rep = build_gamma(2);
  StateOptions wopt;
  wopt.mode = SumMode::PlainWindowed;
  StateKernel state(b, rep, wopt);

  // band-limited test functions: few low Fourier modes; the smeared
  // anticommutator must equal i S exactly within the resolved band
  double L = 1.0;
  auto smear = [&](int q1, int q2, int comp1, int comp2, double t) {
    // f(x) = e^{i k_{q1} x} e_{comp1}, g(x') = e^{i k_{q2} x'} e_{comp2}
    int kq = 24;
    cd acc_lhs = 0.0, acc_S = 0.0;
    for (int i = 0; i < kq; ++i)
      for (int j = 0; j < kq; ++j) {
        double xi = L * i / kq, xj = L * j / kq;
        VectorXd p1 = pt(t, xi), p2 = pt(t, xj);
        MatrixXcd wp = state.omega_plus(p1, p2) + state.omega_minus(p1, p2);
        MatrixXcd Sv = state.S(p1, p2);
        cd f1 = std::polar(1.0, b.k_of(q1) * xi);
        cd f2 = std::polar(1.0, b.k_of(q2) * xj);
        acc_lhs += f1 * wp(comp1, comp2) * f2;
        acc_S += f1 * Sv(comp1, comp2) * f2;
      }
    return std::abs(acc_lhs - cd(0.0, 1.0) * acc_S) / (1.0 + std::abs(acc_S));
  };
  CHECK(smear(0, -1, 0, 0, 0.0) <= 1e-10);
  CHECK(smear(1, 1, 0, 1, 0.0) <= 1e-10);

  // the equal-time S smeared against band-limited functions is delta-like:
  // <f, S g> = i-normalized overlap gamma^0 within the band. The quadrature
  // grid must resolve the full band of the kernel.
  {
    int kq = 256;
    int q = -1;
    cd acc = 0.0;
    for (int i = 0; i < kq; ++i)
      for (int j = 0; j < kq; ++j) {
        double xi = L * i / kq, xj = L * j / kq;
        MatrixXcd Sv = state.S(pt(0.0, xi), pt(0.0, xj));
        cd f1 = std::polar(1.0, -b.k_of(q) * xi);
        cd f2 = std::polar(1.0, b.k_of(q) * xj);
        acc += f1 * Sv(0, 1) * f2 * (L / kq) * (L / kq);
      }
    // S(t,t') -> gamma^0 delta(x - x') at equal time: smeared value gamma^0_{01} = 1
    CHECK(std::abs(acc - cd(1.0, 0.0)) <= 1e-10);
  }
}

TEST_CASE("frequency split of the state matches the parametrix branches") {
  // omega^+ - H^+ and omega^- + H^- stay bounded as the points merge while
  // each term alone diverges; this pins the branch orientation of the
  // singular kernels against the spectral split. (The relative sign on the
  // minus branch reflects omega^+ + omega^- = iS against H^+ - H^- ~ iS.)
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 1024);
  GammaRep rep = build_gamma(2);
  StateKernel state(b, rep);
  TransportOptions topt;
  topt.steps = 16;
  topt.source_nodes = 8;

  double prev_p = 0.0, prev_m = 0.0;
  for (int k = 0; k < 3; ++k) {
    double eps = 0.2 / (1 << k);
    VectorXd x = pt(0.012 * eps, 0.5 * eps), y = pt(-0.012 * eps, -0.5 * eps);
    MatrixXcd wplus = state.omega_plus(x, y);
    MatrixXcd wminus = state.omega_minus(x, y);
    auto pre = pre_parametrix(circle.bg, rep, x, y, 1, 1.0, topt);
    double dp = (wplus - pre.H_plus).norm();
    double dm = (wminus + pre.H_minus).norm();
    if (k > 0) {
      CHECK(dp <= prev_p);
      CHECK(dm <= prev_m);
    }
    prev_p = dp;
    prev_m = dm;
    CHECK(dp <= 0.1);
    CHECK(dm <= 0.1);
    CHECK(pre.H_plus.norm() >= 1.0 / (2.0 * M_PI * eps) * 0.3);
    // the opposite pairing is singular
    CHECK((wplus + pre.H_plus).norm() >= 5.0 * dp);
  }
}

TEST_CASE("point-split difference on the massless antiperiodic circle") {
  auto circle = UltrastaticCircle::from_background(
      BackgroundSpec::circle(1.0, "0", 0.0, SpinStructure::Antiperiodic));
  ModeBasis b = build_modes(circle, 1024);
  GammaRep rep = build_gamma(2);
  StateKernel state(b, rep);

  PointSplitOptions opt;
  opt.separations = {1.0 / 12, 1.0 / 16, 1.0 / 24, 1.0 / 32};
  opt.k_max = 1;
  opt.lambda = 1.0;
  opt.transport.steps = 16;
  opt.transport.source_nodes = 8;

  std::vector<VectorXd> dirs = {pt(0.0, 1.0), pt(1.0, 0.0)};

  auto d1 = pointsplit_difference(state, circle.bg, rep, pt(0.0, 0.3), dirs, opt);
  CHECK(d1.converged);
  CHECK(d1.observed_order >= 0.9);

  // homogeneity: x-independent
  auto d2 = pointsplit_difference(state, circle.bg, rep, pt(0.0, 0.7), dirs, opt);
  CHECK((d1.Psi - d2.Psi).norm() <= 1e-6);
}
