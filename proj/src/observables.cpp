#include "hdirac/observables.hpp"

#include <cmath>

namespace hdirac {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cd = std::complex<double>;

std::complex<double> wick_trace(const MatrixXcd& M, const MatrixXcd& W) {
  return (M.array() * W.array()).sum();
}

double scalar_wick(const WickData& wd) { return wd.Psi.trace().real(); }

VectorXd current(const WickData& wd, const CurvaturePackage& pkg, const GammaRep& rep) {
  // the conjugation z+ = -i z* g0 makes every psi+ gamma^mu psi bilinear
  // carry a factor -i relative to the physical (real) vector; the physical
  // current is Re[i tr(gamma^mu Psi)]
  auto gam = pkg.gamma_chart(rep);
  VectorXd j(pkg.n);
  for (int mu = 0; mu < pkg.n; ++mu) j(mu) = -wick_trace(gam[mu], wd.Psi).imag();
  return j;
}

double current_reality_defect(const WickData& wd, const CurvaturePackage& pkg,
                              const GammaRep& rep) {
  auto gam = pkg.gamma_chart(rep);
  double worst = 0.0;
  for (int mu = 0; mu < pkg.n; ++mu)
    worst = std::max(worst, std::abs(wick_trace(gam[mu], wd.Psi).real()));
  return worst;
}

namespace {

// covariant derivative of the Psi field (cospinor row index, spinor column
// index): nabla_mu Psi = d_mu Psi - sigma_mu^T Psi + Psi sigma_mu^T in the
// (A, B) layout; gauge charges cancel
MatrixXcd covariant_dPsi(const WickData& wd, const CurvaturePackage& pkg, int mu) {
  MatrixXcd s = pkg.sigma[mu].value();
  return wd.dPsi[mu] - s.transpose() * wd.Psi + wd.Psi * s.transpose();
}

}  // namespace

MatrixXd stress_energy(const WickData& wd, const CurvaturePackage& pkg, const GammaRep& rep) {
  const int n = pkg.n;
  auto gam = pkg.gamma_chart(rep);
  MatrixXd g = pkg.g_val();
  double mv = pkg.m_val();

  std::vector<MatrixXcd> gam_lo(n, MatrixXcd::Zero(rep.N, rep.N));
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) gam_lo[mu] += g(mu, nu) * gam[nu];

  std::vector<MatrixXcd> dP(n);
  for (int mu = 0; mu < n; ++mu) dP[mu] = covariant_dPsi(wd, pkg, mu);

  // scalar blocks entering through g_{mu nu}
  cd block = 0.0;
  for (int lam = 0; lam < n; ++lam) {
    block += wick_trace(gam[lam], wd.Psi_mu[lam]);
    block -= 0.5 * wick_trace(gam[lam], dP[lam]);
  }
  block += mv * wd.Psi.trace();

  MatrixXd T(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      cd val = 0.5 * (wick_trace(gam_lo[nu], wd.Psi_mu[mu]) + wick_trace(gam_lo[mu], wd.Psi_mu[nu]));
      val -= 0.25 * (wick_trace(gam_lo[mu], dP[nu]) + wick_trace(gam_lo[nu], dP[mu]));
      val -= g(mu, nu) * block;
      T(mu, nu) = val.real();
    }
  return T;
}

double stress_trace_identity(const WickData& wd, const CurvaturePackage& pkg,
                             const GammaRep& rep) {
  const int n = pkg.n;
  auto gam = pkg.gamma_chart(rep);
  double mv = pkg.m_val();
  cd val = 0.0;
  for (int mu = 0; mu < n; ++mu) {
    val += (1.0 - n) * wick_trace(gam[mu], wd.Psi_mu[mu]);
    val -= 0.5 * (1.0 - n) * wick_trace(gam[mu], covariant_dPsi(wd, pkg, mu));
  }
  val -= double(n) * mv * wd.Psi.trace();
  return val.real();
}

// ---------------------------------------------------------------------------
// circle grid pipeline

std::vector<double> spectral_derivative(const std::vector<double>& f, double L) {
  int N = static_cast<int>(f.size());
  std::vector<cd> fhat(N, cd(0.0));
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < N; ++j) fhat[k] += f[j] * std::polar(1.0, -2.0 * M_PI * k * j / N);
  std::vector<double> out(N, 0.0);
  for (int j = 0; j < N; ++j) {
    cd acc = 0.0;
    for (int k = 0; k < N; ++k) {
      int kk = (k <= N / 2) ? k : k - N;  // signed frequency
      if (2 * k == N) continue;           // drop the unpaired Nyquist mode
      cd ik(0.0, 2.0 * M_PI * kk / L);
      acc += ik * fhat[k] * std::polar(1.0, 2.0 * M_PI * k * j / N) / double(N);
    }
    out[j] = acc.real();
  }
  return out;
}

std::vector<WickData> wick_grid(const StateKernel& state, const BackgroundSpec& bg,
                                const GammaRep& rep, const GridOptions& opt) {
  if (!bg.circumference) throw EvalError("wick_grid: circle background required");
  double L = *bg.circumference;
  const int N = rep.N;
  int G = opt.grid;

  std::vector<VectorXd> dirs(2, VectorXd::Zero(2));
  dirs[0](0) = 1.0;  // time split
  dirs[1](1) = 1.0;  // space split

  std::vector<WickData> out(G);
  // raw pipeline values; the physical dictionary flips the global sign
  std::vector<MatrixXcd> psi_pipe(G);
  std::vector<std::vector<MatrixXcd>> slope_pipe(G);
  for (int k = 0; k < G; ++k) {
    VectorXd x(2);
    x << opt.t0, L * k / G;
    WickSplitData d = pointsplit_difference(state, bg, rep, x, dirs, opt.split);
    psi_pipe[k] = d.Psi;
    slope_pipe[k] = d.slope;
    out[k].x = x;
    out[k].observed_order = d.observed_order;
    out[k].residual = d.richardson_residual;
    out[k].converged = d.converged;
    out[k].Psi = -d.Psi;  // physical dictionary
  }

  // spectral x-derivative of each entry of the physical Psi field
  std::vector<MatrixXcd> dPsi_x(G, MatrixXcd::Zero(N, N));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      std::vector<double> re(G), im(G);
      for (int k = 0; k < G; ++k) {
        re[k] = out[k].Psi(i, j).real();
        im[k] = out[k].Psi(i, j).imag();
      }
      auto dre = spectral_derivative(re, L);
      auto dim = spectral_derivative(im, L);
      for (int k = 0; k < G; ++k) dPsi_x[k](i, j) = cd(dre[k], dim[k]);
    }

  for (int k = 0; k < G; ++k) {
    out[k].dPsi = {MatrixXcd::Zero(N, N), dPsi_x[k]};  // stationary in t
    out[k].Psi_mu.resize(2);
    out[k].Psi_mu_r.resize(2);
    for (int mu = 0; mu < 2; ++mu) {
      // physical <nabla psi+ psi> = (1/2) dPsi_phys + slope_pipe
      out[k].Psi_mu[mu] = 0.5 * out[k].dPsi[mu] + slope_pipe[k][mu];
      out[k].Psi_mu_r[mu] = 0.5 * out[k].dPsi[mu] - slope_pipe[k][mu];
    }
  }
  return out;
}

ConservationReport conservation_residual(const std::vector<WickData>& grid,
                                         const BackgroundSpec& bg, const GammaRep& rep,
                                         double L) {
  int G = static_cast<int>(grid.size());
  ConservationReport rep_out;
  std::vector<double> j0(G), j1(G);
  std::vector<MatrixXd> T(G);
  std::vector<CurvaturePackage> pkgs;
  pkgs.reserve(G);
  for (int k = 0; k < G; ++k) {
    auto pkg = curvature_package(bg, std::span<const double>(grid[k].x.data(), 2), rep, 3);
    VectorXd j = current(grid[k], pkg, rep);
    j0[k] = j(0);
    j1[k] = j(1);
    T[k] = stress_energy(grid[k], pkg, rep);
    rep_out.trace_T.push_back((pkg.ginv_val().array() * T[k].array()).sum());
    rep_out.trace_identity.push_back(stress_trace_identity(grid[k], pkg, rep));
    pkgs.push_back(std::move(pkg));
  }
  // static flat circle: del_mu j^mu = d_x j^1
  rep_out.div_j = spectral_derivative(j1, L);
  for (double v : rep_out.div_j) rep_out.max_div_j = std::max(rep_out.max_div_j, std::abs(v));

  // del^mu T_{mu nu} = g^{mu a} d_a T_{mu nu}; static: = d_x T_{1 nu}
  std::vector<double> T10(G), T11(G);
  for (int k = 0; k < G; ++k) {
    T10[k] = T[k](1, 0);
    T11[k] = T[k](1, 1);
  }
  auto d0 = spectral_derivative(T10, L);
  auto d1 = spectral_derivative(T11, L);
  for (int k = 0; k < G; ++k) {
    VectorXd div(2);
    div << d0[k], d1[k];
    rep_out.div_T.push_back(div);
    rep_out.max_div_T = std::max(rep_out.max_div_T, div.cwiseAbs().maxCoeff());
  }
  return rep_out;
}

std::vector<VectorXd> measure_Q(const std::vector<double>& div_j, double L) {
  int G = static_cast<int>(div_j.size());
  // solve d_x Q^1 = div_j with zero mean (static circle; Q^0 = 0)
  std::vector<cd> fhat(G, cd(0.0));
  for (int k = 0; k < G; ++k)
    for (int j = 0; j < G; ++j) fhat[k] += div_j[j] * std::polar(1.0, -2.0 * M_PI * k * j / G);
  std::vector<VectorXd> out(G, VectorXd::Zero(2));
  for (int j = 0; j < G; ++j) {
    cd acc = 0.0;
    for (int k = 1; k < G; ++k) {
      int kk = (k <= G / 2) ? k : k - G;
      if (2 * k == G) continue;
      cd ik(0.0, 2.0 * M_PI * kk / L);
      acc += fhat[k] / ik * std::polar(1.0, 2.0 * M_PI * k * j / G) / double(G);
    }
    out[j](1) = acc.real();
  }
  return out;
}

// ---------------------------------------------------------------------------
// redefinitions

namespace {

// periodic cardinal interpolation of grid samples
double interp_periodic(const std::vector<double>& f, double L, double x) {
  int G = static_cast<int>(f.size());
  std::vector<cd> fhat(G, cd(0.0));
  for (int k = 0; k < G; ++k)
    for (int j = 0; j < G; ++j) fhat[k] += f[j] * std::polar(1.0, -2.0 * M_PI * k * j / G);
  cd acc = 0.0;
  for (int k = 0; k < G; ++k) {
    int kk = (k <= G / 2) ? k : k - G;
    if (2 * k == G) {
      acc += fhat[k] * std::cos(2.0 * M_PI * kk * x / L) / double(G);
      continue;
    }
    acc += fhat[k] * std::polar(1.0, 2.0 * M_PI * kk * x / L) / double(G);
  }
  return acc.real();
}

}  // namespace

DeltaH current_correction(const std::vector<VectorXd>& Q, double L, const GammaRep& rep) {
  int G = static_cast<int>(Q.size());
  std::vector<double> q0(G), q1(G);
  for (int k = 0; k < G; ++k) {
    q0[k] = Q[k](0);
    q1[k] = Q[k](1);
  }
  // -2^{-[n/2]} gamma^mu Q_mu in the bilinear's own units; Q measured as a
  // physical (real) vector picks up the same -i as the current, so the
  // matrix entering the kernel is +2^{-[n/2]} i gamma^mu Q_mu
  cd coef = cd(0.0, 1.0) * std::pow(2.0, -(rep.n / 2));
  DeltaH dh;
  dh.mass_dimension = rep.n - 1;
  dh.scalar = [=, &rep](const VectorXd& s) {
    // flat circle: gamma^mu Q_mu with Q_0 = -Q^0, Q_1 = Q^1
    double Q0 = interp_periodic(q0, L, s(1));
    double Q1 = interp_periodic(q1, L, s(1));
    return MatrixXcd(coef * (-Q0 * rep.gamma[0] + Q1 * rep.gamma[1]));
  };
  return dh;
}

DeltaH scalar_menu_m3(double c, const BackgroundSpec& bg) {
  DeltaH dh;
  dh.mass_dimension = 3;
  dh.scalar = [c, bg](const VectorXd& s) {
    double m = bg.m_jet(std::span<const double>(s.data(), bg.n), 0).value();
    int N = 1 << (bg.n / 2);
    return MatrixXcd(c * m * m * m * MatrixXcd::Identity(N, N));
  };
  return dh;
}

std::optional<DeltaH> scalar_menu(const BackgroundSpec& bg, const GammaRep& rep) {
  auto a = bg.alpha;
  if (a[0] == 0.0 && a[1] == 0.0 && a[2] == 0.0 && a[3] == 0.0) return std::nullopt;
  DeltaH dh;
  dh.mass_dimension = rep.n - 1;
  dh.scalar = [a, bg, &rep](const VectorXd& s) {
    CurvaturePackage pkg = curvature_package(bg, std::span<const double>(s.data(), bg.n), rep, 4);
    auto gam = pkg.gamma_chart(rep);
    double m = pkg.m_val();
    MatrixXcd out = (a[0] * m * m * m + a[1] * m * pkg.R()) *
                    MatrixXcd::Identity(rep.N, rep.N);
    if (a[2] != 0.0) {
      MatrixXd Fv = pkg.F_val();
      for (int mu = 0; mu < bg.n; ++mu)
        for (int nu = 0; nu < bg.n; ++nu)
          if (Fv(mu, nu) != 0.0) out += cd(0.0, a[2] * m * Fv(mu, nu)) * (gam[mu] * gam[nu]);
    }
    if (a[3] != 0.0) {
      VectorXd gr = pkg.grad_R();
      for (int mu = 0; mu < bg.n; ++mu) out += a[3] * gr(mu) * gam[mu];
    }
    return out;
  };
  return dh;
}

Eigen::MatrixXd stress_ambiguity_shift(const BackgroundSpec& bg, std::span<const double> x,
                                       const GammaRep& rep) {
  auto b = bg.beta;
  CurvaturePackage pkg = curvature_package(bg, x, rep, 4);
  int n = bg.n;
  MatrixXd g = pkg.g_val();
  MatrixXd ric(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) ric(mu, nu) = pkg.ricci[mu][nu].value();
  double m = pkg.m_val();
  MatrixXd out = b[2] * m * m * (ric - 0.5 * pkg.R() * g) + b[3] * std::pow(m, 4) * g;
  if (n == 4 && (b[0] != 0.0 || b[1] != 0.0)) {
    auto amb = ambiguity_tensors(bg, x, rep);
    out += b[0] * amb.I + b[1] * amb.J;
  }
  return out;
}

DeltaH psi_mu_shift(std::function<std::vector<MatrixXcd>(const VectorXd&)> X,
                    int mass_dimension) {
  DeltaH dh;
  dh.mass_dimension = mass_dimension;
  // kernel vector part = -2 X_mu realizes Psi_mu -> Psi_mu + X_mu
  dh.vector = [X](const VectorXd& s) {
    auto xs = X(s);
    for (auto& m : xs) m *= -2.0;
    return xs;
  };
  return dh;
}

DeltaH stress_correction(const std::vector<MatrixXd>& Q, double L, const GammaRep& rep) {
  // Psi_mu -> Psi_mu - d_V^{-1} 2^{-[n/2]} (gamma^nu Q_{mu nu} - gamma_mu Q^lam_lam / (n-1))
  int G = static_cast<int>(Q.size());
  int n = rep.n;
  std::vector<std::vector<std::vector<double>>> q(n, std::vector<std::vector<double>>(n));
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      q[mu][nu].resize(G);
      for (int k = 0; k < G; ++k) q[mu][nu][k] = Q[k](mu, nu);
    }
  double coef = -std::pow(2.0, -(n / 2));  // d_V = 1
  auto X = [=, &rep](const VectorXd& s) {
    // flat chart: raise/lower with eta
    std::vector<MatrixXcd> out(n, MatrixXcd::Zero(rep.N, rep.N));
    MatrixXd Qs(n, n);
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) Qs(mu, nu) = interp_periodic(q[mu][nu], L, s(1));
    double trQ = -Qs(0, 0);  // Q^lam_lam = g^{lam rho} Q_{rho lam}
    for (int lam = 1; lam < n; ++lam) trQ += Qs(lam, lam);
    for (int mu = 0; mu < n; ++mu) {
      MatrixXcd acc = MatrixXcd::Zero(rep.N, rep.N);
      for (int nu = 0; nu < n; ++nu) {
        double eta = (nu == 0) ? -1.0 : 1.0;
        acc += eta * rep.gamma[nu] * Qs(mu, nu);
      }
      double eta_mu = (mu == 0) ? -1.0 : 1.0;
      acc -= (1.0 / (n - 1.0)) * eta_mu * rep.gamma[mu] * trQ;
      out[mu] = coef * acc;
    }
    return out;
  };
  return psi_mu_shift(X, n);
}

// ---------------------------------------------------------------------------
// ambiguity tensors

namespace {

// covariant jet machinery for symmetric 2-tensors built from package jets
struct Tensor2Jets {
  std::vector<std::vector<Jet>> t;  // [mu][nu], order q
};

// nabla_lam T_{mu nu} as jets of one order lower
std::vector<Tensor2Jets> covariant_derivative(const CurvaturePackage& pkg,
                                              const Tensor2Jets& T, int order_out) {
  int n = pkg.n;
  std::vector<Tensor2Jets> out(n);
  for (int lam = 0; lam < n; ++lam) {
    out[lam].t.assign(n, std::vector<Jet>(n, Jet(JetSpace::get(n, order_out))));
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) {
        Jet acc = T.t[mu][nu].derivative(lam).truncated(order_out);
        for (int rho = 0; rho < n; ++rho) {
          acc -= pkg.christoffel[rho][lam][mu].truncated(order_out) *
                 T.t[rho][nu].truncated(order_out);
          acc -= pkg.christoffel[rho][lam][nu].truncated(order_out) *
                 T.t[mu][rho].truncated(order_out);
        }
        out[lam].t[mu][nu] = acc;
      }
  }
  return out;
}

}  // namespace

AmbiguityTensors ambiguity_tensors(const BackgroundSpec& bg, std::span<const double> x,
                                   const GammaRep& rep) {
  if (bg.n != 4) throw EvalError("ambiguity_tensors: four-dimensional background required");
  CurvaturePackage pkg = curvature_package(bg, x, rep, 4);
  const int n = 4;
  MatrixXd g = pkg.g_val();
  MatrixXd gi = pkg.ginv_val();
  double R = pkg.R();
  MatrixXd ric(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) ric(mu, nu) = pkg.ricci[mu][nu].value();

  // nabla_mu nabla_nu R and box R from the scalar jet
  MatrixXd hessR(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      double v = pkg.ricci_scalar.partial(mu, nu);
      for (int lam = 0; lam < n; ++lam)
        v -= pkg.christoffel[lam][mu][nu].value() * pkg.ricci_scalar.partial(lam);
      hessR(mu, nu) = v;
    }
  double boxR = (gi * hessR).trace();

  // box R_{mu nu} via two covariant derivatives of the Ricci jets
  Tensor2Jets ricJ;
  ricJ.t = pkg.ricci;  // order 2 jets
  auto dRic = covariant_derivative(pkg, ricJ, 1);
  MatrixXd boxRic = MatrixXd::Zero(n, n);
  for (int kap = 0; kap < n; ++kap)
    for (int lam = 0; lam < n; ++lam) {
      double gkl = gi(kap, lam);
      if (gkl == 0.0) continue;
      // nabla_kap (dRic[lam])_{mu nu} at x: derivative of a (0,3) tensor
      for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) {
          double v = dRic[lam].t[mu][nu].partial(kap);
          for (int rho = 0; rho < n; ++rho) {
            v -= pkg.christoffel[rho][kap][lam].value() * dRic[rho].t[mu][nu].value();
            v -= pkg.christoffel[rho][kap][mu].value() * dRic[lam].t[rho][nu].value();
            v -= pkg.christoffel[rho][kap][nu].value() * dRic[lam].t[mu][rho].value();
          }
          boxRic(mu, nu) += gkl * v;
        }
    }

  // R_{mu alpha nu beta} R^{alpha beta}
  MatrixXd ricUp = gi * ric * gi;  // R^{alpha beta}
  MatrixXd riemRic = MatrixXd::Zero(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      double acc = 0.0;
      for (int al = 0; al < n; ++al)
        for (int be = 0; be < n; ++be) {
          // R_{mu al nu be} = g_{mu rho} R^rho_{al nu be}
          double r = 0.0;
          for (int rho = 0; rho < n; ++rho)
            r += g(mu, rho) * pkg.riemann[rho][al][nu][be].value();
          acc += r * ricUp(al, be);
        }
      riemRic(mu, nu) = acc;
    }

  double ric2 = (ric * ricUp.transpose()).trace();  // R_{ab} R^{ab}
  // contraction: sum_{mu nu} ric(mu,nu) ricUp(mu,nu)
  ric2 = (ric.array() * ricUp.array()).sum();

  AmbiguityTensors out;
  out.I = 2.0 * R * ric - 0.5 * R * R * g + 2.0 * boxR * g - 2.0 * hessR;
  out.J = boxRic + 0.5 * boxR * g - hessR - 0.5 * ric2 * g + 2.0 * riemRic;
  double mv = pkg.m_val();
  out.mG = mv * mv * (ric - 0.5 * R * g);
  out.m4g = std::pow(mv, 4) * g;
  return out;
}

VectorXd covariant_divergence(
    const BackgroundSpec& bg, std::span<const double> x,
    const std::function<MatrixXd(const VectorXd&)>& field, double step) {
  int n = bg.n;
  VectorXd xv(n);
  for (int i = 0; i < n; ++i) xv(i) = x[i];
  auto Gam = christoffel_values(bg, x);
  std::vector<std::vector<Jet>> gj(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gj[i][j] = bg.metric_jet(i, j, x, 0);
  MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = gj[i][j].value();
  MatrixXd gi = g.inverse();

  MatrixXd T0 = field(xv);
  std::vector<MatrixXd> dT(n);
  for (int lam = 0; lam < n; ++lam) {
    VectorXd xp = xv, xm = xv;
    xp(lam) += step;
    xm(lam) -= step;
    dT[lam] = (field(xp) - field(xm)) / (2.0 * step);
  }
  VectorXd div = VectorXd::Zero(n);
  for (int nu = 0; nu < n; ++nu) {
    double acc = 0.0;
    for (int mu = 0; mu < n; ++mu)
      for (int lam = 0; lam < n; ++lam) {
        double w = gi(mu, lam);
        if (w == 0.0) continue;
        double v = dT[lam](mu, nu);
        for (int rho = 0; rho < n; ++rho) {
          v -= Gam[rho](lam, mu) * T0(rho, nu);
          v -= Gam[rho](lam, nu) * T0(mu, rho);
        }
        acc += w * v;
      }
    div(nu) = acc;
  }
  return div;
}

}  // namespace hdirac
