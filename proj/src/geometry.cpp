#include "hdirac/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace hdirac {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cd = std::complex<double>;

// ---------------------------------------------------------------------------
// MatJet

MatJet::MatJet(int n, std::shared_ptr<const JetSpace> sp, bool identity) : N(n) {
  e.assign(N * N, CJet(sp));
  if (identity)
    for (int i = 0; i < N; ++i) at(i, i) = CJet::constant(sp, cd(1.0, 0.0));
}

MatJet MatJet::from_value(const Eigen::MatrixXcd& M, std::shared_ptr<const JetSpace> sp) {
  MatJet r(static_cast<int>(M.rows()), sp);
  for (int i = 0; i < r.N; ++i)
    for (int j = 0; j < r.N; ++j) r.at(i, j) = CJet::constant(sp, M(i, j));
  return r;
}

Eigen::MatrixXcd MatJet::value() const {
  MatrixXcd M(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) M(i, j) = at(i, j).value();
  return M;
}

Eigen::MatrixXcd MatJet::partial(int mu) const {
  MatrixXcd M(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) M(i, j) = at(i, j).partial(mu);
  return M;
}

MatJet MatJet::derivative(int mu) const {
  MatJet r(N, JetSpace::get(space()->nvars(), space()->order() - 1));
  for (int k = 0; k < N * N; ++k) r.e[k] = e[k].derivative(mu);
  return r;
}

MatJet MatJet::truncated(int order) const {
  MatJet r(N, JetSpace::get(space()->nvars(), order));
  for (int k = 0; k < N * N; ++k) r.e[k] = e[k].truncated(order);
  return r;
}

MatJet MatJet::operator+(const MatJet& o) const {
  MatJet r = *this;
  for (int k = 0; k < N * N; ++k) r.e[k] += o.e[k];
  return r;
}
MatJet MatJet::operator-(const MatJet& o) const {
  MatJet r = *this;
  for (int k = 0; k < N * N; ++k) r.e[k] -= o.e[k];
  return r;
}
MatJet MatJet::operator*(const MatJet& o) const {
  MatJet r(N, space());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      CJet acc(space());
      for (int k = 0; k < N; ++k) acc += at(i, k) * o.at(k, j);
      r.at(i, j) = acc;
    }
  return r;
}
MatJet MatJet::scaled(const std::complex<double>& c) const {
  MatJet r = *this;
  for (auto& x : r.e) x *= c;
  return r;
}
MatJet MatJet::scaled_jet(const CJet& c) const {
  MatJet r(N, space());
  for (int k = 0; k < N * N; ++k) r.e[k] = e[k] * c;
  return r;
}

SpinJet matjet_apply(const MatJet& M, const SpinJet& v) {
  SpinJet r(M.N, CJet(M.space()));
  for (int i = 0; i < M.N; ++i) {
    CJet acc(M.space());
    for (int j = 0; j < M.N; ++j) acc += M.at(i, j) * v[j];
    r[i] = acc;
  }
  return r;
}

CospinJet matjet_apply_right(const CospinJet& v, const MatJet& M) {
  CospinJet r(M.N, CJet(M.space()));
  for (int j = 0; j < M.N; ++j) {
    CJet acc(M.space());
    for (int i = 0; i < M.N; ++i) acc += v[i] * M.at(i, j);
    r[j] = acc;
  }
  return r;
}

// ---------------------------------------------------------------------------
// helpers

static Jet to_order(const Jet& j, int order) {
  return j.space()->order() == order ? j : j.truncated(order);
}

static std::vector<std::vector<Jet>> invert_jet_matrix(std::vector<std::vector<Jet>> M) {
  int n = static_cast<int>(M.size());
  auto sp = M[0][0].space();
  std::vector<std::vector<Jet>> inv(n, std::vector<Jet>(n, Jet(sp)));
  for (int i = 0; i < n; ++i) inv[i][i] = Jet::constant(sp, 1.0);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(M[r][col].value()) > std::abs(M[piv][col].value())) piv = r;
    if (std::abs(M[piv][col].value()) < 1e-14) throw EvalError("degenerate metric");
    std::swap(M[piv], M[col]);
    std::swap(inv[piv], inv[col]);
    Jet ip = reciprocal(M[col][col]);
    for (int j = 0; j < n; ++j) {
      M[col][j] = M[col][j] * ip;
      inv[col][j] = inv[col][j] * ip;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      Jet f = M[r][col];
      for (int j = 0; j < n; ++j) {
        M[r][j] -= f * M[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Lorentzian Gram-Schmidt, time direction first.
static std::vector<std::vector<Jet>> build_frame(const std::vector<std::vector<Jet>>& g) {
  int n = static_cast<int>(g.size());
  auto sp = g[0][0].space();
  std::vector<std::vector<Jet>> e(n, std::vector<Jet>(n, Jet(sp)));
  for (int a = 0; a < n; ++a) {
    std::vector<Jet> u(n, Jet(sp));
    u[a] = Jet::constant(sp, 1.0);
    for (int b = 0; b < a; ++b) {
      Jet c(sp);
      for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) c += g[mu][nu] * e[b][mu] * u[nu];
      double eta_bb = (b == 0) ? -1.0 : 1.0;
      for (int mu = 0; mu < n; ++mu) u[mu] -= (eta_bb * c) * e[b][mu];
    }
    Jet norm2(sp);
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) norm2 += g[mu][nu] * u[mu] * u[nu];
    if (a == 0) norm2 = -norm2;
    if (norm2.value() <= 0.0) throw EvalError("metric signature not (-,+,...,+) at frame point");
    Jet inv_norm = reciprocal(jet_sqrt(norm2));
    for (int mu = 0; mu < n; ++mu) e[a][mu] = u[mu] * inv_norm;
  }
  return e;
}

// ---------------------------------------------------------------------------
// curvature package

static CurvaturePackage build_package(const BackgroundSpec& bg, std::span<const double> x,
                                      const GammaRep& rep, int order, bool with_curvature) {
  if (order < 2) order = 2;
  CurvaturePackage P;
  P.n = bg.n;
  P.x.assign(x.begin(), x.end());
  P.order = order;
  int n = bg.n;
  const int N = rep.N;

  P.g.assign(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) P.g[i][j] = bg.metric_jet(i, j, x, order);
  P.ginv = invert_jet_matrix(P.g);

  int p1 = order - 1;
  auto sp1 = JetSpace::get(n, p1);

  // Christoffels at order p-1
  P.christoffel.assign(n, std::vector<std::vector<Jet>>(n, std::vector<Jet>(n, Jet(sp1))));
  {
    std::vector<std::vector<std::vector<Jet>>> dg(n);  // dg[rho][mu][nu] = d_rho g_{mu nu}
    for (int r = 0; r < n; ++r) {
      dg[r].assign(n, std::vector<Jet>(n, Jet(sp1)));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) dg[r][i][j] = P.g[i][j].derivative(r);
    }
    for (int lam = 0; lam < n; ++lam)
      for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) {
          Jet acc(sp1);
          for (int rho = 0; rho < n; ++rho) {
            Jet gi = to_order(P.ginv[lam][rho], p1);
            acc += gi * (dg[mu][rho][nu] + dg[nu][rho][mu] - dg[rho][mu][nu]);
          }
          P.christoffel[lam][mu][nu] = 0.5 * acc;
        }
  }

  P.frame = build_frame(P.g);
  // coframe e^a_mu = eta^{ab} g_{mu nu} e_b^nu
  P.coframe.assign(n, std::vector<Jet>(n));
  for (int a = 0; a < n; ++a)
    for (int mu = 0; mu < n; ++mu) {
      Jet acc(P.g[0][0].space());
      for (int nu = 0; nu < n; ++nu) acc += P.g[mu][nu] * P.frame[a][nu];
      P.coframe[a][mu] = (a == 0 ? -1.0 : 1.0) * acc;
    }

  // spin connection sigma_mu = 1/4 omega_{mu a b} gamma^a gamma^b, order p-1
  P.sigma.assign(n, MatJet(N, sp1));
  for (int mu = 0; mu < n; ++mu) {
    MatJet sig(N, sp1);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        // omega_mu^a_b = e^a_nu (d_mu e_b^nu + Gamma^nu_{mu lam} e_b^lam)
        Jet om(sp1);
        for (int nu = 0; nu < n; ++nu) {
          Jet cov = P.frame[b][nu].derivative(mu);
          for (int lam = 0; lam < n; ++lam)
            cov += P.christoffel[nu][mu][lam] * to_order(P.frame[b][lam], p1);
          om += to_order(P.coframe[a][nu], p1) * cov;
        }
        double eta_aa = (a == 0) ? -1.0 : 1.0;
        MatrixXcd gago = rep.gamma[a] * rep.gamma[b];
        sig = sig + MatJet::from_value(0.25 * eta_aa * gago, sp1).scaled_jet(to_complex(om));
      }
    P.sigma[mu] = sig;
  }

  P.Apot.resize(n);
  for (int mu = 0; mu < n; ++mu) P.Apot[mu] = bg.A_jet(mu, x, order);
  P.F.assign(n, std::vector<Jet>(n, Jet(sp1)));
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu)
      P.F[mu][nu] = P.Apot[nu].derivative(mu) - P.Apot[mu].derivative(nu);

  P.m = bg.m_jet(x, order);

  if (with_curvature) {
    int p2 = order - 2;
    auto sp2 = JetSpace::get(n, p2);
    P.riemann.assign(
        n, std::vector<std::vector<std::vector<Jet>>>(
               n, std::vector<std::vector<Jet>>(n, std::vector<Jet>(n, Jet(sp2)))));
    for (int rho = 0; rho < n; ++rho)
      for (int sig = 0; sig < n; ++sig)
        for (int mu = 0; mu < n; ++mu)
          for (int nu = 0; nu < n; ++nu) {
            Jet acc = P.christoffel[rho][nu][sig].derivative(mu) -
                      P.christoffel[rho][mu][sig].derivative(nu);
            for (int lam = 0; lam < n; ++lam)
              acc += to_order(P.christoffel[rho][mu][lam], p2) *
                         to_order(P.christoffel[lam][nu][sig], p2) -
                     to_order(P.christoffel[rho][nu][lam], p2) *
                         to_order(P.christoffel[lam][mu][sig], p2);
            P.riemann[rho][sig][mu][nu] = acc;
          }
    P.ricci.assign(n, std::vector<Jet>(n, Jet(sp2)));
    for (int sig = 0; sig < n; ++sig)
      for (int nu = 0; nu < n; ++nu) {
        Jet acc(sp2);
        for (int mu = 0; mu < n; ++mu) acc += P.riemann[mu][sig][mu][nu];
        P.ricci[sig][nu] = acc;
      }
    Jet R(sp2);
    for (int sig = 0; sig < n; ++sig)
      for (int nu = 0; nu < n; ++nu) R += to_order(P.ginv[sig][nu], p2) * P.ricci[sig][nu];
    P.ricci_scalar = R;

    P.spin_curvature.assign(n, std::vector<MatJet>(n, MatJet(N, sp2)));
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) {
        MatJet r = P.sigma[nu].derivative(mu) - P.sigma[mu].derivative(nu);
        MatJet smu = P.sigma[mu].truncated(p2), snu = P.sigma[nu].truncated(p2);
        r = r + smu * snu - snu * smu;
        P.spin_curvature[mu][nu] = r;
      }
  }
  return P;
}

CurvaturePackage curvature_package(const BackgroundSpec& bg, std::span<const double> x,
                                   const GammaRep& rep, int order) {
  return build_package(bg, x, rep, order, true);
}

MatrixXd CurvaturePackage::g_val() const {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = g[i][j].value();
  return M;
}
MatrixXd CurvaturePackage::ginv_val() const {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = ginv[i][j].value();
  return M;
}
MatrixXd CurvaturePackage::F_val() const {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = F[i][j].value();
  return M;
}
VectorXd CurvaturePackage::dm_val() const {
  VectorXd v(n);
  for (int mu = 0; mu < n; ++mu) v(mu) = m.partial(mu);
  return v;
}
MatrixXd CurvaturePackage::hessian_m() const {
  MatrixXd h(n, n);
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      double v = m.partial(mu, nu);
      for (int lam = 0; lam < n; ++lam) v -= christoffel[lam][mu][nu].value() * m.partial(lam);
      h(mu, nu) = v;
    }
  return h;
}
double CurvaturePackage::box_m() const {
  MatrixXd h = hessian_m();
  MatrixXd gi = ginv_val();
  return (gi * h).trace();
}

std::vector<MatrixXcd> CurvaturePackage::gamma_chart(const GammaRep& rep) const {
  std::vector<MatrixXcd> out(n, MatrixXcd::Zero(rep.N, rep.N));
  for (int mu = 0; mu < n; ++mu)
    for (int a = 0; a < n; ++a) out[mu] += frame[a][mu].value() * rep.gamma[a];
  return out;
}

std::vector<MatJet> CurvaturePackage::gamma_chart_jet(const GammaRep& rep) const {
  auto sp = g[0][0].space();
  std::vector<MatJet> out(n, MatJet(rep.N, sp));
  for (int mu = 0; mu < n; ++mu) {
    MatJet acc(rep.N, sp);
    for (int a = 0; a < n; ++a)
      acc = acc + MatJet::from_value(rep.gamma[a], sp).scaled_jet(to_complex(frame[a][mu]));
    out[mu] = acc;
  }
  return out;
}

std::vector<MatrixXcd> CurvaturePackage::div_spin_curvature() const {
  // del^lam r_{mu lam} = g^{lam nu} (d_nu r_{mu lam} + [sigma_nu, r_{mu lam}]
  //                     - Gamma^rho_{nu mu} r_{rho lam} - Gamma^rho_{nu lam} r_{mu rho})
  int N = sigma[0].N;
  std::vector<MatrixXcd> out(n, MatrixXcd::Zero(N, N));
  for (int mu = 0; mu < n; ++mu) {
    MatrixXcd acc = MatrixXcd::Zero(N, N);
    for (int lam = 0; lam < n; ++lam)
      for (int nu = 0; nu < n; ++nu) {
        double gi = ginv[lam][nu].value();
        if (gi == 0.0) continue;
        MatrixXcd term = spin_curvature[mu][lam].partial(nu);
        MatrixXcd sv = sigma[nu].value(), rv = spin_curvature[mu][lam].value();
        term += sv * rv - rv * sv;
        for (int rho = 0; rho < n; ++rho) {
          term -= christoffel[rho][nu][mu].value() * spin_curvature[rho][lam].value();
          term -= christoffel[rho][nu][lam].value() * spin_curvature[mu][rho].value();
        }
        acc += gi * term;
      }
    out[mu] = acc;
  }
  return out;
}

VectorXd CurvaturePackage::div_F() const {
  VectorXd out = VectorXd::Zero(n);
  for (int mu = 0; mu < n; ++mu) {
    double acc = 0.0;
    for (int lam = 0; lam < n; ++lam)
      for (int nu = 0; nu < n; ++nu) {
        double gi = ginv[lam][nu].value();
        if (gi == 0.0) continue;
        double term = F[mu][lam].partial(nu);
        for (int rho = 0; rho < n; ++rho) {
          term -= christoffel[rho][nu][mu].value() * F[rho][lam].value();
          term -= christoffel[rho][nu][lam].value() * F[mu][rho].value();
        }
        acc += gi * term;
      }
    out(mu) = acc;
  }
  return out;
}

VectorXd CurvaturePackage::grad_R() const {
  VectorXd out(n);
  for (int mu = 0; mu < n; ++mu) out(mu) = ricci_scalar.partial(mu);
  return out;
}

std::vector<MatrixXd> CurvaturePackage::grad_F() const {
  std::vector<MatrixXd> out(n, MatrixXd::Zero(n, n));
  for (int mu = 0; mu < n; ++mu)
    for (int lam = 0; lam < n; ++lam)
      for (int rho = 0; rho < n; ++rho) {
        double v = F[lam][rho].partial(mu);
        for (int sig = 0; sig < n; ++sig) {
          v -= christoffel[sig][mu][lam].value() * F[sig][rho].value();
          v -= christoffel[sig][mu][rho].value() * F[lam][sig].value();
        }
        out[mu](lam, rho) = v;
      }
  return out;
}

std::vector<MatrixXd> christoffel_values(const BackgroundSpec& bg, std::span<const double> x) {
  int n = bg.n;
  std::vector<std::vector<Jet>> g(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g[i][j] = bg.metric_jet(i, j, x, 1);
  auto gi = invert_jet_matrix(g);
  std::vector<MatrixXd> out(n, MatrixXd::Zero(n, n));
  for (int lam = 0; lam < n; ++lam)
    for (int mu = 0; mu < n; ++mu)
      for (int nu = 0; nu < n; ++nu) {
        double acc = 0.0;
        for (int rho = 0; rho < n; ++rho)
          acc += gi[lam][rho].value() *
                 (g[rho][nu].partial(mu) + g[rho][mu].partial(nu) - g[mu][nu].partial(rho));
        out[lam](mu, nu) = 0.5 * acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// geodesics

GeodesicPath shoot_geodesic(const BackgroundSpec& bg, const VectorXd& x, const VectorXd& v,
                            int steps) {
  int n = bg.n;
  GeodesicPath path;
  path.ds = 1.0 / steps;
  path.pos.reserve(steps + 1);
  path.vel.reserve(steps + 1);
  if (bg.flat_chart()) {
    for (int k = 0; k <= steps; ++k) {
      path.pos.push_back(x + (k * path.ds) * v);
      path.vel.push_back(v);
    }
    return path;
  }
  auto accel = [&](const VectorXd& y, const VectorXd& u) {
    auto Gam = christoffel_values(bg, std::span<const double>(y.data(), n));
    VectorXd a = VectorXd::Zero(n);
    for (int lam = 0; lam < n; ++lam) a(lam) = -u.dot(Gam[lam] * u);
    return a;
  };
  VectorXd y = x, u = v;
  path.pos.push_back(y);
  path.vel.push_back(u);
  double h = path.ds;
  for (int k = 0; k < steps; ++k) {
    VectorXd k1y = u, k1u = accel(y, u);
    VectorXd k2y = u + 0.5 * h * k1u, k2u = accel(y + 0.5 * h * k1y, u + 0.5 * h * k1u);
    VectorXd k3y = u + 0.5 * h * k2u, k3u = accel(y + 0.5 * h * k2y, u + 0.5 * h * k2u);
    VectorXd k4y = u + h * k3u, k4u = accel(y + h * k3y, u + h * k3u);
    y += (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y);
    u += (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u);
    path.pos.push_back(y);
    path.vel.push_back(u);
  }
  return path;
}

VectorXd geodesic_inverse(const BackgroundSpec& bg, const VectorXd& x, const VectorXd& xp,
                          const GeoOptions& opt) {
  int n = bg.n;
  if (bg.flat_chart()) return xp - x;
  VectorXd v = xp - x;
  double scale = 1.0 + xp.norm();
  auto endpoint = [&](const VectorXd& w) { return shoot_geodesic(bg, x, w, opt.steps).pos.back(); };
  for (int it = 0; it < opt.max_newton; ++it) {
    VectorXd r = endpoint(v) - xp;
    if (r.norm() <= opt.tol * scale) return v;
    MatrixXd J(n, n);
    double h = 1e-7 * (1.0 + v.norm());
    for (int j = 0; j < n; ++j) {
      VectorXd vp = v;
      vp(j) += h;
      J.col(j) = (endpoint(vp) - xp - r) / h;
    }
    VectorXd dv = J.fullPivLu().solve(-r);
    if (!dv.allFinite() || dv.norm() < 1e-300) throw EvalError("geodesic shooting: step underflow");
    v += dv;
  }
  VectorXd r = endpoint(v) - xp;
  if (r.norm() <= 1e-9 * scale) return v;  // loose acceptance before giving up
  throw EvalError("geodesic shooting did not converge");
}

std::vector<MatrixXcd> spin_transport(const BackgroundSpec& bg, const GammaRep& rep,
                                      const GeodesicPath& path) {
  int n = bg.n;
  const int N = rep.N;
  const cd I(0.0, 1.0);

  auto coef = [&](const VectorXd& y, const VectorXd& u) -> MatrixXcd {
    // -(sigma_mu - i A_mu) u^mu
    CurvaturePackage P = build_package(bg, std::span<const double>(y.data(), n), rep, 2, false);
    MatrixXcd M = MatrixXcd::Zero(N, N);
    for (int mu = 0; mu < n; ++mu) {
      M -= u(mu) * P.sigma[mu].value();
      M += I * u(mu) * P.Apot[mu].value() * MatrixXcd::Identity(N, N);
    }
    return M;
  };

  int steps = static_cast<int>(path.pos.size()) - 1;
  double h = path.ds;
  std::vector<MatrixXcd> out;
  out.reserve(steps + 1);
  MatrixXcd U = MatrixXcd::Identity(N, N);
  out.push_back(U);
  for (int k = 0; k < steps; ++k) {
    // RK4 on U' = M(s) U with midpoint data interpolated
    VectorXd ym = 0.5 * (path.pos[k] + path.pos[k + 1]);
    VectorXd um = 0.5 * (path.vel[k] + path.vel[k + 1]);
    MatrixXcd M1 = coef(path.pos[k], path.vel[k]);
    MatrixXcd M2 = coef(ym, um);
    MatrixXcd M4 = coef(path.pos[k + 1], path.vel[k + 1]);
    MatrixXcd k1 = M1 * U;
    MatrixXcd k2 = M2 * (U + 0.5 * h * k1);
    MatrixXcd k3 = M2 * (U + 0.5 * h * k2);
    MatrixXcd k4 = M4 * (U + h * k3);
    U += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    out.push_back(U);
  }
  return out;
}

double box_world_function(const BackgroundSpec& bg, const VectorXd& y, const VectorXd& xp,
                          const GeoOptions& opt) {
  int n = bg.n;
  if (bg.flat_chart()) return -2.0 * n;
  double h = opt.boxgamma_step;
  double div = 0.0;
  for (int mu = 0; mu < n; ++mu) {
    VectorXd yp = y, ym = y;
    yp(mu) += h;
    ym(mu) -= h;
    VectorXd vp = geodesic_inverse(bg, yp, xp, opt);
    VectorXd vm = geodesic_inverse(bg, ym, xp, opt);
    div += (vp(mu) - vm(mu)) / (2.0 * h);
  }
  VectorXd v = geodesic_inverse(bg, y, xp, opt);
  auto Gam = christoffel_values(bg, std::span<const double>(y.data(), n));
  for (int mu = 0; mu < n; ++mu)
    for (int lam = 0; lam < n; ++lam) div += Gam[mu](mu, lam) * v(lam);
  return 2.0 * div;
}

GeodesicLink geodesic_connect(const BackgroundSpec& bg, const GammaRep& rep, const VectorXd& x,
                              const VectorXd& xp, const GeoOptions& opt) {
  int n = bg.n;
  GeodesicLink link;
  link.x = x;
  link.xp = xp;
  link.tangent = geodesic_inverse(bg, x, xp, opt);
  GeodesicPath path = shoot_geodesic(bg, x, link.tangent, opt.steps);
  link.bvp_residual = (path.pos.back() - xp).norm();

  MatrixXd gx(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      gx(i, j) = bg.metric_jet(i, j, std::span<const double>(x.data(), n), 0).value();
  link.world_function = -link.tangent.dot(gx * link.tangent);
  link.theta0 = x(0) - xp(0);
  link.midpoint = path.pos[path.pos.size() / 2];
  link.box_gamma = box_world_function(bg, x, xp, opt);

  if (bg.flat_chart()) {
    // straight line, vanishing spin connection: the transporter from x' to
    // x is the abelian line phase exp(i Int_{x'}^{x} A . dl)
    VectorXd d = x - xp;
    auto Aval = [&](double t) {
      VectorXd z = xp + t * d;
      double v = 0.0;
      for (int mu = 0; mu < n; ++mu)
        v += bg.A_jet(mu, std::span<const double>(z.data(), n), 0).value() * d(mu);
      return v;
    };
    bool const_A = true;
    for (const auto& a : bg.A)
      if (!a.is_constant()) const_A = false;
    double phase = 0.0;
    if (const_A) {
      phase = Aval(0.0);
    } else {
      int segs = 16;
      for (int s = 0; s < segs; ++s) {
        double a = double(s) / segs, b = double(s + 1) / segs;
        phase += ((b - a) / 6.0) * (Aval(a) + 4.0 * Aval(0.5 * (a + b)) + Aval(b));
      }
    }
    link.u_spin = std::polar(1.0, phase) * MatrixXcd::Identity(rep.N, rep.N);
    link.u_vec = MatrixXd::Identity(n, n);
    return link;
  }

  // forward transport x -> x', then invert to get fiber x' -> fiber x
  auto Us = spin_transport(bg, rep, path);
  link.u_spin = Us.back().inverse();

  // vector transport: W' = -Gamma(v) W columnwise
  if (bg.flat_chart()) {
    link.u_vec = MatrixXd::Identity(n, n);
  } else {
    MatrixXd W = MatrixXd::Identity(n, n);
    double h = path.ds;
    auto coef = [&](const VectorXd& y, const VectorXd& u) {
      auto Gam = christoffel_values(bg, std::span<const double>(y.data(), n));
      MatrixXd M = MatrixXd::Zero(n, n);
      for (int lam = 0; lam < n; ++lam)
        for (int nu = 0; nu < n; ++nu)
          for (int mu = 0; mu < n; ++mu) M(lam, nu) -= Gam[lam](mu, nu) * u(mu);
      return M;
    };
    int steps = static_cast<int>(path.pos.size()) - 1;
    for (int k = 0; k < steps; ++k) {
      VectorXd ym = 0.5 * (path.pos[k] + path.pos[k + 1]);
      VectorXd um = 0.5 * (path.vel[k] + path.vel[k + 1]);
      MatrixXd M1 = coef(path.pos[k], path.vel[k]);
      MatrixXd M2 = coef(ym, um);
      MatrixXd M4 = coef(path.pos[k + 1], path.vel[k + 1]);
      MatrixXd k1 = M1 * W;
      MatrixXd k2 = M2 * (W + 0.5 * h * k1);
      MatrixXd k3 = M2 * (W + 0.5 * h * k2);
      MatrixXd k4 = M4 * (W + h * k3);
      W += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    link.u_vec = W.inverse();
  }
  return link;
}

// ---------------------------------------------------------------------------
// Dirac operators

static SpinJet covariant_derivative_spinor(const CurvaturePackage& pkg, const SpinJet& field,
                                           int mu, int out_order) {
  auto sp = JetSpace::get(pkg.n, out_order);
  const cd I(0.0, 1.0);
  int N = static_cast<int>(field.size());
  SpinJet out(N, CJet(sp));
  MatJet sig = pkg.sigma[mu].truncated(out_order);
  CJet Aj = to_complex(pkg.Apot[mu].truncated(out_order));
  for (int i = 0; i < N; ++i) {
    CJet acc = field[i].derivative(mu).truncated(out_order);
    for (int j = 0; j < N; ++j) acc += sig.at(i, j) * field[j].truncated(out_order);
    acc -= (I * Aj) * field[i].truncated(out_order);
    out[i] = acc;
  }
  return out;
}

static CospinJet covariant_derivative_cospinor(const CurvaturePackage& pkg, const CospinJet& field,
                                               int mu, int out_order) {
  auto sp = JetSpace::get(pkg.n, out_order);
  const cd I(0.0, 1.0);
  int N = static_cast<int>(field.size());
  CospinJet out(N, CJet(sp));
  MatJet sig = pkg.sigma[mu].truncated(out_order);
  CJet Aj = to_complex(pkg.Apot[mu].truncated(out_order));
  for (int j = 0; j < N; ++j) {
    CJet acc = field[j].derivative(mu).truncated(out_order);
    for (int i = 0; i < N; ++i) acc -= field[i].truncated(out_order) * sig.at(i, j);
    acc += (I * Aj) * field[j].truncated(out_order);
    out[j] = acc;
  }
  return out;
}

SpinJet dirac_apply_jet(const CurvaturePackage& pkg, const GammaRep& rep, const SpinJet& field,
                        DiracVariant variant) {
  if (variant == DiracVariant::DStar || variant == DiracVariant::DTildeStar)
    throw EvalError("starred variants act on cospinors");
  int q = field[0].space()->order();
  if (q < 1) throw EvalError("dirac_apply: field jet order must be >= 1");
  int out_order = q - 1;
  auto sp = JetSpace::get(pkg.n, out_order);
  const int N = rep.N;
  auto gammas = pkg.gamma_chart_jet(rep);
  SpinJet out(N, CJet(sp));
  for (int mu = 0; mu < pkg.n; ++mu) {
    SpinJet dmu = covariant_derivative_spinor(pkg, field, mu, out_order);
    SpinJet gd = matjet_apply(gammas[mu].truncated(out_order), dmu);
    for (int i = 0; i < N; ++i) out[i] -= gd[i];
  }
  double ms = (variant == DiracVariant::D) ? 1.0 : -1.0;
  CJet mj = to_complex(pkg.m.truncated(out_order));
  for (int i = 0; i < N; ++i) out[i] += (ms * mj) * field[i].truncated(out_order);
  return out;
}

CospinJet dirac_apply_jet_cospinor(const CurvaturePackage& pkg, const GammaRep& rep,
                                   const CospinJet& field, DiracVariant variant) {
  if (variant == DiracVariant::D || variant == DiracVariant::DTilde)
    throw EvalError("unstarred variants act on spinors");
  int q = field[0].space()->order();
  if (q < 1) throw EvalError("dirac_apply: field jet order must be >= 1");
  int out_order = q - 1;
  auto sp = JetSpace::get(pkg.n, out_order);
  const int N = rep.N;
  auto gammas = pkg.gamma_chart_jet(rep);
  CospinJet out(N, CJet(sp));
  for (int mu = 0; mu < pkg.n; ++mu) {
    CospinJet dmu = covariant_derivative_cospinor(pkg, field, mu, out_order);
    CospinJet dg = matjet_apply_right(dmu, gammas[mu].truncated(out_order));
    for (int i = 0; i < N; ++i) out[i] += dg[i];
  }
  double ms = (variant == DiracVariant::DStar) ? 1.0 : -1.0;
  CJet mj = to_complex(pkg.m.truncated(out_order));
  for (int i = 0; i < N; ++i) out[i] += (ms * mj) * field[i].truncated(out_order);
  return out;
}

Eigen::VectorXcd dirac_apply(const CurvaturePackage& pkg, const GammaRep& rep,
                             const SpinJet& field, DiracVariant variant) {
  if (variant == DiracVariant::DStar || variant == DiracVariant::DTildeStar) {
    CospinJet r = dirac_apply_jet_cospinor(pkg, rep, field, variant);
    VectorXcd v(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) v(i) = r[i].value();
    return v;
  }
  SpinJet r = dirac_apply_jet(pkg, rep, field, variant);
  VectorXcd v(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) v(i) = r[i].value();
  return v;
}

Eigen::VectorXcd apply_P_direct(const CurvaturePackage& pkg, const GammaRep& rep,
                                const SpinJet& field) {
  int q = field[0].space()->order();
  if (q < 2) throw EvalError("apply_P_direct: field jet order must be >= 2");
  const int n = pkg.n;
  const int N = rep.N;
  const cd I(0.0, 1.0);

  // first covariant derivatives as jets of order q-1
  std::vector<SpinJet> d1(n);
  for (int mu = 0; mu < n; ++mu) d1[mu] = covariant_derivative_spinor(pkg, field, mu, q - 1);

  VectorXcd val = VectorXcd::Zero(N);
  // -g^{mu nu} (d_mu (nabla_nu psi) + (sigma_mu - iA_mu)(nabla_nu psi)
  //            - Gamma^lam_{mu nu} nabla_lam psi)
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu) {
      double gi = pkg.ginv[mu][nu].value();
      if (gi == 0.0) continue;
      VectorXcd hess(N);
      MatrixXcd sig = pkg.sigma[mu].value();
      for (int i = 0; i < N; ++i) {
        cd acc = d1[nu][i].partial(mu);
        for (int j = 0; j < N; ++j) acc += sig(i, j) * d1[nu][j].value();
        acc -= I * pkg.Apot[mu].value() * d1[nu][i].value();
        for (int lam = 0; lam < n; ++lam)
          acc -= pkg.christoffel[lam][mu][nu].value() * d1[lam][i].value();
        hess(i) = acc;
      }
      val -= gi * hess;
    }

  VectorXcd f0(N);
  for (int i = 0; i < N; ++i) f0(i) = field[i].value();

  val += 0.25 * pkg.R() * f0;

  auto gammas = pkg.gamma_chart(rep);
  MatrixXcd comm = MatrixXcd::Zero(N, N);
  MatrixXd Fv = pkg.F_val();
  for (int mu = 0; mu < n; ++mu)
    for (int nu = 0; nu < n; ++nu)
      if (Fv(mu, nu) != 0.0)
        comm += Fv(mu, nu) * (gammas[mu] * gammas[nu] - gammas[nu] * gammas[mu]);
  val += (I * 0.25) * (comm * f0);

  double mv = pkg.m_val();
  val += mv * mv * f0;

  VectorXd dm = pkg.dm_val();
  MatrixXcd gdm = MatrixXcd::Zero(N, N);
  for (int mu = 0; mu < n; ++mu) gdm += dm(mu) * gammas[mu];
  val -= gdm * f0;

  return val;
}

Eigen::MatrixXcd apply_P_matrix(const CurvaturePackage& pkg, const GammaRep& rep,
                                const MatJet& field) {
  const int N = field.N;
  MatrixXcd out(N, N);
  for (int j = 0; j < N; ++j) {
    SpinJet col(N);
    for (int i = 0; i < N; ++i) col[i] = field.at(i, j);
    VectorXcd r = apply_P_direct(pkg, rep, col);
    out.col(j) = r;
  }
  return out;
}

}  // namespace hdirac
