// Command-line driver: wires background files into the geometry, parametrix,
// state, observable, and scaling pipelines, with machine-readable output.
// Exit codes: 0 ok, 1 tolerance violation, 2 parse/usage error,
// 3 convergence failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <random>
#include <iomanip>
#include <iostream>

#include "hdirac/grassmann.hpp"
#include "hdirac/observables.hpp"
#include "hdirac/scaling.hpp"
#include "hdirac/version.hpp"

using namespace hdirac;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using nlohmann::json;
using cd = std::complex<double>;

namespace {

json matrix_json(const MatrixXcd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back({M(i, j).real(), M(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

json matrix_json(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

VectorXd parse_point(const std::string& s, int n) {
  VectorXd p(n);
  std::stringstream ss(s);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= n) throw std::runtime_error("point has too many components: " + s);
    p(i++) = std::stod(tok);
  }
  if (i != n) throw std::runtime_error("point needs " + std::to_string(n) + " components: " + s);
  return p;
}

void emit(const json& j, const std::string& out_path) {
  std::ostringstream os;
  os << std::setw(2) << j << "\n";
  if (out_path.empty())
    std::cout << os.str();
  else {
    std::ofstream f(out_path);
    f << os.str();
  }
}

void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else {
    std::ofstream f(out_path);
    f << text;
  }
}

json config_echo(const json& config) {
  json j;
  j["version"] = HDIRAC_VERSION;
  j["config"] = config;
  return j;
}

PointSplitOptions default_split(double L, double lambda) {
  PointSplitOptions split;
  split.separations = {L / 8.0, L / 12.0, L / 16.0, L / 24.0, L / 32.0, L / 48.0};
  split.lambda = lambda;
  split.transport.steps = 16;
  split.transport.source_nodes = 8;
  return split;
}

std::vector<WickData> run_grid(const BackgroundSpec& bg, const GammaRep& rep, int cutoff,
                               int grid, double lambda) {
  auto circle = UltrastaticCircle::from_background(bg);
  ModeBasis basis = build_modes(circle, cutoff);
  StateKernel state(basis, rep);
  GridOptions gopt;
  gopt.grid = grid;
  gopt.split = default_split(circle.L, lambda);
  if (auto menu = scalar_menu(bg, rep)) gopt.split.delta_h = *menu;
  return wick_grid(state, bg, rep, gopt);
}

void require_power_of_two(int cutoff) {
  if (cutoff < 8 || (cutoff & (cutoff - 1)) != 0)
    throw std::runtime_error("cutoff must be a power of two >= 8");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locally covariant Dirac renormalization toolkit"};
  app.require_subcommand(1);
  std::string out_path;
  app.add_option("--out", out_path, "output file (default stdout)");

  auto* cmd_gamma = app.add_subcommand("gamma", "gamma-matrix representation diagnostics");
  int gamma_dim = 4;
  bool gamma_check = false;
  cmd_gamma->add_option("--dim", gamma_dim, "spacetime dimension");
  cmd_gamma->add_flag("--check", gamma_check, "print the anticommutation residual");

  auto* cmd_geo = app.add_subcommand("geodesic", "geodesic link between two points");
  std::string geo_bg, geo_from, geo_to;
  cmd_geo->add_option("--bg", geo_bg, "background file")->required();
  cmd_geo->add_option("--from", geo_from, "first point t,x,...")->required();
  cmd_geo->add_option("--to", geo_to, "second point")->required();

  auto* cmd_v1 = app.add_subcommand("v1", "coinciding-point limits of the first coefficient");
  std::string v1_bg, v1_point;
  cmd_v1->add_option("--bg", v1_bg, "background file")->required();
  cmd_v1->add_option("--point", v1_point, "chart point t,x,...")->required();

  auto* cmd_par = app.add_subcommand("parametrix", "truncated parametrix at a point pair");
  std::string par_bg, par_x, par_xp;
  int par_kmax = 1;
  double par_lambda = 1.0;
  cmd_par->add_option("--bg", par_bg)->required();
  cmd_par->add_option("--x", par_x, "first point")->required();
  cmd_par->add_option("--xp", par_xp, "second point")->required();
  cmd_par->add_option("--kmax", par_kmax, "truncation order (0 or 1)");
  cmd_par->add_option("--lambda", par_lambda, "length scale");

  auto* cmd_state = app.add_subcommand("state", "two-point kernels at point pairs");
  std::string state_bg, state_pairs;
  int state_cutoff = 1024;
  cmd_state->add_option("--bg", state_bg)->required();
  cmd_state->add_option("--cutoff", state_cutoff, "mode cutoff (power of two)");
  cmd_state->add_option("--pairs", state_pairs, "pairs t,x;t,x separated by '|'")->required();

  auto* cmd_cur = app.add_subcommand("current", "renormalized current on a circle grid");
  auto* cmd_str = app.add_subcommand("stress", "renormalized stress-energy on a circle grid");
  auto* cmd_con = app.add_subcommand("conserve", "conservation residuals and corrections");
  std::string obs_bg;
  int obs_cutoff = 512, obs_grid = 64;
  double obs_lambda = 1.0, obs_tol = 1e-6;
  bool obs_correct = false;
  for (auto* c : {cmd_cur, cmd_str, cmd_con}) {
    c->add_option("--bg", obs_bg)->required();
    c->add_option("--cutoff", obs_cutoff);
    c->add_option("--grid", obs_grid);
    c->add_option("--lambda", obs_lambda);
  }
  cmd_con->add_option("--tol", obs_tol, "divergence tolerance");
  cmd_con->add_flag("--correct", obs_correct, "apply the measured current correction");

  auto* cmd_alg = app.add_subcommand("algebra-check", "exhaustive finite-mode identity suite");

  auto* cmd_rg = app.add_subcommand("rg", "scaling coefficient monomial decomposition");
  auto* cmd_sc = app.add_subcommand("scaling", "wick-square scaling across rescaled circles");
  std::string sc_bg, sc_lambdas = "0.8,0.9,1.0,1.15,1.3";
  int sc_cutoff = 1024;
  cmd_sc->add_option("--bg", sc_bg)->required();
  cmd_sc->add_option("--cutoff", sc_cutoff);
  cmd_sc->add_option("--lambdas", sc_lambdas, "comma-separated scale factors");

  auto* cmd_cas = app.add_subcommand("casimir", "circle energy density against the zeta oracle");
  double cas_L = 1.0, cas_tol = 1e-6;
  int cas_cutoff = 4096;
  std::string cas_spin = "antiperiodic";
  cmd_cas->add_option("--L", cas_L, "circumference");
  cmd_cas->add_option("--cutoff", cas_cutoff);
  cmd_cas->add_option("--spin", cas_spin, "periodic | antiperiodic");
  cmd_cas->add_option("--tol", cas_tol);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_gamma) {
      GammaRep rep = build_gamma(gamma_dim);
      json j = config_echo({{"dim", gamma_dim}, {"check", gamma_check}});
      j["spinor_dimension"] = rep.N;
      if (gamma_check) j["max_anticommutation_residual"] = anticommutation_residual(rep);
      emit(j, out_path);
      return 0;
    }

    if (*cmd_geo) {
      auto bg = BackgroundSpec::load(geo_bg);
      GammaRep rep = build_gamma(bg.n);
      VectorXd x = parse_point(geo_from, bg.n), xp = parse_point(geo_to, bg.n);
      GeodesicLink link = geodesic_connect(bg, rep, x, xp);
      json j = config_echo({{"bg", geo_bg}, {"from", geo_from}, {"to", geo_to}});
      j["world_function"] = link.world_function;
      j["theta0"] = link.theta0;
      j["box_gamma"] = link.box_gamma;
      j["bvp_residual"] = link.bvp_residual;
      j["tangent"] = std::vector<double>(link.tangent.data(), link.tangent.data() + bg.n);
      j["midpoint"] = std::vector<double>(link.midpoint.data(), link.midpoint.data() + bg.n);
      j["u_spin"] = matrix_json(link.u_spin);
      j["u_vec"] = matrix_json(MatrixXd(link.u_vec));
      emit(j, out_path);
      return 0;
    }

    if (*cmd_v1) {
      auto bg = BackgroundSpec::load(v1_bg);
      GammaRep rep = build_gamma(bg.n);
      VectorXd x = parse_point(v1_point, bg.n);
      auto lim = coinciding_V1(bg, rep, std::span<const double>(x.data(), bg.n));
      json j = config_echo({{"bg", v1_bg}, {"point", v1_point}});
      j["V1_limit"] = matrix_json(lim.V1);
      json grads = json::array();
      for (auto& g : lim.gradV1) grads.push_back(matrix_json(g));
      j["gradV1_limit"] = grads;
      emit(j, out_path);
      return 0;
    }

    if (*cmd_par) {
      auto bg = BackgroundSpec::load(par_bg);
      GammaRep rep = build_gamma(bg.n);
      VectorXd x = parse_point(par_x, bg.n), xp = parse_point(par_xp, bg.n);
      TransportOptions opt;
      opt.steps = 16;
      opt.source_nodes = 8;
      ParametrixEval ev = assemble_parametrix(bg, rep, x, xp, par_kmax, par_lambda, nullptr, opt);
      json j = config_echo({{"bg", par_bg},
                            {"x", par_x},
                            {"xp", par_xp},
                            {"kmax", par_kmax},
                            {"lambda", par_lambda}});
      j["gamma"] = ev.fwd.gamma_val;
      j["theta0"] = ev.fwd.theta0;
      j["h_plus"] = matrix_json(ev.fwd.h_plus);
      j["h_minus"] = matrix_json(ev.fwd.h_minus);
      j["H_plus"] = matrix_json(ev.fwd.H_plus);
      j["H_minus"] = matrix_json(ev.fwd.H_minus);
      j["H_double_cs"] = matrix_json(ev.H_double.cs);
      j["H_double_sc"] = matrix_json(ev.H_double.sc);
      j["remainder_r"] = matrix_json(ev.remainder_r);
      emit(j, out_path);
      return 0;
    }

    if (*cmd_state) {
      require_power_of_two(state_cutoff);
      auto bg = BackgroundSpec::load(state_bg);
      GammaRep rep = build_gamma(2);
      auto circle = UltrastaticCircle::from_background(bg);
      ModeBasis basis = build_modes(circle, state_cutoff);
      StateKernel state(basis, rep);
      std::vector<std::pair<VectorXd, VectorXd>> pairs;
      std::stringstream ss(state_pairs);
      std::string tok;
      while (std::getline(ss, tok, '|')) {
        auto semi = tok.find(';');
        if (semi == std::string::npos) throw std::runtime_error("pair needs 'x;y': " + tok);
        pairs.emplace_back(parse_point(tok.substr(0, semi), 2),
                           parse_point(tok.substr(semi + 1), 2));
      }
      auto samples = state_kernels(state, pairs);
      std::ostringstream csv;
      csv << "pair,component,re,im\n" << std::setprecision(15);
      for (std::size_t k = 0; k < samples.pairs.size(); ++k) {
        MatrixXcd P = samples.omega[k].pair();
        for (int i = 0; i < P.rows(); ++i)
          for (int j = 0; j < P.cols(); ++j)
            csv << k << ",omega[" << i << "][" << j << "]," << P(i, j).real() << ","
                << P(i, j).imag() << "\n";
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            csv << k << ",S[" << i << "][" << j << "]," << samples.S[k](i, j).real() << ","
                << samples.S[k](i, j).imag() << "\n";
      }
      emit_text(csv.str(), out_path);
      return 0;
    }

    if (*cmd_cur || *cmd_str) {
      require_power_of_two(obs_cutoff);
      auto bg = BackgroundSpec::load(obs_bg);
      GammaRep rep = build_gamma(2);
      auto grid = run_grid(bg, rep, obs_cutoff, obs_grid, obs_lambda);
      std::ostringstream csv;
      csv << "point,component,value,error\n" << std::setprecision(15);
      bool unconverged = false;
      for (auto& wd : grid) {
        if (!wd.converged) unconverged = true;
        auto pkg = curvature_package(bg, std::span<const double>(wd.x.data(), 2), rep, 3);
        if (*cmd_cur) {
          VectorXd j = current(wd, pkg, rep);
          for (int mu = 0; mu < 2; ++mu)
            csv << wd.x(1) << ",j" << mu << "," << j(mu) << "," << wd.residual << "\n";
        } else {
          MatrixXd T = stress_energy(wd, pkg, rep);
          T += stress_ambiguity_shift(bg, std::span<const double>(wd.x.data(), 2), rep);
          for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
              csv << wd.x(1) << ",T" << mu << nu << "," << T(mu, nu) << "," << wd.residual
                  << "\n";
        }
      }
      emit_text(csv.str(), out_path);
      return unconverged ? 3 : 0;
    }

    if (*cmd_con) {
      require_power_of_two(obs_cutoff);
      auto bg = BackgroundSpec::load(obs_bg);
      GammaRep rep = build_gamma(2);
      auto circle = UltrastaticCircle::from_background(bg);
      auto grid = run_grid(bg, rep, obs_cutoff, obs_grid, obs_lambda);
      auto report = conservation_residual(grid, bg, rep, circle.L);
      json j = config_echo({{"bg", obs_bg},
                            {"cutoff", obs_cutoff},
                            {"grid", obs_grid},
                            {"correct", obs_correct},
                            {"tol", obs_tol}});
      j["max_div_j"] = report.max_div_j;
      j["max_div_T"] = report.max_div_T;
      double final_div = report.max_div_j;
      if (obs_correct) {
        auto Q = measure_Q(report.div_j, circle.L);
        ModeBasis basis = build_modes(circle, obs_cutoff);
        StateKernel state(basis, rep);
        GridOptions gopt;
        gopt.grid = obs_grid;
        gopt.split = default_split(circle.L, obs_lambda);
        gopt.split.delta_h = current_correction(Q, circle.L, rep);
        auto grid2 = wick_grid(state, bg, rep, gopt);
        auto report2 = conservation_residual(grid2, bg, rep, circle.L);
        j["max_div_j_corrected"] = report2.max_div_j;
        final_div = report2.max_div_j;
      }
      emit(j, out_path);
      return final_div <= obs_tol ? 0 : 1;
    }

    if (*cmd_alg) {
      // honest kernels: four double-spinor smearings on a massive circle
      GammaRep rep = build_gamma(2);
      auto circle = UltrastaticCircle::from_background(
          BackgroundSpec::circle(1.0, "0.6", 0.2, SpinStructure::Antiperiodic));
      ModeBasis basis = build_modes(circle, 64);
      StateOptions sopt;
      sopt.mode = SumMode::PlainWindowed;
      StateKernel state(basis, rep, sopt);

      const int M = 4;
      int qs[2] = {0, -1};
      int quad = 96;
      auto mode_u = [&](int which, bool cospinor) {
        std::vector<VectorXcd> vals(quad, VectorXcd::Zero(4));
        for (int g = 0; g < quad; ++g) {
          double x = g * 1.0 / quad;
          VectorXcd f = VectorXcd::Zero(2);
          f(which % 2) = std::polar(1.0, basis.k_of(qs[which / 2]) * x);
          VectorXcd u = VectorXcd::Zero(4);
          if (!cospinor)
            u.head(2) = f;
          else
            u.tail(2) = cd(0, -1) * rep.gamma[0].transpose() * f.conjugate();
          vals[g] = u;
        }
        return vals;
      };
      std::vector<std::vector<VectorXcd>> modes;
      for (int w = 0; w < 2; ++w) {
        modes.push_back(mode_u(w, false));
        modes.push_back(mode_u(w, true));
      }
      MatrixXcd S = MatrixXcd::Zero(M, M), W = MatrixXcd::Zero(M, M);
      double h = 1.0 / quad;
      for (int a = 0; a < quad; ++a)
        for (int b = 0; b < quad; ++b) {
          VectorXd xa(2), xb(2);
          xa << 0.0, a * h;
          xb << 0.0, b * h;
          auto wp = state.omega_pair(xa, xb);
          MatrixXcd Sp = MatrixXcd::Zero(4, 4);
          Sp.block(2, 0, 2, 2) = state.S(xa, xb);
          Sp.block(0, 2, 2, 2) = state.S(xb, xa).transpose();
          MatrixXcd Wp = wp.pair();
          for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) {
              W(i, j) += (modes[i][a].transpose() * Wp * modes[j][b])(0, 0) * h * h;
              S(i, j) += (modes[i][a].transpose() * Sp * modes[j][b])(0, 0) * h * h;
            }
        }
      double car = (W + W.transpose() - cd(0, 1) * S).norm() / (1.0 + S.norm());

      KernelMatrix Sk{KernelRole::CommutatorFunction, 0.5 * (S + S.transpose())};
      KernelMatrix halfS{KernelRole::HalfIS, cd(0, 0.5) * Sk.K};
      KernelMatrix omega{KernelRole::TwoPoint, W};
      MatrixXcd Wa = 0.5 * (W - W.transpose());
      KernelMatrix plusWa{KernelRole::AntisymmetricPart, Wa};
      KernelMatrix minusWa{KernelRole::AntisymmetricPart, -Wa};

      double assoc = 0.0, carps = 0.0, comm = 0.0, equiv = 0.0;
      std::vector<GrassmannPoly> mono;
      for (int mask = 0; mask < (1 << M); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < M; ++i)
          if (mask & (1 << i)) idx.push_back(i);
        GrassmannPoly p(M);
        p.add_term(idx, HPoly(cd(1.0)));
        mono.push_back(p);
      }
      for (auto& F : mono)
        for (auto& G : mono) {
          GrassmannPoly fg = star(F, G, omega, 2 * M);
          for (std::size_t hm = 0; hm < mono.size(); hm += 5) {
            auto& Hm = mono[hm];
            assoc = std::max(assoc, (star(fg, Hm, omega, 2 * M) -
                                     star(F, star(G, Hm, omega, 2 * M), omega, 2 * M))
                                        .norm());
          }
          int gf = 0, gg = 0;
          F.homogeneous(&gf);
          G.homogeneous(&gg);
          double sg = ((gf * gg) % 2 == 0) ? 1.0 : -1.0;
          GrassmannPoly lhs = star(F, G, halfS, M) - star(G, F, halfS, M).scaled(sg);
          GrassmannPoly br = peierls(F, G, Sk).scaled(cd(0, 1));
          GrassmannPoly h1(M);
          for (auto& [idx, c] : lhs.terms()) h1.add_term(idx, HPoly(c.coeff(1)));
          comm = std::max(comm, (h1 - br).norm());
          GrassmannPoly composed = gamma_map(
              star(gamma_map(F, minusWa, 2 * M), gamma_map(G, minusWa, 2 * M), halfS, 2 * M),
              plusWa, 2 * M);
          equiv = std::max(equiv, (star(F, G, omega, 2 * M) - composed).norm());
        }
      std::mt19937 rng(5);
      std::uniform_real_distribution<double> U(-1, 1);
      for (int t = 0; t < 20; ++t) {
        VectorXcd u(M), v(M);
        for (int i = 0; i < M; ++i) {
          u(i) = cd(U(rng), U(rng));
          v(i) = cd(U(rng), U(rng));
        }
        auto F = GrassmannPoly::linear(M, u);
        auto G = GrassmannPoly::linear(M, v);
        GrassmannPoly ac = star(F, G, halfS, M) + star(G, F, halfS, M);
        cd Suv = (u.transpose() * Sk.K * v)(0, 0);
        GrassmannPoly expect(M);
        expect.add_term({}, HPoly::hbar_power(cd(0, 1) * Suv, 1));
        carps = std::max(carps, (ac - expect).norm());
      }

      json j = config_echo({{"modes", M}});
      j["mode_car_residual"] = car;
      j["star_associativity"] = assoc;
      j["car_display"] = carps;
      j["commutator_vs_peierls"] = comm;
      j["equivalence_identity"] = equiv;
      double worst = std::max({assoc, carps, comm, equiv, car});
      j["pass"] = worst <= 1e-10;
      emit(j, out_path);
      return worst <= 1e-10 ? 0 : 1;
    }

    if (*cmd_rg) {
      GammaRep rep4 = build_gamma(4);
      RGCoefficient rg = rg_coefficient(rep4);
      json j = config_echo(json::object());
      j["c_box_m"] = rg.c_box;
      j["c_R_m"] = rg.c_R;
      j["c_m3"] = rg.c_m3;
      j["c_divF"] = rg.c_F;
      j["ratio_box_over_m3"] = rg.c_box / rg.c_m3;
      j["ratio_R_over_m3"] = rg.c_R / rg.c_m3;
      j["ratio_F_over_m3"] = rg.c_F / rg.c_m3;
      emit(j, out_path);
      return 0;
    }

    if (*cmd_sc) {
      require_power_of_two(sc_cutoff);
      auto bg = BackgroundSpec::load(sc_bg);
      GammaRep rep = build_gamma(2);
      auto circle = UltrastaticCircle::from_background(bg);
      std::vector<double> lambdas;
      std::stringstream ss(sc_lambdas);
      std::string tok;
      while (std::getline(ss, tok, ',')) lambdas.push_back(std::stod(tok));
      ScalingReport r =
          scaling_check(circle, rep, lambdas, sc_cutoff, default_split(circle.L, 1.0));
      json j = config_echo({{"bg", sc_bg}, {"cutoff", sc_cutoff}, {"lambdas", sc_lambdas}});
      j["lambdas"] = r.lambdas;
      j["values"] = r.values;
      j["fitted_value"] = r.fitted_value;
      j["log_coefficient"] = r.log_coefficient;
      j["analytic_log_coefficient"] = r.analytic_log_coefficient;
      j["fit_residual"] = r.fit_residual;
      j["scaling_dimension"] = r.scaling_dimension;
      emit(j, out_path);
      return 0;
    }

    if (*cmd_cas) {
      require_power_of_two(cas_cutoff);
      SpinStructure spin =
          (cas_spin == "periodic") ? SpinStructure::Periodic : SpinStructure::Antiperiodic;
      auto circle =
          UltrastaticCircle::from_background(BackgroundSpec::circle(cas_L, "0", 0.0, spin));
      GammaRep rep = build_gamma(2);
      ModeBasis basis = build_modes(circle, cas_cutoff);
      StateKernel state(basis, rep);
      GridOptions gopt;
      gopt.grid = 2;
      gopt.split = default_split(cas_L, 1.0);
      auto grid = wick_grid(state, circle.bg, rep, gopt);
      auto pkg =
          curvature_package(circle.bg, std::span<const double>(grid[0].x.data(), 2), rep, 3);
      MatrixXd T = stress_energy(grid[0], pkg, rep);
      double oracle = -M_PI / (6.0 * cas_L * cas_L);
      json j = config_echo({{"L", cas_L}, {"cutoff", cas_cutoff}, {"spin", cas_spin}});
      j["T00"] = T(0, 0);
      j["zeta_oracle"] = oracle;
      j["difference"] = std::abs(T(0, 0) - oracle);
      emit(j, out_path);
      return std::abs(T(0, 0) - oracle) <= cas_tol ? 0 : 1;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const EvalError& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    return msg.find("converge") != std::string::npos ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
