#pragma once

// Hadamard two-point function on the ultrastatic circle by spectral
// projection of the spatial Dirac Hamiltonian K, the causal propagator from
// mode completeness, and point-split differences against the parametrix.
//
// Mode conventions: solutions carry e^{-i E t} phi(x) with K phi = E phi;
// the two-point blocks are
//   omega^+-(x,x') = - sum_{E >< 0} w(|E|) e^{-iE(t-t')} phi(x) phi+(x'),
//   S(x,x')        = i sum_all    w(|E|) e^{-iE(t-t')} phi(x) phi+(x'),
// so omega^+ + omega^- = iS holds identically at any spectral weight w.
// w is a smooth high-|E| window; it equals 1 on the lower half of the
// resolved band, so band-limited smearings are exact.

#include <map>
#include <optional>

#include "hdirac/hadamard.hpp"

namespace hdirac {

struct UltrastaticCircle {
  double L = 1.0;
  Expression m_expr;    // mass profile on the circle (coords t, x; x-periodic)
  double wilson_a = 0.0;
  SpinStructure spin = SpinStructure::Antiperiodic;
  BackgroundSpec bg;    // flat chart carrying the same data

  static UltrastaticCircle from_background(const BackgroundSpec& bg);
};

// How the mode sums are evaluated.
//  PlainWindowed: smooth high-|E| window on the raw sums. Every kernel is an
//    exact combination of solution modes (bisolution to machine precision),
//    but pointwise values carry a slowly-decaying window error.
//  MasslessReference: exact closed-form geometric tails of the massless
//    circle plus a windowed sum of the differences (which decay in 1/E), so
//    pointwise values are accurate to the difference-tail level; this is the
//    default for point-splitting. Falls back to PlainWindowed when the
//    massless reference is gapless.
enum class SumMode { PlainWindowed, MasslessReference };

struct StateOptions {
  double window_frac = 0.5;    // window flat up to this fraction of the band
  double window_width = 0.125; // gaussian width as a fraction of the band
  bool windowed = true;
  SumMode mode = SumMode::MasslessReference;
};

class ModeBasis {
 public:
  double L = 1.0, a = 0.0;
  SpinStructure spin = SpinStructure::Antiperiodic;
  int cutoff = 0;              // Fourier indices retained (power of two)
  std::vector<int> fourier;    // integer labels n, k_n = 2 pi (n + delta) / L
  Eigen::VectorXd evals;       // 2 * cutoff eigenvalues
  bool diagonal = false;       // constant-mass closed form
  std::vector<int> mode_n;     // diagonal case: Fourier label per mode
  std::vector<Eigen::Vector2cd> amp;  // diagonal case: spinor amplitude per mode
  Eigen::MatrixXcd vecs;       // dense case: column k over the (n, component) basis

  double delta() const { return spin == SpinStructure::Periodic ? 0.0 : 0.5; }
  double k_of(int n) const { return 2.0 * M_PI * (n + delta()) / L; }

  // mode values at a spatial point: 2 x (2 cutoff)
  Eigen::MatrixXcd modes_at(double x) const;
};

ModeBasis build_modes(const UltrastaticCircle& circle, int cutoff);

// Kernels bound to a mode basis. Point layout: (t, x).
class StateKernel {
 public:
  StateKernel(const ModeBasis& basis, const GammaRep& rep, StateOptions opt = {});

  Eigen::MatrixXcd omega_plus(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::MatrixXcd omega_minus(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  Eigen::MatrixXcd S(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  DoubleSpinorKernel omega_pair(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  // first derivative of a block in the first (arg = 1) or second (arg = 2)
  // argument; exact term-wise differentiation (PlainWindowed mode only)
  Eigen::MatrixXcd block_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int which,
                                    int arg, int mu) const;

  SKernelFn S_function() const;
  double weight(double E) const;
  const ModeBasis& basis() const { return basis_; }
  bool accelerated() const { return accelerated_; }

 private:
  Eigen::MatrixXcd sum_block(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int which) const;
  Eigen::MatrixXcd closed_block(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                int which) const;
  const Eigen::MatrixXcd& modes_cached(double x) const;
  mutable std::map<double, Eigen::MatrixXcd> mode_cache_;  // per spatial point
  ModeBasis basis_;
  const GammaRep* rep_;
  StateOptions opt_;
  bool accelerated_ = false;
  struct RefMode {
    double E;
    Eigen::Vector2cd u;
    int n;
  };
  std::vector<RefMode> ref_;  // index-aligned with the basis modes
};

// Batch sampling: omega pair blocks and S at a list of point pairs.
struct TwoPointKernelSamples {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  std::vector<DoubleSpinorKernel> omega;
  std::vector<Eigen::MatrixXcd> S;
};
TwoPointKernelSamples state_kernels(const StateKernel& state,
                                    const std::vector<std::pair<Eigen::VectorXd,
                                                                Eigen::VectorXd>>& pairs);

// --- point splitting ---------------------------------------------------------

// Optional local redefinition of the parametrix:
//   H(x,y) += deltaH(s) + deltaH_mu(s) d^mu_x s(x,y)  at the midpoint s.
struct DeltaH {
  std::function<Eigen::MatrixXcd(const Eigen::VectorXd&)> scalar;              // deltaH(s)
  std::function<std::vector<Eigen::MatrixXcd>(const Eigen::VectorXd&)> vector; // deltaH_mu(s)
  int mass_dimension = 0;  // bookkeeping; checked by apply sites
};

struct PointSplitOptions {
  std::vector<double> separations;  // decreasing
  int k_max = 1;
  double lambda = 1.0;
  TransportOptions transport;
  std::optional<DeltaH> delta_h;
};

// Smooth-part data of w = omega - H at a base point, midpoint convention.
struct WickSplitData {
  Eigen::MatrixXcd Psi;                      // [w] limit (psi+ psi ordering)
  std::vector<Eigen::MatrixXcd> slope;       // per direction: (1/2)(<psi+ del psi> - <del psi+ psi>)
  double observed_order = 0.0;
  double richardson_residual = 0.0;
  bool converged = false;
};

WickSplitData pointsplit_difference(const StateKernel& state, const BackgroundSpec& bg,
                                    const GammaRep& rep, const Eigen::VectorXd& x,
                                    const std::vector<Eigen::VectorXd>& directions,
                                    const PointSplitOptions& opt);

}  // namespace hdirac
