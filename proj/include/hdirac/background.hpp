#pragma once

// Background data: chart dimension, coordinates, metric / U(1) potential /
// Yukawa field as expressions, spin structure, and the optional circle and
// renormalization-menu data. Loadable from the .bg text format (see README
// for the exact grammar).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hdirac/exprjet.hpp"

namespace hdirac {

enum class SpinStructure { Periodic, Antiperiodic };

struct BackgroundSpec {
  int n = 0;
  std::vector<std::string> coords;                   // time coordinate first
  std::vector<std::vector<Expression>> metric;       // n x n, symmetric
  std::vector<Expression> A;                         // U(1) potential, size n
  Expression m;                                      // Yukawa field
  SpinStructure spin_structure = SpinStructure::Antiperiodic;
  std::optional<double> circumference;               // circle backgrounds: x1 in [0, L)

  // Renormalization-menu coefficients (alpha0, alpha1, alpha2, alpha4) and
  // stress ambiguity coefficients (beta0..beta3); zero when absent.
  std::array<double, 4> alpha{0, 0, 0, 0};
  std::array<double, 4> beta{0, 0, 0, 0};

  // Exact multiplicative factors applied on top of the expressions at
  // evaluation time; background rescaling composes these.
  double metric_scale = 1.0;
  double m_scale = 1.0;
  double A_scale = 1.0;

  Jet metric_jet(int mu, int nu, std::span<const double> x, int order) const {
    return metric[mu][nu].jet(x, order) * metric_scale;
  }
  Jet A_jet(int mu, std::span<const double> x, int order) const {
    return A[mu].jet(x, order) * A_scale;
  }
  Jet m_jet(std::span<const double> x, int order) const { return m.jet(x, order) * m_scale; }

  bool flat_chart() const;  // all metric entries structurally constant

  static BackgroundSpec parse(const std::string& text);
  static BackgroundSpec load(const std::string& path);

  // Common programmatic backgrounds.
  static BackgroundSpec minkowski(int n);
  static BackgroundSpec circle(double L, const std::string& m_expr, double wilson_a,
                               SpinStructure spin);
};

}  // namespace hdirac
