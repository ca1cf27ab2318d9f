#include "doctest.h"
#include "hdirac/exprjet.hpp"

#include <cmath>
#include <random>

using namespace hdirac;

TEST_CASE("parse basics and eval") {
  std::vector<std::string> coords = {"t", "x"};
  auto e = Expression::parse("x", coords);
  double pt[2] = {1.5, 2.5};
  CHECK(e.eval(pt) == 2.5);

  auto e2 = Expression::parse("2*t + sin(x)", coords);
  double origin[2] = {0.0, 0.0};
  CHECK(e2.eval(origin) == 0.0);

  CHECK_THROWS_AS(Expression::parse("exp(", coords), ParseError);
  try {
    Expression::parse("exp(", coords);
  } catch (const ParseError& pe) {
    CHECK(pe.offset == 4);
  }
  CHECK_THROWS_AS(Expression::parse("2*q", coords), ParseError);
  CHECK_THROWS_AS(Expression::parse("sin(x", coords), ParseError);
}

TEST_CASE("precedence and power associativity") {
  std::vector<std::string> coords = {"x"};
  double pt[1] = {2.0};
  CHECK(Expression::parse("-x^2", coords).eval(pt) == -4.0);          // power binds tighter
  CHECK(Expression::parse("2^3^2", coords).eval(pt) == 512.0);        // right associative
  CHECK(Expression::parse("1 - 2 - 3", coords).eval(pt) == -4.0);     // left associative sums
  CHECK(Expression::parse("2*x^2", coords).eval(pt) == 8.0);
  CHECK(Expression::parse("x^-1", coords).eval(pt) == 0.5);
}

TEST_CASE("polynomial jet is exact") {
  std::vector<std::string> coords = {"x"};
  auto e = Expression::parse("x^2", coords);
  double pt[1] = {3.0};
  Jet j = e.jet(pt, 2);
  CHECK(j.value() == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(j.partial(0) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(j.partial(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("maclaurin sine") {
  std::vector<std::string> coords = {"x"};
  auto e = Expression::parse("sin(x)", coords);
  double pt[1] = {0.0};
  Jet j = e.jet(pt, 3);
  CHECK(j.value() == doctest::Approx(0.0));
  CHECK(j.partial(0) == doctest::Approx(1.0));
  std::vector<int> mi3 = {3};
  CHECK(j.partial(mi3) == doctest::Approx(-1.0));
}

TEST_CASE("mixed partials against central finite differences") {
  std::vector<std::string> coords = {"t", "x"};
  auto e = Expression::parse("exp(t)*sin(x)", coords);
  double pt[2] = {0.3, 0.7};
  Jet j = e.jet(pt, 4);
  double h = 1e-3;
  auto f = [&](double t, double x) {
    double p[2] = {t, x};
    return e.eval(p);
  };
  // d2/dtdx via 4-point stencil
  double fd_tx = (f(pt[0] + h, pt[1] + h) - f(pt[0] + h, pt[1] - h) - f(pt[0] - h, pt[1] + h) +
                  f(pt[0] - h, pt[1] - h)) /
                 (4 * h * h);
  CHECK(j.partial(0, 1) == doctest::Approx(fd_tx).epsilon(1e-6));
  double fd_tt = (f(pt[0] + h, pt[1]) - 2 * f(pt[0], pt[1]) + f(pt[0] - h, pt[1])) / (h * h);
  CHECK(j.partial(0, 0) == doctest::Approx(fd_tt).epsilon(1e-6));
  // third mixed t,t,x
  double fd_ttx = (f(pt[0] + h, pt[1] + h) - 2 * f(pt[0], pt[1] + h) + f(pt[0] - h, pt[1] + h) -
                   f(pt[0] + h, pt[1] - h) + 2 * f(pt[0], pt[1] - h) - f(pt[0] - h, pt[1] - h)) /
                  (2 * h * h * h);
  std::vector<int> mi = {2, 1};
  CHECK(j.partial(mi) == doctest::Approx(fd_ttx).epsilon(1e-5));
}

TEST_CASE("random polynomial jets reproduce analytic derivatives") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<std::string> coords = {"u", "v"};
  for (int trial = 0; trial < 20; ++trial) {
    double a = U(rng), b = U(rng), c = U(rng), d = U(rng);
    std::ostringstream os;
    os.precision(17);
    os << a << " + " << b << "*u*v + " << c << "*u^2*v^2 + " << d << "*v^4";
    auto e = Expression::parse(os.str(), coords);
    double u0 = U(rng), v0 = U(rng);
    double pt[2] = {u0, v0};
    Jet j = e.jet(pt, 4);
    CHECK(j.value() ==
          doctest::Approx(a + b * u0 * v0 + c * u0 * u0 * v0 * v0 + d * std::pow(v0, 4))
              .epsilon(1e-12));
    CHECK(j.partial(0) == doctest::Approx(b * v0 + 2 * c * u0 * v0 * v0).epsilon(1e-12));
    CHECK(j.partial(0, 1) == doctest::Approx(b + 4 * c * u0 * v0).epsilon(1e-12));
    std::vector<int> mi = {0, 4};
    CHECK(j.partial(mi) == doctest::Approx(24 * d).epsilon(1e-12));
  }
}

TEST_CASE("jet ring laws: associativity and distributivity") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto sp = JetSpace::get(2, 3);
  auto random_jet = [&]() {
    Jet j(sp);
    for (int k = 0; k < j.size(); ++k) j[k] = U(rng);
    return j;
  };
  for (int trial = 0; trial < 30; ++trial) {
    Jet a = random_jet(), b = random_jet(), c = random_jet();
    Jet lhs = (a * b) * c, rhs = a * (b * c);
    Jet dl = a * (b + c), dr = a * b + a * c;
    for (int k = 0; k < lhs.size(); ++k) {
      CHECK(lhs[k] == doctest::Approx(rhs[k]).epsilon(1e-12));
      CHECK(dl[k] == doctest::Approx(dr[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("printer round trip") {
  std::vector<std::string> coords = {"t", "x"};
  for (auto src : {"2*t + sin(x)", "-x^2 + sqrt(x*x + 1)", "tanh(t/2) * log(x + 3) - exp(-t)"}) {
    auto e1 = Expression::parse(src, coords);
    auto e2 = Expression::parse(e1.str(), coords);
    CHECK(e1.str() == e2.str());
    double pt[2] = {0.4, 1.3};
    CHECK(e1.eval(pt) == doctest::Approx(e2.eval(pt)).epsilon(1e-15));
  }
}

TEST_CASE("domain errors carry the offending subexpression") {
  std::vector<std::string> coords = {"x"};
  auto e = Expression::parse("1/(x - 1) + log(x)", coords);
  double bad[1] = {1.0};
  CHECK_THROWS_AS(e.eval(bad), EvalError);
  double neg[1] = {-2.0};
  try {
    e.eval(neg);
    CHECK(false);
  } catch (const EvalError& ee) {
    CHECK(std::string(ee.what()).find("log") != std::string::npos);
  }
  auto ej = Expression::parse("log(x)", coords);
  CHECK_THROWS_AS(ej.jet(neg, 2), EvalError);
}

TEST_CASE("composition rules hold at truncation order") {
  // compare jet of sin(exp(x)) against analytic derivatives
  std::vector<std::string> coords = {"x"};
  auto e = Expression::parse("sin(exp(x))", coords);
  double pt[1] = {0.25};
  Jet j = e.jet(pt, 3);
  double ex = std::exp(pt[0]);
  CHECK(j.value() == doctest::Approx(std::sin(ex)).epsilon(1e-14));
  CHECK(j.partial(0) == doctest::Approx(std::cos(ex) * ex).epsilon(1e-13));
  CHECK(j.partial(0, 0) ==
        doctest::Approx(-std::sin(ex) * ex * ex + std::cos(ex) * ex).epsilon(1e-12));
}
