#pragma once

// Expression parsing and truncated multivariate Taylor (jet) arithmetic.
//
// Background fields are given as closed-form expressions in the chart
// coordinates; all geometric quantities downstream (curvature, transport
// equations, renormalization coefficients) need several exact derivatives
// of them. Jets carry all partial derivatives up to a fixed total order,
// with product and composition rules applied exactly at that order.

#include <complex>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdirac {

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Jet index space: multi-indices of total degree <= order over nvars
// coordinates, graded-lexicographic, with a cached multiplication table.

class JetSpace {
 public:
  static std::shared_ptr<const JetSpace> get(int nvars, int order);

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const std::vector<int>& index(int pos) const { return indices_[pos]; }
  int degree(int pos) const { return degrees_[pos]; }

  // Position of a multi-index, or -1 if its degree exceeds the order.
  int position(const std::vector<int>& mi) const;

  // List of (a, b) pairs with index(a) + index(b) = index(target).
  const std::vector<std::pair<int, int>>& convolution(int target) const {
    return conv_[target];
  }

  // Factorial of a multi-index (product of component factorials).
  double mi_factorial(int pos) const { return factorials_[pos]; }

 private:
  JetSpace(int nvars, int order);
  int nvars_, order_;
  std::vector<std::vector<int>> indices_;
  std::vector<int> degrees_;
  std::vector<double> factorials_;
  std::map<std::vector<int>, int> lookup_;
  std::vector<std::vector<std::pair<int, int>>> conv_;
};

// ---------------------------------------------------------------------------
// TJet<S>: truncated Taylor expansion with coefficients of scalar type S.
// Coefficients are stored as value/alpha! (Taylor coefficients, not raw
// derivatives); the partial-derivative accessors rescale.

template <class S>
class TJet {
 public:
  TJet() = default;
  TJet(std::shared_ptr<const JetSpace> sp, S constant = S(0))
      : space_(std::move(sp)), c_(space_->size(), S(0)) {
    c_[0] = constant;
  }

  static TJet constant(std::shared_ptr<const JetSpace> sp, S value) {
    return TJet(std::move(sp), value);
  }
  static TJet variable(std::shared_ptr<const JetSpace> sp, int i, S value) {
    TJet j(std::move(sp), value);
    if (j.space_->order() >= 1) {
      std::vector<int> mi(j.space_->nvars(), 0);
      mi[i] = 1;
      j.c_[j.space_->position(mi)] = S(1);
    }
    return j;
  }

  const std::shared_ptr<const JetSpace>& space() const { return space_; }
  int size() const { return static_cast<int>(c_.size()); }
  S& operator[](int k) { return c_[k]; }
  const S& operator[](int k) const { return c_[k]; }

  S value() const { return c_[0]; }

  // Partial derivative for a multi-index (value * alpha!).
  S partial(const std::vector<int>& mi) const {
    int p = space_->position(mi);
    if (p < 0) throw EvalError("jet order too low for requested derivative");
    return c_[p] * S(space_->mi_factorial(p));
  }
  S partial(int i) const {
    std::vector<int> mi(space_->nvars(), 0);
    mi[i] = 1;
    return partial(mi);
  }
  S partial(int i, int j) const {
    std::vector<int> mi(space_->nvars(), 0);
    mi[i] += 1;
    mi[j] += 1;
    return partial(mi);
  }

  // d/dx_i as a jet of one order lower.
  TJet derivative(int i) const {
    auto lower = JetSpace::get(space_->nvars(), space_->order() - 1);
    TJet out(lower);
    for (int k = 0; k < lower->size(); ++k) {
      std::vector<int> mi = lower->index(k);
      mi[i] += 1;
      int p = space_->position(mi);
      out.c_[k] = c_[p] * S(mi[i]);
    }
    return out;
  }

  // Truncate (or reinterpret) to a lower order.
  TJet truncated(int order) const {
    auto lower = JetSpace::get(space_->nvars(), order);
    TJet out(lower);
    for (int k = 0; k < lower->size(); ++k) out.c_[k] = c_[space_->position(lower->index(k))];
    return out;
  }

  TJet operator-() const {
    TJet r = *this;
    for (auto& x : r.c_) x = -x;
    return r;
  }
  TJet& operator+=(const TJet& o) {
    for (int k = 0; k < size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  TJet& operator-=(const TJet& o) {
    for (int k = 0; k < size(); ++k) c_[k] -= o.c_[k];
    return *this;
  }
  TJet& operator*=(S s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  friend TJet operator+(TJet a, const TJet& b) { return a += b; }
  friend TJet operator-(TJet a, const TJet& b) { return a -= b; }
  friend TJet operator*(TJet a, S s) { return a *= s; }
  friend TJet operator*(S s, TJet a) { return a *= s; }
  friend TJet operator+(TJet a, S s) {
    a.c_[0] += s;
    return a;
  }
  friend TJet operator-(TJet a, S s) {
    a.c_[0] -= s;
    return a;
  }

  friend TJet operator*(const TJet& a, const TJet& b) {
    TJet r(a.space_);
    for (int k = 0; k < r.size(); ++k) {
      S acc(0);
      for (auto [i, j] : a.space_->convolution(k)) acc += a.c_[i] * b.c_[j];
      r.c_[k] = acc;
    }
    return r;
  }

 private:
  std::shared_ptr<const JetSpace> space_;
  std::vector<S> c_;
};

using Jet = TJet<double>;
using CJet = TJet<std::complex<double>>;

CJet to_complex(const Jet& j);

// Reciprocal: requires nonzero value part.
Jet reciprocal(const Jet& j);
CJet reciprocal(const CJet& j);
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
inline CJet operator/(const CJet& a, const CJet& b) { return a * reciprocal(b); }

// Elementary functions on real jets (exact truncated composition).
Jet jet_sin(const Jet& u);
Jet jet_cos(const Jet& u);
Jet jet_exp(const Jet& u);
Jet jet_log(const Jet& u);   // value must be > 0
Jet jet_sqrt(const Jet& u);  // value must be > 0
Jet jet_tanh(const Jet& u);
Jet jet_pow(const Jet& u, const Jet& v);

// ---------------------------------------------------------------------------
// Expressions

class Expression {
 public:
  Expression() = default;

  // Grammar: sum of products of unary-signed powers; '^' is right
  // associative and binds tighter than unary minus. Functions: sin, cos,
  // exp, log, sqrt, tanh. 'pi' parses to a literal.
  static Expression parse(const std::string& src, const std::vector<std::string>& coords);

  // Constant-folding helpers used by background rescaling and test setup.
  static Expression literal(double v);
  Expression scaled(double factor) const;  // factor * (*this)

  bool is_constant() const;  // structurally: no coordinate leaves

  double eval(std::span<const double> point) const;
  Jet jet(std::span<const double> point, int order) const;

  std::string str() const;

  const std::vector<std::string>& coords() const { return coords_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::vector<std::string> coords_;
  friend struct ExprParser;
};

}  // namespace hdirac
