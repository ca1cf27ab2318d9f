#include "hdirac/exprjet.hpp"

#include <cctype>
#include <cmath>
#include <mutex>
#include <sstream>

namespace hdirac {

// ---------------------------------------------------------------------------
// JetSpace

static void enumerate_indices(int nvars, int order, std::vector<int>& cur, int pos, int left,
                              std::vector<std::vector<int>>& out) {
  if (pos == nvars) {
    out.push_back(cur);
    return;
  }
  for (int d = 0; d <= left; ++d) {
    cur[pos] = d;
    enumerate_indices(nvars, order, cur, pos + 1, left - d, out);
  }
  cur[pos] = 0;
}

JetSpace::JetSpace(int nvars, int order) : nvars_(nvars), order_(order) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur(nvars, 0);
  enumerate_indices(nvars, order, cur, 0, order, all);
  // graded ordering: by total degree, then lexicographic
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    int da = 0, db = 0;
    for (int x : a) da += x;
    for (int x : b) db += x;
    if (da != db) return da < db;
    return a < b;
  });
  indices_ = std::move(all);
  degrees_.resize(indices_.size());
  factorials_.resize(indices_.size());
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    int d = 0;
    double f = 1.0;
    for (int x : indices_[k]) {
      d += x;
      for (int j = 2; j <= x; ++j) f *= j;
    }
    degrees_[k] = d;
    factorials_[k] = f;
    lookup_[indices_[k]] = static_cast<int>(k);
  }
  conv_.resize(indices_.size());
  for (std::size_t a = 0; a < indices_.size(); ++a)
    for (std::size_t b = 0; b < indices_.size(); ++b) {
      if (degrees_[a] + degrees_[b] > order_) continue;
      std::vector<int> s(nvars_);
      for (int i = 0; i < nvars_; ++i) s[i] = indices_[a][i] + indices_[b][i];
      conv_[lookup_.at(s)].emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
}

int JetSpace::position(const std::vector<int>& mi) const {
  auto it = lookup_.find(mi);
  return it == lookup_.end() ? -1 : it->second;
}

std::shared_ptr<const JetSpace> JetSpace::get(int nvars, int order) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(nvars, order);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto sp = std::shared_ptr<const JetSpace>(new JetSpace(nvars, order));
  cache[key] = sp;
  return sp;
}

// ---------------------------------------------------------------------------
// Jet arithmetic helpers

CJet to_complex(const Jet& j) {
  CJet out(j.space());
  for (int k = 0; k < j.size(); ++k) out[k] = std::complex<double>(j[k], 0.0);
  return out;
}

// f(u) for analytic f given the Taylor coefficients a_k = f^(k)(u0)/k!,
// via powers of the zero-value part of u (degree >= 1, so the series stops).
template <class S>
static TJet<S> compose_series(const TJet<S>& u, const std::vector<S>& a) {
  TJet<S> hat = u;
  hat[0] = S(0);
  TJet<S> result(u.space(), a[0]);
  TJet<S> power(u.space(), S(1));
  int p = u.space()->order();
  for (int k = 1; k <= p; ++k) {
    power = power * hat;
    TJet<S> term = power;
    term *= a[k];
    result += term;
  }
  return result;
}

Jet reciprocal(const Jet& j) {
  double v = j.value();
  if (v == 0.0) throw EvalError("division by zero");
  int p = j.space()->order();
  std::vector<double> a(p + 1);
  a[0] = 1.0 / v;
  for (int k = 1; k <= p; ++k) a[k] = -a[k - 1] / v;
  return compose_series(j, a);
}

CJet reciprocal(const CJet& j) {
  std::complex<double> v = j.value();
  if (v == std::complex<double>(0.0, 0.0)) throw EvalError("division by zero");
  int p = j.space()->order();
  std::vector<std::complex<double>> a(p + 1);
  a[0] = 1.0 / v;
  for (int k = 1; k <= p; ++k) a[k] = -a[k - 1] / v;
  return compose_series(j, a);
}

Jet jet_sin(const Jet& u) {
  int p = u.space()->order();
  double s = std::sin(u.value()), c = std::cos(u.value());
  std::vector<double> a(p + 1);
  double fact = 1.0;
  for (int k = 0; k <= p; ++k) {
    if (k > 0) fact *= k;
    double d = (k % 4 == 0) ? s : (k % 4 == 1) ? c : (k % 4 == 2) ? -s : -c;
    a[k] = d / fact;
  }
  return compose_series(u, a);
}

Jet jet_cos(const Jet& u) {
  int p = u.space()->order();
  double s = std::sin(u.value()), c = std::cos(u.value());
  std::vector<double> a(p + 1);
  double fact = 1.0;
  for (int k = 0; k <= p; ++k) {
    if (k > 0) fact *= k;
    double d = (k % 4 == 0) ? c : (k % 4 == 1) ? -s : (k % 4 == 2) ? -c : s;
    a[k] = d / fact;
  }
  return compose_series(u, a);
}

Jet jet_exp(const Jet& u) {
  int p = u.space()->order();
  double e = std::exp(u.value());
  std::vector<double> a(p + 1);
  double fact = 1.0;
  for (int k = 0; k <= p; ++k) {
    if (k > 0) fact *= k;
    a[k] = e / fact;
  }
  return compose_series(u, a);
}

Jet jet_log(const Jet& u) {
  double v = u.value();
  if (v <= 0.0) throw EvalError("log of nonpositive value");
  int p = u.space()->order();
  std::vector<double> a(p + 1);
  a[0] = std::log(v);
  for (int k = 1; k <= p; ++k) a[k] = ((k % 2 == 1) ? 1.0 : -1.0) / (k * std::pow(v, k));
  return compose_series(u, a);
}

Jet jet_sqrt(const Jet& u) {
  double v = u.value();
  if (v <= 0.0) throw EvalError("sqrt of nonpositive value");
  int p = u.space()->order();
  std::vector<double> a(p + 1);
  // a_k = binom(1/2, k) v^{1/2-k}
  double coef = 1.0;
  for (int k = 0; k <= p; ++k) {
    a[k] = coef * std::pow(v, 0.5 - k);
    coef *= (0.5 - k) / (k + 1);
  }
  return compose_series(u, a);
}

Jet jet_tanh(const Jet& u) {
  int p = u.space()->order();
  std::vector<double> a(p + 1);
  a[0] = std::tanh(u.value());
  // f' = 1 - f^2 gives (k+1) a_{k+1} = -sum_{i+j=k} a_i a_j for k >= 1
  if (p >= 1) a[1] = 1.0 - a[0] * a[0];
  for (int k = 1; k < p; ++k) {
    double s = 0.0;
    for (int i = 0; i <= k; ++i) s += a[i] * a[k - i];
    a[k + 1] = -s / (k + 1);
  }
  return compose_series(u, a);
}

static Jet jet_int_pow(const Jet& u, long n) {
  auto sp = u.space();
  if (n == 0) return Jet::constant(sp, 1.0);
  bool neg = n < 0;
  unsigned long e = neg ? -n : n;
  Jet acc = Jet::constant(sp, 1.0);
  Jet base = u;
  while (e) {
    if (e & 1UL) acc = acc * base;
    base = base * base;
    e >>= 1UL;
  }
  return neg ? reciprocal(acc) : acc;
}

Jet jet_pow(const Jet& u, const Jet& v) {
  bool v_const = true;
  for (int k = 1; k < v.size(); ++k)
    if (v[k] != 0.0) v_const = false;
  if (v_const) {
    double e = v.value();
    double r = std::round(e);
    if (std::abs(e - r) < 1e-13 && std::abs(r) < 64) return jet_int_pow(u, static_cast<long>(r));
  }
  // general case via exp(v log u); requires u > 0
  return jet_exp(v * jet_log(u));
}

// ---------------------------------------------------------------------------
// Expression AST

namespace {
enum class Op { Lit, Coord, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt, Tanh };
}

struct Expression::Node {
  Op op;
  double lit = 0.0;
  int coord = -1;
  std::shared_ptr<const Node> a, b;
};

using NodePtr = std::shared_ptr<const Expression::Node>;

static NodePtr make_node(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

struct ExprParser {
  const std::string& src;
  const std::vector<std::string>& coords;
  std::size_t pos = 0;

  void skip() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  char peek() {
    skip();
    return pos < src.size() ? src[pos] : '\0';
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (eat('+'))
        lhs = make_node(Op::Add, lhs, parse_term());
      else if (eat('-'))
        lhs = make_node(Op::Sub, lhs, parse_term());
      else
        return lhs;
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (eat('*'))
        lhs = make_node(Op::Mul, lhs, parse_unary());
      else if (eat('/'))
        lhs = make_node(Op::Div, lhs, parse_unary());
      else
        return lhs;
    }
  }

  NodePtr parse_unary() {
    if (eat('-')) return make_node(Op::Neg, parse_unary());
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (eat('^')) return make_node(Op::Pow, base, parse_unary());
    return base;
  }

  NodePtr parse_atom() {
    skip();
    if (pos >= src.size()) throw ParseError("unexpected end of expression", pos);
    char c = src[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    if (c == '(') {
      ++pos;
      NodePtr e = parse_sum();
      if (!eat(')')) throw ParseError("expected ')'", pos);
      return e;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos);
  }

  NodePtr parse_number() {
    std::size_t start = pos;
    while (pos < src.size() &&
           (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.'))
      ++pos;
    if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
      ++pos;
      if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) ++pos;
      while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    try {
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::Lit;
      n->lit = std::stod(src.substr(start, pos - start));
      return n;
    } catch (const std::exception&) {
      throw ParseError("malformed number", start);
    }
  }

  NodePtr parse_ident() {
    std::size_t start = pos;
    while (pos < src.size() &&
           (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
      ++pos;
    std::string name = src.substr(start, pos - start);
    static const std::map<std::string, Op> fns = {{"sin", Op::Sin}, {"cos", Op::Cos},
                                                  {"exp", Op::Exp}, {"log", Op::Log},
                                                  {"sqrt", Op::Sqrt}, {"tanh", Op::Tanh}};
    auto fn = fns.find(name);
    if (fn != fns.end()) {
      if (!eat('(')) throw ParseError("expected '(' after function name", pos);
      NodePtr arg = parse_sum();
      if (!eat(')')) throw ParseError("expected ')'", pos);
      return make_node(fn->second, arg);
    }
    if (name == "pi") {
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::Lit;
      n->lit = M_PI;
      return n;
    }
    for (std::size_t i = 0; i < coords.size(); ++i)
      if (coords[i] == name) {
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::Coord;
        n->coord = static_cast<int>(i);
        return n;
      }
    throw ParseError("unknown identifier '" + name + "'", start);
  }
};

Expression Expression::parse(const std::string& src, const std::vector<std::string>& coords) {
  if (coords.empty()) throw ParseError("no coordinates declared", 0);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t j = i + 1; j < coords.size(); ++j)
      if (coords[i] == coords[j]) throw ParseError("duplicate coordinate name", 0);
  ExprParser p{src, coords};
  Expression e;
  e.root_ = p.parse_sum();
  p.skip();
  if (p.pos != src.size()) throw ParseError("trailing input", p.pos);
  e.coords_ = coords;
  return e;
}

Expression Expression::literal(double v) {
  Expression e;
  auto n = std::make_shared<Node>();
  n->op = Op::Lit;
  n->lit = v;
  e.root_ = n;
  e.coords_ = {"_"};
  return e;
}

Expression Expression::scaled(double factor) const {
  if (factor == 1.0) return *this;
  Expression e;
  auto f = std::make_shared<Node>();
  f->op = Op::Lit;
  f->lit = factor;
  e.root_ = make_node(Op::Mul, f, root_);
  e.coords_ = coords_;
  return e;
}

static bool node_constant(const NodePtr& n) {
  if (!n) return true;
  if (n->op == Op::Coord) return false;
  return node_constant(n->a) && node_constant(n->b);
}

bool Expression::is_constant() const { return node_constant(root_); }

static std::string node_str(const NodePtr& n) {
  std::ostringstream os;
  switch (n->op) {
    case Op::Lit: {
      os.precision(17);
      os << n->lit;
      return os.str();
    }
    case Op::Coord:
      return "$" + std::to_string(n->coord);
    case Op::Add:
      return "(" + node_str(n->a) + " + " + node_str(n->b) + ")";
    case Op::Sub:
      return "(" + node_str(n->a) + " - " + node_str(n->b) + ")";
    case Op::Mul:
      return "(" + node_str(n->a) + " * " + node_str(n->b) + ")";
    case Op::Div:
      return "(" + node_str(n->a) + " / " + node_str(n->b) + ")";
    case Op::Pow:
      return "(" + node_str(n->a) + " ^ " + node_str(n->b) + ")";
    case Op::Neg:
      return "(-" + node_str(n->a) + ")";
    case Op::Sin:
      return "sin(" + node_str(n->a) + ")";
    case Op::Cos:
      return "cos(" + node_str(n->a) + ")";
    case Op::Exp:
      return "exp(" + node_str(n->a) + ")";
    case Op::Log:
      return "log(" + node_str(n->a) + ")";
    case Op::Sqrt:
      return "sqrt(" + node_str(n->a) + ")";
    case Op::Tanh:
      return "tanh(" + node_str(n->a) + ")";
  }
  return "?";
}

std::string Expression::str() const {
  std::string s = node_str(root_);
  // coordinate placeholders back to names
  for (int i = static_cast<int>(coords_.size()) - 1; i >= 0; --i) {
    std::string key = "$" + std::to_string(i);
    std::size_t p;
    while ((p = s.find(key)) != std::string::npos) s.replace(p, key.size(), coords_[i]);
  }
  return s;
}

template <class F>
static auto eval_node(const NodePtr& n, F&& leaf) -> decltype(leaf(n)) {
  using R = decltype(leaf(n));
  switch (n->op) {
    case Op::Lit:
    case Op::Coord:
      return leaf(n);
    case Op::Add:
      return eval_node(n->a, leaf) + eval_node(n->b, leaf);
    case Op::Sub:
      return eval_node(n->a, leaf) - eval_node(n->b, leaf);
    case Op::Mul:
      return eval_node(n->a, leaf) * eval_node(n->b, leaf);
    case Op::Neg:
      return -eval_node(n->a, leaf);
    default:
      break;
  }
  R a = eval_node(n->a, leaf);
  try {
    switch (n->op) {
      case Op::Div:
        if constexpr (std::is_same_v<R, double>) {
          R b = eval_node(n->b, leaf);
          if (b == 0.0) throw EvalError("division by zero");
          return a / b;
        } else {
          return a * reciprocal(eval_node(n->b, leaf));
        }
      case Op::Pow:
        if constexpr (std::is_same_v<R, double>)
          return std::pow(a, eval_node(n->b, leaf));
        else
          return jet_pow(a, eval_node(n->b, leaf));
      case Op::Sin:
        if constexpr (std::is_same_v<R, double>)
          return std::sin(a);
        else
          return jet_sin(a);
      case Op::Cos:
        if constexpr (std::is_same_v<R, double>)
          return std::cos(a);
        else
          return jet_cos(a);
      case Op::Exp:
        if constexpr (std::is_same_v<R, double>)
          return std::exp(a);
        else
          return jet_exp(a);
      case Op::Log:
        if constexpr (std::is_same_v<R, double>) {
          if (a <= 0.0) throw EvalError("log of nonpositive value");
          return std::log(a);
        } else {
          return jet_log(a);
        }
      case Op::Sqrt:
        if constexpr (std::is_same_v<R, double>) {
          if (a < 0.0) throw EvalError("sqrt of negative value");
          return std::sqrt(a);
        } else {
          return jet_sqrt(a);
        }
      case Op::Tanh:
        if constexpr (std::is_same_v<R, double>)
          return std::tanh(a);
        else
          return jet_tanh(a);
      default:
        throw EvalError("bad node");
    }
  } catch (const EvalError& e) {
    throw EvalError(std::string(e.what()) + " in subexpression " + node_str(n));
  }
}

double Expression::eval(std::span<const double> point) const {
  if (point.size() != coords_.size()) throw EvalError("point dimension mismatch");
  return eval_node(root_, [&](const NodePtr& n) -> double {
    return n->op == Op::Lit ? n->lit : point[n->coord];
  });
}

Jet Expression::jet(std::span<const double> point, int order) const {
  if (point.size() != coords_.size()) throw EvalError("point dimension mismatch");
  if (order < 0) throw EvalError("negative jet order");
  auto sp = JetSpace::get(static_cast<int>(coords_.size()), order);
  return eval_node(root_, [&](const NodePtr& n) -> Jet {
    if (n->op == Op::Lit) return Jet::constant(sp, n->lit);
    return Jet::variable(sp, n->coord, point[n->coord]);
  });
}

}  // namespace hdirac
