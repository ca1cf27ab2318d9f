#include "hdirac/grassmann.hpp"

#include <stdexcept>

namespace hdirac {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using cd = std::complex<double>;

// ---------------------------------------------------------------------------
// HPoly

void HPoly::trim() {
  while (!c_.empty() && std::abs(c_.back()) == 0.0) c_.pop_back();
}

HPoly& HPoly::operator+=(const HPoly& o) {
  if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), cd(0.0));
  for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] += o.c_[k];
  trim();
  return *this;
}

HPoly HPoly::operator*(const HPoly& o) const {
  HPoly r;
  if (c_.empty() || o.c_.empty()) return r;
  r.c_.assign(c_.size() + o.c_.size() - 1, cd(0.0));
  for (std::size_t a = 0; a < c_.size(); ++a)
    for (std::size_t b = 0; b < o.c_.size(); ++b) r.c_[a + b] += c_[a] * o.c_[b];
  r.trim();
  return r;
}

HPoly HPoly::scaled(cd f) const {
  HPoly r = *this;
  for (auto& c : r.c_) c *= f;
  r.trim();
  return r;
}

HPoly HPoly::shifted(int k) const {
  HPoly r;
  if (c_.empty()) return r;
  r.c_.assign(c_.size() + k, cd(0.0));
  for (std::size_t a = 0; a < c_.size(); ++a) r.c_[a + k] = c_[a];
  return r;
}

HPoly HPoly::conjugated() const {
  HPoly r = *this;
  for (auto& c : r.c_) c = std::conj(c);
  return r;
}

HPoly HPoly::truncated(int cap) const {
  HPoly r = *this;
  if (static_cast<int>(r.c_.size()) > cap + 1) r.c_.resize(cap + 1);
  r.trim();
  return r;
}

// ---------------------------------------------------------------------------
// KernelMatrix

void KernelMatrix::validate() const {
  double scale = 1.0 + K.norm();
  switch (role) {
    case KernelRole::CommutatorFunction:
      if ((K - K.transpose()).norm() > 1e-10 * scale)
        throw std::invalid_argument("commutator-function kernel must be symmetric");
      break;
    case KernelRole::AntisymmetricPart:
    case KernelRole::SmoothDifference:
      if ((K + K.transpose()).norm() > 1e-10 * scale)
        throw std::invalid_argument("antisymmetric-part kernel must be antisymmetric");
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// GrassmannPoly

GrassmannPoly GrassmannPoly::generator(int modes, int i) {
  GrassmannPoly p(modes);
  p.terms_[{i}] = HPoly(cd(1.0));
  return p;
}

GrassmannPoly GrassmannPoly::linear(int modes, const VectorXcd& u) {
  GrassmannPoly p(modes);
  for (int i = 0; i < modes; ++i)
    if (u(i) != cd(0.0)) p.terms_[{i}] = HPoly(u(i));
  return p;
}

double GrassmannPoly::norm() const {
  double s = 0.0;
  for (auto& [idx, c] : terms_) s += c.norm();
  return s;
}

bool GrassmannPoly::homogeneous(int* grade) const {
  int g = -1;
  for (auto& [idx, c] : terms_) {
    if (g < 0)
      g = static_cast<int>(idx.size());
    else if (g != static_cast<int>(idx.size()))
      return false;
  }
  if (grade) *grade = std::max(0, g);
  return true;
}

std::vector<GrassmannPoly> GrassmannPoly::graded_parts() const {
  std::vector<GrassmannPoly> parts(modes_ + 1, GrassmannPoly(modes_));
  for (auto& [idx, c] : terms_) parts[idx.size()].terms_[idx] = c;
  std::vector<GrassmannPoly> out;
  for (auto& p : parts)
    if (!p.zero()) out.push_back(p);
  return out;
}

void GrassmannPoly::add_term(std::vector<int> idx, const HPoly& c) {
  if (c.zero()) return;
  auto it = terms_.find(idx);
  if (it == terms_.end())
    terms_[std::move(idx)] = c;
  else {
    it->second += c;
    if (it->second.zero()) terms_.erase(it);
  }
}

GrassmannPoly GrassmannPoly::operator+(const GrassmannPoly& o) const {
  GrassmannPoly r = *this;
  for (auto& [idx, c] : o.terms_) r.add_term(idx, c);
  return r;
}

GrassmannPoly GrassmannPoly::operator-(const GrassmannPoly& o) const {
  return *this + o.scaled(cd(-1.0));
}

GrassmannPoly GrassmannPoly::scaled(cd f) const {
  GrassmannPoly r(modes_);
  if (f == cd(0.0)) return r;
  for (auto& [idx, c] : terms_) r.terms_[idx] = c.scaled(f);
  return r;
}

GrassmannPoly GrassmannPoly::scaled_h(const HPoly& f) const {
  GrassmannPoly r(modes_);
  for (auto& [idx, c] : terms_) {
    HPoly p = c * f;
    if (!p.zero()) r.terms_[idx] = p;
  }
  return r;
}

GrassmannPoly GrassmannPoly::truncated(int cap) const {
  GrassmannPoly r(modes_);
  for (auto& [idx, c] : terms_) {
    HPoly p = c.truncated(cap);
    if (!p.zero()) r.terms_[idx] = p;
  }
  return r;
}

// ---------------------------------------------------------------------------
// products and derivatives

namespace {

// merge two strictly increasing tuples; returns false on a shared index,
// sign tracks the interleaving permutation
bool merge_tuples(const std::vector<int>& a, const std::vector<int>& b, std::vector<int>& out,
                  int& sign) {
  out.clear();
  out.reserve(a.size() + b.size());
  sign = 1;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return false;
    if (a[i] < b[j]) {
      out.push_back(a[i++]);
    } else {
      // b[j] jumps over the remaining a-elements
      if ((a.size() - i) % 2 == 1) sign = -sign;
      out.push_back(b[j++]);
    }
  }
  while (i < a.size()) out.push_back(a[i++]);
  while (j < b.size()) out.push_back(b[j++]);
  return true;
}

}  // namespace

GrassmannPoly wedge(const GrassmannPoly& F, const GrassmannPoly& G) {
  if (F.modes() != G.modes()) throw std::invalid_argument("wedge: mode count mismatch");
  GrassmannPoly r(F.modes());
  std::vector<int> merged;
  for (auto& [ia, ca] : F.terms())
    for (auto& [ib, cb] : G.terms()) {
      int sign;
      if (!merge_tuples(ia, ib, merged, sign)) continue;
      r.add_term(merged, (ca * cb).scaled(cd(sign)));
    }
  return r;
}

GrassmannPoly func_derivative(const GrassmannPoly& F, const VectorXcd& u) {
  if (static_cast<int>(u.size()) != F.modes())
    throw std::invalid_argument("func_derivative: mode count mismatch");
  GrassmannPoly r(F.modes());
  for (auto& [idx, c] : F.terms()) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      cd uj = u(idx[j]);
      if (uj == cd(0.0)) continue;
      std::vector<int> rest;
      rest.reserve(idx.size() - 1);
      for (std::size_t l = 0; l < idx.size(); ++l)
        if (l != j) rest.push_back(idx[l]);
      double sign = (j % 2 == 0) ? 1.0 : -1.0;  // left derivative
      r.add_term(rest, c.scaled(sign * uj));
    }
  }
  return r;
}

namespace {

GrassmannPoly derivative_index(const GrassmannPoly& F, int i) {
  VectorXcd e = VectorXcd::Zero(F.modes());
  e(i) = 1.0;
  return func_derivative(F, e);
}

}  // namespace

GrassmannPoly peierls(const GrassmannPoly& F, const GrassmannPoly& G, const KernelMatrix& S) {
  if (S.role != KernelRole::CommutatorFunction)
    throw std::invalid_argument("peierls: kernel must be in the commutator-function role");
  S.validate();
  const int M = F.modes();
  GrassmannPoly r(M);
  for (auto& Fp : F.graded_parts()) {
    int gF = 0;
    Fp.homogeneous(&gF);
    double pref = (gF % 2 == 0) ? -1.0 : 1.0;  // (-1)^{|F|+1}
    for (int i = 0; i < M; ++i) {
      GrassmannPoly dF = derivative_index(Fp, i);
      if (dF.zero()) continue;
      for (int j = 0; j < M; ++j) {
        cd k = S.K(i, j);
        if (k == cd(0.0)) continue;
        GrassmannPoly dG = derivative_index(G, j);
        if (dG.zero()) continue;
        r = r + wedge(dF, dG).scaled(pref * k);
      }
    }
  }
  return r;
}

GrassmannPoly star(const GrassmannPoly& F, const GrassmannPoly& G, const KernelMatrix& kernel,
                   int hbar_cap) {
  if (kernel.role != KernelRole::HalfIS && kernel.role != KernelRole::TwoPoint)
    throw std::invalid_argument("star: kernel must be (i/2)S or a two-point kernel");
  if (F.modes() != G.modes()) throw std::invalid_argument("star: mode count mismatch");
  const int M = F.modes();
  GrassmannPoly result(M);

  for (auto& Fp : F.graded_parts())
    for (auto& Gp : G.graded_parts()) {
      // iterate Gamma^tensor on the pair, wedging at each hbar order
      std::vector<std::pair<GrassmannPoly, GrassmannPoly>> tensor = {{Fp, Gp}};
      int gF = 0;
      Fp.homogeneous(&gF);
      double fact = 1.0;
      result = result + wedge(Fp, Gp);
      for (int k = 1; k <= hbar_cap; ++k) {
        fact *= k;
        std::vector<std::pair<GrassmannPoly, GrassmannPoly>> next;
        double pref = (gF % 2 == 0) ? -1.0 : 1.0;  // current F-side parity
        for (auto& [Fa, Ga] : tensor)
          for (int i = 0; i < M; ++i) {
            GrassmannPoly dF = derivative_index(Fa, i);
            if (dF.zero()) continue;
            for (int j = 0; j < M; ++j) {
              cd kv = kernel.K(i, j);
              if (kv == cd(0.0)) continue;
              GrassmannPoly dG = derivative_index(Ga, j);
              if (dG.zero()) continue;
              next.emplace_back(dF.scaled(pref * kv), dG);
            }
          }
        if (next.empty()) break;
        tensor = std::move(next);
        gF -= 1;
        for (auto& [Fa, Ga] : tensor) {
          GrassmannPoly w = wedge(Fa, Ga);
          result = result + w.scaled_h(HPoly::hbar_power(cd(1.0 / fact), k));
        }
      }
    }
  return result.truncated(hbar_cap);
}

GrassmannPoly gamma_map(const GrassmannPoly& F, const KernelMatrix& K, int hbar_cap) {
  if (K.role != KernelRole::AntisymmetricPart && K.role != KernelRole::SmoothDifference)
    throw std::invalid_argument("gamma_map: kernel must be an antisymmetric-part kernel");
  K.validate();
  const int M = F.modes();
  auto gamma_once = [&](const GrassmannPoly& P) {
    GrassmannPoly r(M);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        cd kv = K.K(i, j);
        if (kv == cd(0.0)) continue;
        GrassmannPoly d = derivative_index(derivative_index(P, i), j);
        if (!d.zero()) r = r + d.scaled(0.5 * kv);
      }
    return r;
  };
  GrassmannPoly result = F;
  GrassmannPoly term = F;
  double fact = 1.0;
  for (int k = 1; k <= hbar_cap; ++k) {
    fact *= k;
    term = gamma_once(term);
    if (term.zero()) break;
    result = result + term.scaled_h(HPoly::hbar_power(cd(1.0 / fact), k));
  }
  return result.truncated(hbar_cap);
}

GrassmannPoly involution(const GrassmannPoly& F, const MatrixXcd& C) {
  const int M = F.modes();
  if (C.rows() != M || C.cols() != M) throw std::invalid_argument("involution: bad map size");
  // psi_i -> sum_j conj(C_{ij}) psi_j with conjugated coefficients; the
  // antilinear map on grade-k configurations reverses factor order, which is
  // the componentwise map times (-1)^{k(k-1)/2}. This is the convention for
  // which psi(u)* = psi(u+) and (F star G)* = G* star F* hold together with
  // the two-point conjugation pattern.
  GrassmannPoly r(M);
  for (auto& [idx, c] : F.terms()) {
    int k = static_cast<int>(idx.size());
    double rev = ((k * (k - 1) / 2) % 2 == 0) ? 1.0 : -1.0;
    GrassmannPoly term = GrassmannPoly::unit(M).scaled_h(c.conjugated().scaled(rev));
    for (int i : idx) {
      VectorXcd row(M);
      for (int j = 0; j < M; ++j) row(j) = std::conj(C(i, j));
      term = wedge(term, GrassmannPoly::linear(M, row));
    }
    r = r + term;
  }
  return r;
}

}  // namespace hdirac
