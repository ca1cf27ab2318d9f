#include "hdirac/background.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hdirac {

bool BackgroundSpec::flat_chart() const {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!metric[i][j].is_constant()) return false;
  return true;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

BackgroundSpec BackgroundSpec::parse(const std::string& text) {
  BackgroundSpec bg;
  std::map<std::pair<int, int>, std::string> metric_src;
  std::map<int, std::string> a_src;
  std::string m_src = "0";
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("background file line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));

    if (key == "dim") {
      bg.n = std::stoi(val);
    } else if (key == "coords") {
      bg.coords = split_list(val);
    } else if (key.rfind("metric[", 0) == 0) {
      int i, j;
      if (std::sscanf(key.c_str(), "metric[%d][%d]", &i, &j) != 2)
        throw std::runtime_error("background file line " + std::to_string(lineno) + ": bad metric key");
      metric_src[{i, j}] = unquote(val);
    } else if (key.rfind("A[", 0) == 0) {
      int i;
      if (std::sscanf(key.c_str(), "A[%d]", &i) != 1)
        throw std::runtime_error("background file line " + std::to_string(lineno) + ": bad A key");
      a_src[i] = unquote(val);
    } else if (key == "m") {
      m_src = unquote(val);
    } else if (key == "spin_structure") {
      if (val == "periodic")
        bg.spin_structure = SpinStructure::Periodic;
      else if (val == "antiperiodic")
        bg.spin_structure = SpinStructure::Antiperiodic;
      else
        throw std::runtime_error("spin_structure must be periodic or antiperiodic");
    } else if (key == "L") {
      bg.circumference = std::stod(val);
    } else if (key == "alpha") {
      auto xs = split_list(val);
      if (xs.size() != 4) throw std::runtime_error("alpha expects 4 values (alpha0 alpha1 alpha2 alpha4)");
      for (int i = 0; i < 4; ++i) bg.alpha[i] = std::stod(xs[i]);
    } else if (key == "beta") {
      auto xs = split_list(val);
      if (xs.size() != 4) throw std::runtime_error("beta expects 4 values (beta0..beta3)");
      for (int i = 0; i < 4; ++i) bg.beta[i] = std::stod(xs[i]);
    } else {
      throw std::runtime_error("background file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }

  if (bg.n < 2) throw std::runtime_error("background file: dim must be >= 2");
  if (static_cast<int>(bg.coords.size()) != bg.n)
    throw std::runtime_error("background file: coords count must match dim");

  bg.metric.assign(bg.n, std::vector<Expression>(bg.n));
  for (int i = 0; i < bg.n; ++i)
    for (int j = 0; j < bg.n; ++j) {
      std::string src;
      if (metric_src.count({i, j}))
        src = metric_src[{i, j}];
      else if (metric_src.count({j, i}))
        src = metric_src[{j, i}];
      else if (i == j)
        throw std::runtime_error("background file: missing metric[" + std::to_string(i) + "][" +
                                 std::to_string(i) + "]");
      else
        src = "0";
      bg.metric[i][j] = Expression::parse(src, bg.coords);
    }
  bg.A.resize(bg.n);
  for (int i = 0; i < bg.n; ++i)
    bg.A[i] = Expression::parse(a_src.count(i) ? a_src[i] : "0", bg.coords);
  bg.m = Expression::parse(m_src, bg.coords);
  return bg;
}

BackgroundSpec BackgroundSpec::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open background file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

BackgroundSpec BackgroundSpec::minkowski(int n) {
  std::ostringstream os;
  os << "dim = " << n << "\ncoords = ";
  for (int i = 0; i < n; ++i) os << (i ? ", x" + std::to_string(i) : "t");
  os << "\n";
  for (int i = 0; i < n; ++i)
    os << "metric[" << i << "][" << i << "] = \"" << (i == 0 ? "-1" : "1") << "\"\n";
  os << "m = \"0\"\n";
  return parse(os.str());
}

BackgroundSpec BackgroundSpec::circle(double L, const std::string& m_expr, double wilson_a,
                                      SpinStructure spin) {
  std::ostringstream os;
  os.precision(17);
  os << "dim = 2\ncoords = t, x\n";
  os << "metric[0][0] = \"-1\"\nmetric[1][1] = \"1\"\n";
  os << "A[1] = \"" << wilson_a << "\"\n";
  os << "m = \"" << m_expr << "\"\n";
  os << "spin_structure = " << (spin == SpinStructure::Periodic ? "periodic" : "antiperiodic") << "\n";
  os << "L = " << L << "\n";
  return parse(os.str());
}

}  // namespace hdirac
