#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "svf/errors.hpp"
#include "svf/pathsim.hpp"
#include "svf/sampling.hpp"

namespace svf {

namespace detail {

inline bool is_integral(double p) { return std::abs(p - std::round(p)) < 1e-9; }

// x^p with a fast path for small integer exponents (hot in the functionals).
inline double signed_pow(double x, double p) {
  if (is_integral(p) && p >= 0.0 && p <= 8.0) {
    const int n = static_cast<int>(std::lround(p));
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  }
  return std::pow(x, p);
}

}  // namespace detail

/// One summand c * prod_j m_j(x_j) with m_j = x_j^{p_j} or |x_j|^{p_j}.
/// `exponents` and `abs_flags` are dense over the k arguments; exponent 0
/// means the factor is absent.
struct MonomialTerm {
  double coefficient = 0.0;
  std::vector<double> exponents;
  std::vector<std::uint8_t> abs_flags;

  double total_degree() const {
    double d = 0.0;
    for (double p : exponents) d += p;
    return d;
  }
};

/// A test function f on R^k. The canonical representation is a monomial sum,
/// which enables the closed-form Gaussian moment machinery; arbitrary
/// evaluators are supported as an extension hook with declared growth and
/// evenness metadata.
class TestFunction {
 public:
  TestFunction(int k, std::vector<MonomialTerm> terms) : k_(k), terms_(std::move(terms)) {
    if (k_ < 1) throw ParameterError("TestFunction: dimension k must be >= 1");
    double max_exp = 0.0;
    for (const auto& t : terms_) {
      if (t.exponents.size() != static_cast<std::size_t>(k_) ||
          t.abs_flags.size() != static_cast<std::size_t>(k_))
        throw ParameterError("TestFunction: term arity does not match k");
      for (std::size_t j = 0; j < t.exponents.size(); ++j) {
        const double p = t.exponents[j];
        if (!(p >= 0.0) || !std::isfinite(p))
          throw ParameterError("TestFunction: exponents must be nonnegative and finite");
        if (!t.abs_flags[j] && !detail::is_integral(p))
          throw ParameterError(
              "TestFunction: signed factors need integer exponents (use |x| for real powers)");
        max_exp = std::max(max_exp, p);
      }
      if (!std::isfinite(t.coefficient))
        throw ParameterError("TestFunction: coefficients must be finite");
    }
    growth_p_ = max_exp > 0.0 ? max_exp : 1.0;
  }

  /// Extension hook: arbitrary evaluator with declared metadata.
  static TestFunction custom(int k, std::function<double(std::span<const double>)> evaluator,
                             double growth_p, bool globally_even, bool even_each_argument) {
    TestFunction f(k, {});
    if (!evaluator) throw ParameterError("TestFunction: evaluator must be callable");
    if (!(growth_p > 0.0)) throw ParameterError("TestFunction: growth_p must be positive");
    f.evaluator_ = std::move(evaluator);
    f.growth_p_ = growth_p;
    f.declared_globally_even_ = globally_even;
    f.declared_even_each_ = even_each_argument;
    return f;
  }

  static TestFunction parse(std::string_view expr);

  int dimension() const noexcept { return k_; }
  double growth_bound() const noexcept { return growth_p_; }
  bool has_monomial_form() const noexcept { return !evaluator_; }
  const std::vector<MonomialTerm>& terms() const noexcept { return terms_; }

  double operator()(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(k_))
      throw ParameterError("TestFunction: argument dimension mismatch");
    if (evaluator_) return evaluator_(x);
    double acc = 0.0;
    for (const auto& t : terms_) {
      double prod = t.coefficient;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double p = t.exponents[j];
        if (p == 0.0) continue;
        prod *= detail::signed_pow(t.abs_flags[j] ? std::abs(x[j]) : x[j], p);
      }
      acc += prod;
    }
    return acc;
  }

  double eval1(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  /// True when every signed factor carries an integer exponent and no |.|
  /// appears, i.e. f is a polynomial.
  bool is_polynomial() const {
    if (evaluator_) return false;
    for (const auto& t : terms_)
      for (std::size_t j = 0; j < t.exponents.size(); ++j)
        if (t.abs_flags[j] && t.exponents[j] != 0.0) return false;
    return true;
  }

  /// f(-x) == f(x): every term's signed total degree is even.
  bool globally_even() const {
    if (evaluator_) return declared_globally_even_;
    for (const auto& t : terms_) {
      long signed_deg = 0;
      for (std::size_t j = 0; j < t.exponents.size(); ++j)
        if (!t.abs_flags[j]) signed_deg += std::lround(t.exponents[j]);
      if (signed_deg % 2 != 0) return false;
    }
    return true;
  }

  /// Even in each argument separately: every signed exponent is even.
  bool even_in_each_argument() const {
    if (evaluator_) return declared_even_each_;
    for (const auto& t : terms_)
      for (std::size_t j = 0; j < t.exponents.size(); ++j)
        if (!t.abs_flags[j] && std::lround(t.exponents[j]) % 2 != 0) return false;
    return true;
  }

  std::string to_string() const;

 private:
  int k_;
  std::vector<MonomialTerm> terms_;
  double growth_p_ = 1.0;
  std::function<double(std::span<const double>)> evaluator_;
  bool declared_globally_even_ = false;
  bool declared_even_each_ = false;
};

struct FunctionalResult {
  double value = 0.0;
  std::size_t terms_used = 0;
};

/// V(f) = sum_i f(X_{t_i} - X_{t_{i-1}}) over the raw increments. f must be
/// one-dimensional.
inline FunctionalResult v_functional(const TestFunction& f, const SampleGrid& grid,
                                     std::span<const double> x) {
  if (f.dimension() != 1) throw ParameterError("v_functional: f must have k = 1");
  if (x.size() != grid.times.size())
    throw ParameterError("v_functional: value count does not match the grid");
  FunctionalResult r;
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const double dx = x[i + 1] - x[i];
    r.value += f.eval1(dx);
  }
  r.terms_used = grid.count();
  return r;
}

/// V'(f,k) = sum over windows of k consecutive normalized increments
/// Delta_i X / sqrt(tau_i). Windows past N - k + 1 would reference increments
/// beyond the grid and are truncated (boundary effect O(k/N)).
inline FunctionalResult v_prime_functional(const TestFunction& f, const SampleGrid& grid,
                                           std::span<const double> x) {
  if (x.size() != grid.times.size())
    throw ParameterError("v_prime_functional: value count does not match the grid");
  const std::size_t k = static_cast<std::size_t>(f.dimension());
  const std::size_t n = grid.count();
  FunctionalResult r;
  if (n < k) return r;

  std::vector<double> norm_inc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = grid.durations[i];
    if (!(tau > 0.0)) throw DataError("v_prime_functional: durations must be positive");
    norm_inc[i] = (x[i + 1] - x[i]) / std::sqrt(tau);
  }
  for (std::size_t i = 0; i + k <= n; ++i)
    r.value += f(std::span<const double>(norm_inc.data() + i, k));
  r.terms_used = n - k + 1;
  return r;
}

/// B(p) = sum_i |Delta_i X|^p, the approximate p-th order variation.
inline FunctionalResult b_variation(double p, const SampleGrid& grid,
                                    std::span<const double> x) {
  if (!(p > 0.0)) throw ParameterError("b_variation: order p must be positive");
  if (x.size() != grid.times.size())
    throw ParameterError("b_variation: value count does not match the grid");
  FunctionalResult r;
  for (std::size_t i = 0; i < grid.count(); ++i)
    r.value += std::pow(std::abs(x[i + 1] - x[i]), p);
  r.terms_used = grid.count();
  return r;
}

inline FunctionalResult v_functional(const TestFunction& f, const SimulatedPath& path) {
  return v_functional(f, path.grid, path.sample_x);
}
inline FunctionalResult v_prime_functional(const TestFunction& f, const SimulatedPath& path) {
  return v_prime_functional(f, path.grid, path.sample_x);
}
inline FunctionalResult b_variation(double p, const SimulatedPath& path) {
  return b_variation(p, path.grid, path.sample_x);
}

// ---------------------------------------------------------------------------
// Expression grammar:  term ('+'|'-' term)*, term = atom ('*' atom)*,
// atom = number | x[idx]['^' num] | '|x[idx]|' ['^' num].  Plain `x` is x1.
// Examples: "x^2", "|x|^3", "x1^2*x2^2", "x^4 + 2*x^2", "0.5".
// ---------------------------------------------------------------------------

namespace detail {

class FunctionParser {
 public:
  explicit FunctionParser(std::string_view s) : s_(s) {}

  TestFunction run() {
    parse_expression();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    if (raw_terms_.empty()) fail("empty expression");
    int k = 1;
    for (const auto& rt : raw_terms_)
      for (const auto& f : rt.factors) k = std::max(k, f.index);
    std::vector<MonomialTerm> terms;
    terms.reserve(raw_terms_.size());
    for (const auto& rt : raw_terms_) {
      MonomialTerm t;
      t.coefficient = rt.coefficient;
      t.exponents.assign(static_cast<std::size_t>(k), 0.0);
      t.abs_flags.assign(static_cast<std::size_t>(k), 0);
      for (const auto& f : rt.factors) {
        auto j = static_cast<std::size_t>(f.index - 1);
        if (t.exponents[j] > 0.0 && bool(t.abs_flags[j]) != f.abs)
          fail("cannot mix x and |x| for the same variable within one term");
        t.exponents[j] += f.exponent;
        t.abs_flags[j] = f.abs ? 1 : 0;
      }
      terms.push_back(std::move(t));
    }
    return TestFunction(k, std::move(terms));
  }

 private:
  struct RawFactor {
    int index = 1;
    double exponent = 1.0;
    bool abs = false;
  };
  struct RawTerm {
    double coefficient = 1.0;
    std::vector<RawFactor> factors;
  };

  void parse_expression() {
    double sign = 1.0;
    if (peek() == '+' || peek() == '-') sign = (take() == '-') ? -1.0 : 1.0;
    parse_term(sign);
    while (true) {
      skip_ws();
      const char c = peek();
      if (c != '+' && c != '-') break;
      take();
      parse_term(c == '-' ? -1.0 : 1.0);
    }
  }

  void parse_term(double sign) {
    RawTerm term;
    term.coefficient = sign;
    bool saw_atom = false;
    while (true) {
      skip_ws();
      const char c = peek();
      if (c == 'x' || c == '|') {
        term.factors.push_back(parse_factor());
        saw_atom = true;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        term.coefficient *= parse_number();
        saw_atom = true;
      } else {
        fail("expected a number, x, or |x|");
      }
      skip_ws();
      if (peek() == '*') {
        take();
        continue;
      }
      break;
    }
    if (!saw_atom) fail("empty term");
    raw_terms_.push_back(std::move(term));
  }

  RawFactor parse_factor() {
    RawFactor f;
    if (peek() == '|') {
      take();
      f.abs = true;
      skip_ws();
      if (peek() != 'x') fail("expected x inside |...|");
      take();
      f.index = parse_optional_index();
      skip_ws();
      if (peek() != '|') fail("missing closing |");
      take();
    } else {
      take();  // 'x'
      f.index = parse_optional_index();
    }
    skip_ws();
    if (peek() == '^') {
      take();
      skip_ws();
      f.exponent = parse_number();
    }
    if (!f.abs && !is_integral(f.exponent))
      fail("signed powers need integer exponents; use |x|^p for real p");
    return f;
  }

  int parse_optional_index() {
    if (!std::isdigit(static_cast<unsigned char>(peek()))) return 1;
    int idx = 0;
    while (std::isdigit(static_cast<unsigned char>(peek())))
      idx = idx * 10 + (take() - '0');
    if (idx < 1) fail("variable index must be >= 1");
    return idx;
  }

  double parse_number() {
    skip_ws();
    const std::size_t start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') take();
    if (peek() == 'e' || peek() == 'E') {
      take();
      if (peek() == '+' || peek() == '-') take();
      while (std::isdigit(static_cast<unsigned char>(peek()))) take();
    }
    if (start == pos_) fail("expected a number");
    try {
      return std::stod(std::string(s_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      fail("invalid numeric literal");
    }
    return 0.0;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  char take() { return s_[pos_++]; }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParameterError("test function: " + msg + " at position " + std::to_string(pos_) +
                         " in '" + std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<RawTerm> raw_terms_;
};

}  // namespace detail

inline TestFunction TestFunction::parse(std::string_view expr) {
  return detail::FunctionParser(expr).run();
}

inline std::string TestFunction::to_string() const {
  if (evaluator_) return "<custom evaluator on R^" + std::to_string(k_) + ">";
  std::ostringstream out;
  out.precision(12);
  bool first = true;
  for (const auto& t : terms_) {
    double c = t.coefficient;
    if (!first) {
      out << (c < 0.0 ? " - " : " + ");
      c = std::abs(c);
    } else if (c < 0.0) {
      out << "-";
      c = -c;
    }
    first = false;
    bool printed = false;
    if (c != 1.0 || t.total_degree() == 0.0) {
      out << c;
      printed = true;
    }
    for (std::size_t j = 0; j < t.exponents.size(); ++j) {
      if (t.exponents[j] == 0.0) continue;
      if (printed) out << "*";
      printed = true;
      if (t.abs_flags[j]) out << "|";
      out << "x";
      if (k_ > 1) out << (j + 1);
      if (t.abs_flags[j]) out << "|";
      if (t.exponents[j] != 1.0) out << "^" << t.exponents[j];
    }
  }
  return out.str();
}

}  // namespace svf
