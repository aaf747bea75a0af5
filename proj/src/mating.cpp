#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "bgw/errors.hpp"
#include "bgw/model.hpp"

namespace bgw {

Count l1(std::span<const Count> z) {
  Count s = 0;
  for (Count v : z) s += v;
  return s;
}

bool is_zero(std::span<const Count> z) {
  return std::all_of(z.begin(), z.end(), [](Count v) { return v == 0; });
}

std::string format_state(std::span<const Count> z) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < z.size(); ++i) os << (i ? "," : "") << z[i];
  os << ')';
  return os.str();
}

std::string to_string(MatingKind kind) {
  switch (kind) {
    case MatingKind::identity: return "identity";
    case MatingKind::perfect_fidelity: return "perfect_fidelity";
    case MatingKind::promiscuous: return "promiscuous";
    case MatingKind::custom_table: return "custom_table";
  }
  return "?";
}

MatingKind mating_kind_from_string(const std::string& name) {
  if (name == "identity") return MatingKind::identity;
  if (name == "perfect_fidelity") return MatingKind::perfect_fidelity;
  if (name == "promiscuous") return MatingKind::promiscuous;
  if (name == "custom_table") return MatingKind::custom_table;
  throw ValidationError("unknown mating kind '" + name + "'");
}

MatingFunction MatingFunction::identity(std::size_t dim) {
  if (dim == 0) throw ValidationError("identity mating needs dimension >= 1");
  MatingFunction m;
  m.kind_ = MatingKind::identity;
  m.p_ = m.q_ = dim;
  m.certificate_ = {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
  return m;
}

MatingFunction MatingFunction::perfect_fidelity() {
  MatingFunction m;
  m.kind_ = MatingKind::perfect_fidelity;
  m.p_ = 1;
  m.q_ = 2;
  m.certificate_ = {{1.0}, {0.0}};
  return m;
}

MatingFunction MatingFunction::promiscuous() {
  MatingFunction m = perfect_fidelity();
  m.kind_ = MatingKind::promiscuous;
  return m;
}

MatingFunction MatingFunction::custom_table(std::size_t p, std::size_t q, Count bound,
                                            std::vector<Count> cells,
                                            std::optional<Certificate> certificate) {
  if (p == 0 || q == 0) throw ValidationError("custom_table needs p, q >= 1");
  if (bound < 0) throw ValidationError("custom_table box bound must be >= 0");
  std::uint64_t n = 1;
  for (std::size_t j = 0; j < q; ++j) n *= static_cast<std::uint64_t>(bound + 1);
  if (cells.size() != n * p) {
    throw ValidationError("custom_table has " + std::to_string(cells.size()) + " values, expected " +
                          std::to_string(n * p));
  }
  if (std::any_of(cells.begin(), cells.end(), [](Count v) { return v < 0; })) {
    throw ValidationError("custom_table values must be non-negative");
  }
  MatingFunction m;
  m.kind_ = MatingKind::custom_table;
  m.p_ = p;
  m.q_ = q;
  m.bound_ = bound;
  m.cells_ = std::move(cells);
  if (certificate) {
    if (certificate->alpha.size() != p || certificate->beta.size() != p) {
      throw ValidationError("certificate alpha/beta must have length p");
    }
    m.certificate_ = *certificate;
  } else {
    m.certificate_derived_ = true;
    m.certificate_ = {std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
    std::vector<Count> x(q, 0);
    for (std::uint64_t idx = 0; idx < n; ++idx) {
      std::uint64_t rest = idx;
      Count norm = 0;
      for (std::size_t j = q; j-- > 0;) {
        x[j] = static_cast<Count>(rest % static_cast<std::uint64_t>(bound + 1));
        rest /= static_cast<std::uint64_t>(bound + 1);
        norm += x[j];
      }
      if (norm == 0) continue;
      for (std::size_t i = 0; i < p; ++i) {
        const double ratio = static_cast<double>(m.cells_[idx * p + i]) / static_cast<double>(norm);
        m.certificate_.alpha[i] = std::max(m.certificate_.alpha[i], ratio);
      }
    }
  }
  return m;
}

MatingFunction MatingFunction::with_certificate(Certificate certificate) const {
  if (certificate.alpha.size() != p_ || certificate.beta.size() != p_) {
    throw ValidationError("certificate alpha/beta must have length p");
  }
  MatingFunction m = *this;
  m.certificate_ = std::move(certificate);
  m.certificate_derived_ = false;
  return m;
}

bool MatingFunction::in_domain(std::span<const Count> w) const {
  if (kind_ != MatingKind::custom_table) return true;
  return std::all_of(w.begin(), w.end(), [&](Count v) { return v >= 0 && v <= bound_; });
}

void MatingFunction::apply_into(std::span<const Count> w, std::span<Count> out) const {
  if (w.size() != q_) {
    throw ValidationError("mating input has length " + std::to_string(w.size()) + ", expected " +
                          std::to_string(q_));
  }
  switch (kind_) {
    case MatingKind::identity:
      std::copy(w.begin(), w.end(), out.begin());
      return;
    case MatingKind::perfect_fidelity:
      out[0] = std::min(w[0], w[1]);
      return;
    case MatingKind::promiscuous:
      out[0] = w[1] > 0 ? w[0] : 0;
      return;
    case MatingKind::custom_table: {
      std::uint64_t idx = 0;
      for (Count v : w) {
        if (v < 0 || v > bound_) {
          throw DomainError("custom_table lookup " + format_state(w) + " outside box [0," +
                            std::to_string(bound_) + "]");
        }
        idx = idx * static_cast<std::uint64_t>(bound_ + 1) + static_cast<std::uint64_t>(v);
      }
      std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(idx * p_), p_, out.begin());
      return;
    }
  }
}

StateVector MatingFunction::apply(std::span<const Count> w) const {
  StateVector out(p_, 0);
  apply_into(w, out);
  return out;
}

Probability Probability::from_rational(const Rational& r) {
  return {static_cast<double>(r), r};
}

Probability Probability::from_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return parse(std::string(buf, res.ptr));
}

namespace {

using boost::multiprecision::cpp_int;

cpp_int pow10(int e) {
  cpp_int r = 1;
  for (int i = 0; i < e; ++i) r *= 10;
  return r;
}

Rational parse_decimal(const std::string& s) {
  std::size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) negative = s[i++] == '-';
  cpp_int mantissa = 0;
  int scale = 0;
  bool digits = false;
  bool point = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      mantissa = mantissa * 10 + (c - '0');
      if (point) ++scale;
      digits = true;
    } else if (c == '.' && !point) {
      point = true;
    } else {
      break;
    }
  }
  if (!digits) throw ValidationError("cannot parse probability '" + s + "'");
  int exponent = 0;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    std::size_t used = 0;
    try {
      exponent = std::stoi(s.substr(i), &used);
    } catch (const std::exception&) {
      throw ValidationError("cannot parse probability '" + s + "'");
    }
    i += used;
  }
  if (i != s.size()) throw ValidationError("cannot parse probability '" + s + "'");
  Rational r(mantissa);
  const int shift = exponent - scale;
  if (shift >= 0) {
    r *= pow10(shift);
  } else {
    r /= pow10(-shift);
  }
  return negative ? Rational(-r) : r;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Probability Probability::parse(const std::string& text) {
  const std::string s = trim(text);
  const auto slash = s.find('/');
  Rational r;
  if (slash == std::string::npos) {
    r = parse_decimal(s);
  } else {
    const Rational num = parse_decimal(trim(s.substr(0, slash)));
    const Rational den = parse_decimal(trim(s.substr(slash + 1)));
    if (den == 0) throw ValidationError("zero denominator in probability '" + s + "'");
    r = num / den;
  }
  return from_rational(r);
}

}  // namespace bgw
