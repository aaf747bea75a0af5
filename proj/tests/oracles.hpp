#pragma once

// Reference computations that share no code with the library: brute-force
// enumeration of couple outcomes and dense linear algebra.

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using State = std::vector<std::int64_t>;
using Xi = std::function<State(const State&)>;

struct Atom {
  State children;
  Rational prob;
};
using Law = std::vector<Atom>;

inline Law law_a() {
  return {{{0, 0}, Rational(1, 2)}, {{1, 0}, Rational(1, 8)}, {{0, 1}, Rational(1, 8)},
          {{2, 0}, Rational(1, 16)}, {{1, 1}, Rational(1, 8)}, {{0, 2}, Rational(1, 16)}};
}

inline Xi min_xi() {
  return [](const State& w) { return State{std::min(w[0], w[1])}; };
}
inline Xi promiscuous_xi() {
  return [](const State& w) { return State{w[1] > 0 ? w[0] : 0}; };
}
inline Xi model_b_xi() {
  return [](const State& w) { return State{w[0] + std::min(w[0], w[1])}; };
}
inline Xi identity_xi() {
  return [](const State& w) { return w; };
}

inline std::vector<Law> classical_laws() {
  return {{{{0, 0}, Rational(1, 2)}, {{1, 0}, Rational(3, 10)}, {{1, 1}, Rational(1, 5)}},
          {{{0, 0}, Rational(3, 5)}, {{0, 1}, Rational(3, 10)}, {{1, 1}, Rational(1, 10)}}};
}

/// Law of Z_1 from z by walking every tuple of per-couple outcomes.
inline std::map<State, Rational> enumerate_step(const std::vector<Law>& laws, const Xi& xi, const State& z) {
  std::vector<std::size_t> parents;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::int64_t c = 0; c < z[i]; ++c) parents.push_back(i);
  const std::size_t q = laws[0][0].children.size();
  std::map<State, Rational> out;
  State w(q, 0);
  std::function<void(std::size_t, Rational)> rec = [&](std::size_t k, Rational p) {
    if (k == parents.size()) {
      out[xi(w)] += p;
      return;
    }
    for (const auto& a : laws[parents[k]]) {
      for (std::size_t j = 0; j < q; ++j) w[j] += a.children[j];
      rec(k + 1, p * a.prob);
      for (std::size_t j = 0; j < q; ++j) w[j] -= a.children[j];
    }
  };
  rec(0, Rational(1));
  return out;
}

/// One-type states 1..R: dense alive-to-alive matrix from enumeration.
inline Eigen::MatrixXd dense_kernel_1d(const std::vector<Law>& laws, const Xi& xi, std::int64_t R) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(R, R);
  for (std::int64_t x = 1; x <= R; ++x) {
    for (const auto& [y, p] : enumerate_step(laws, xi, State{x})) {
      if (y[0] >= 1 && y[0] <= R) k(x - 1, y[0] - 1) += static_cast<double>(p);
    }
  }
  return k;
}

inline double perron_root(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  double r = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) r = std::max(r, std::abs(es.eigenvalues()(i)));
  return r;
}

/// Second over first eigenvalue modulus.
inline double modulus_ratio(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  std::vector<double> mod;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mod.rbegin(), mod.rend());
  return mod[1] / mod[0];
}

/// Left Perron vector normalised to a probability (irreducible case).
inline Eigen::VectorXd left_perron(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

/// mu = delta_a (I - K / lambda)^{-1}, normalised, with S its total mass.
inline std::pair<Eigen::VectorXd, double> resolvent(const Eigen::MatrixXd& k, double lambda, Eigen::Index a) {
  const Eigen::Index n = k.rows();
  const Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(n, n) - k / lambda).transpose();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e(a) = 1.0;
  const Eigen::VectorXd x = A.fullPivLu().solve(e);
  return {x / x.sum(), x.sum()};
}

/// P_z(Z_n = . | Z_n alive) from dense matrix powers.
inline Eigen::VectorXd conditional_law(const Eigen::MatrixXd& k, Eigen::Index z, int n) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(k.rows());
  v(z) = 1.0;
  for (int i = 0; i < n; ++i) v = v * k;
  return (v / v.sum()).transpose();
}

/// log P_z(alive at n) for n = 0..n_max with per-step rescaling.
inline std::vector<double> log_survival(const Eigen::MatrixXd& k, Eigen::Index z, int n_max) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(k.rows());
  v(z) = 1.0;
  std::vector<double> out{0.0};
  double shift = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    v = v * k;
    const double s = v.sum();
    shift += std::log(s);
    v /= s;
    out.push_back(shift);
  }
  return out;
}

/// Slope of y against log n over [lo, hi] by ordinary least squares.
inline double log_slope(const std::vector<double>& y, int lo, int hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = hi - lo + 1;
  for (int n = lo; n <= hi; ++n) {
    const double x = std::log(static_cast<double>(n));
    sx += x;
    sy += y[static_cast<std::size_t>(n)];
    sxx += x * x;
    sxy += x * y[static_cast<std::size_t>(n)];
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace oracle
