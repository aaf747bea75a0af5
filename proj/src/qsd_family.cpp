#include <algorithm>
#include <cmath>
#include <set>

#include "bgw/errors.hpp"
#include "bgw/qsd_family.hpp"

namespace bgw {

QsdFamilyEntry resolvent_measure(const TruncatedKernel& k, double theta, double lambda, std::size_t anchor,
                                 double tail_tol) {
  if (lambda >= 1.0) throw DomainError("resolvent family needs lambda < 1");
  if (lambda <= theta) {
    throw ConvergenceError("resolvent series diverges: lambda=" + std::to_string(lambda) +
                           " <= theta=" + std::to_string(theta));
  }
  if (anchor >= k.size()) throw DomainError("anchor outside the truncation");
  const auto n = static_cast<Eigen::Index>(k.size());
  const SparseRowMatrix kt = k.matrix.transpose();
  const double rho = theta / lambda;

  Eigen::VectorXd term = Eigen::VectorXd::Zero(n);
  term(static_cast<Eigen::Index>(anchor)) = 1.0;
  Eigen::VectorXd m = term;
  int terms = 1;
  double bound = 1.0 / (1.0 - rho);
  constexpr int kMaxTerms = 10'000'000;
  for (;;) {
    term = kt * term / lambda;  // lambda^-(L+1) delta K^(L+1)
    bound *= rho;
    const double next = term.sum();
    if (bound <= tail_tol && next / (1.0 - rho) <= tail_tol * m.sum()) break;
    m += term;
    if (++terms > kMaxTerms) throw ConvergenceError("resolvent series needs more than 10^7 terms");
  }

  QsdFamilyEntry e;
  e.lambda = lambda;
  e.anchor = anchor;
  e.S = m.sum();
  e.mu = m / e.S;
  e.one_step_defect = lambda / e.S;
  e.terms = terms;
  Eigen::VectorXd id = kt * e.mu - lambda * e.mu;
  id(static_cast<Eigen::Index>(anchor)) += e.one_step_defect;
  e.identity_residual = id.lpNorm<1>();
  return e;
}

FamilyReport build_family(const TruncatedKernel& k, double theta, const std::vector<double>& lambda_grid,
                          const std::vector<std::size_t>& anchors, double tail_tol) {
  FamilyReport r;
  r.lambdas = lambda_grid;
  r.anchors = anchors;
  for (double lambda : lambda_grid) {
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t a : anchors) {
      auto e = resolvent_measure(k, theta, lambda, a, tail_tol);
      if (!(e.one_step_defect < prev)) decreasing = false;
      prev = e.one_step_defect;
      r.max_identity_residual = std::max(r.max_identity_residual, e.identity_residual);
      r.entries.push_back(std::move(e));
    }
    r.defect_decreasing.push_back(decreasing);
  }
  if (lambda_grid.size() >= 2 && !anchors.empty()) {
    const std::size_t na = anchors.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      for (std::size_t j = i + 1; j < lambda_grid.size(); ++j) {
        const auto& mi = r.entries[i * na + na - 1].mu;
        const auto& mj = r.entries[j * na + na - 1].mu;
        best = std::min(best, (mi - mj).lpNorm<1>());
      }
    }
    r.min_pairwise_distance = best;
  }
  return r;
}

std::vector<std::size_t> auto_anchors(const TruncatedKernel& k, const SpectralResult& s) {
  const Count R = k.radius();
  const std::size_t p = k.states.p();
  std::vector<std::size_t> out;
  std::set<std::size_t> seen;
  for (Count m = 1; m <= R; ++m) {
    StateVector x(p);
    for (std::size_t i = 0; i < p; ++i) x[i] = static_cast<Count>(std::llround(static_cast<double>(m) * s.z_star[i]));
    while (l1(x) > R) {
      auto it = std::max_element(x.begin(), x.end());
      --*it;
    }
    if (is_zero(x)) continue;
    const std::size_t idx = k.states.at(x);
    if (seen.insert(idx).second) out.push_back(idx);
  }
  return out;
}

std::vector<double> default_lambda_grid(double theta, int count) {
  const double lo = theta + 0.05;
  const double hi = 0.95;
  if (lo >= hi) throw DomainError("theta too close to 1 for the default lambda grid");
  std::vector<double> g;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    g.push_back(lo * std::pow(hi / lo, t));
  }
  return g;
}

Upsilon0Estimate estimate_upsilon0(const TruncatedKernel& k, const QsdEstimate& q, int n_lo, int n_hi, double tol) {
  Upsilon0Estimate u;
  u.value = q.theta;
  u.n_lo = n_lo;
  u.n_hi = n_hi;
  Eigen::Index best = 0;
  q.eta.maxCoeff(&best);
  u.start_state = static_cast<std::size_t>(best);
  const auto prof = survival_profile(k, u.start_state, n_hi);
  if (std::isinf(prof[static_cast<std::size_t>(n_hi)])) {
    throw RangeError("survival vanishes before n=" + std::to_string(n_hi) + "; no tail to regress");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = n_hi - n_lo + 1;
  for (int n = n_lo; n <= n_hi; ++n) {
    const double y = prof[static_cast<std::size_t>(n)];
    sx += n;
    sy += y;
    sxx += static_cast<double>(n) * n;
    sxy += n * y;
  }
  u.regression_rate = std::exp((m * sxy - sx * sy) / (m * sxx - sx * sx));
  u.consistent = std::abs(u.regression_rate - q.theta) <= tol;
  return u;
}

}  // namespace bgw
