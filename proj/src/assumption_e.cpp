#include <algorithm>
#include <cmath>

#include "bgw/errors.hpp"
#include "bgw/lyapunov.hpp"
#include "graph.hpp"

namespace bgw {

namespace {

Count choose_small_set(const TruncatedKernel& k, const Eigen::VectorXd& q, double threshold) {
  const Count R = k.radius();
  const auto p = static_cast<Count>(k.states.p());
  // Smallest r1 >= p with Q_a >= threshold at every state of size > r1.
  Count r1 = R;
  for (Count r = R - 1; r >= std::min(p, R); --r) {
    bool ok = true;
    for (std::size_t x = 0; x < k.size(); ++x) {
      if (l1(k.states[x]) > r && q(static_cast<Eigen::Index>(x)) < threshold) {
        ok = false;
        break;
      }
    }
    if (!ok) break;
    r1 = r;
  }
  return std::max(r1, std::min(p, R));
}

}  // namespace

AssumptionEReport verify_assumption_E(const TruncatedKernel& k, double theta0_hat, const LyapunovWeights& w,
                                      const EOptions& o) {
  const auto n = static_cast<Eigen::Index>(k.size());
  if (w.q.size() != n) throw ValidationError("Lyapunov weights do not match the kernel states");
  if (!(w.q.minCoeff() > 0.0)) throw NumericError("Q_a must be positive on the truncation");
  AssumptionEReport r;
  r.theta0_hat = theta0_hat;

  // Drift of Q_a under the truncated kernel.
  const Eigen::VectorXd kq = k.matrix * w.q;
  const double hi = std::max(theta0_hat, w.asymptotic_rate * (1.0 + 1e-9));
  r.theta_a = open_geometric_grid(w.asymptotic_rate, hi, o.grid_points).front();
  r.C_a = std::max(0.0, (kq - r.theta_a * w.q).maxCoeff());
  r.theta1 = 0.5 * (r.theta_a + theta0_hat);
  r.theta2 = 0.5 * (r.theta1 + theta0_hat);

  // Small set.
  if (o.small_set_radius) {
    if (*o.small_set_radius < 1 || *o.small_set_radius > k.radius()) {
      throw ValidationError("small-set radius must lie in [1, R]");
    }
    r.small_set_radius = *o.small_set_radius;
  } else if (r.theta1 > r.theta_a) {
    r.small_set_radius = choose_small_set(k, w.q, r.C_a / (r.theta1 - r.theta_a));
  } else {
    r.small_set_radius = k.radius();
  }
  Eigen::VectorXd in_k = Eigen::VectorXd::Zero(n);
  for (std::size_t x = 0; x < k.size(); ++x) {
    if (l1(k.states[x]) <= r.small_set_radius) {
      r.small_set.push_back(x);
      in_k(static_cast<Eigen::Index>(x)) = 1.0;
    }
  }

  // E1: minorisation by the reference point.
  const StateVector ref = o.reference.value_or(StateVector(k.states.p(), 1));
  const auto ref_idx = k.states.find(ref);
  if (ref_idx && in_k(static_cast<Eigen::Index>(*ref_idx)) > 0) {
    r.reference = *ref_idx;
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    col(static_cast<Eigen::Index>(*ref_idx)) = 1.0;
    for (int m = 1; m <= o.n1_cap; ++m) {
      col = k.matrix * col;  // col(x) = P_x(Z_m = ref)
      double c = std::numeric_limits<double>::infinity();
      for (std::size_t x : r.small_set) c = std::min(c, col(static_cast<Eigen::Index>(x)));
      if (c > 0.0) {
        r.n1 = m;
        r.c1 = c;
        break;
      }
    }
  }
  r.e1 = r.n1.has_value() && r.c1 > 0.0;

  // E2': phi1 = Q_a / inf Q_a.
  r.phi1 = w.q / w.q.minCoeff();
  const Eigen::VectorXd drift1 = k.matrix * r.phi1 - r.theta1 * r.phi1;
  r.e2prime_worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index x = 0; x < n; ++x) {
    if (in_k(x) > 0) {
      r.c2 = std::max(r.c2, drift1(x));
    } else {
      r.e2prime_worst = std::max(r.e2prime_worst, drift1(x));
    }
  }
  // No state outside K leaves e2prime_worst at -inf, which passes.
  r.e2prime = r.theta1 < theta0_hat && r.theta_a < theta0_hat &&
              r.e2prime_worst <= o.tol * std::max(1.0, r.phi1.maxCoeff());

  // E3: Harnack ratio of survival over the small set.
  Eigen::VectorXd alive = Eigen::VectorXd::Ones(n);
  r.c3 = 0.0;
  for (int m = 0; m <= o.window; ++m) {
    if (m > 0) {
      alive = k.matrix * alive;
      const double scale = alive.maxCoeff();
      if (scale <= 0.0) break;
      alive /= scale;
    }
    double lo = std::numeric_limits<double>::infinity(), top = 0.0;
    for (std::size_t x : r.small_set) {
      lo = std::min(lo, alive(static_cast<Eigen::Index>(x)));
      top = std::max(top, alive(static_cast<Eigen::Index>(x)));
    }
    const double ratio = lo > 0.0 ? top / lo : std::numeric_limits<double>::infinity();
    r.harnack.push_back(ratio);
    r.c3 = std::max(r.c3, ratio);
  }
  if (r.harnack.size() == static_cast<std::size_t>(o.window) + 1) {
    const double last = r.harnack.back();
    const double earlier = r.harnack[r.harnack.size() * 4 / 5];
    r.c3_stabilized = std::isfinite(last) && std::abs(last - earlier) <= 1e-6 * last;
  }
  r.e3 = std::isfinite(r.c3) && r.c3_stabilized;

  // E4: structural period of each small-set state and persistence of P_z(Z_n in K) > 0.
  const auto g = detail::positive_graph(k.matrix);
  auto comps = detail::tarjan(g);
  std::vector<std::size_t> class_of(k.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    for (std::size_t v : comps[c]) class_of[v] = c;
  }
  const int horizon = std::max<int>(64, 2 * static_cast<int>(k.size()));
  r.e4 = true;
  for (std::size_t z : r.small_set) {
    r.periods.push_back(detail::class_period(g, comps[class_of[z]], class_of, class_of[z]));
    std::vector<char> cur(k.size(), 0), next(k.size(), 0);
    cur[z] = 1;
    bool ok = true;
    for (int m = 1; m <= horizon; ++m) {
      std::fill(next.begin(), next.end(), 0);
      for (std::size_t u = 0; u < k.size(); ++u) {
        if (!cur[u]) continue;
        for (std::size_t v : g[u]) next[v] = 1;
      }
      std::swap(cur, next);
      if (m >= horizon / 2) {
        bool hit = false;
        for (std::size_t x : r.small_set) hit = hit || cur[x];
        if (!hit) ok = false;
      }
    }
    r.aperiodic.push_back(ok && r.periods.back() == 1);
    r.e4 = r.e4 && r.aperiodic.back();
  }

  // E2 from E2': phi2 = C sum_{k<n} theta2^-k P_z(Z_k in K).
  std::vector<Eigen::VectorXd> scaled{in_k};  // theta2^-k P_.(Z_k in K)
  for (int m = 1; m <= o.n2_cap; ++m) {
    scaled.push_back(k.matrix * scaled.back() / r.theta2);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t x : r.small_set) worst = std::min(worst, scaled.back()(static_cast<Eigen::Index>(x)));
    if (worst >= 1.0) {
      r.n2 = m;
      break;
    }
  }
  if (!r.n2) {
    r.e2_note = "no n <= " + std::to_string(o.n2_cap) + " with inf_K theta2^-n P(Z_n in K) >= 1";
  } else {
    const int m = *r.n2;
    const double log_total = ((m - 1) * -std::log(r.theta2)) + std::log1p(-std::pow(r.theta2, m)) -
                             std::log1p(-r.theta2);  // log sum_{k<m} theta2^-k
    if (log_total > 700) {
      r.e2_note = "normalising sum overflows";
    } else {
      r.c_theta2 = std::exp(-log_total);
      r.phi2 = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < m; ++j) r.phi2 += scaled[static_cast<std::size_t>(j)];
      r.phi2 *= r.c_theta2;
      const Eigen::VectorXd kphi2 = k.matrix * r.phi2;
      const Eigen::VectorXd identity =
          kphi2 - r.theta2 * r.phi2 - r.c_theta2 * r.theta2 * (scaled[static_cast<std::size_t>(m)] - in_k);
      r.phi2_identity_residual = identity.lpNorm<Eigen::Infinity>();
      r.phi2_drift_worst = (kphi2 - r.theta2 * r.phi2).minCoeff();
      r.phi2_sup = r.phi2.maxCoeff();
      r.phi2_inf_small_set = std::numeric_limits<double>::infinity();
      for (std::size_t x : r.small_set) {
        r.phi2_inf_small_set = std::min(r.phi2_inf_small_set, r.phi2(static_cast<Eigen::Index>(x)));
      }
    }
  }
  r.e2 = r.n2.has_value() && r.e2_note.empty() && r.e2prime && r.theta1 < r.theta2 &&
         r.phi2_identity_residual <= o.tol && r.phi2_drift_worst >= -o.tol && r.phi2_sup <= 1.0 + o.tol &&
         r.phi2_inf_small_set >= r.c_theta2 * (1.0 - 1e-12);
  return r;
}

}  // namespace bgw
