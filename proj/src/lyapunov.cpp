#include <algorithm>
#include <cmath>
#include <map>

#include "bgw/errors.hpp"
#include "bgw/lyapunov.hpp"

namespace bgw {

MomentCheck check_moment_assumption(const ModelSpec& spec, const SpectralResult& s, double theta0_hat, double r) {
  if (!(r > 1.0)) throw ValidationError("moment exponent r must exceed 1");
  MomentCheck m;
  m.r = r;
  m.moments = spec.moments(r);
  const double lambda = s.lambda_star;
  if (lambda >= 1.0) {
    m.subcritical = false;
    m.note = "not subcritical: lambda* >= 1";
    m.minimal_r = std::numeric_limits<double>::infinity();
    m.margin = theta0_hat - std::pow(lambda, r);
    return m;
  }
  m.minimal_r = std::abs(std::log(theta0_hat)) / std::abs(std::log(lambda));
  m.margin = theta0_hat - std::pow(lambda, r);
  const bool finite = std::all_of(m.moments.begin(), m.moments.end(), [](double x) { return std::isfinite(x); });
  m.pass = finite && m.margin > 0.0;
  if (!m.pass) m.note = "lambda*^r >= theta0";
  return m;
}

namespace {

class PCache {
 public:
  PCache(const ModelSpec& spec, const SpectralResult& s, double a) : spec_(spec), s_(s), a_(a) {}

  double q(const StateVector& z) {
    auto it = cache_.find(z);
    if (it != cache_.end()) return it->second;
    const double v = std::pow(eval_P(spec_, s_, std::span<const Count>(z)), a_);
    cache_.emplace(z, v);
    return v;
  }

 private:
  const ModelSpec& spec_;
  const SpectralResult& s_;
  double a_;
  std::map<StateVector, double> cache_;
};

struct Moment {
  double mean = 0.0;
  double half_width = 0.0;
};

Moment drift_lhs(const ModelSpec& spec, const StateVector& z, PCache& cache, BuildMode mode, std::uint64_t cap,
                 std::uint64_t samples, std::uint64_t seed, std::uint64_t stream_hi) {
  if (mode == BuildMode::exact) {
    double lhs = 0.0;
    for (const auto& [y, prob] : step_distribution(spec, z, cap)) {
      if (!is_zero(y)) lhs += prob * cache.q(y);
    }
    return {lhs, 0.0};
  }
  double sum = 0.0, sum2 = 0.0;
  StateVector w(spec.q()), y(spec.p());
  for (std::uint64_t s = 0; s < samples; ++s) {
    const CounterStream stream(seed, stream_key(stream_hi, s));
    sample_children(spec, z, stream, w);
    spec.mating().apply_into(w, y);
    const double v = is_zero(y) ? 0.0 : cache.q(y);
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean) * n / (n - 1.0);
  return {mean, 1.959963984540054 * std::sqrt(var / n)};
}

}  // namespace

LyapunovWeights lyapunov_weights(const ModelSpec& spec, const SpectralResult& s, double a, const StateIndex& states) {
  LyapunovWeights w;
  w.a = a;
  w.asymptotic_rate = std::pow(s.lambda_star, a);
  w.q.resize(static_cast<Eigen::Index>(states.size()));
  PCache cache(spec, s, a);
  for (std::size_t i = 0; i < states.size(); ++i) w.q(static_cast<Eigen::Index>(i)) = cache.q(states[i]);
  return w;
}

std::vector<double> open_geometric_grid(double lo, double hi, int count) {
  std::vector<double> g;
  for (int i = 1; i <= count; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count + 1)));
  return g;
}

LyapunovReport verify_drift(const ModelSpec& spec, const SpectralResult& s, const DriftOptions& o) {
  if (!(o.a > 1.0)) throw ValidationError("drift exponent a must exceed 1");
  if (!(o.theta0_hat > 0.0)) throw ValidationError("drift check needs a positive theta0 estimate");
  if (o.mode == BuildMode::exact) require_table_covers(spec, o.radius);
  LyapunovReport r;
  r.a = o.a;
  r.theta0_hat = o.theta0_hat;
  r.asymptotic_rate = std::pow(s.lambda_star, o.a);
  r.checked_radius = o.radius;
  r.mode = o.mode;
  PCache cache(spec, s, o.a);

  const StateIndex states(spec.p(), o.radius);
  for (std::size_t x = 0; x < states.size(); ++x) {
    DriftState d;
    d.z = states[x];
    d.q = cache.q(d.z);
    const auto m = drift_lhs(spec, d.z, cache, o.mode, o.cap, o.samples, o.seed, x);
    d.lhs = m.mean;
    d.ci_lo = m.mean - m.half_width;
    d.ci_hi = m.mean + m.half_width;
    r.states.push_back(std::move(d));
  }

  r.theta_a_below_theta0 = r.asymptotic_rate < o.theta0_hat;
  double hi = o.theta0_hat;
  if (!r.theta_a_below_theta0) {
    if (r.asymptotic_rate >= 1.0) throw DomainError("lambda*^a >= 1: no drift rate below 1 exists");
    hi = 1.0;
  }
  const auto grid = open_geometric_grid(r.asymptotic_rate, hi, o.grid_points);
  // Every grid point is feasible on a finite set; the smallest one is kept.
  r.theta_a = grid.front();
  r.theta_a_below_theta0 = r.theta_a < o.theta0_hat;
  double c = 0.0;
  for (const auto& d : r.states) c = std::max(c, d.lhs - r.theta_a * d.q);
  r.C_a = c;
  for (auto& d : r.states) {
    d.rhs = r.theta_a * d.q + r.C_a;
    const double slack = 1e-12 * std::max(1.0, d.rhs);
    if (o.mode == BuildMode::exact) {
      if (d.lhs > d.rhs + slack) r.violations.push_back(d);
    } else if (d.ci_lo > d.rhs + slack) {
      r.violations.push_back(d);
    } else if (d.ci_hi > d.rhs + slack) {
      r.undetermined.push_back(d);
    }
  }

  double prev = std::numeric_limits<double>::infinity();
  r.step1_monotone = true;
  for (Count k : o.ladder) {
    Step1Point pt;
    pt.k = k;
    pt.z.resize(spec.p());
    for (std::size_t i = 0; i < spec.p(); ++i) {
      pt.z[i] = static_cast<Count>(std::llround(static_cast<double>(k) * s.z_star[i]));
    }
    if (is_zero(pt.z)) continue;
    const BuildMode mode = children_box_cells(spec, pt.z) <= o.cap ? BuildMode::exact : BuildMode::monte_carlo;
    const auto m = drift_lhs(spec, pt.z, cache, mode, o.cap, o.samples, o.seed, 0xFFFF0000ULL + static_cast<std::uint64_t>(k));
    pt.ratio = m.mean / cache.q(pt.z);
    pt.excess = std::max(0.0, pt.ratio - r.asymptotic_rate);
    if (pt.excess > prev + 1e-12) r.step1_monotone = false;
    prev = pt.excess;
    r.step1.push_back(std::move(pt));
  }
  return r;
}

}  // namespace bgw
