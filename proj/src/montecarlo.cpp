#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "bgw/errors.hpp"
#include "bgw/montecarlo.hpp"

namespace bgw {

InitialLaw InitialLaw::dirac(StateVector z) {
  InitialLaw law;
  law.states.push_back(std::move(z));
  law.probs.push_back(1.0);
  return law;
}

InitialLaw InitialLaw::from_vector(const StateIndex& index, const Eigen::VectorXd& nu) {
  InitialLaw law;
  const double total = nu.sum();
  if (!(total > 0.0)) throw ValidationError("initial law has no mass");
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double p = nu(static_cast<Eigen::Index>(i));
    if (p < 0.0) throw ValidationError("initial law has a negative entry");
    if (p > 0.0) {
      law.states.push_back(index[i]);
      law.probs.push_back(p / total);
    }
  }
  return law;
}

namespace {

class InitialSampler {
 public:
  explicit InitialSampler(const InitialLaw& law) : law_(law) {
    if (law.states.empty() || law.states.size() != law.probs.size()) throw ValidationError("malformed initial law");
    double c = 0;
    for (double p : law.probs) cdf_.push_back(c += p);
    cdf_.back() = 1.0;
  }

  const StateVector& draw(std::uint64_t seed, std::uint64_t path) const {
    if (law_.is_dirac()) return law_.states[0];
    const double u = CounterStream(seed, stream_key(path, 0)).uniform(0);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return law_.states[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  const InitialLaw& law_;
  std::vector<double> cdf_;
};

TrajectoryBatch empty_batch(const InitialLaw& z0, int horizon, std::uint64_t n_traj, std::uint64_t seed,
                            const SimulationOptions& options) {
  if (n_traj < 1) throw ValidationError("need at least one trajectory");
  if (horizon < 0) throw ValidationError("horizon must be non-negative");
  TrajectoryBatch b;
  b.z0 = z0;
  b.horizon = horizon;
  b.n_traj = n_traj;
  b.seed = seed;
  b.extinction_times.assign(n_traj, TrajectoryBatch::kCensored);
  b.survivors.assign(static_cast<std::size_t>(horizon) + 1, 0);
  b.states_at[0];
  for (int n : options.record) {
    if (n >= 0 && n <= horizon) b.states_at[n];
  }
  return b;
}

std::uint64_t digest_string(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 15];
    v >>= 4;
  }
  return s;
}

}  // namespace

TrajectoryBatch simulate_batch(const ModelSpec& spec, const InitialLaw& z0, int horizon, std::uint64_t n_traj,
                               std::uint64_t seed, const SimulationOptions& options) {
  TrajectoryBatch b = empty_batch(z0, horizon, n_traj, seed, options);
  {
    std::string text = "process p=" + std::to_string(spec.p()) + " q=" + std::to_string(spec.q()) +
                       " mating=" + to_string(spec.mating().kind());
    for (const auto& law : spec.laws()) {
      for (const auto& o : law.outcomes) text += " " + format_state(o.children) + ":" + o.prob.exact.str();
    }
    b.digest = hex(digest_string(text));
  }
  const InitialSampler init(z0);
  StateVector z(spec.p()), w(spec.q());
  for (std::uint64_t path = 0; path < n_traj; ++path) {
    const StateVector& start = init.draw(seed, path);
    z = start;
    if (is_zero(z)) {
      b.extinction_times[path] = 0;
      continue;
    }
    ++b.survivors[0];
    b.states_at[0][z]++;
    for (int g = 1; g <= horizon; ++g) {
      const CounterStream stream(seed, stream_key(path, static_cast<std::uint64_t>(g)));
      sample_children(spec, z, stream, w);
      spec.mating().apply_into(w, z);
      if (is_zero(z)) {
        b.extinction_times[path] = g;
        break;
      }
      if (l1(z) > options.population_cap) {
        ++b.capped;
        for (int h = g; h <= horizon; ++h) ++b.survivors[static_cast<std::size_t>(h)];
        break;
      }
      ++b.survivors[static_cast<std::size_t>(g)];
      auto rec = b.states_at.find(g);
      if (rec != b.states_at.end()) rec->second[z]++;
    }
  }
  return b;
}

TrajectoryBatch simulate_kernel_batch(const TruncatedKernel& k, const InitialLaw& z0, int horizon,
                                      std::uint64_t n_traj, std::uint64_t seed, const SimulationOptions& options) {
  TrajectoryBatch b = empty_batch(z0, horizon, n_traj, seed, options);
  b.digest = "kernel";
  // Per row: cumulative probabilities of the alive targets; the rest is death.
  std::vector<std::vector<double>> cdf(k.size());
  std::vector<std::vector<std::size_t>> target(k.size());
  for (std::size_t x = 0; x < k.size(); ++x) {
    double c = 0;
    for (SparseRowMatrix::InnerIterator it(k.matrix, static_cast<Eigen::Index>(x)); it; ++it) {
      cdf[x].push_back(c += it.value());
      target[x].push_back(static_cast<std::size_t>(it.col()));
    }
  }
  const InitialSampler init(z0);
  for (std::uint64_t path = 0; path < n_traj; ++path) {
    const StateVector& start = init.draw(seed, path);
    if (is_zero(start)) {
      b.extinction_times[path] = 0;
      continue;
    }
    std::size_t x = k.states.at(start);
    ++b.survivors[0];
    b.states_at[0][start]++;
    for (int g = 1; g <= horizon; ++g) {
      const double u = CounterStream(seed, stream_key(path, static_cast<std::uint64_t>(g))).uniform(0);
      const auto& c = cdf[x];
      auto it = std::upper_bound(c.begin(), c.end(), u);
      if (it == c.end()) {
        b.extinction_times[path] = g;
        break;
      }
      x = target[x][static_cast<std::size_t>(it - c.begin())];
      ++b.survivors[static_cast<std::size_t>(g)];
      auto rec = b.states_at.find(g);
      if (rec != b.states_at.end()) rec->second[k.states[x]]++;
    }
  }
  return b;
}

ThetaEstimate estimate_theta0(const TrajectoryBatch& batch, std::uint64_t min_survivors, int boot,
                              std::uint64_t boot_seed, double drop_fraction) {
  const auto& s = batch.survivors;
  int n_end = -1;
  for (int n = 0; n <= batch.horizon; ++n) {
    if (s[static_cast<std::size_t>(n)] >= min_survivors) n_end = n;
  }
  const int n_start = n_end < 0 ? 0 : static_cast<int>(std::ceil(drop_fraction * n_end));
  if (n_end < 1 || n_end - n_start < 1) {
    throw StatisticsError("fewer than two horizons with >= " + std::to_string(min_survivors) +
                          " survivors; increase the number of trajectories");
  }
  const double N = static_cast<double>(batch.n_traj);

  auto slope_of = [&](const std::vector<double>& surv) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = n_end - n_start + 1;
    for (int n = n_start; n <= n_end; ++n) {
      const double y = std::log(surv[static_cast<std::size_t>(n)] / N);
      sx += n;
      sy += y;
      sxx += static_cast<double>(n) * n;
      sxy += n * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
  };

  std::vector<double> surv(s.begin(), s.end());
  ThetaEstimate e;
  e.theta = std::exp(slope_of(surv));
  e.n_lo = n_start;
  e.n_hi = n_end;

  // Resampling paths with replacement only changes the counts per extinction
  // category; those are multinomial and are drawn as sequential binomials.
  std::vector<double> cat;
  cat.push_back(N - surv[0]);
  for (int n = 1; n <= n_end; ++n) cat.push_back(surv[static_cast<std::size_t>(n) - 1] - surv[static_cast<std::size_t>(n)]);
  cat.push_back(surv[static_cast<std::size_t>(n_end)]);
  std::vector<double> thetas;
  for (int r = 0; r < boot; ++r) {
    CounterEngine eng(boot_seed, stream_key(0xB007, static_cast<std::uint64_t>(r)));
    std::uint64_t left = batch.n_traj;
    double mass = 1.0;
    std::vector<double> draws(cat.size(), 0.0);
    for (std::size_t c = 0; c + 1 < cat.size(); ++c) {
      const double p = cat[c] / N;
      const double cond = mass > 0 ? std::clamp(p / mass, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::uint64_t> bin(left, cond);
      const std::uint64_t x = left > 0 ? bin(eng) : 0;
      draws[c] = static_cast<double>(x);
      left -= x;
      mass -= p;
    }
    draws.back() = static_cast<double>(left);
    std::vector<double> alive(static_cast<std::size_t>(n_end) + 1);
    double acc = N;
    bool ok = true;
    for (int n = 0; n <= n_end; ++n) {
      acc -= draws[static_cast<std::size_t>(n)];
      alive[static_cast<std::size_t>(n)] = acc;
      if (n >= n_start && acc <= 0) ok = false;
    }
    if (ok) thetas.push_back(std::exp(slope_of(alive)));
  }
  if (thetas.size() < 10) throw StatisticsError("bootstrap produced too few usable resamples");
  std::sort(thetas.begin(), thetas.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(thetas.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, thetas.size() - 1);
    return thetas[lo] + (pos - static_cast<double>(lo)) * (thetas[hi] - thetas[lo]);
  };
  e.ci_lo = quantile(0.025);
  e.ci_hi = quantile(0.975);
  return e;
}

std::map<StateVector, double> conditional_law(const TrajectoryBatch& batch, int n, std::uint64_t threshold) {
  auto it = batch.states_at.find(n);
  if (it == batch.states_at.end()) {
    throw ValidationError("states at horizon " + std::to_string(n) + " were not recorded");
  }
  std::uint64_t total = 0;
  for (const auto& [z, c] : it->second) total += c;
  if (total == 0 || total < threshold) {
    throw StatisticsError(std::to_string(total) + " survivors at n=" + std::to_string(n) + ", need " +
                          std::to_string(std::max<std::uint64_t>(threshold, 1)));
  }
  std::map<StateVector, double> law;
  for (const auto& [z, c] : it->second) law[z] = static_cast<double>(c) / static_cast<double>(total);
  return law;
}

double total_variation(const std::map<StateVector, double>& a, const std::map<StateVector, double>& b) {
  double d = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      d += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      d += std::abs(ib->second);
      ++ib;
    } else {
      d += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 0.5 * d;
}

double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ValidationError("total variation of vectors of different lengths");
  return 0.5 * (a - b).lpNorm<1>();
}

std::map<StateVector, double> to_law(const StateIndex& index, const Eigen::VectorXd& v) {
  std::map<StateVector, double> law;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double p = v(static_cast<Eigen::Index>(i));
    if (p != 0.0) law[index[i]] = p;
  }
  return law;
}

YaglomResult yaglom_from_batch(const TrajectoryBatch& batch, const StateIndex& index, const Eigen::VectorXd& nu,
                               const std::vector<int>& horizons, const YaglomOptions& o) {
  const auto target = to_law(index, nu / nu.sum());
  YaglomResult r;
  for (int n : horizons) {
    if (n < 0 || n > batch.horizon) throw ValidationError("horizon outside the simulated range");
    YaglomRow row;
    row.n = n;
    row.survivors = batch.survivors[static_cast<std::size_t>(n)];
    row.survival = static_cast<double>(row.survivors) / static_cast<double>(batch.n_traj);
    if (row.survivors >= std::max<std::uint64_t>(o.threshold, 1)) {
      row.tv = total_variation(conditional_law(batch, n, o.threshold), target);
      double noise = 0.0;
      for (const auto& [z, p] : target) {
        noise += std::sqrt(2.0 * p * (1.0 - p) / (std::numbers::pi * static_cast<double>(row.survivors)));
      }
      row.noise = 0.5 * noise;
    }
    r.rows.push_back(row);
  }

  // Fit window: consecutive horizons n >= 1 with TV well above the noise.
  std::vector<const YaglomRow*> window;
  std::size_t after = r.rows.size();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    if (row.n < 1) continue;
    const bool signal = row.tv && *row.tv >= o.fit_noise_multiple * row.noise;
    if (!signal) {
      after = i;
      break;
    }
    window.push_back(&row);
  }
  if (window.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(window.size());
    for (const auto* row : window) {
      const double y = std::log(*row->tv);
      sx += row->n;
      sy += y;
      sxx += static_cast<double>(row->n) * row->n;
      sxy += row->n * y;
    }
    const double gamma = std::exp((m * sxy - sx * sy) / (m * sxx - sx * sx));
    r.gamma_hat = gamma;
    r.fit_lo = window.front()->n;
    r.fit_hi = window.back()->n;
    for (const auto* row : window) r.envelope_C = std::max(r.envelope_C, *row->tv / std::pow(gamma, row->n));
  }

  bool decreasing = true;
  for (std::size_t i = 1; i < window.size(); ++i) decreasing = decreasing && *window[i]->tv < *window[i - 1]->tv;
  for (std::size_t i = after; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    if (row.n >= 1 && row.tv && *row.tv > o.envelope_noise_multiple * row.noise) decreasing = false;
  }
  r.eventually_decreasing = decreasing;

  r.envelope_holds = true;
  for (const auto& row : r.rows) {
    if (!row.tv || row.n < 1) continue;
    const double env = r.gamma_hat ? r.envelope_C * std::pow(*r.gamma_hat, row.n) : 0.0;
    if (*row.tv > env + o.envelope_noise_multiple * row.noise) r.envelope_holds = false;
  }
  return r;
}

YaglomResult yaglom_convergence(const ModelSpec& spec, const InitialLaw& z0, const std::vector<int>& horizons,
                                const TruncatedKernel& k, const QsdEstimate& qsd, std::uint64_t n_traj,
                                std::uint64_t seed, const YaglomOptions& options) {
  const int horizon = horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end());
  SimulationOptions sim;
  sim.record = horizons;
  const auto batch = simulate_batch(spec, z0, horizon, n_traj, seed, sim);
  auto r = yaglom_from_batch(batch, k.states, qsd.nu, horizons, options);
  if (k.size() <= 2000) r.reference_ratio = subdominant_ratio(k);
  return r;
}

YaglomResult yaglom_convergence_kernel(const TruncatedKernel& k, const InitialLaw& z0,
                                       const std::vector<int>& horizons, const QsdEstimate& qsd,
                                       std::uint64_t n_traj, std::uint64_t seed, const YaglomOptions& options) {
  const int horizon = horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end());
  SimulationOptions sim;
  sim.record = horizons;
  const auto batch = simulate_kernel_batch(k, z0, horizon, n_traj, seed, sim);
  auto r = yaglom_from_batch(batch, k.states, qsd.nu, horizons, options);
  if (k.size() <= 2000) r.reference_ratio = subdominant_ratio(k);
  return r;
}

double subdominant_ratio(const TruncatedKernel& k) {
  const Eigen::MatrixXd dense(k.matrix);
  Eigen::EigenSolver<Eigen::MatrixXd> es(dense, false);
  std::vector<double> mod;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mod.rbegin(), mod.rend());
  if (mod.size() < 2 || mod[0] == 0.0) return 0.0;
  return mod[1] / mod[0];
}

}  // namespace bgw
