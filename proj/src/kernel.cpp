#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "bgw/errors.hpp"
#include "bgw/kernel.hpp"
#include "graph.hpp"

namespace bgw {

namespace {

// All z in N^p with |z|_1 = total, appended in colex order.
void compositions(std::size_t p, Count total, std::vector<StateVector>& out) {
  StateVector z(p, 0);
  // Recurse from the most significant (last) coordinate downwards.
  auto rec = [&](auto&& self, std::size_t pos, Count left) -> void {
    if (pos == 0) {
      z[0] = left;
      out.push_back(z);
      return;
    }
    for (Count v = 0; v <= left; ++v) {
      z[pos] = v;
      self(self, pos - 1, left - v);
    }
  };
  rec(rec, p - 1, total);
}

bool colex_less(const StateVector& a, const StateVector& b) {
  for (std::size_t i = a.size(); i-- > 0;) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

}  // namespace

StateIndex::StateIndex(std::size_t p, Count radius) : p_(p), radius_(radius) {
  if (p == 0) throw ValidationError("state dimension must be positive");
  if (radius < 1) throw ValidationError("truncation radius must be >= 1 (empty state space)");
  double bits = static_cast<double>(p) * std::log2(static_cast<double>(radius) + 1.0);
  if (bits > 63) throw ResourceError("state space too large to index");
  for (Count s = 1; s <= radius; ++s) compositions(p, s, states_);
  std::sort(states_.begin(), states_.end(), colex_less);
  for (std::size_t i = 0; i < states_.size(); ++i) lookup_.emplace(key(states_[i]), i);
}

std::uint64_t StateIndex::key(std::span<const Count> z) const {
  std::uint64_t k = 0;
  for (Count v : z) k = k * static_cast<std::uint64_t>(radius_ + 1) + static_cast<std::uint64_t>(v);
  return k;
}

std::optional<std::size_t> StateIndex::find(std::span<const Count> z) const {
  if (z.size() != p_) return std::nullopt;
  Count s = 0;
  for (Count v : z) {
    if (v < 0) return std::nullopt;
    s += v;
  }
  if (s == 0 || s > radius_) return std::nullopt;
  auto it = lookup_.find(key(z));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t StateIndex::at(std::span<const Count> z) const {
  auto i = find(z);
  if (!i) throw DomainError("state " + format_state(z) + " is not in the truncation of radius " + std::to_string(radius_));
  return *i;
}

double TruncatedKernel::conservation_error() const {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    const double total = matrix.row(r).sum() + escaped(r) + absorbed(r);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

TruncatedKernel build_kernel_exact(const ModelSpec& spec, Count radius, std::uint64_t cap) {
  TruncatedKernel k;
  k.states = StateIndex(spec.p(), radius);
  require_table_covers(spec, radius);
  const auto n = static_cast<Eigen::Index>(k.size());
  k.escaped = Eigen::VectorXd::Zero(n);
  k.absorbed = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t x = 0; x < k.size(); ++x) {
    const auto& z = k.states[x];
    StepDistribution dist;
    try {
      dist = step_distribution(spec, z, cap);
    } catch (const ResourceError& e) {
      throw ResourceError("kernel row " + format_state(z) + ": " + e.what());
    }
    for (const auto& [y, prob] : dist) {
      if (prob <= 0.0) continue;
      const Count size = l1(y);
      const auto row = static_cast<Eigen::Index>(x);
      if (size == 0) {
        k.absorbed(row) += prob;
      } else if (size > radius) {
        k.escaped(row) += prob;
      } else {
        triplets.emplace_back(row, static_cast<Eigen::Index>(k.states.at(y)), prob);
      }
    }
  }
  k.matrix.resize(n, n);
  k.matrix.setFromTriplets(triplets.begin(), triplets.end());
  k.matrix.makeCompressed();
  k.mode = BuildMode::exact;
  if (k.conservation_error() > 1e-10) {
    throw NumericError("exact kernel rows do not conserve mass (error " + std::to_string(k.conservation_error()) + ")");
  }
  return k;
}

TruncatedKernel build_kernel_mc(const ModelSpec& spec, Count radius, std::uint64_t samples, std::uint64_t seed) {
  if (samples < 10000) throw ValidationError("Monte Carlo kernel needs at least 10^4 samples per state");
  TruncatedKernel k;
  k.states = StateIndex(spec.p(), radius);
  const auto n = static_cast<Eigen::Index>(k.size());
  k.escaped_counts = Eigen::VectorXd::Zero(n);
  k.absorbed_counts = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  StateVector w(spec.q()), y(spec.p());
  std::vector<std::uint64_t> row_counts(k.size());
  for (std::size_t x = 0; x < k.size(); ++x) {
    const auto& z = k.states[x];
    std::fill(row_counts.begin(), row_counts.end(), 0);
    std::uint64_t esc = 0, abs = 0;
    for (std::uint64_t s = 0; s < samples; ++s) {
      const CounterStream stream(seed, stream_key(x, s));
      sample_children(spec, z, stream, w);
      spec.mating().apply_into(w, y);
      const Count size = l1(y);
      if (size == 0) {
        ++abs;
      } else if (size > radius) {
        ++esc;
      } else {
        ++row_counts[k.states.at(y)];
      }
    }
    const auto row = static_cast<Eigen::Index>(x);
    k.escaped_counts(row) = static_cast<double>(esc);
    k.absorbed_counts(row) = static_cast<double>(abs);
    for (std::size_t c = 0; c < k.size(); ++c) {
      if (row_counts[c]) triplets.emplace_back(row, static_cast<Eigen::Index>(c), static_cast<double>(row_counts[c]));
    }
  }
  k.counts.resize(n, n);
  k.counts.setFromTriplets(triplets.begin(), triplets.end());
  k.counts.makeCompressed();
  const double inv = 1.0 / static_cast<double>(samples);
  k.matrix = k.counts * inv;
  k.escaped = k.escaped_counts * inv;
  k.absorbed = k.absorbed_counts * inv;
  k.mode = BuildMode::monte_carlo;
  k.samples = samples;
  k.seed = seed;
  return k;
}

TruncatedKernel kernel_from_dense(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ValidationError("kernel matrix must be square and non-empty");
  if ((m.array() < 0.0).any()) throw ValidationError("kernel entries must be non-negative");
  TruncatedKernel k;
  k.states = StateIndex(1, static_cast<Count>(m.rows()));
  k.matrix = m.sparseView(0.0, 0.0);
  k.matrix.makeCompressed();
  k.escaped = Eigen::VectorXd::Zero(m.rows());
  k.absorbed = (1.0 - m.rowwise().sum().array()).matrix();
  if ((k.absorbed.array() < -1e-12).any()) throw ValidationError("kernel rows must sum to at most 1");
  k.absorbed = k.absorbed.cwiseMax(0.0);
  return k;
}

namespace {

struct Residuals {
  double left;
  double right;
};

Residuals residuals(const TruncatedKernel& k, double theta, const Eigen::VectorXd& nu, const Eigen::VectorXd& eta) {
  const Eigen::VectorXd left = k.matrix.transpose() * nu - theta * nu;
  const Eigen::VectorXd right = k.matrix * eta - theta * eta;
  const double scale = eta.cwiseAbs().maxCoeff();
  return {left.lpNorm<1>(), scale > 0 ? right.lpNorm<Eigen::Infinity>() / scale : 0.0};
}

Eigen::MatrixXd dense_block(const SparseRowMatrix& m, const std::vector<std::size_t>& members) {
  const auto n = static_cast<Eigen::Index>(members.size());
  std::vector<long> pos(static_cast<std::size_t>(m.rows()), -1);
  for (std::size_t i = 0; i < members.size(); ++i) pos[members[i]] = static_cast<long>(i);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (SparseRowMatrix::InnerIterator it(m, static_cast<Eigen::Index>(members[i])); it; ++it) {
      const long j = pos[static_cast<std::size_t>(it.col())];
      if (j >= 0) a(static_cast<Eigen::Index>(i), j) = it.value();
    }
  }
  return a;
}

// Non-negative eigenvector of `a` for its eigenvalue theta by shifted inverse iteration.
Eigen::VectorXd inverse_iteration(const Eigen::MatrixXd& a, double theta) {
  const auto n = a.rows();
  const double shift = theta * (1.0 + 1e-10) + 1e-300;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a - shift * Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  for (int it = 0; it < 6; ++it) {
    x = lu.solve(x);
    x /= x.cwiseAbs().maxCoeff();
  }
  if (x.sum() < 0) x = -x;
  return x.cwiseMax(0.0);
}

constexpr std::size_t kDenseLimit = 4000;

QsdEstimate class_solve(const TruncatedKernel& k, int iterations) {
  const auto dec = communication_classes(k);
  const double theta = dec.theta_bar;
  if (theta <= 0.0) throw NumericError("kernel is nilpotent: every state dies in finitely many steps");
  const double tie = theta * (1.0 - 1e-9);
  std::optional<std::size_t> first, last;
  for (std::size_t c = 0; c < dec.classes.size(); ++c) {
    if (dec.classes[c].theta >= tie) {
      if (!first) first = c;
      last = c;
    }
  }
  for (std::size_t c : {*first, *last}) {
    if (dec.classes[c].period > 1) {
      throw PeriodicityError("dominant class containing state " + format_state(k.states[dec.classes[c].states[0]]) +
                             " has period " + std::to_string(dec.classes[c].period) +
                             "; power iteration oscillates, analyse the period structure");
    }
  }
  const auto g = detail::positive_graph(k.matrix);
  const auto n = static_cast<Eigen::Index>(k.size());

  auto members_of = [&](const std::vector<char>& mask) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) out.push_back(i);
    }
    if (out.size() > kDenseLimit) {
      throw ConvergenceError("power iteration stagnated and the dominant block has " + std::to_string(out.size()) +
                             " states, beyond the dense fallback limit");
    }
    return out;
  };

  // Left vector lives on the most downstream dominant class and what it feeds.
  const auto down = members_of(detail::reachable(g, dec.classes[*last].states));
  const Eigen::VectorXd nu_block = inverse_iteration(dense_block(k.matrix, down).transpose(), theta);
  // Right vector lives on the most upstream dominant class and what feeds it.
  const auto up = members_of(detail::reachable(detail::transpose(g), dec.classes[*first].states));
  const Eigen::VectorXd eta_block = inverse_iteration(dense_block(k.matrix, up), theta);

  QsdEstimate q;
  q.theta = theta;
  q.nu = Eigen::VectorXd::Zero(n);
  q.eta = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < down.size(); ++i) q.nu(static_cast<Eigen::Index>(down[i])) = nu_block(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < up.size(); ++i) q.eta(static_cast<Eigen::Index>(up[i])) = eta_block(static_cast<Eigen::Index>(i));
  q.nu /= q.nu.sum();
  q.eta /= q.eta.maxCoeff();
  const auto r = residuals(k, theta, q.nu, q.eta);
  q.residual_left = r.left;
  q.residual_right = r.right;
  q.iterations = iterations;
  q.method = "class-solve";
  return q;
}

}  // namespace

QsdEstimate spectral_radius(const TruncatedKernel& k, double tol, int max_iter) {
  const auto n = static_cast<Eigen::Index>(k.size());
  if (n == 0) throw ValidationError("empty kernel");
  if (k.matrix.nonZeros() == 0) throw NumericError("kernel has no alive-to-alive transitions");
  Eigen::VectorXd nu = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::VectorXd eta = Eigen::VectorXd::Ones(n);
  const SparseRowMatrix kt = k.matrix.transpose();
  double checkpoint = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd nuk = kt * nu;
    const Eigen::VectorXd keta = k.matrix * eta;
    const double th_left = nuk.sum();
    const double th_right = keta.maxCoeff();
    if (th_left <= 0.0 || th_right <= 0.0) return class_solve(k, it);
    // Stop on residuals against the shared theta that is reported; with a
    // small gap each vector's own ratio can sit far closer than the shared one.
    const double cross = nu.dot(eta);
    const double th_shared = cross > 1e-12 ? nu.dot(keta) / cross : th_left;
    const double res_left = (nuk - th_shared * nu).lpNorm<1>();
    const double res_right = (keta - (cross > 1e-12 ? th_shared : th_right) * eta).lpNorm<Eigen::Infinity>();
    if (res_left <= tol && res_right <= tol) {
      QsdEstimate q;
      q.theta = th_shared;
      q.nu = nu;
      q.eta = eta;
      const auto r = residuals(k, q.theta, nu, eta);
      q.residual_left = r.left;
      q.residual_right = r.right;
      q.iterations = it;
      q.method = "power";
      return q;
    }
    nu = nuk / th_left;
    eta = keta / th_right;
    if (it % 500 == 0) {
      const double worst = std::max(res_left, res_right);
      if (worst > 0.1 * checkpoint) return class_solve(k, it);
      checkpoint = worst;
    }
  }
  return class_solve(k, max_iter);
}

std::vector<double> survival_profile(const TruncatedKernel& k, std::size_t z, int n_max) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_max) + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k.size()));
  v(static_cast<Eigen::Index>(z)) = 1.0;
  const SparseRowMatrix kt = k.matrix.transpose();
  double log_mass = 0.0;
  out.push_back(0.0);
  for (int n = 1; n <= n_max; ++n) {
    if (std::isinf(log_mass)) {
      out.push_back(log_mass);
      continue;
    }
    v = kt * v;
    const double mass = v.sum();
    if (mass <= 0.0) {
      log_mass = -std::numeric_limits<double>::infinity();
    } else {
      log_mass += std::log(mass);
      v /= mass;
    }
    out.push_back(log_mass);
  }
  return out;
}

JEstimate estimate_j(const TruncatedKernel& k, double theta, std::size_t z, int n_lo, int n_hi) {
  if (n_lo < 1 || n_hi <= n_lo) throw ValidationError("estimate_j needs 1 <= n_lo < n_hi");
  const auto prof = survival_profile(k, z, n_hi);
  if (std::isinf(prof[static_cast<std::size_t>(n_hi)])) {
    throw RangeError("survival from " + format_state(k.states[z]) + " vanishes before n=" + std::to_string(n_hi));
  }
  const double lt = std::log(theta);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = n_hi - n_lo + 1;
  for (int n = n_lo; n <= n_hi; ++n) {
    const double x = std::log(static_cast<double>(n));
    const double y = prof[static_cast<std::size_t>(n)] - n * lt;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  JEstimate e;
  e.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  e.intercept = (sy - e.slope * sx) / m;
  double ss = 0;
  for (int n = n_lo; n <= n_hi; ++n) {
    const double x = std::log(static_cast<double>(n));
    const double r = prof[static_cast<std::size_t>(n)] - n * lt - (e.slope * x + e.intercept);
    ss += r * r;
  }
  e.residual = std::sqrt(ss / m);
  const double rounded = std::round(e.slope);
  if (std::abs(e.slope - rounded) <= 0.2 && rounded >= 0) e.j = static_cast<int>(rounded);
  return e;
}

QsdEstimate solve_qsd(const TruncatedKernel& k, double tol, int max_iter, int j_lo, int j_hi) {
  QsdEstimate q = spectral_radius(k, tol, max_iter);
  q.classes = communication_classes(k, q.theta).classes;
  q.j_estimates.reserve(k.size());
  for (std::size_t z = 0; z < k.size(); ++z) {
    try {
      q.j_estimates.push_back(estimate_j(k, q.theta, z, j_lo, j_hi));
    } catch (const RangeError&) {
      q.j_estimates.push_back(JEstimate{});
    }
  }
  return q;
}

}  // namespace bgw
