#include <algorithm>
#include <cmath>
#include <sstream>

#include "bgw/errors.hpp"
#include "bgw/spectral.hpp"

namespace bgw {

namespace {

double l1(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

std::vector<double> times_mean(const ModelSpec& spec, std::span<const double> z) {
  std::vector<double> out(spec.q(), 0.0);
  const auto& V = spec.mean_matrix();
  for (std::size_t i = 0; i < spec.p(); ++i) {
    if (z[i] == 0.0) continue;
    for (std::size_t j = 0; j < spec.q(); ++j) out[j] += z[i] * V(i, j);
  }
  return out;
}

std::vector<double> table_limit(const ModelSpec& spec, std::span<const double> z, double tol) {
  const MatingFunction& m = spec.mating();
  const double norm = l1(z);
  std::vector<double> zn(z.begin(), z.end());
  for (double& x : zn) x /= norm;
  const auto zv = times_mean(spec, zn);
  const double top = *std::max_element(zv.begin(), zv.end());
  std::vector<double> out(spec.p(), 0.0);
  if (top <= 0.0) {
    const auto y = m.apply(StateVector(spec.q(), 0));
    for (std::size_t i = 0; i < spec.p(); ++i) out[i] = static_cast<double>(y[i]);
    return out;
  }
  const auto k0 = static_cast<Count>(std::floor(static_cast<double>(m.bound()) / (8.0 * top)));
  if (k0 < 1) throw NumericError("custom_table box too small to evaluate M at this point");
  std::vector<std::vector<double>> f;
  StateVector w(spec.q()), y(spec.p());
  for (Count k : {k0, 2 * k0, 4 * k0, 8 * k0}) {
    for (std::size_t j = 0; j < spec.q(); ++j) w[j] = static_cast<Count>(std::floor(static_cast<double>(k) * zv[j]));
    m.apply_into(w, y);
    std::vector<double> fk(spec.p());
    for (std::size_t i = 0; i < spec.p(); ++i) fk[i] = static_cast<double>(y[i]) / static_cast<double>(k);
    f.push_back(std::move(fk));
  }
  double diff = 0;
  for (std::size_t i = 0; i < spec.p(); ++i) diff += std::abs(f[3][i] - f[2][i]);
  if (diff > tol * std::max(1.0, l1(f[3]))) {
    std::ostringstream os;
    os << "M limit not settled on the doubling schedule k0=" << k0 << ":";
    for (const auto& fk : f) {
      os << " (";
      for (std::size_t i = 0; i < fk.size(); ++i) os << (i ? "," : "") << fk[i];
      os << ")";
    }
    throw NumericError(os.str());
  }
  for (std::size_t i = 0; i < spec.p(); ++i) out[i] = f[3][i] * norm;
  return out;
}

}  // namespace

std::vector<double> operator_M(const ModelSpec& spec, std::span<const double> z, double table_tol) {
  if (z.size() != spec.p()) throw ValidationError("operator_M: wrong input length");
  for (double x : z) {
    if (!(x >= 0.0)) throw DomainError("operator_M needs a non-negative vector");
  }
  switch (spec.mating().kind()) {
    case MatingKind::identity:
      return times_mean(spec, z);
    case MatingKind::perfect_fidelity: {
      const auto zv = times_mean(spec, z);
      return {std::min(zv[0], zv[1])};
    }
    case MatingKind::promiscuous: {
      const auto zv = times_mean(spec, z);
      return {zv[1] > 0.0 ? zv[0] : 0.0};
    }
    case MatingKind::custom_table:
      if (l1(z) == 0.0) return std::vector<double>(spec.p(), 0.0);
      return table_limit(spec, z, table_tol);
  }
  return {};
}

SpectralResult power_iterate(const ModelSpec& spec, double tol, int max_iter) {
  const std::size_t p = spec.p();
  std::vector<double> z(p, 1.0 / static_cast<double>(p));
  double lambda = 0.0;
  std::vector<double> trace;
  for (int it = 1; it <= max_iter; ++it) {
    auto mz = operator_M(spec, z);
    const double norm = l1(mz);
    if (norm == 0.0) throw NumericError("M vanishes at an iterate; the model is degenerate");
    double dz = 0;
    for (std::size_t i = 0; i < p; ++i) {
      mz[i] /= norm;
      dz += std::abs(mz[i] - z[i]);
    }
    const double dl = std::abs(norm - lambda);
    z = std::move(mz);
    lambda = norm;
    trace.push_back(lambda);
    if (dz <= tol && dl <= tol * std::max(1.0, lambda)) {
      SpectralResult r;
      r.lambda_star = lambda;
      r.z_star = z;
      r.iterations = it;
      const auto mz2 = operator_M(spec, z);
      for (std::size_t i = 0; i < p; ++i) r.residual += std::abs(mz2[i] - lambda * z[i]);
      r.n0 = check_primitivity(spec, 50).n0;
      return r;
    }
  }
  std::ostringstream os;
  os.precision(17);
  os << "power iteration did not converge in " << max_iter << " iterations; last lambda estimates:";
  for (std::size_t k = trace.size() >= 5 ? trace.size() - 5 : 0; k < trace.size(); ++k) os << ' ' << trace[k];
  throw ConvergenceError(os.str());
}

double eval_P(const ModelSpec& spec, const SpectralResult& s, std::span<const double> z, int n, double tol) {
  if (l1(z) == 0.0) return 0.0;
  std::vector<double> v(z.begin(), z.end());
  double at_n = 0.0;
  for (int k = 1; k <= 2 * n; ++k) {
    v = operator_M(spec, v);
    for (double& x : v) x /= s.lambda_star;
    if (k == n) at_n = l1(v);
  }
  const double at_2n = l1(v);
  if (std::abs(at_2n - at_n) > tol * std::max(at_2n, 1e-300)) {
    std::ostringstream os;
    os.precision(17);
    os << "P not stabilised: " << at_n << " at n=" << n << " vs " << at_2n << " at 2n";
    throw NumericError(os.str());
  }
  return at_2n;
}

double eval_P(const ModelSpec& spec, const SpectralResult& s, std::span<const Count> z, int n, double tol) {
  std::vector<double> v(z.begin(), z.end());
  return eval_P(spec, s, std::span<const double>(v), n, tol);
}

PrimitivityReport check_primitivity(const ModelSpec& spec, int max_m) {
  const std::size_t p = spec.p();
  std::vector<std::vector<double>> iter(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) iter[i][i] = 1.0;
  auto positive = [&](std::vector<std::pair<std::size_t, std::size_t>>* bad) {
    bool ok = true;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t c = 0; c < p; ++c) {
        if (!(iter[i][c] > 1e-12)) {
          ok = false;
          if (bad) bad->push_back({i, c});
        }
      }
    }
    return ok;
  };
  auto advance = [&] {
    for (auto& v : iter) {
      v = operator_M(spec, v);
      const double norm = l1(v);
      if (norm > 0) {
        for (double& x : v) x /= norm;
      }
    }
  };
  PrimitivityReport report;
  bool prev = false;
  for (int m = 1; m <= max_m + 1; ++m) {
    advance();
    const bool now = positive(nullptr);
    if (prev && now) {
      report.n0 = m - 1;
      return report;
    }
    prev = now;
  }
  positive(&report.offending);
  return report;
}

}  // namespace bgw
