#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bgw/errors.hpp"
#include "bgw/model.hpp"
#include "bgw/spectral.hpp"

namespace bgw {

ModelSpec::ModelSpec(std::size_t p, std::size_t q, MatingFunction mating,
                     std::vector<std::vector<Outcome>> laws, std::string name)
    : p_(p), q_(q), mating_(std::move(mating)), mean_(Eigen::MatrixXd::Zero(p, q)), name_(std::move(name)) {
  if (p == 0 || q == 0) throw ValidationError("p and q must be positive");
  if (mating_.p() != p || mating_.q() != q) {
    throw ValidationError(to_string(mating_.kind()) + " mating maps N^" + std::to_string(mating_.q()) +
                          " to N^" + std::to_string(mating_.p()) + ", model declares p=" + std::to_string(p) +
                          ", q=" + std::to_string(q));
  }
  if (laws.size() != p) {
    throw ValidationError("expected " + std::to_string(p) + " offspring laws, got " + std::to_string(laws.size()));
  }
  laws_.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    TypeLaw& law = laws_[i];
    if (laws[i].empty()) throw ValidationError("offspring law " + std::to_string(i + 1) + " is empty");
    law.max_children.assign(q, 0);
    double total = 0.0;
    for (auto& o : laws[i]) {
      if (o.children.size() != q) {
        throw ValidationError("offspring vector " + format_state(o.children) + " of type " + std::to_string(i + 1) +
                              " has wrong length");
      }
      for (std::size_t j = 0; j < q; ++j) {
        if (o.children[j] < 0) throw ValidationError("negative offspring count in " + format_state(o.children));
        law.max_children[j] = std::max(law.max_children[j], o.children[j]);
        mean_(i, j) += o.prob.value * static_cast<double>(o.children[j]);
      }
      if (o.prob.value < 0.0) {
        throw ValidationError("negative probability in offspring law " + std::to_string(i + 1));
      }
      total += o.prob.value;
      law.cdf.push_back(total);
      law.outcomes.push_back(std::move(o));
    }
    if (std::abs(total - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "offspring law " << i + 1 << " sums to " << total;
      throw ValidationError(os.str());
    }
    law.cdf.back() = 1.0;
  }
}

std::vector<double> ModelSpec::moments(double r) const {
  std::vector<double> out(p_, 0.0);
  for (std::size_t i = 0; i < p_; ++i) {
    for (const auto& o : laws_[i].outcomes) {
      out[i] += o.prob.value * std::pow(static_cast<double>(l1(o.children)), r);
    }
  }
  return out;
}

void sample_children(const ModelSpec& spec, std::span<const Count> z, const CounterStream& stream,
                     std::span<Count> w) {
  std::fill(w.begin(), w.end(), 0);
  for (std::size_t i = 0; i < spec.p(); ++i) {
    const TypeLaw& law = spec.laws()[i];
    for (Count k = 0; k < z[i]; ++k) {
      const double u = stream.uniform(couple_index(i, static_cast<std::uint64_t>(k)));
      auto it = std::upper_bound(law.cdf.begin(), law.cdf.end(), u);
      if (it == law.cdf.end()) --it;
      const auto& children = law.outcomes[static_cast<std::size_t>(it - law.cdf.begin())].children;
      for (std::size_t j = 0; j < spec.q(); ++j) w[j] += children[j];
    }
  }
}

StateVector step(const ModelSpec& spec, std::span<const Count> z, const CounterStream& stream) {
  if (z.size() != spec.p()) throw ValidationError("state has wrong length");
  StateVector w(spec.q());
  sample_children(spec, z, stream, w);
  return spec.mating().apply(w);
}

std::uint64_t children_box_cells(const ModelSpec& spec, std::span<const Count> z) {
  std::uint64_t cells = 1;
  for (std::size_t j = 0; j < spec.q(); ++j) {
    std::uint64_t extent = 1;
    for (std::size_t i = 0; i < spec.p(); ++i) {
      extent += static_cast<std::uint64_t>(z[i]) * static_cast<std::uint64_t>(spec.laws()[i].max_children[j]);
    }
    cells *= extent;
    if (cells > (std::uint64_t{1} << 62)) return cells;
  }
  return cells;
}

namespace {

template <typename T>
T prob_of(const Probability& p);
template <>
double prob_of<double>(const Probability& p) {
  return p.value;
}
template <>
Rational prob_of<Rational>(const Probability& p) {
  return p.exact;
}

template <typename T>
std::map<StateVector, T> convolve_and_mate(const ModelSpec& spec, std::span<const Count> z, std::uint64_t cap) {
  if (z.size() != spec.p()) throw ValidationError("state has wrong length");
  const std::size_t q = spec.q();
  if (is_zero(z)) return {{StateVector(spec.p(), 0), T(1)}};

  const std::uint64_t cells = children_box_cells(spec, z);
  if (cells > cap) {
    throw ResourceError("exact step distribution from " + format_state(z) + " needs " + std::to_string(cells) +
                        " cells (cap " + std::to_string(cap) + "); use the Monte Carlo kernel instead");
  }
  std::vector<std::uint64_t> extent(q, 1), stride(q, 1);
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t i = 0; i < spec.p(); ++i) {
      extent[j] += static_cast<std::uint64_t>(z[i] * spec.laws()[i].max_children[j]);
    }
  }
  for (std::size_t j = q - 1; j-- > 0;) stride[j] = stride[j + 1] * extent[j + 1];

  std::vector<T> cur(cells, T(0)), next(cells, T(0));
  std::vector<std::uint64_t> live{0}, next_live;
  std::vector<char> mark(cells, 0);
  cur[0] = T(1);

  for (std::size_t i = 0; i < spec.p(); ++i) {
    const TypeLaw& law = spec.laws()[i];
    std::vector<std::uint64_t> offsets;
    std::vector<T> probs;
    for (const auto& o : law.outcomes) {
      if (o.prob.value == 0.0 && o.prob.exact == 0) continue;
      std::uint64_t off = 0;
      for (std::size_t j = 0; j < q; ++j) off += static_cast<std::uint64_t>(o.children[j]) * stride[j];
      offsets.push_back(off);
      probs.push_back(prob_of<T>(o.prob));
    }
    for (Count k = 0; k < z[i]; ++k) {
      next_live.clear();
      for (std::uint64_t idx : live) {
        const T& mass = cur[idx];
        for (std::size_t o = 0; o < offsets.size(); ++o) {
          const std::uint64_t to = idx + offsets[o];
          if (!mark[to]) {
            mark[to] = 1;
            next_live.push_back(to);
          }
          next[to] += mass * probs[o];
        }
        cur[idx] = T(0);
      }
      for (std::uint64_t idx : next_live) mark[idx] = 0;
      std::swap(cur, next);
      std::swap(live, next_live);
    }
  }

  std::map<StateVector, T> out;
  StateVector w(q), y(spec.p());
  std::sort(live.begin(), live.end());
  for (std::uint64_t idx : live) {
    std::uint64_t rest = idx;
    for (std::size_t j = 0; j < q; ++j) {
      w[j] = static_cast<Count>(rest / stride[j]);
      rest %= stride[j];
    }
    spec.mating().apply_into(w, y);
    out[y] += cur[idx];
  }
  return out;
}

}  // namespace

StepDistribution step_distribution(const ModelSpec& spec, std::span<const Count> z, std::uint64_t cap) {
  return convolve_and_mate<double>(spec, z, cap);
}

ExactStepDistribution step_distribution_exact(const ModelSpec& spec, std::span<const Count> z,
                                              std::uint64_t cap) {
  return convolve_and_mate<Rational>(spec, z, cap);
}

std::vector<Count> max_children_within(const ModelSpec& spec, Count radius) {
  std::vector<Count> out(spec.q(), 0);
  for (std::size_t j = 0; j < spec.q(); ++j) {
    for (const auto& law : spec.laws()) out[j] = std::max(out[j], radius * law.max_children[j]);
  }
  return out;
}

void require_table_covers(const ModelSpec& spec, Count radius) {
  if (spec.mating().kind() != MatingKind::custom_table) return;
  const auto need = max_children_within(spec, radius);
  for (std::size_t j = 0; j < spec.q(); ++j) {
    if (need[j] > spec.mating().bound()) {
      throw ValidationError("custom_table box [0," + std::to_string(spec.mating().bound()) +
                            "] is too small for radius " + std::to_string(radius) + ": children coordinate " +
                            std::to_string(j + 1) + " can reach " + std::to_string(need[j]));
    }
  }
}

namespace {

constexpr std::size_t kMaxWitnesses = 5;

struct ViolationLog {
  std::vector<Violation>& out;
  std::map<std::string, std::size_t> count;

  void add(const std::string& invariant, const std::string& witness) {
    if (count[invariant]++ < kMaxWitnesses) out.push_back({invariant, witness});
  }
};

bool check_superadditive(const MatingFunction& m, std::span<const Count> a, std::span<const Count> b,
                         StateVector& sum, StateVector& ya, StateVector& yb, StateVector& ys, ViolationLog& log) {
  for (std::size_t j = 0; j < sum.size(); ++j) sum[j] = a[j] + b[j];
  m.apply_into(a, ya);
  m.apply_into(b, yb);
  m.apply_into(sum, ys);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (ys[i] < ya[i] + yb[i]) {
      log.add("superadditivity", "x1=" + format_state(a) + " x2=" + format_state(b) + " xi(x1+x2)=" +
                                     format_state(ys) + " xi(x1)=" + format_state(ya) + " xi(x2)=" + format_state(yb));
      return false;
    }
  }
  return true;
}

bool check_subaffine(const MatingFunction& m, std::span<const Count> x, StateVector& y, ViolationLog& log) {
  m.apply_into(x, y);
  const double norm = static_cast<double>(l1(x));
  const auto& c = m.certificate();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double bound = c.alpha[i] * norm + c.beta[i];
    if (static_cast<double>(y[i]) > bound * (1 + 1e-12) + 1e-12) {
      std::ostringstream os;
      os << "x=" << format_state(x) << " xi(x)=" << format_state(y) << " bound[" << i + 1 << "]=" << bound;
      log.add("sub-affinity", os.str());
      return false;
    }
  }
  return true;
}

// Advances x through the box [0, hi_j] in row-major order; false when done.
bool next_in_box(StateVector& x, std::span<const Count> hi) {
  for (std::size_t j = x.size(); j-- > 0;) {
    if (x[j] < hi[j]) {
      ++x[j];
      return true;
    }
    x[j] = 0;
  }
  return false;
}

double continuity_modulus(const ModelSpec& spec, std::uint64_t seed) {
  // Points on every face of the simplex, paired with a nearby point on the same face.
  const std::size_t p = spec.p();
  CounterEngine eng(seed, 0xC0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  const std::uint64_t faces = (std::uint64_t{1} << p) - 1;
  for (std::uint64_t face = 1; face <= faces; ++face) {
    for (int s = 0; s < 64; ++s) {
      std::vector<double> z(p, 0.0), z2(p, 0.0);
      double t1 = 0, t2 = 0;
      for (std::size_t i = 0; i < p; ++i) {
        if (!(face >> i & 1)) continue;
        z[i] = 0.05 + U(eng);
        z2[i] = std::max(1e-3, z[i] + 0.02 * (U(eng) - 0.5));
        t1 += z[i];
        t2 += z2[i];
      }
      double dz = 0;
      for (std::size_t i = 0; i < p; ++i) {
        z[i] /= t1;
        z2[i] /= t2;
        dz += std::abs(z[i] - z2[i]);
      }
      if (dz == 0) continue;
      try {
        const auto m1 = operator_M(spec, z);
        const auto m2 = operator_M(spec, z2);
        double dm = 0;
        for (std::size_t i = 0; i < p; ++i) dm += std::abs(m1[i] - m2[i]);
        worst = std::max(worst, dm / dz);
      } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
      }
    }
  }
  return worst;
}

}  // namespace

ValidationReport validate_model(const ModelSpec& spec, std::uint64_t n_samples, std::uint64_t seed) {
  ValidationReport report;
  ViolationLog log{report.violations, {}};
  const MatingFunction& m = spec.mating();
  const std::size_t q = spec.q();

  const StateVector zero_in(q, 0);
  const StateVector zero_out = m.apply(zero_in);
  if (!is_zero(zero_out)) log.add("xi(0)", "xi(0)=" + format_state(zero_out));

  for (std::size_t j = 0; j < q; ++j) {
    if (spec.mean_matrix().col(j).sum() <= 0.0) {
      log.add("column-sum", "column " + std::to_string(j + 1) + " of the mean matrix sums to 0");
    }
  }

  StateVector sum(q), ya(spec.p()), yb(spec.p()), ys(spec.p());
  if (m.kind() == MatingKind::custom_table) {
    // Every pair with x1 + x2 inside the box, and every x for the affine cap.
    const Count B = m.bound();
    const StateVector hi(q, B);
    StateVector a(q, 0);
    do {
      ++report.subaffinity_checks;
      check_subaffine(m, a, ys, log);
      StateVector room(q);
      for (std::size_t j = 0; j < q; ++j) room[j] = B - a[j];
      StateVector b(q, 0);
      do {
        ++report.superadditivity_checks;
        check_superadditive(m, a, b, sum, ya, yb, ys, log);
      } while (next_in_box(b, room));
    } while (next_in_box(a, hi));
    report.exhaustive = true;
    report.continuity_modulus = continuity_modulus(spec, seed);
  } else {
    // Small exhaustive box, then random pairs on a wider box.
    const StateVector hi(q, 6);
    StateVector a(q, 0);
    do {
      ++report.subaffinity_checks;
      check_subaffine(m, a, ys, log);
      StateVector b(q, 0);
      do {
        ++report.superadditivity_checks;
        check_superadditive(m, a, b, sum, ya, yb, ys, log);
      } while (next_in_box(b, hi));
    } while (next_in_box(a, hi));
    CounterEngine eng(seed, 0x5A);
    std::uniform_int_distribution<Count> U(0, 1000);
    StateVector x1(q), x2(q);
    for (std::uint64_t s = 0; s < n_samples; ++s) {
      for (std::size_t j = 0; j < q; ++j) {
        x1[j] = U(eng);
        x2[j] = U(eng);
      }
      ++report.superadditivity_checks;
      check_superadditive(m, x1, x2, sum, ya, yb, ys, log);
      ++report.subaffinity_checks;
      check_subaffine(m, x1, ys, log);
    }
  }
  return report;
}

}  // namespace bgw
