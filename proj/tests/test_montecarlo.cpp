#include <doctest.h>

#include "bgw/errors.hpp"
#include "bgw/montecarlo.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bgw;

TEST_SUITE("montecarlo") {

TEST_CASE("batches are reproducible from the seed") {
  const auto spec = fixtures::model_b();
  SimulationOptions so;
  so.record = {3};
  const auto a = simulate_batch(spec, InitialLaw::dirac({4}), 10, 5000, 99, so);
  const auto b = simulate_batch(spec, InitialLaw::dirac({4}), 10, 5000, 99, so);
  CHECK(a.extinction_times == b.extinction_times);
  CHECK(a.states_at.at(3) == b.states_at.at(3));
  const auto c = simulate_batch(spec, InitialLaw::dirac({4}), 10, 5000, 100, so);
  CHECK(a.extinction_times != c.extinction_times);
  // A longer horizon does not change the shared prefix of any path.
  const auto d = simulate_batch(spec, InitialLaw::dirac({4}), 20, 5000, 99, so);
  for (int n = 0; n <= 10; ++n) CHECK(a.survivors[static_cast<std::size_t>(n)] == d.survivors[static_cast<std::size_t>(n)]);
}

TEST_CASE("Model A survival is 0.125^n") {
  const std::uint64_t N = 200000;
  const auto b = simulate_batch(fixtures::model_a(), InitialLaw::dirac({1}), 6, N, 1);
  for (int n = 0; n <= 6; ++n) {
    const double p = std::pow(0.125, n);
    const double sd = std::sqrt(p * (1 - p) / static_cast<double>(N));
    INFO("n=" << n);
    CHECK(std::abs(static_cast<double>(b.survivors[static_cast<std::size_t>(n)]) / N - p) <= 5 * sd + 1e-12);
  }
  const auto t = estimate_theta0(b, 50, 200, 3);
  CHECK(t.ci_lo <= 0.125);
  CHECK(0.125 <= t.ci_hi);
  CHECK(t.n_lo >= 1);
}

TEST_CASE("extinction times are consistent with survivor counts") {
  const auto b = simulate_batch(fixtures::classical(), InitialLaw::dirac({1, 1}), 15, 20000, 4);
  for (int n = 0; n <= 15; ++n) {
    const auto alive = std::count_if(b.extinction_times.begin(), b.extinction_times.end(), [n](std::int32_t t) {
      return t == TrajectoryBatch::kCensored || t > n;
    });
    CHECK(static_cast<std::uint64_t>(alive) == b.survivors[static_cast<std::size_t>(n)]);
  }
}

TEST_CASE("population cap stops runaway paths") {
  using fixtures::outcome;
  const ModelSpec grow(1, 1, MatingFunction::identity(1), {{outcome({2}, "1")}});
  SimulationOptions so;
  so.population_cap = 100;
  const auto b = simulate_batch(grow, InitialLaw::dirac({1}), 20, 10, 1, so);
  CHECK(b.capped == 10);
}

TEST_CASE("conditional law needs recorded horizons and enough survivors") {
  SimulationOptions so;
  so.record = {1, 8};
  const auto b = simulate_batch(fixtures::model_a(), InitialLaw::dirac({2}), 8, 1000, 7, so);
  CHECK_THROWS_AS(conditional_law(b, 2), ValidationError);
  CHECK_THROWS_AS(conditional_law(b, 8), StatisticsError);
  const auto law = conditional_law(b, 1, 10);
  double total = 0;
  for (const auto& [z, p] : law) total += p;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("total variation") {
  std::map<StateVector, double> a{{{1}, 0.5}, {{2}, 0.5}}, b{{{2}, 0.25}, {{3}, 0.75}};
  CHECK(total_variation(a, b) == doctest::Approx(0.75));
  CHECK(total_variation(Eigen::Vector3d(0.5, 0.5, 0), Eigen::Vector3d(0, 0.25, 0.75)) == doctest::Approx(0.75));
  CHECK_THROWS_AS(total_variation(Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 0, 0)), ValidationError);
}

TEST_CASE("initial law drawn from a vector") {
  const StateIndex idx(1, 3);
  const auto law = InitialLaw::from_vector(idx, Eigen::Vector3d(1.0, 0.0, 3.0));
  CHECK(law.states == std::vector<StateVector>{{1}, {3}});
  CHECK(law.probs[1] == doctest::Approx(0.75));
  SimulationOptions so;
  so.record = {0};
  const auto b = simulate_batch(fixtures::model_a(), law, 0, 40000, 2, so);
  const double share = static_cast<double>(b.states_at.at(0).at({3})) / 40000.0;
  CHECK(share == doctest::Approx(0.75).epsilon(0.02));
  CHECK_THROWS_AS(InitialLaw::from_vector(idx, Eigen::Vector3d::Zero()), ValidationError);
}

TEST_CASE("kernel chain: conditional laws match matrix powers") {
  const auto k = build_kernel_exact(fixtures::model_b(), 6);
  const auto q = solve_qsd(k);
  const Eigen::MatrixXd d(k.matrix);
  std::vector<int> horizons{0, 1, 2, 3, 4, 5, 6, 7};
  const auto r = yaglom_convergence_kernel(k, InitialLaw::dirac({6}), horizons, q, 200000, 12);
  // Frozen TV(delta_6 K^n / |.|, nu), n = 0..7, from dense powers.
  const double frozen[] = {0.9795, 0.4093, 0.1789, 0.0836, 0.0404, 0.0199, 0.0099, 0.005};
  for (const auto& row : r.rows) {
    const double exact = 0.5 * (oracle::conditional_law(d, 5, row.n) - q.nu).lpNorm<1>();
    CHECK(exact == doctest::Approx(frozen[row.n]).epsilon(0.01));
    REQUIRE(row.tv.has_value());
    INFO("n=" << row.n);
    CHECK(std::abs(*row.tv - exact) <= 4 * row.noise + 2e-3);
  }
  REQUIRE(r.reference_ratio.has_value());
  CHECK(*r.reference_ratio == doctest::Approx(oracle::modulus_ratio(d)).epsilon(1e-9));
}

TEST_CASE("process chain Yaglom table") {
  const auto spec = fixtures::model_b();
  const auto k = build_kernel_exact(spec, 10);
  const auto q = solve_qsd(k);
  const auto r = yaglom_convergence(spec, InitialLaw::dirac({6}), {0, 2, 4, 6}, k, q, 50000, 8);
  REQUIRE(r.rows.size() == 4);
  CHECK(*r.rows[0].tv > *r.rows[1].tv);
  CHECK(*r.rows[1].tv > *r.rows[2].tv);
}

}
