#include <doctest.h>

#include "bgw/errors.hpp"
#include "bgw/qsd_family.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bgw;

TEST_SUITE("qsdfamily") {

TEST_CASE("resolvent series equals the dense resolvent") {
  const auto k = build_kernel_exact(fixtures::model_b(), 6);
  const auto q = solve_qsd(k);
  const Eigen::MatrixXd d(k.matrix);
  for (double lambda : {0.6, 0.75, 0.9}) {
    for (std::size_t a : {0u, 3u, 5u}) {
      const auto e = resolvent_measure(k, q.theta, lambda, a);
      const auto [mu, S] = oracle::resolvent(d, lambda, static_cast<Eigen::Index>(a));
      INFO("lambda=" << lambda << " anchor=" << a);
      CHECK((e.mu - mu).lpNorm<1>() <= 1e-10);
      CHECK(e.S == doctest::Approx(S).epsilon(1e-10));
      CHECK(e.one_step_defect == doctest::Approx(lambda / S).epsilon(1e-10));
      CHECK(e.identity_residual <= 1e-10);
    }
  }
}

TEST_CASE("lambda outside (theta, 1)") {
  const auto k = build_kernel_exact(fixtures::model_a(), 4);
  CHECK_THROWS_AS(resolvent_measure(k, 0.125, 1.0, 0), DomainError);
  CHECK_THROWS_AS(resolvent_measure(k, 0.125, 0.125, 0), ConvergenceError);
  CHECK_THROWS_AS(resolvent_measure(k, 0.125, 0.1, 0), ConvergenceError);
}

TEST_CASE("Model A family at R = 6") {
  const auto spec = fixtures::model_a();
  const auto k = build_kernel_exact(spec, 6);
  const auto q = solve_qsd(k);
  const auto s = power_iterate(spec);
  const auto anchors = auto_anchors(k, s);
  CHECK(anchors == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  const auto grid = default_lambda_grid(q.theta);
  REQUIRE(grid.size() == 8);
  CHECK(grid.front() == doctest::Approx(0.175));
  CHECK(grid.back() == doctest::Approx(0.95));
  CHECK(std::is_sorted(grid.begin(), grid.end()));
  const auto f = build_family(k, q.theta, grid, anchors);
  CHECK(f.entries.size() == 48);
  CHECK(f.max_identity_residual <= 1e-10);
  for (bool b : f.defect_decreasing) CHECK(b);
  REQUIRE(f.min_pairwise_distance.has_value());
  CHECK(*f.min_pairwise_distance > 1e-3);
  // From the anchor x = 1 the series is geometric: S = 1 / (1 - theta / lambda).
  CHECK(f.entries[0].S == doctest::Approx(1.0 / (1.0 - 0.125 / grid[0])).epsilon(1e-12));
}

TEST_CASE("upsilon0 estimate") {
  const auto a = build_kernel_exact(fixtures::model_a(), 6);
  const auto ua = estimate_upsilon0(a, solve_qsd(a));
  CHECK(ua.value == doctest::Approx(0.125));
  CHECK(ua.regression_rate == doctest::Approx(0.125).epsilon(1e-6));
  CHECK(ua.consistent);
  const auto b = build_kernel_exact(fixtures::model_b(), 6);
  const auto qb = solve_qsd(b);
  const auto ub = estimate_upsilon0(b, qb);
  CHECK(ub.value == doctest::Approx(qb.theta));
  CHECK(ub.consistent);
}

}
