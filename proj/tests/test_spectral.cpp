#include <doctest.h>

#include <random>

#include "bgw/errors.hpp"
#include "bgw/spectral.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bgw;

TEST_SUITE("spectral") {

TEST_CASE("Model A eigen-data") {
  const auto s = power_iterate(fixtures::model_a());
  CHECK(s.lambda_star == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(s.z_star == std::vector<double>{1.0});
  CHECK(s.n0 == 1);
  CHECK(s.residual <= 1e-12);
}

TEST_CASE("identity mating reduces to the Perron root of the mean matrix") {
  const auto spec = fixtures::classical();
  const auto s = power_iterate(spec);
  CHECK(std::abs(s.lambda_star - oracle::perron_root(fixtures::classical_mean())) <= 1e-10);
  // Left eigenvector of [[.5,.2],[.1,.4]] for 0.6 is proportional to (1, 1).
  CHECK(s.z_star[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.z_star[1] == doctest::Approx(0.5).epsilon(1e-9));
  // P is linear here: P(z) = <z, r> / <z*, r> with V r = 0.6 r, r = (1, 1/2).
  CHECK(eval_P(spec, s, std::vector<Count>{1, 0}) == doctest::Approx(4.0 / 3.0).epsilon(1e-8));
  CHECK(eval_P(spec, s, std::vector<Count>{0, 1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-8));
  CHECK(eval_P(spec, s, std::vector<Count>{3, 2}) == doctest::Approx(16.0 / 3.0).epsilon(1e-8));
}

TEST_CASE("table mating: limit operator of x + min(x, y)") {
  const auto spec = fixtures::model_b();
  const std::vector<double> z{1.0};
  // zV = (3/8, 3/8), so M(z) = 3/8 + 3/8 up to the floor error of the schedule.
  CHECK(operator_M(spec, z)[0] == doctest::Approx(0.75).epsilon(0.02));
  const auto s = power_iterate(spec);
  CHECK(s.lambda_star == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("P on Model A is the identity") {
  const auto spec = fixtures::model_a();
  const auto s = power_iterate(spec);
  for (Count k = 1; k <= 10; ++k) CHECK(eval_P(spec, s, std::vector<Count>{k}) == doctest::Approx(k));
}

TEST_CASE("operator M is homogeneous, monotone and concave") {
  for (const auto& spec : {fixtures::model_a(), fixtures::classical()}) {
    const std::size_t p = spec.p();
    CounterEngine eng(3, 0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> a(p), b(p), ab(p), mid(p);
      for (std::size_t i = 0; i < p; ++i) {
        a[i] = U(eng);
        b[i] = U(eng);
      }
      const double c = 0.1 + 3 * U(eng);
      for (std::size_t i = 0; i < p; ++i) {
        ab[i] = a[i] + b[i];
        mid[i] = 0.5 * (a[i] + b[i]);
      }
      std::vector<double> ca(a);
      for (auto& x : ca) x *= c;
      const auto ma = operator_M(spec, a), mb = operator_M(spec, b);
      const auto mca = operator_M(spec, ca), mab = operator_M(spec, ab), mmid = operator_M(spec, mid);
      for (std::size_t i = 0; i < p; ++i) {
        CHECK(mca[i] == doctest::Approx(c * ma[i]).epsilon(1e-12));
        CHECK(mab[i] >= ma[i] - 1e-12);                          // monotone: a + b >= a
        CHECK(mmid[i] >= 0.5 * (ma[i] + mb[i]) - 1e-12);         // concave
      }
    }
  }
}

TEST_CASE("primitivity failure names the offending pairs") {
  using fixtures::outcome;
  // Each type only reproduces itself.
  const ModelSpec spec(2, 2, MatingFunction::identity(2),
                       {{outcome({0, 0}, "1/2"), outcome({1, 0}, "1/2")},
                        {outcome({0, 0}, "1/2"), outcome({0, 1}, "1/2")}});
  const auto r = check_primitivity(spec, 20);
  CHECK_FALSE(r.primitive());
  CHECK(r.offending.size() == 2);
  CHECK(check_primitivity(fixtures::classical(), 20).n0 == 1);
}

}
