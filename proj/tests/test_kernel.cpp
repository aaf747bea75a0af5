#include <doctest.h>

#include <filesystem>

#include "bgw/errors.hpp"
#include "bgw/io.hpp"
#include "bgw/kernel.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bgw;

namespace {

double left_residual(const TruncatedKernel& k, const QsdEstimate& q) {
  return (q.nu.transpose() * k.matrix - q.theta * q.nu.transpose()).lpNorm<1>();
}

double right_residual(const TruncatedKernel& k, const QsdEstimate& q) {
  return (k.matrix * q.eta - q.theta * q.eta).lpNorm<Eigen::Infinity>();
}

// Dense kernel of a multitype model from brute-force enumeration, in the
// library's state order.
Eigen::MatrixXd enumerated_kernel(const std::vector<oracle::Law>& laws, const oracle::Xi& xi, const StateIndex& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < idx.size(); ++x) {
    for (const auto& [y, p] : oracle::enumerate_step(laws, xi, idx[x])) {
      if (auto j = idx.find(y)) k(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(*j)) += static_cast<double>(p);
    }
  }
  return k;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("state index is colexicographic") {
  const StateIndex idx(2, 2);
  REQUIRE(idx.size() == 5);
  CHECK(idx[0] == StateVector{1, 0});
  CHECK(idx[1] == StateVector{2, 0});
  CHECK(idx[2] == StateVector{0, 1});
  CHECK(idx[3] == StateVector{1, 1});
  CHECK(idx[4] == StateVector{0, 2});
  CHECK(idx.at(std::vector<Count>{1, 1}) == 3);
  CHECK_FALSE(idx.find(std::vector<Count>{2, 1}).has_value());
  CHECK_THROWS_AS(idx.at(std::vector<Count>{0, 3}), DomainError);
  CHECK_THROWS_AS(StateIndex(1, 0), ValidationError);
  CHECK(StateIndex(3, 4).size() == 34);  // C(7,3) - 1
}

TEST_CASE("exact kernel matches enumeration") {
  SUBCASE("Model A") {
    const auto k = build_kernel_exact(fixtures::model_a(), 6);
    const Eigen::MatrixXd want = oracle::dense_kernel_1d({oracle::law_a()}, oracle::min_xi(), 6);
    CHECK((Eigen::MatrixXd(k.matrix) - want).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(k.conservation_error() <= 1e-14);
  }
  SUBCASE("Model B") {
    const auto k = build_kernel_exact(fixtures::model_b(), 5);
    const Eigen::MatrixXd want = oracle::dense_kernel_1d({oracle::law_a()}, oracle::model_b_xi(), 5);
    CHECK((Eigen::MatrixXd(k.matrix) - want).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(k.escaped.sum() > 0.0);
  }
  SUBCASE("classical, two types") {
    const auto k = build_kernel_exact(fixtures::classical(), 6);
    const auto want = enumerated_kernel(oracle::classical_laws(), oracle::identity_xi(), k.states);
    CHECK((Eigen::MatrixXd(k.matrix) - want).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("Model A: theta is 1/8 at every radius and nu is a point mass") {
  const auto k1 = build_kernel_exact(fixtures::model_a(), 1);
  CHECK(Eigen::MatrixXd(k1.matrix)(0, 0) == 0.125);
  for (Count R : {1, 2, 4, 6, 8, 12}) {
    const auto k = build_kernel_exact(fixtures::model_a(), R);
    const auto q = solve_qsd(k);
    INFO("R=" << R);
    CHECK(std::abs(q.theta - 0.125) <= 1e-12);
    CHECK(q.nu(0) == doctest::Approx(1.0));
    CHECK(left_residual(k, q) <= 1e-10);
    CHECK(right_residual(k, q) <= 1e-10);
  }
}

TEST_CASE("Model A: right eigenvector at R = 6") {
  const auto k = build_kernel_exact(fixtures::model_a(), 6);
  const auto q = solve_qsd(k);
  // Oracle: null space of the dense K - I/8.
  const Eigen::MatrixXd d = oracle::dense_kernel_1d({oracle::law_a()}, oracle::min_xi(), 6);
  Eigen::VectorXd eta = (d - 0.125 * Eigen::MatrixXd::Identity(6, 6)).fullPivLu().kernel().col(0);
  eta /= eta.maxCoeff();
  CHECK((q.eta - eta).cwiseAbs().maxCoeff() <= 1e-9);
  // Frozen from the same oracle.
  const double frozen[] = {0.0608, 0.1683, 0.3179, 0.5072, 0.7348, 1.0};
  for (int i = 0; i < 6; ++i) CHECK(q.eta(i) == doctest::Approx(frozen[i]).epsilon(5e-4));
}

TEST_CASE("Model B: theta and nu against the dense Perron pair") {
  const std::pair<Count, double> frozen[] = {{4, 0.508131}, {6, 0.543220}, {8, 0.556572}, {10, 0.561345}};
  for (const auto& [R, theta] : frozen) {
    const auto k = build_kernel_exact(fixtures::model_b(), R);
    const auto q = solve_qsd(k);
    // Enumeration is 6^R tuples; past R = 8 the dense solve uses the built rows.
    const Eigen::MatrixXd d =
        R <= 8 ? oracle::dense_kernel_1d({oracle::law_a()}, oracle::model_b_xi(), R) : Eigen::MatrixXd(k.matrix);
    INFO("R=" << R);
    CHECK(std::abs(q.theta - oracle::perron_root(d)) <= 1e-10);
    CHECK(q.theta == doctest::Approx(theta).epsilon(2e-6));
    CHECK((q.nu - oracle::left_perron(d)).lpNorm<1>() <= 1e-8);
    CHECK(left_residual(k, q) <= 1e-10);
    CHECK(right_residual(k, q) <= 1e-10);
    CHECK(q.method == "power");
  }
}

TEST_CASE("classical model: theta of the truncation") {
  const auto k = build_kernel_exact(fixtures::classical(), 8);
  const auto q = solve_qsd(k);
  CHECK(std::abs(q.theta - oracle::perron_root(Eigen::MatrixXd(k.matrix))) <= 1e-10);
  CHECK(q.theta <= 0.6);
  CHECK(left_residual(k, q) <= 1e-10);
  CHECK(right_residual(k, q) <= 1e-10);
}

TEST_CASE("communication classes") {
  SUBCASE("triangular kernel") {
    const auto k = fixtures::triangular_kernel();
    const auto c = communication_classes(k, 0.5);
    REQUIRE(c.classes.size() == 2);
    CHECK(c.classes[0].states == std::vector<std::size_t>{0});  // upstream first
    CHECK(c.classes[1].states == std::vector<std::size_t>{1});
    CHECK(c.classes[0].theta == doctest::Approx(0.5));
    CHECK(c.classes[1].theta == doctest::Approx(0.5));
    CHECK(c.consistent);
    CHECK(c.classes[0].period == 1);
  }
  SUBCASE("periodic kernel") {
    const auto c = communication_classes(fixtures::periodic_kernel());
    REQUIRE(c.classes.size() == 1);
    CHECK(c.classes[0].period == 2);
    CHECK(c.classes[0].theta == doctest::Approx(0.5));
  }
  SUBCASE("Model A is a chain of singletons") {
    const auto c = communication_classes(build_kernel_exact(fixtures::model_a(), 5), 0.125);
    CHECK(c.classes.size() == 5);
    CHECK(c.theta_bar == doctest::Approx(0.125));
    CHECK(c.consistent);
  }
  SUBCASE("mismatch is reported") {
    const auto c = communication_classes(fixtures::triangular_kernel(), 0.4);
    CHECK_FALSE(c.consistent);
    CHECK(*c.mismatch == doctest::Approx(0.1));
  }
}

TEST_CASE("periodic dominant class is refused") {
  CHECK_THROWS_AS(solve_qsd(fixtures::periodic_kernel(0.6, 0.4)), PeriodicityError);
  // The symmetric cycle starts on its eigenvector, so nothing oscillates.
  const auto q = solve_qsd(fixtures::periodic_kernel());
  CHECK(q.theta == doctest::Approx(0.5));
  CHECK(q.nu(0) == doctest::Approx(0.5));
}

TEST_CASE("reducible kernel: class solve recovers nu and eta") {
  const auto k = fixtures::triangular_kernel(0.5, 0.3);
  const auto q = spectral_radius(k);
  CHECK(q.theta == doctest::Approx(0.5).epsilon(1e-10));
  // QSD sits on the downstream class; eta on the upstream one dominates.
  CHECK(q.nu(1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(q.eta(0) == doctest::Approx(1.0));
}

TEST_CASE("polynomial factor j on the triangular kernel") {
  const auto k = fixtures::triangular_kernel(0.5, 0.3);
  const Eigen::MatrixXd d(k.matrix);
  for (std::size_t z : {0u, 1u}) {
    const auto e = estimate_j(k, 0.5, z);
    auto y = oracle::log_survival(d, static_cast<Eigen::Index>(z), 200);
    for (int n = 0; n <= 200; ++n) y[static_cast<std::size_t>(n)] -= n * std::log(0.5);
    CHECK(e.slope == doctest::Approx(oracle::log_slope(y, 50, 200)).epsilon(1e-8));
    REQUIRE(e.j.has_value());
    CHECK(*e.j == (z == 0 ? 1 : 0));
  }
  const auto q = solve_qsd(k);
  REQUIRE(q.j_estimates.size() == 2);
  CHECK(q.j_estimates[0].j == 1);
  CHECK(q.j_estimates[1].j == 0);
}

TEST_CASE("survival profile is exact on the kernel") {
  const auto k = build_kernel_exact(fixtures::model_b(), 6);
  const auto s = survival_profile(k, 5, 40);
  const auto want = oracle::log_survival(Eigen::MatrixXd(k.matrix), 5, 40);
  for (int n = 0; n <= 40; ++n) CHECK(s[static_cast<std::size_t>(n)] == doctest::Approx(want[static_cast<std::size_t>(n)]).epsilon(1e-10));
}

TEST_CASE("Monte Carlo kernel estimates the exact rows") {
  const auto exact = build_kernel_exact(fixtures::model_a(), 4);
  const std::uint64_t samples = 100000;
  const auto mc = build_kernel_mc(fixtures::model_a(), 4, samples, 11);
  CHECK(mc.mode == BuildMode::monte_carlo);
  CHECK(mc.conservation_error() <= 1e-12);
  const Eigen::MatrixXd e(exact.matrix), m(mc.matrix);
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const double sd = std::sqrt(e(i, j) * (1 - e(i, j)) / samples);
      CHECK(std::abs(m(i, j) - e(i, j)) <= 5 * sd + 1e-12);
    }
  // Same seed, same kernel.
  const auto again = build_kernel_mc(fixtures::model_a(), 4, samples, 11);
  CHECK(Eigen::MatrixXd(again.matrix) == m);
  CHECK_THROWS_AS(build_kernel_mc(fixtures::model_a(), 4, 10, 11), ValidationError);
}

TEST_CASE("kernel files round-trip exactly") {
  const auto k = build_kernel_exact(fixtures::classical(), 5);
  const auto dir = std::filesystem::temp_directory_path() / "bgw_kernel_roundtrip";
  std::filesystem::create_directories(dir);
  write_kernel(k, dir / "k.triplets", dir / "k.states");
  const auto r = read_kernel(dir / "k.triplets", dir / "k.states");
  CHECK(r.states.states() == k.states.states());
  CHECK(Eigen::MatrixXd(r.matrix) == Eigen::MatrixXd(k.matrix));
  CHECK(r.absorbed == k.absorbed);
  CHECK(r.escaped == k.escaped);
  std::filesystem::remove_all(dir);
}

}

TEST_SUITE("kernel") {

TEST_CASE("near-tied classes still meet the residual tolerance") {
  // Classes {2..6} and {1} have theta 0.12614 and 0.125.
  const auto k = build_kernel_exact(fixtures::model_a_promiscuous(), 6);
  const auto q = solve_qsd(k);
  CHECK(q.residual_left <= 1e-12);
  CHECK(q.residual_right <= 1e-12);
  CHECK(q.theta == doctest::Approx(oracle::perron_root(Eigen::MatrixXd(k.matrix))).epsilon(1e-12));
}

}
