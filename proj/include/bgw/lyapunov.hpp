#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bgw/kernel.hpp"
#include "bgw/spectral.hpp"

namespace bgw {

struct MomentCheck {
  bool pass = false;
  bool subcritical = true;
  double r = 0.0;
  double margin = 0.0;     // theta0_hat - lambda*^r
  double minimal_r = 0.0;  // |log theta0| / |log lambda*|
  std::vector<double> moments;
  std::string note;
};

MomentCheck check_moment_assumption(const ModelSpec& spec, const SpectralResult& s, double theta0_hat, double r);

/// Q_a(z) = P(z)^a for every state of a truncation.
struct LyapunovWeights {
  double a = 0.0;
  Eigen::VectorXd q;              // Q_a on the truncation states
  double asymptotic_rate = 0.0;   // lambda*^a
};

LyapunovWeights lyapunov_weights(const ModelSpec& spec, const SpectralResult& s, double a, const StateIndex& states);

/// `count` geometric points strictly inside (lo, hi).
std::vector<double> open_geometric_grid(double lo, double hi, int count);

struct DriftOptions {
  double a = 2.5;
  Count radius = 8;
  BuildMode mode = BuildMode::exact;
  std::uint64_t cap = kDefaultCap;
  std::uint64_t samples = 100000;  // Monte Carlo per state
  std::uint64_t seed = 0;
  double theta0_hat = 0.0;
  int grid_points = 64;
  std::vector<Count> ladder{1, 2, 3, 4, 5, 6, 7, 8};
};

struct DriftState {
  StateVector z;
  double q = 0.0;
  double lhs = 0.0;  // E_z[Q_a(Z_1) 1{Z_1 != 0}]
  double rhs = 0.0;  // theta_a Q_a(z) + C_a
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct Step1Point {
  Count k = 0;
  StateVector z;
  double ratio = 0.0;   // E_z[Q_a(Z_1) 1] / Q_a(z)
  double excess = 0.0;  // max(0, ratio - lambda*^a)
};

struct LyapunovReport {
  double a = 0.0;
  double theta_a = 0.0;
  double C_a = 0.0;
  double theta0_hat = 0.0;
  double asymptotic_rate = 0.0;
  bool theta_a_below_theta0 = false;
  Count checked_radius = 0;
  BuildMode mode = BuildMode::exact;
  std::vector<DriftState> states;
  std::vector<DriftState> violations;
  std::vector<DriftState> undetermined;  // Monte Carlo CI straddles the bound
  std::vector<Step1Point> step1;
  /// The excess over lambda*^a never increases along the ladder.
  bool step1_monotone = false;
  bool violation_free() const { return violations.empty(); }
};

/// Drift inequality E_z[Q_a(Z_1) 1] <= theta_a Q_a(z) + C_a on 0 < |z| <= R
/// with the untruncated one-step law. theta_a is the smallest point of a
/// geometric grid in (lambda*^a, theta0_hat) and C_a the smallest constant
/// making it hold.
LyapunovReport verify_drift(const ModelSpec& spec, const SpectralResult& s, const DriftOptions& options);

struct EOptions {
  std::optional<Count> small_set_radius;  // auto when empty
  std::optional<StateVector> reference;   // (1,...,1) when empty
  int window = 200;
  int n1_cap = 50;
  int n2_cap = 1000;
  int grid_points = 64;
  double tol = 1e-10;
};

struct AssumptionEReport {
  Count small_set_radius = 0;
  std::vector<std::size_t> small_set;
  double theta0_hat = 0.0;
  double theta_a = 0.0;
  double C_a = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  // E1
  std::size_t reference = 0;
  std::optional<int> n1;
  double c1 = 0.0;
  // E2'
  Eigen::VectorXd phi1;
  double c2 = 0.0;
  double e2prime_worst = 0.0;  // max over z outside K of K phi1 - theta1 phi1
  // E3
  double c3 = 0.0;
  bool c3_stabilized = false;
  std::vector<double> harnack;  // ratio per n = 0..window
  // E4
  std::vector<int> periods;      // class period of every small-set state
  std::vector<bool> aperiodic;   // P_z(Z_n in K) > 0 on the tail of the test window
  // E2 construction
  std::optional<int> n2;
  double c_theta2 = 0.0;
  Eigen::VectorXd phi2;
  double phi2_identity_residual = 0.0;
  double phi2_drift_worst = 0.0;  // min over z of K phi2 - theta2 phi2
  double phi2_inf_small_set = 0.0;
  double phi2_sup = 0.0;

  bool e1 = false;
  bool e2prime = false;
  bool e3 = false;
  bool e4 = false;
  bool e2 = false;
  std::string e2_note;
  bool all_pass() const { return e1 && e2prime && e3 && e4 && e2; }
};

AssumptionEReport verify_assumption_E(const TruncatedKernel& k, double theta0_hat, const LyapunovWeights& w,
                                      const EOptions& options = {});

}  // namespace bgw
