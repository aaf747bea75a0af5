#pragma once

#include <optional>
#include <vector>

#include "bgw/kernel.hpp"
#include "bgw/spectral.hpp"

namespace bgw {

struct QsdFamilyEntry {
  double lambda = 0.0;
  std::size_t anchor = 0;  // state index
  Eigen::VectorXd mu;      // probability vector
  double S = 0.0;          // sum_l lambda^-l K^l(anchor, alive)
  double one_step_defect = 0.0;     // lambda / S
  double identity_residual = 0.0;   // |mu K - lambda mu + (lambda/S) delta_anchor|_1
  int terms = 0;                    // series length L + 1
};

/// mu = sum_{l<=L} lambda^-l delta_anchor K^l, normalised. The series stops
/// once the geometric tail bound (theta/lambda)^(L+1) / (1 - theta/lambda) and
/// the size of the next term relative to S are both below tail_tol.
QsdFamilyEntry resolvent_measure(const TruncatedKernel& k, double theta, double lambda, std::size_t anchor,
                                 double tail_tol = 1e-12);

struct FamilyReport {
  std::vector<QsdFamilyEntry> entries;  // lambda-major, anchors in the given order
  std::vector<double> lambdas;
  std::vector<std::size_t> anchors;
  /// Per lambda: defect strictly decreasing along the anchor ladder.
  std::vector<bool> defect_decreasing;
  /// Smallest l1 distance between the mu of two different lambdas at the last
  /// anchor; empty with fewer than two lambdas.
  std::optional<double> min_pairwise_distance;
  double max_identity_residual = 0.0;
};

FamilyReport build_family(const TruncatedKernel& k, double theta, const std::vector<double>& lambda_grid,
                          const std::vector<std::size_t>& anchors, double tail_tol = 1e-12);

/// m z* rounded for m = 1..R, clipped to |x|_1 <= R, zeros and repeats dropped.
std::vector<std::size_t> auto_anchors(const TruncatedKernel& k, const SpectralResult& s);

/// `count` geometric points from theta + 0.05 to 0.95.
std::vector<double> default_lambda_grid(double theta, int count = 8);

struct Upsilon0Estimate {
  double value = 0.0;            // theta(K)
  double regression_rate = 0.0;  // exp(slope) of log survival
  int n_lo = 0;
  int n_hi = 0;
  std::size_t start_state = 0;
  bool consistent = false;
};

/// On a truncation T_0 has a geometric tail with rate theta(K); the survival
/// regression over [n_lo, n_hi] from the state maximising eta is the check.
Upsilon0Estimate estimate_upsilon0(const TruncatedKernel& k, const QsdEstimate& q, int n_lo = 100, int n_hi = 200,
                                   double tol = 5e-3);

}  // namespace bgw
