#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "bgw/model.hpp"

namespace bgw {

/// The states {z in N^p : 0 < |z|_1 <= R} in colexicographic order (the last
/// coordinate is the most significant).
class StateIndex {
 public:
  StateIndex() = default;
  StateIndex(std::size_t p, Count radius);

  std::size_t p() const { return p_; }
  Count radius() const { return radius_; }
  std::size_t size() const { return states_.size(); }
  const StateVector& operator[](std::size_t i) const { return states_[i]; }
  const std::vector<StateVector>& states() const { return states_; }
  std::optional<std::size_t> find(std::span<const Count> z) const;
  std::size_t at(std::span<const Count> z) const;  // throws DomainError

 private:
  std::uint64_t key(std::span<const Count> z) const;

  std::size_t p_ = 0;
  Count radius_ = 0;
  std::vector<StateVector> states_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

enum class BuildMode { exact, monte_carlo };

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TruncatedKernel {
  StateIndex states;
  SparseRowMatrix matrix;       // alive-to-alive probabilities
  Eigen::VectorXd escaped;      // mass with |Z_1| > R
  Eigen::VectorXd absorbed;     // mass at 0
  BuildMode mode = BuildMode::exact;
  std::uint64_t samples = 0;    // Monte Carlo only
  std::uint64_t seed = 0;       // Monte Carlo only
  /// Monte Carlo only: integer counts behind matrix, escaped and absorbed.
  SparseRowMatrix counts;
  Eigen::VectorXd escaped_counts;
  Eigen::VectorXd absorbed_counts;

  std::size_t size() const { return states.size(); }
  Count radius() const { return states.radius(); }
  /// Largest |row sum + escaped + absorbed - 1| over rows.
  double conservation_error() const;
};

TruncatedKernel build_kernel_exact(const ModelSpec& spec, Count radius, std::uint64_t cap = kDefaultCap);
TruncatedKernel build_kernel_mc(const ModelSpec& spec, Count radius, std::uint64_t samples, std::uint64_t seed);

/// Wraps a dense sub-Markov matrix as a kernel on the one-type states 1..n;
/// the missing row mass is recorded as absorbed. Used for synthetic kernels.
TruncatedKernel kernel_from_dense(const Eigen::MatrixXd& m);

struct CommClass {
  std::vector<std::size_t> states;  // ascending state indices
  double theta = 0.0;               // spectral radius of the class block
  int period = 0;                   // 0 when the class has no internal cycle
};

struct ClassDecomposition {
  std::vector<CommClass> classes;  // topological order, upstream first
  std::vector<std::size_t> class_of;
  double theta_bar = 0.0;
  /// |theta_bar - theta| when a reference theta was supplied.
  std::optional<double> mismatch;
  bool consistent = true;
};

/// Strongly connected components of the positive-entry digraph with the
/// spectral radius and period of every class. When `theta` is given the result
/// records whether max_i theta_i agrees with it within `tol`.
ClassDecomposition communication_classes(const TruncatedKernel& k, std::optional<double> theta = std::nullopt,
                                         double tol = 1e-10);

struct JEstimate {
  std::optional<int> j;  // empty when indeterminate
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS of the least-squares fit
};

struct QsdEstimate {
  double theta = 0.0;
  Eigen::VectorXd nu;   // probability vector
  Eigen::VectorXd eta;  // max entry 1
  double residual_left = 0.0;
  double residual_right = 0.0;
  int iterations = 0;
  std::string method;  // "power" or "class-solve"
  std::vector<CommClass> classes;
  std::vector<JEstimate> j_estimates;
};

/// theta, nu and eta by simultaneous left/right power iteration. When the
/// residuals stagnate (reducible or slowly mixing kernels) the eigenvectors are
/// recovered from a dense solve on the dominant class and the states linked to
/// it. Throws PeriodicityError when the dominant class is periodic.
QsdEstimate spectral_radius(const TruncatedKernel& k, double tol = 1e-12, int max_iter = 100000);

/// spectral_radius plus the class decomposition and per-state j estimates.
QsdEstimate solve_qsd(const TruncatedKernel& k, double tol = 1e-12, int max_iter = 100000, int j_lo = 50,
                      int j_hi = 200);

/// log P_z(Z_n alive inside the truncation) for n = 0..n_max; -inf once the
/// chain has surely died. Lower bound on the untruncated survival.
std::vector<double> survival_profile(const TruncatedKernel& k, std::size_t z, int n_max);

/// Fits log P_z(Z_n != 0) - n log theta = j log n + c over [n_lo, n_hi].
/// Throws RangeError if the survival vanishes before n_hi.
JEstimate estimate_j(const TruncatedKernel& k, double theta, std::size_t z, int n_lo = 50, int n_hi = 200);

}  // namespace bgw
