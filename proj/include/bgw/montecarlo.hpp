#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgw/kernel.hpp"
#include "bgw/model.hpp"

namespace bgw {

/// Initial condition: either a fixed state or a finite law over states.
struct InitialLaw {
  std::vector<StateVector> states;
  std::vector<double> probs;

  static InitialLaw dirac(StateVector z);
  static InitialLaw from_vector(const StateIndex& index, const Eigen::VectorXd& nu);
  bool is_dirac() const { return states.size() == 1; }
};

using Histogram = std::map<StateVector, std::uint64_t>;

struct TrajectoryBatch {
  std::string digest;
  InitialLaw z0;
  int horizon = 0;
  std::uint64_t n_traj = 0;
  std::uint64_t seed = 0;
  /// Generation of absorption per path; kCensored if alive at the horizon.
  std::vector<std::int32_t> extinction_times;
  std::vector<std::uint64_t> survivors;  // index n = 0..horizon
  std::uint64_t capped = 0;              // paths stopped by the population cap
  std::map<int, Histogram> states_at;    // recorded horizons

  static constexpr std::int32_t kCensored = -1;
};

struct SimulationOptions {
  std::vector<int> record;     // horizons whose states are kept
  Count population_cap = 1'000'000;
};

/// Paths of the branching process. Generation g of path i draws from the
/// stream (seed, (i << 32) | g); the initial state of path i (when z0 is not a
/// Dirac) uses generation slot 0.
TrajectoryBatch simulate_batch(const ModelSpec& spec, const InitialLaw& z0, int horizon, std::uint64_t n_traj,
                               std::uint64_t seed, const SimulationOptions& options = {});

/// Paths of the killed chain defined by a truncated kernel; escaping the
/// truncation counts as absorption.
TrajectoryBatch simulate_kernel_batch(const TruncatedKernel& k, const InitialLaw& z0, int horizon,
                                      std::uint64_t n_traj, std::uint64_t seed, const SimulationOptions& options = {});

struct ThetaEstimate {
  double theta = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int n_lo = 0;
  int n_hi = 0;
};

/// exp of the least-squares slope of log survival over the largest window
/// with at least `min_survivors` survivors, after dropping its first 20%.
/// Percentile bootstrap CI over `boot` resamples of the paths.
ThetaEstimate estimate_theta0(const TrajectoryBatch& batch, std::uint64_t min_survivors = 50, int boot = 400,
                              std::uint64_t boot_seed = 0, double drop_fraction = 0.2);

std::map<StateVector, double> conditional_law(const TrajectoryBatch& batch, int n, std::uint64_t threshold = 200);

double total_variation(const std::map<StateVector, double>& a, const std::map<StateVector, double>& b);
double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
std::map<StateVector, double> to_law(const StateIndex& index, const Eigen::VectorXd& v);

struct YaglomRow {
  int n = 0;
  std::uint64_t survivors = 0;
  double survival = 0.0;
  std::optional<double> tv;  // empty below the survivor threshold
  double noise = 0.0;        // expected TV of an exact sample of this size
};

struct YaglomResult {
  std::vector<YaglomRow> rows;
  std::optional<double> gamma_hat;
  double envelope_C = 0.0;
  int fit_lo = 0;
  int fit_hi = 0;
  bool eventually_decreasing = false;
  bool envelope_holds = false;
  std::optional<double> reference_ratio;  // |lambda_2| / |lambda_1| of the kernel
};

struct YaglomOptions {
  std::uint64_t threshold = 200;
  double fit_noise_multiple = 3.0;
  double envelope_noise_multiple = 4.0;
};

/// TV(conditional law at n, nu) per horizon and a geometric envelope fit.
YaglomResult yaglom_from_batch(const TrajectoryBatch& batch, const StateIndex& index, const Eigen::VectorXd& nu,
                               const std::vector<int>& horizons, const YaglomOptions& options = {});

YaglomResult yaglom_convergence(const ModelSpec& spec, const InitialLaw& z0, const std::vector<int>& horizons,
                                const TruncatedKernel& k, const QsdEstimate& qsd, std::uint64_t n_traj,
                                std::uint64_t seed, const YaglomOptions& options = {});

/// Same, simulating the killed kernel chain instead of the process.
YaglomResult yaglom_convergence_kernel(const TruncatedKernel& k, const InitialLaw& z0,
                                       const std::vector<int>& horizons, const QsdEstimate& qsd,
                                       std::uint64_t n_traj, std::uint64_t seed, const YaglomOptions& options = {});

/// |lambda_2| / |lambda_1| of the kernel matrix by a dense eigensolve.
double subdominant_ratio(const TruncatedKernel& k);

}  // namespace bgw
