#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "bgw/random.hpp"

namespace bgw {

using Count = std::int64_t;
using StateVector = std::vector<Count>;
using Rational = boost::multiprecision::cpp_rational;

Count l1(std::span<const Count> z);
bool is_zero(std::span<const Count> z);
std::string format_state(std::span<const Count> z);

enum class MatingKind { identity, perfect_fidelity, promiscuous, custom_table };

std::string to_string(MatingKind kind);
MatingKind mating_kind_from_string(const std::string& name);

/// xi(x) <= alpha_i |x|_1 + beta_i for every output coordinate i.
struct Certificate {
  std::vector<double> alpha;
  std::vector<double> beta;
};

class MatingFunction {
 public:
  static MatingFunction identity(std::size_t dim);
  static MatingFunction perfect_fidelity();
  static MatingFunction promiscuous();
  /// Table over the box [0, bound]^q, row-major with x_1 most significant.
  /// Each cell holds p counts. Without a certificate one is derived from the
  /// table (beta = 0, alpha = max xi_i(x) / |x|).
  static MatingFunction custom_table(std::size_t p, std::size_t q, Count bound,
                                     std::vector<Count> cells,
                                     std::optional<Certificate> certificate = std::nullopt);

  MatingKind kind() const { return kind_; }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  /// Box bound B for custom tables; -1 for the unbounded built-ins.
  Count bound() const { return bound_; }
  const Certificate& certificate() const { return certificate_; }
  bool certificate_derived() const { return certificate_derived_; }
  /// Copy with a declared certificate replacing the default one.
  MatingFunction with_certificate(Certificate certificate) const;
  /// Raw table cells (custom tables only).
  const std::vector<Count>& cells() const { return cells_; }

  StateVector apply(std::span<const Count> w) const;
  /// Same as apply but writes into `out` (size p) without allocating.
  void apply_into(std::span<const Count> w, std::span<Count> out) const;

  /// True if w lies inside the domain (always true for built-ins).
  bool in_domain(std::span<const Count> w) const;

 private:
  MatingKind kind_ = MatingKind::identity;
  std::size_t p_ = 0;
  std::size_t q_ = 0;
  Count bound_ = -1;
  std::vector<Count> cells_;
  Certificate certificate_;
  bool certificate_derived_ = false;
};

/// A probability carried both as a double and as the exact rational it was
/// parsed from. Decimal input "0.3" becomes exactly 3/10.
struct Probability {
  double value = 0.0;
  Rational exact;

  static Probability from_rational(const Rational& r);
  static Probability from_double(double x);
  /// Accepts "a/b", "a" or a decimal literal such as "0.125" or "1e-3".
  static Probability parse(const std::string& text);
};

struct Outcome {
  StateVector children;  // length q
  Probability prob;
};

/// Offspring law of a single parent type.
struct TypeLaw {
  std::vector<Outcome> outcomes;
  std::vector<double> cdf;  // cumulative, last entry forced to 1
  std::vector<Count> max_children;  // per coordinate
};

class ModelSpec {
 public:
  /// Validates probabilities (non-negative, sum to 1 within 1e-12), dimensions
  /// and the column condition; throws ValidationError otherwise.
  ModelSpec(std::size_t p, std::size_t q, MatingFunction mating,
            std::vector<std::vector<Outcome>> laws, std::string name = "");

  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  const MatingFunction& mating() const { return mating_; }
  const std::vector<TypeLaw>& laws() const { return laws_; }
  const Eigen::MatrixXd& mean_matrix() const { return mean_; }
  const std::string& name() const { return name_; }

  /// r-th absolute moment of |V_i|_1 for each parent type.
  std::vector<double> moments(double r) const;

 private:
  std::size_t p_;
  std::size_t q_;
  MatingFunction mating_;
  std::vector<TypeLaw> laws_;
  Eigen::MatrixXd mean_;
  std::string name_;
};

/// Sum of the offspring vectors of all couples in z. Couple k of type i uses
/// draw index couple_index(i, k) of `stream`, so two states sharing a prefix of
/// couples share those draws.
void sample_children(const ModelSpec& spec, std::span<const Count> z,
                     const CounterStream& stream, std::span<Count> w);

StateVector step(const ModelSpec& spec, std::span<const Count> z, const CounterStream& stream);

using StepDistribution = std::map<StateVector, double>;
using ExactStepDistribution = std::map<StateVector, Rational>;

/// Number of cells of the dense children box used by the exact convolution.
std::uint64_t children_box_cells(const ModelSpec& spec, std::span<const Count> z);

inline constexpr std::uint64_t kDefaultCap = 50'000'000;

/// Exact law of Z_1 given Z_0 = z. Throws ResourceError when the children box
/// exceeds `cap` cells, DomainError when a reachable children vector falls
/// outside a custom table.
StepDistribution step_distribution(const ModelSpec& spec, std::span<const Count> z,
                                   std::uint64_t cap = kDefaultCap);
ExactStepDistribution step_distribution_exact(const ModelSpec& spec, std::span<const Count> z,
                                              std::uint64_t cap = kDefaultCap);

/// Largest children vector reachable in one generation from a state of size
/// at most `radius`, per coordinate.
std::vector<Count> max_children_within(const ModelSpec& spec, Count radius);

/// Throws ValidationError if a custom table box cannot hold every children
/// vector reachable from states of size <= radius.
void require_table_covers(const ModelSpec& spec, Count radius);

struct Violation {
  std::string invariant;  // "xi(0)", "superadditivity", "sub-affinity", "column-sum"
  std::string witness;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::uint64_t superadditivity_checks = 0;
  std::uint64_t subaffinity_checks = 0;
  bool exhaustive = false;
  /// Face-sampled modulus of continuity of the operator M (custom tables only;
  /// never a certificate).
  std::optional<double> continuity_modulus;
  bool pass() const { return violations.empty(); }
};

ValidationReport validate_model(const ModelSpec& spec, std::uint64_t n_samples, std::uint64_t seed);

}  // namespace bgw
