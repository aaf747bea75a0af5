#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bgw/model.hpp"

namespace bgw {

struct SpectralResult {
  double lambda_star = 0.0;
  std::vector<double> z_star;  // l1-normalized
  std::optional<int> n0;
  int iterations = 0;
  double residual = 0.0;  // |M(z*) - lambda* z*|_1
};

/// The limit operator M(z) = lim_k xi(floor(k z V)) / k. Closed form for the
/// built-in matings; for a custom table the limit is read off the doubling
/// schedule k0, 2k0, 4k0, 8k0 and accepted when the last two evaluations agree
/// within `table_tol` (relative).
std::vector<double> operator_M(const ModelSpec& spec, std::span<const double> z, double table_tol = 0.05);

/// Nonlinear power iteration on the l1 simplex from the uniform vector.
SpectralResult power_iterate(const ModelSpec& spec, double tol = 1e-13, int max_iter = 100000);

/// |M^n(z)|_1 / lambda*^n, normalised so that P(z*) = 1. Throws NumericError
/// when the values at n and 2n differ by more than `tol` relative.
double eval_P(const ModelSpec& spec, const SpectralResult& s, std::span<const double> z, int n = 64,
              double tol = 1e-9);
double eval_P(const ModelSpec& spec, const SpectralResult& s, std::span<const Count> z, int n = 64,
              double tol = 1e-9);

struct PrimitivityReport {
  std::optional<int> n0;
  /// (i, coordinate) pairs, 0-based, where M^max_m(e_i) vanishes.
  std::vector<std::pair<std::size_t, std::size_t>> offending;
  bool primitive() const { return n0.has_value(); }
};

PrimitivityReport check_primitivity(const ModelSpec& spec, int max_m = 50);

}  // namespace bgw
