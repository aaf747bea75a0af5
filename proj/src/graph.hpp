#pragma once

#include <cstddef>
#include <vector>

#include "bgw/kernel.hpp"

namespace bgw::detail {

using Graph = std::vector<std::vector<std::size_t>>;

Graph positive_graph(const SparseRowMatrix& m);
Graph transpose(const Graph& g);

/// Strongly connected components in reverse topological order (sinks first).
std::vector<std::vector<std::size_t>> tarjan(const Graph& g);

/// All vertices reachable from `from` (including it).
std::vector<char> reachable(const Graph& g, const std::vector<std::size_t>& from);

/// gcd of cycle lengths inside `members`; 0 if the class has no cycle.
int class_period(const Graph& g, const std::vector<std::size_t>& members, const std::vector<std::size_t>& class_of,
                 std::size_t id);

/// Spectral radius of the principal block of m on `members`.
double block_spectral_radius(const SparseRowMatrix& m, const std::vector<std::size_t>& members);

}  // namespace bgw::detail
