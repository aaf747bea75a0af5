#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "bgw/kernel.hpp"
#include "bgw/model.hpp"

namespace fixtures {

using bgw::Count;
using bgw::ModelSpec;
using bgw::Outcome;
using bgw::Probability;

inline Outcome outcome(std::vector<Count> children, const char* prob) {
  return {std::move(children), Probability::parse(prob)};
}

// Offspring law shared by Model A and Model B.
inline std::vector<Outcome> law_a() {
  return {outcome({0, 0}, "1/2"), outcome({1, 0}, "1/8"),  outcome({0, 1}, "1/8"),
          outcome({2, 0}, "1/16"), outcome({1, 1}, "1/8"), outcome({0, 2}, "1/16")};
}

inline ModelSpec model_a() {
  return ModelSpec(1, 2, bgw::MatingFunction::perfect_fidelity(), {law_a()}, "model_a");
}

inline ModelSpec model_a_promiscuous() {
  return ModelSpec(1, 2, bgw::MatingFunction::promiscuous(), {law_a()}, "model_a_promiscuous");
}

inline std::vector<Count> table_cells(Count box, Count (*xi)(Count, Count)) {
  std::vector<Count> cells;
  for (Count x = 0; x <= box; ++x)
    for (Count y = 0; y <= box; ++y) cells.push_back(xi(x, y));
  return cells;
}

// xi(x, y) = x + min(x, y); irreducible and aperiodic on N \ {0}.
inline ModelSpec model_b(Count box = 64) {
  auto cells = table_cells(box, [](Count x, Count y) { return x + std::min(x, y); });
  auto xi = bgw::MatingFunction::custom_table(1, 2, box, std::move(cells), bgw::Certificate{{2.0}, {0.0}});
  return ModelSpec(1, 2, std::move(xi), {law_a()}, "model_b");
}

// Identity mating with mean matrix [[0.5, 0.2], [0.1, 0.4]].
inline ModelSpec classical() {
  return ModelSpec(2, 2, bgw::MatingFunction::identity(2),
                   {{outcome({0, 0}, "0.5"), outcome({1, 0}, "0.3"), outcome({1, 1}, "0.2")},
                    {outcome({0, 0}, "0.6"), outcome({0, 1}, "0.3"), outcome({1, 1}, "0.1")}},
                   "classical_gw");
}

inline Eigen::MatrixXd classical_mean() {
  Eigen::MatrixXd v(2, 2);
  v << 0.5, 0.2, 0.1, 0.4;
  return v;
}

// Two-cycle between states 1 and 2.
inline bgw::TruncatedKernel periodic_kernel(double up = 0.5, double down = 0.5) {
  Eigen::MatrixXd m(2, 2);
  m << 0.0, up, down, 0.0;
  return bgw::kernel_from_dense(m);
}

// Upper-triangular two-class kernel with equal diagonal theta: state 1 feeds
// state 2, which only loops on itself.
inline bgw::TruncatedKernel triangular_kernel(double theta = 0.5, double link = 0.3) {
  Eigen::MatrixXd m(2, 2);
  m << theta, link, 0.0, theta;
  return bgw::kernel_from_dense(m);
}

}  // namespace fixtures
