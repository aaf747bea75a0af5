#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include <Eigen/Eigenvalues>

#include "bgw/errors.hpp"
#include "graph.hpp"

namespace bgw::detail {

Graph positive_graph(const SparseRowMatrix& m) {
  Graph g(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    for (SparseRowMatrix::InnerIterator it(m, r); it; ++it) {
      if (it.value() > 0.0) g[static_cast<std::size_t>(r)].push_back(static_cast<std::size_t>(it.col()));
    }
  }
  return g;
}

Graph transpose(const Graph& g) {
  Graph t(g.size());
  for (std::size_t u = 0; u < g.size(); ++u) {
    for (std::size_t v : g[u]) t[v].push_back(u);
  }
  return t;
}

std::vector<std::vector<std::size_t>> tarjan(const Graph& g) {
  const std::size_t n = g.size();
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unset), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (vertex, next edge)
  std::vector<std::vector<std::size_t>> out;
  std::size_t counter = 0;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unset) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e == 0 && index[v] == unset) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = 1;
      }
      if (e < g[v].size()) {
        const std::size_t w = g[v][e++];
        if (index[w] == unset) {
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) {
        const std::size_t parent = call.back().first;
        low[parent] = std::min(low[parent], low[done]);
      }
    }
  }
  return out;
}

std::vector<char> reachable(const Graph& g, const std::vector<std::size_t>& from) {
  std::vector<char> seen(g.size(), 0);
  std::vector<std::size_t> todo;
  for (std::size_t v : from) {
    if (!seen[v]) {
      seen[v] = 1;
      todo.push_back(v);
    }
  }
  while (!todo.empty()) {
    const std::size_t u = todo.back();
    todo.pop_back();
    for (std::size_t v : g[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        todo.push_back(v);
      }
    }
  }
  return seen;
}

int class_period(const Graph& g, const std::vector<std::size_t>& members, const std::vector<std::size_t>& class_of,
                 std::size_t id) {
  std::vector<long> level(g.size(), -1);
  std::queue<std::size_t> bfs;
  level[members.front()] = 0;
  bfs.push(members.front());
  long d = 0;
  while (!bfs.empty()) {
    const std::size_t u = bfs.front();
    bfs.pop();
    for (std::size_t v : g[u]) {
      if (class_of[v] != id) continue;
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        bfs.push(v);
      } else {
        d = std::gcd(d, std::labs(level[u] + 1 - level[v]));
      }
    }
  }
  return static_cast<int>(d);
}

double block_spectral_radius(const SparseRowMatrix& m, const std::vector<std::size_t>& members) {
  const std::size_t n = members.size();
  std::vector<long> pos(static_cast<std::size_t>(m.rows()), -1);
  for (std::size_t i = 0; i < n; ++i) pos[members[i]] = static_cast<long>(i);
  if (n == 1) return m.coeff(static_cast<Eigen::Index>(members[0]), static_cast<Eigen::Index>(members[0]));

  if (n <= 512) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (SparseRowMatrix::InnerIterator it(m, static_cast<Eigen::Index>(members[i])); it; ++it) {
        const long j = pos[static_cast<std::size_t>(it.col())];
        if (j >= 0) a(static_cast<Eigen::Index>(i), j) = it.value();
      }
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  // Large irreducible block: rho(A) = rho(A + I) - 1 and A + I is primitive.
  Eigen::VectorXd x = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  double rho = 0.0;
  for (int it = 0; it < 1000000; ++it) {
    Eigen::VectorXd y = x;
    for (std::size_t i = 0; i < n; ++i) {
      for (SparseRowMatrix::InnerIterator e(m, static_cast<Eigen::Index>(members[i])); e; ++e) {
        const long j = pos[static_cast<std::size_t>(e.col())];
        if (j >= 0) y(static_cast<Eigen::Index>(i)) += e.value() * x(j);
      }
    }
    const double next = y.maxCoeff() / x.maxCoeff();
    x = y / y.maxCoeff();
    if (std::abs(next - rho) <= 1e-15 * next) return next - 1.0;
    rho = next;
  }
  throw ConvergenceError("class spectral radius did not converge");
}

}  // namespace bgw::detail

namespace bgw {

ClassDecomposition communication_classes(const TruncatedKernel& k, std::optional<double> theta, double tol) {
  const auto g = detail::positive_graph(k.matrix);
  auto comps = detail::tarjan(g);
  std::reverse(comps.begin(), comps.end());

  ClassDecomposition dec;
  dec.class_of.assign(g.size(), 0);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    for (std::size_t v : comps[c]) dec.class_of[v] = c;
  }
  for (std::size_t c = 0; c < comps.size(); ++c) {
    CommClass cls;
    cls.theta = detail::block_spectral_radius(k.matrix, comps[c]);
    cls.period = detail::class_period(g, comps[c], dec.class_of, c);
    cls.states = std::move(comps[c]);
    dec.theta_bar = std::max(dec.theta_bar, cls.theta);
    dec.classes.push_back(std::move(cls));
  }
  if (theta) {
    dec.mismatch = std::abs(dec.theta_bar - *theta);
    dec.consistent = *dec.mismatch <= tol;
  }
  return dec;
}

}  // namespace bgw
