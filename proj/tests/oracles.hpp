#pragma once

// Independent reference computations used by unit and acceptance tests. None
// of these call into the library's own implementations.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

namespace classrag::oracle {

struct Edge {
  std::size_t a;
  std::size_t b;
  double w = 1.0;
};

// Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j), from the adjacency
// matrix directly.
inline double modularity(std::size_t n, const std::vector<Edge>& edges, const std::vector<std::size_t>& label) {
  std::vector<std::vector<double>> adj(n, std::vector<double>(n, 0.0));
  for (const auto& e : edges) {
    adj[e.a][e.b] += e.w;
    if (e.a != e.b) adj[e.b][e.a] += e.w;
  }
  std::vector<double> k(n, 0.0);
  double two_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i] += adj[i][j];
    two_m += k[i];
  }
  if (two_m == 0.0) return 0.0;
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (label[i] == label[j]) q += adj[i][j] - k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

// Calls fn with every set partition of {0..n-1} as a restricted growth string.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> label(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t blocks) {
    if (i == n) {
      fn(label);
      return;
    }
    for (std::size_t b = 0; b <= blocks; ++b) {
      label[i] = b;
      rec(i + 1, b == blocks ? blocks + 1 : blocks);
    }
  };
  if (n > 0) rec(0, 0);
}

// True when the two labelings induce the same partition.
inline bool same_partition(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      if ((x[i] == x[j]) != (y[i] == y[j])) return false;
    }
  }
  return true;
}

// Fraction of node pairs on which the partitions agree (Rand index).
inline double pairwise_agreement(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      agree += (x[i] == x[j]) == (y[i] == y[j]) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

struct PlantedGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::vector<std::size_t> block;
};

inline PlantedGraph planted_partition(std::size_t blocks, std::size_t per_block, double p_in, double p_out,
                                      std::uint64_t seed) {
  PlantedGraph g;
  g.n = blocks * per_block;
  for (std::size_t i = 0; i < g.n; ++i) g.block.push_back(i / per_block);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = i + 1; j < g.n; ++j) {
      if (u(rng) < (g.block[i] == g.block[j] ? p_in : p_out)) g.edges.push_back({i, j, 1.0});
    }
  }
  return g;
}

// (w + t/2) / n, with n == 0 left to the caller.
inline double win_rate(std::int64_t wins, std::int64_t ties, std::int64_t comparisons) {
  return (static_cast<double>(wins) + static_cast<double>(ties) / 2.0) / static_cast<double>(comparisons);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0.0 || nb == 0.0) ? 0.0 : dot / std::sqrt(na * nb);
}

}  // namespace classrag::oracle
