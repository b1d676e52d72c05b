#include "classrag/graph/communities.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"

namespace classrag::graph {

WeightedGraph::WeightedGraph(std::size_t nodes) : adjacency_(nodes), loops_(nodes, 0.0) {}

WeightedGraph WeightedGraph::from(const KnowledgeGraph& g) {
  WeightedGraph w(g.nodes.size());
  for (const auto& e : g.edges) {
    w.add_edge(*g.find(e.source), *g.find(e.target), e.weight);
  }
  return w;
}

void WeightedGraph::add_edge(std::size_t a, std::size_t b, double weight) {
  if (a >= size() || b >= size()) throw InvalidArgument("edge endpoint out of range");
  if (weight <= 0.0) return;
  if (a == b) {
    loops_[a] += weight;
  } else {
    adjacency_[a][b] += weight;
    adjacency_[b][a] += weight;
  }
  total_ += weight;
}

double WeightedGraph::degree(std::size_t node) const {
  double d = 2.0 * loops_[node];
  for (const auto& [_, w] : adjacency_[node]) d += w;
  return d;
}

double modularity(const WeightedGraph& g, const std::vector<std::size_t>& membership) {
  const double m = g.total_weight();
  if (m <= 0.0) return 0.0;
  std::map<std::size_t, double> internal;
  std::map<std::size_t, double> total;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = membership.at(i);
    total[c] += g.degree(i);
    internal[c] += g.self_loop(i);
    for (const auto& [j, w] : g.neighbors(i)) {
      if (j > i && membership.at(j) == c) internal[c] += w;
    }
  }
  double q = 0.0;
  for (const auto& [c, tot] : total) {
    q += internal[c] / m - (tot / (2.0 * m)) * (tot / (2.0 * m));
  }
  return q;
}

namespace {

// Seeded Fisher-Yates. std::shuffle is not specified across standard
// libraries, so the permutation is spelled out.
std::vector<std::size_t> visiting_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Local moving on `g` until no node moves. Returns community per node, each
// labelled by its smallest member.
std::vector<std::size_t> local_moving(const WeightedGraph& g, std::mt19937_64& rng) {
  const std::size_t n = g.size();
  std::vector<std::size_t> community(n);
  std::iota(community.begin(), community.end(), 0);
  const double m2 = 2.0 * g.total_weight();
  if (m2 <= 0.0) return community;

  std::vector<double> degree(n);
  std::vector<double> tot(n);
  for (std::size_t i = 0; i < n; ++i) tot[i] = degree[i] = g.degree(i);

  const auto order = visiting_order(n, rng);
  for (bool moved = true; moved;) {
    moved = false;
    for (const auto i : order) {
      const auto own = community[i];
      std::map<std::size_t, double> links;  // community -> weight from i
      links[own] += 0.0;
      for (const auto& [j, w] : g.neighbors(i)) links[community[j]] += w;

      tot[own] -= degree[i];
      // Gain of inserting i into c, up to a constant shared by all c.
      const auto gain = [&](std::size_t c) { return links[c] - tot[c] * degree[i] / m2; };
      auto best = own;
      double best_gain = gain(own);
      // Staying wins ties; otherwise the first (smallest) id with the best gain.
      for (const auto& [c, _] : links) {
        const double candidate = gain(c);
        if (candidate > best_gain + 1e-12) {
          best = c;
          best_gain = candidate;
        }
      }
      tot[best] += degree[i];
      if (best != own) {
        community[i] = best;
        moved = true;
      }
    }
  }

  std::map<std::size_t, std::size_t> smallest;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = smallest.emplace(community[i], i);
    if (!inserted) it->second = std::min(it->second, i);
  }
  for (auto& c : community) c = smallest[c];
  return community;
}

}  // namespace

std::vector<std::size_t> CommunityHierarchy::communities(std::size_t level) const {
  std::set<std::size_t> ids(levels.at(level).begin(), levels.at(level).end());
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> CommunityHierarchy::members(std::size_t level, std::size_t community) const {
  std::vector<std::size_t> out;
  const auto& partition = levels.at(level);
  for (std::size_t i = 0; i < partition.size(); ++i) {
    if (partition[i] == community) out.push_back(i);
  }
  return out;
}

nlohmann::json CommunityHierarchy::to_json() const {
  nlohmann::json jp = nlohmann::json::array();
  for (const auto& p : parents) {
    nlohmann::json links = nlohmann::json::array();
    for (const auto& [child, parent] : p) links.push_back({child, parent});
    jp.push_back(links);
  }
  return {{"levels", levels}, {"parents", jp}};
}

CommunityHierarchy CommunityHierarchy::from_json(const nlohmann::json& j) {
  CommunityHierarchy h;
  h.levels = j.at("levels").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& links : j.at("parents")) {
    std::map<std::size_t, std::size_t> p;
    for (const auto& link : links) p[link.at(0).get<std::size_t>()] = link.at(1).get<std::size_t>();
    h.parents.push_back(std::move(p));
  }
  if (!h.levels.empty() && h.parents.size() + 1 != h.levels.size()) {
    throw FormatError("hierarchy parents do not match levels");
  }
  return h;
}

CommunityHierarchy detect_communities(const WeightedGraph& g, const CommunityOptions& options) {
  if (g.size() == 0) throw InvalidArgument("cannot detect communities in an empty graph");
  std::mt19937_64 rng(options.seed);
  CommunityHierarchy h;

  h.levels.push_back(local_moving(g, rng));
  double q = modularity(g, h.levels.back());

  while (h.levels.size() < std::max<std::size_t>(1, options.max_levels)) {
    const auto& below = h.levels.back();
    const auto ids = h.communities(h.levels.size() - 1);
    if (ids.size() <= 1) break;

    std::map<std::size_t, std::size_t> dense;  // community id -> quotient node
    for (const auto id : ids) dense.emplace(id, dense.size());
    WeightedGraph quotient(ids.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto ci = dense[below[i]];
      if (g.self_loop(i) > 0.0) quotient.add_edge(ci, ci, g.self_loop(i));
      for (const auto& [j, w] : g.neighbors(i)) {
        if (j > i) quotient.add_edge(ci, dense[below[j]], w);
      }
    }

    const auto merged = local_moving(quotient, rng);  // labels are quotient indices
    std::vector<std::size_t> level(g.size());
    std::map<std::size_t, std::size_t> parent;
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Smallest quotient index maps to the smallest id since ids are sorted.
      level[i] = ids[merged[dense[below[i]]]];
    }
    for (const auto id : ids) parent[id] = ids[merged[dense[id]]];

    const double next_q = modularity(g, level);
    if (next_q - q < options.min_gain) break;
    q = next_q;
    h.parents.push_back(std::move(parent));
    h.levels.push_back(std::move(level));
  }
  return h;
}

}  // namespace classrag::graph
