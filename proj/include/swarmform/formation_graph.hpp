#pragma once

#include <algorithm>
#include <queue>
#include <utility>
#include <vector>

#include "swarmform/core.hpp"

namespace swarmform {

/// Directed interaction graph over agents 0..n-1 together with a
/// leader/follower role partition. An edge (tail, head) means the head agent
/// listens to the tail agent, so storage is by in-neighbor list: that is the
/// access pattern of both the stress equilibrium and the consensus update.
/// Instances are immutable once built.
class FormationGraph {
 public:
  FormationGraph() = default;

  /// Validates and builds. Throws TooFewAgentsError (n < d+1),
  /// DimensionMismatchError (d not 2 or 3), SelfLoopError, DuplicateEdgeError,
  /// IndexOutOfRangeError, InvalidLeaderSetError (duplicate leader id).
  static FormationGraph build(int n, int d, std::vector<std::pair<int, int>> edges,
                              std::vector<int> leaders) {
    if (d != 2 && d != 3) {
      throw DimensionMismatchError("ambient dimension must be 2 or 3, got " + std::to_string(d));
    }
    if (n < d + 1) {
      throw TooFewAgentsError("need at least d+1 = " + std::to_string(d + 1) +
                              " agents, got " + std::to_string(n));
    }
    for (const auto& [tail, head] : edges) {
      if (tail < 0 || tail >= n || head < 0 || head >= n) {
        throw IndexOutOfRangeError("edge (" + std::to_string(tail) + ", " +
                                   std::to_string(head) + ") out of range for n = " +
                                   std::to_string(n));
      }
      if (tail == head) {
        throw SelfLoopError("self loop at agent " + std::to_string(tail));
      }
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
      auto it = std::adjacent_find(edges.begin(), edges.end());
      throw DuplicateEdgeError("duplicate edge (" + std::to_string(it->first) + ", " +
                               std::to_string(it->second) + ")");
    }

    std::vector<bool> is_leader(n, false);
    for (int id : leaders) {
      if (id < 0 || id >= n) {
        throw IndexOutOfRangeError("leader id " + std::to_string(id) + " out of range");
      }
      if (is_leader[id]) {
        throw InvalidLeaderSetError("duplicate leader id " + std::to_string(id));
      }
      is_leader[id] = true;
    }

    FormationGraph g;
    g.n_ = n;
    g.d_ = d;
    g.edges_ = std::move(edges);
    g.leaders_ = std::move(leaders);
    g.is_leader_ = std::move(is_leader);
    g.followers_.reserve(n - g.leaders_.size());
    for (int i = 0; i < n; ++i) {
      if (!g.is_leader_[i]) g.followers_.push_back(i);
    }
    g.in_neighbors_.assign(n, {});
    for (const auto& [tail, head] : g.edges_) {
      g.in_neighbors_[head].push_back(tail);
    }
    return g;
  }

  int agent_count() const { return n_; }
  int dimension() const { return d_; }
  int leader_count() const { return static_cast<int>(leaders_.size()); }
  int follower_count() const { return static_cast<int>(followers_.size()); }

  /// Leader ids in their assigned order.
  const std::vector<int>& leaders() const { return leaders_; }
  /// Follower ids in ascending order (complement of the leader set).
  const std::vector<int>& followers() const { return followers_; }
  bool is_leader(int i) const {
    check_index(i);
    return is_leader_[i];
  }

  /// All edges as (tail, head), sorted lexicographically.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  /// Ids j with an edge (j, i), ascending.
  const std::vector<int>& in_neighbors(int i) const {
    check_index(i);
    return in_neighbors_[i];
  }

  bool has_edge(int tail, int head) const {
    check_index(tail);
    check_index(head);
    return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(tail, head));
  }

 private:
  void check_index(int i) const {
    if (i < 0 || i >= n_) {
      throw IndexOutOfRangeError("agent id " + std::to_string(i) + " out of range for n = " +
                                 std::to_string(n_));
    }
  }

  int n_ = 0;
  int d_ = 2;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> leaders_;
  std::vector<int> followers_;
  std::vector<bool> is_leader_;
  std::vector<std::vector<int>> in_neighbors_;
};

inline std::vector<std::pair<int, int>> complete_digraph_edges(int n) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) edges.emplace_back(i, j);
    }
  }
  return edges;
}

struct RootedWitness {
  bool rooted = false;
  std::vector<int> roots;  // a witness root set of size d+1 when rooted
};

namespace detail {

/// Maximum number of internally node-disjoint directed paths from distinct
/// members of `roots` to `target`, computed as max flow on the node-split
/// unit-capacity network (super-source -> each root with capacity 1).
inline int disjoint_path_count(const FormationGraph& g, const std::vector<int>& roots,
                               int target) {
  const int n = g.agent_count();
  const int nodes = 2 * n + 1;  // v_in = 2v, v_out = 2v+1, source = 2n
  const int source = 2 * n;
  const int sink = 2 * target;  // paths terminate entering the target

  std::vector<std::vector<int>> cap(nodes, std::vector<int>(nodes, 0));
  for (int v = 0; v < n; ++v) cap[2 * v][2 * v + 1] = 1;
  for (const auto& [tail, head] : g.edges()) cap[2 * tail + 1][2 * head] = 1;
  for (int r : roots) cap[source][2 * r] = 1;

  int flow = 0;
  while (true) {
    std::vector<int> parent(nodes, -1);
    parent[source] = source;
    std::queue<int> q;
    q.push(source);
    while (!q.empty() && parent[sink] == -1) {
      int u = q.front();
      q.pop();
      for (int v = 0; v < nodes; ++v) {
        if (parent[v] == -1 && cap[u][v] > 0) {
          parent[v] = u;
          q.push(v);
        }
      }
    }
    if (parent[sink] == -1) break;
    for (int v = sink; v != source; v = parent[v]) {
      cap[parent[v]][v] -= 1;
      cap[v][parent[v]] += 1;
    }
    ++flow;
  }
  return flow;
}

}  // namespace detail

/// Checks whether some root set R of size d+1 gives every non-root node d+1
/// internally node-disjoint directed paths from d+1 distinct roots. Witness
/// search is exhaustive: subsets of the leader set first, then all subsets of
/// size d+1 in lexicographic order. Intended for desk scale (n <= 12 or so);
/// the flow itself is polynomial but the subset search is combinatorial.
inline RootedWitness is_d_plus_1_rooted(const FormationGraph& g) {
  const int n = g.agent_count();
  const int k = g.dimension() + 1;

  auto roots_work = [&](const std::vector<int>& roots) {
    std::vector<bool> is_root(n, false);
    for (int r : roots) is_root[r] = true;
    for (int v = 0; v < n; ++v) {
      if (is_root[v]) continue;
      if (detail::disjoint_path_count(g, roots, v) < k) return false;
    }
    return true;
  };

  RootedWitness result;
  auto try_set = [&](const std::vector<int>& combo) {
    if (roots_work(combo)) {
      result.rooted = true;
      result.roots = combo;
      return true;
    }
    return false;
  };

  if (g.leader_count() >= k) {
    std::vector<int> leaders = g.leaders();
    std::sort(leaders.begin(), leaders.end());
    if (detail::for_each_combination(leaders, k, try_set)) return result;
  }
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  detail::for_each_combination(all, k, try_set);
  return result;
}

}  // namespace swarmform
