#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "swarmform/affine_geometry.hpp"
#include "swarmform/core.hpp"
#include "swarmform/formation_graph.hpp"
#include "swarmform/stress_solver.hpp"

namespace swarmform {

/// Snapshot of the formation as seen by the reorganizer. Positions and the
/// nominal pattern are indexed by agent id; dead agents keep their last
/// position but are excluded from every computation.
struct FormationView {
  Configuration positions;
  Configuration nominal;
  std::vector<bool> alive;
  int leader_count = 0;
};

struct EnvironmentInfo {
  Vec goal_direction;
  Vec next_waypoint;
  double commanded_speed_mps = 0.0;
};

/// Scores a candidate role assignment; lower is better. The assignment is in
/// agent-id terms over the alive roster.
using LeaderCost =
    std::function<double(const RoleAssignment&, const FormationView&, const EnvironmentInfo&)>;

/// Negative mean cosine between each candidate leader's offset from the alive
/// centroid and the goal direction: prefers leaders on the goal-facing side.
inline double heading_alignment_cost(const RoleAssignment& a, const FormationView& view,
                                     const EnvironmentInfo& env) {
  const int d = view.positions.dimension();
  if (env.goal_direction.size() != d || env.goal_direction.norm() < 1e-12) return 0.0;
  Vec dir = env.goal_direction.normalized();
  Vec centroid = Vec::Zero(d);
  int alive_count = 0;
  for (int i = 0; i < view.positions.count(); ++i) {
    if (view.alive[i]) {
      centroid += view.positions.point(i);
      ++alive_count;
    }
  }
  centroid /= alive_count;
  double sum = 0.0;
  for (int id : a.leaders) {
    Vec off = view.positions.point(id) - centroid;
    double norm = off.norm();
    if (norm > 1e-12) sum += off.dot(dir) / norm;
  }
  return -sum / static_cast<double>(a.leaders.size());
}

/// Spread (max minus min) of predicted remaining travel across alive agents:
/// leaders head straight for the waypoint, followers additionally have to
/// close their current deviation from the pattern slot.
inline double path_balance_cost(const RoleAssignment& a, const FormationView& view,
                                const EnvironmentInfo& env) {
  const int d = view.positions.dimension();
  if (env.next_waypoint.size() != d) return 0.0;
  std::set<int> leader_set(a.leaders.begin(), a.leaders.end());
  std::vector<int> slot_of(view.positions.count(), -1);
  for (size_t slot = 0; slot < a.permutation.size(); ++slot) {
    slot_of[a.permutation[slot]] = static_cast<int>(slot);
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<int> alive_ids;
  for (int i = 0; i < view.positions.count(); ++i) {
    if (view.alive[i]) alive_ids.push_back(i);
  }
  for (int id : alive_ids) {
    double remaining = (env.next_waypoint - view.positions.point(id)).norm();
    if (!leader_set.count(id) && slot_of[id] >= 0) {
      // Deviation from where the assigned pattern slot currently sits.
      Vec centroid = Vec::Zero(d);
      for (int j : alive_ids) centroid += view.positions.point(j);
      centroid /= static_cast<double>(alive_ids.size());
      Vec slot_pos = centroid + (view.nominal.point(id) - view.nominal.centroid());
      remaining += (slot_pos - view.positions.point(id)).norm();
    }
    lo = std::min(lo, remaining);
    hi = std::max(hi, remaining);
  }
  return hi - lo;
}

inline const std::map<std::string, LeaderCost>& leader_cost_registry() {
  static const std::map<std::string, LeaderCost> registry = {
      {"heading_align", heading_alignment_cost},
      {"path_balance", path_balance_cost},
  };
  return registry;
}

/// Edge set of the power-centric interaction topology over m = |leaders| +
/// |followers| agents: a complete digraph among leaders plus an in-edge to
/// every follower from every leader. Ids must partition [0, m).
inline std::vector<std::pair<int, int>> power_centric_topology(const std::vector<int>& leaders,
                                                               const std::vector<int>& followers,
                                                               int d) {
  if (static_cast<int>(leaders.size()) < d + 1) {
    throw TooFewLeadersError("need at least " + std::to_string(d + 1) + " leaders, have " +
                             std::to_string(leaders.size()));
  }
  const int m = static_cast<int>(leaders.size() + followers.size());
  std::vector<bool> seen(m, false);
  for (int id : leaders) {
    if (id < 0 || id >= m || seen[id]) throw InvalidLeaderSetError("leader ids must partition the roster");
    seen[id] = true;
  }
  for (int id : followers) {
    if (id < 0 || id >= m || seen[id]) throw InvalidLeaderSetError("follower ids must partition the roster");
    seen[id] = true;
  }
  std::vector<std::pair<int, int>> edges;
  for (int a : leaders) {
    for (int b : leaders) {
      if (a != b) edges.push_back({a, b});
    }
  }
  for (int f : followers) {
    for (int a : leaders) edges.push_back({a, f});
  }
  return edges;
}

struct PerFollowerStress {
  std::vector<double> weights;  // one per anchor, ordered as the anchors argument
  double raw_weight_sum = 0.0;  // pre-normalization sum; positive iff anchors span
};

/// Minimum-norm anchor weights reproducing the follower as an affine
/// combination. Solves for w with E w = 0 over centered anchor offsets via
/// the nullspace of E = [r_1 - r_f, ..., r_k - r_f]; the raw weight vector is
/// the nullspace projection of the all-ones vector, and its coordinate sum
/// (equal to its squared norm) is positive exactly when the anchors affinely
/// span around the follower. The returned weights are normalized to sum 1.
inline PerFollowerStress per_follower_stress(const Vec& follower_point,
                                             const Configuration& anchors) {
  const int d = static_cast<int>(follower_point.size());
  if (anchors.dimension() != d) {
    throw DimensionMismatchError("anchor dimension does not match follower point");
  }
  const int k = anchors.count();
  if (k < d + 1) {
    throw TooFewLeadersError("need at least " + std::to_string(d + 1) + " anchors");
  }
  Mat e(d, k);
  for (int j = 0; j < k; ++j) e.col(j) = anchors.point(j) - follower_point;
  Eigen::JacobiSVD<Mat> svd(e, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * 1e-12;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  Mat null_basis = svd.matrixV().rightCols(k - rank);
  Vec raw = null_basis * (null_basis.transpose() * Vec::Ones(k));
  PerFollowerStress out;
  out.raw_weight_sum = raw.sum();
  if (out.raw_weight_sum <= Tol::singular_abs) {
    throw DegenerateLeadersError("anchors do not affinely span around the follower");
  }
  Vec w = raw / out.raw_weight_sum;
  out.weights.assign(w.data(), w.data() + k);
  return out;
}

struct BlockDiagonal {
  std::vector<double> row_sums;
  double det_abs = 0.0;
};

/// Follower-block structure of a power-centric stress: with followers
/// anchored only to leaders the block is diagonal with the per-follower
/// weight sums on the diagonal, so its determinant is their product. Feeding
/// normalized stresses gives the identity block.
inline BlockDiagonal block_omega_ff(const std::vector<PerFollowerStress>& followers) {
  BlockDiagonal b;
  b.det_abs = 1.0;
  for (const auto& f : followers) {
    double sum = 0.0;
    for (double w : f.weights) sum += w;
    b.row_sums.push_back(sum);
    b.det_abs *= std::abs(sum);
  }
  return b;
}

/// Everything needed to swap the formation onto a new leader set: the
/// power-centric graph and stress over the alive roster (compacted node ids),
/// the node-to-agent-id roster mapping, the viability witness, and the
/// localizability report for the new follower block.
struct ReorganizationPlan {
  std::vector<int> new_leaders;       // agent ids
  std::vector<int> roster;            // node id -> agent id
  FormationGraph graph;               // over compacted node ids
  StressAssignment stress;
  RoleAssignment assignment;          // agent-id terms
  LocalizabilityReport report;
  double switch_latency_s = 0.0;
  // winning cost when the plan came out of select_leaders; NaN otherwise
  double cost_value = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<int> alive_roster(const FormationView& view) {
  std::vector<int> roster;
  for (int i = 0; i < view.positions.count(); ++i) {
    if (view.alive[i]) roster.push_back(i);
  }
  return roster;
}

}  // namespace detail

/// Builds the switch onto `new_leaders` (agent ids) or throws if the switch
/// is invalid: dead or excluded leaders, leaders that fail to span, or no
/// viable role assignment on the alive sub-pattern.
inline ReorganizationPlan reorganize(const FormationView& view, std::vector<int> new_leaders,
                                     const std::vector<int>& excluded = {}) {
  auto t0 = std::chrono::steady_clock::now();
  const int d = view.positions.dimension();
  std::sort(new_leaders.begin(), new_leaders.end());
  if (static_cast<int>(new_leaders.size()) < d + 1) {
    throw TooFewLeadersError("need at least " + std::to_string(d + 1) + " leaders");
  }
  std::set<int> excluded_set(excluded.begin(), excluded.end());
  for (int id : new_leaders) {
    if (id < 0 || id >= view.positions.count()) {
      throw IndexOutOfRangeError("leader id " + std::to_string(id) + " out of range");
    }
    if (!view.alive[id]) {
      throw InvalidLeaderSetError("leader " + std::to_string(id) + " is not alive");
    }
    if (excluded_set.count(id)) {
      throw InvalidLeaderSetError("leader " + std::to_string(id) + " is excluded");
    }
  }
  if (std::adjacent_find(new_leaders.begin(), new_leaders.end()) != new_leaders.end()) {
    throw InvalidLeaderSetError("duplicate leader id");
  }

  std::vector<int> roster = detail::alive_roster(view);
  const int m = static_cast<int>(roster.size());
  std::vector<int> node_of(view.positions.count(), -1);
  for (int node = 0; node < m; ++node) node_of[roster[node]] = node;

  Configuration cur = view.positions.select(roster);
  Configuration nom = view.nominal.select(roster);

  std::vector<int> leader_nodes;
  for (int id : new_leaders) leader_nodes.push_back(node_of[id]);
  std::sort(leader_nodes.begin(), leader_nodes.end());

  if (!affinely_spans(cur.select(leader_nodes))) {
    throw LeadersDoNotSpanError("current leader positions do not affinely span R^d");
  }

  auto witnesses = detail::viable_assignments_for_leader_set(nom, leader_nodes,
                                                             Tol::membership_m,
                                                             /*stop_after_first=*/true);
  if (witnesses.empty()) {
    throw NotViableAssignmentError("leader set admits no viable role assignment");
  }

  ReorganizationPlan plan;
  plan.new_leaders = new_leaders;
  plan.roster = roster;

  std::vector<int> follower_nodes;
  for (int node = 0; node < m; ++node) {
    if (!std::binary_search(leader_nodes.begin(), leader_nodes.end(), node)) {
      follower_nodes.push_back(node);
    }
  }
  auto edges = power_centric_topology(leader_nodes, follower_nodes, d);
  plan.graph = FormationGraph::build(m, d, edges, leader_nodes);

  Configuration anchors = nom.select(leader_nodes);
  EdgeWeights weights;
  for (int a : leader_nodes) {
    for (int b : leader_nodes) {
      if (a != b) weights[{a, b}] = 0.0;
    }
  }
  for (int f : follower_nodes) {
    PerFollowerStress pf = per_follower_stress(nom.point(f), anchors);
    for (size_t j = 0; j < leader_nodes.size(); ++j) {
      weights[{leader_nodes[j], f}] = pf.weights[j];
    }
  }
  plan.stress = make_stress_assignment(plan.graph, std::move(weights));
  plan.report = is_affinely_localizable(plan.stress);

  const RoleAssignment& w = witnesses.front();
  plan.assignment.leaders.reserve(w.leaders.size());
  for (int node : w.leaders) plan.assignment.leaders.push_back(roster[node]);
  plan.assignment.permutation.reserve(w.permutation.size());
  for (int node : w.permutation) plan.assignment.permutation.push_back(roster[node]);

  plan.switch_latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return plan;
}

/// Enumerates alive, non-excluded leader sets of the requested size, keeps
/// the ones admitting a viable assignment, and returns the plan minimizing
/// `cost`; ties break toward the lexicographically smallest leader list.
inline ReorganizationPlan select_leaders(const FormationView& view, int leader_count,
                                         const LeaderCost& cost, const EnvironmentInfo& env,
                                         const std::vector<int>& excluded = {}) {
  auto t0 = std::chrono::steady_clock::now();
  const int d = view.positions.dimension();
  if (leader_count < d + 1) {
    throw TooFewLeadersError("need at least " + std::to_string(d + 1) + " leaders");
  }
  std::set<int> excluded_set(excluded.begin(), excluded.end());
  std::vector<int> eligible;
  for (int i = 0; i < view.positions.count(); ++i) {
    if (view.alive[i] && !excluded_set.count(i)) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < leader_count) {
    throw NoViableAssignmentError("not enough eligible agents for the leader count");
  }

  std::optional<ReorganizationPlan> best;
  double best_cost = std::numeric_limits<double>::infinity();
  detail::for_each_combination(eligible, leader_count, [&](const std::vector<int>& cand) {
    ReorganizationPlan plan;
    try {
      plan = reorganize(view, cand, excluded);
    } catch (const Error&) {
      return false;
    }
    double c = cost(plan.assignment, view, env);
    if (std::isnan(c)) {
      throw ValidationError("leader cost returned NaN");
    }
    bool better = c < best_cost - 1e-12;
    if (!better && std::abs(c - best_cost) <= 1e-12 && best) {
      if (plan.new_leaders < best->new_leaders ||
          (plan.new_leaders == best->new_leaders &&
           plan.assignment.permutation < best->assignment.permutation)) {
        better = true;
      }
    }
    if (better) {
      best_cost = c;
      best = std::move(plan);
    }
    return false;
  });
  if (!best) {
    throw NoViableAssignmentError("no leader set of the requested size is viable");
  }
  best->cost_value = best_cost;
  best->switch_latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return *best;
}

}  // namespace swarmform
