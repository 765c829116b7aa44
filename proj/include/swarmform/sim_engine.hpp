#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "swarmform/affine_geometry.hpp"
#include "swarmform/core.hpp"
#include "swarmform/formation_graph.hpp"
#include "swarmform/reorganizer.hpp"
#include "swarmform/stress_solver.hpp"
#include "swarmform/version.hpp"

namespace swarmform {

enum class Role { Leader, Follower };

struct AgentState {
  int id = -1;
  Vec position;  // m
  Vec velocity;  // m/s
  Role role = Role::Follower;
  bool alive = true;
};

/// Full simulation state. The graph, stress, and roster describe the current
/// interaction topology over compacted node ids; roster maps node id to agent
/// id (identity until a reorganization shrinks the roster to alive agents).
struct FormationState {
  std::vector<AgentState> agents;  // by agent id
  FormationGraph graph;
  std::vector<int> roster;
  StressAssignment stress;
  Configuration nominal;  // by agent id
  long tick = 0;
  double time_s = 0.0;
};

struct ControlGains {
  double k_p_per_s = 1.0;     // follower position-error gain
  double k_l_per_s = 5.0;     // leader reference-lag gain
  double speed_cap_mps = 2.0; // commanded-speed cap, all agents
};

struct SimParams {
  double dt_s = 0.01;
  ControlGains gains;
};

struct Waypoint {
  Vec position_m;
  double speed_mps = 0.0;
};

enum class EventKind { Transform, Reorganize, Fail };

struct ScenarioEvent {
  double time_s = 0.0;
  EventKind kind = EventKind::Transform;
  Mat a;                         // transform: shape matrix (d x d, invertible)
  Vec b;                         // transform: offset (m)
  std::vector<int> new_leaders;  // reorganize: explicit leader set; empty = auto
  std::string cost;              // reorganize: registered cost name for auto
  int agent = -1;                // fail: agent id
};

struct Scenario {
  std::string name;
  int d = 2;
  double dt_s = 0.01;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  Configuration nominal;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> leaders;
  std::string stress_policy = "auto";  // auto | equilibrium | power_centric
  ControlGains control;
  std::string failure_cost = "heading_align";
  std::vector<Waypoint> waypoints;
  std::vector<ScenarioEvent> events;
};

namespace detail {

/// Tick at which an event scheduled for time_s is applied (before dynamics);
/// the slack absorbs representation error in time_s / dt_s.
inline long event_tick(double time_s, double dt_s) {
  return static_cast<long>(std::ceil(time_s / dt_s - 1e-9));
}

inline bool edge_sets_equal(std::vector<std::pair<int, int>> a,
                            std::vector<std::pair<int, int>> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

}  // namespace detail

/// Structural and semantic checks on a scenario; returns every problem found
/// (empty means valid). I/O-level schema checks live with the parser.
inline std::vector<std::string> validate_scenario(const Scenario& sc) {
  std::vector<std::string> errors;
  auto err = [&](const std::string& path, const std::string& what) {
    errors.push_back(path + ": " + what);
  };

  if (sc.name.empty()) err("name", "must be nonempty");
  if (sc.d != 2 && sc.d != 3) err("d", "must be 2 or 3");
  if (!(sc.dt_s > 0.0) || !std::isfinite(sc.dt_s)) err("dt_s", "must be positive and finite");
  if (sc.duration_s < 0.0 || !std::isfinite(sc.duration_s)) {
    err("duration_s", "must be nonnegative and finite");
  }

  const int n = sc.nominal.count();
  bool nominal_ok = false;
  if (n == 0) {
    err("nominal_m", "must have at least one point");
  } else if (sc.nominal.dimension() != sc.d) {
    err("nominal_m", "point dimension does not match d");
  } else if (n < sc.d + 1) {
    err("nominal_m", "need at least d+1 points");
  } else if (!affinely_spans(sc.nominal)) {
    err("nominal_m", "nominal configuration does not affinely span R^d");
  } else {
    nominal_ok = true;
  }

  bool graph_ok = false;
  if (nominal_ok) {
    try {
      FormationGraph::build(n, sc.d, sc.edges, sc.leaders);
      graph_ok = true;
    } catch (const Error& e) {
      err("graph", e.what());
    }
  }
  if (static_cast<int>(sc.leaders.size()) < sc.d + 1) {
    err("graph.leaders", "need at least d+1 leaders");
  } else if (graph_ok && !affinely_spans(sc.nominal.select(sc.leaders))) {
    err("graph.leaders", "nominal leader positions do not affinely span R^d");
  }

  if (sc.stress_policy != "auto" && sc.stress_policy != "equilibrium" &&
      sc.stress_policy != "power_centric") {
    err("stress", "must be one of auto | equilibrium | power_centric");
  } else if (sc.stress_policy == "power_centric" && graph_ok) {
    std::vector<int> followers;
    std::set<int> leader_set(sc.leaders.begin(), sc.leaders.end());
    for (int i = 0; i < n; ++i) {
      if (!leader_set.count(i)) followers.push_back(i);
    }
    try {
      auto expected = power_centric_topology(sc.leaders, followers, sc.d);
      if (!detail::edge_sets_equal(sc.edges, expected)) {
        err("graph.edges", "edge set is not the power-centric topology for the leader set");
      }
    } catch (const Error& e) {
      err("graph.edges", e.what());
    }
  }

  if (!(sc.control.k_p_per_s > 0.0)) err("control.k_p_per_s", "must be positive");
  if (!(sc.control.k_l_per_s > 0.0)) err("control.k_l_per_s", "must be positive");
  if (!(sc.control.speed_cap_mps > 0.0)) err("control.speed_cap_mps", "must be positive");
  if (!leader_cost_registry().count(sc.failure_cost)) {
    err("failure_cost", "unknown cost '" + sc.failure_cost + "'");
  }

  for (size_t i = 0; i < sc.waypoints.size(); ++i) {
    const std::string path = "waypoints[" + std::to_string(i) + "]";
    const auto& wp = sc.waypoints[i];
    if (wp.position_m.size() != sc.d || !wp.position_m.allFinite()) {
      err(path + ".position_m", "must be a finite d-vector");
    }
    if (!(wp.speed_mps > 0.0) || !std::isfinite(wp.speed_mps)) {
      err(path + ".speed_mps", "must be positive and finite");
    }
  }

  std::set<int> failed_agents;
  double prev_time = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < sc.events.size(); ++i) {
    const std::string path = "events[" + std::to_string(i) + "]";
    const auto& ev = sc.events[i];
    if (!(ev.time_s >= 0.0) || !std::isfinite(ev.time_s)) {
      err(path + ".time_s", "must be nonnegative and finite");
    } else {
      if (ev.time_s <= prev_time) err(path + ".time_s", "event times must be strictly increasing");
      if (ev.time_s > sc.duration_s) err(path + ".time_s", "event is after the scenario ends");
      prev_time = ev.time_s;
    }
    switch (ev.kind) {
      case EventKind::Transform:
        if (ev.a.rows() != sc.d || ev.a.cols() != sc.d || !ev.a.allFinite()) {
          err(path + ".matrix", "must be a finite d x d matrix");
        } else if (std::abs(ev.a.determinant()) <= Tol::det_min) {
          err(path + ".matrix", "transform is not invertible");
        }
        if (ev.b.size() != sc.d || !ev.b.allFinite()) {
          err(path + ".offset_m", "must be a finite d-vector");
        }
        break;
      case EventKind::Reorganize:
        if (ev.new_leaders.empty() == ev.cost.empty()) {
          err(path, "must give exactly one of new_leaders or cost");
        }
        if (!ev.new_leaders.empty()) {
          if (static_cast<int>(ev.new_leaders.size()) < sc.d + 1) {
            err(path + ".new_leaders", "need at least d+1 leaders");
          }
          std::set<int> seen;
          for (int id : ev.new_leaders) {
            if (id < 0 || id >= n) err(path + ".new_leaders", "agent id out of range");
            if (!seen.insert(id).second) err(path + ".new_leaders", "duplicate agent id");
          }
        }
        if (!ev.cost.empty() && !leader_cost_registry().count(ev.cost)) {
          err(path + ".cost", "unknown cost '" + ev.cost + "'");
        }
        break;
      case EventKind::Fail:
        if (ev.agent < 0 || ev.agent >= n) {
          err(path + ".agent", "agent id out of range");
        } else if (!failed_agents.insert(ev.agent).second) {
          err(path + ".agent", "agent fails twice");
        }
        break;
    }
  }
  return errors;
}

/// Reference trajectory for the formation centroid: piecewise-linear legs
/// through the waypoints at their commanded speeds, holding position after
/// the last waypoint, plus the step-change timeline of shape transforms.
/// Transform switch times are quantized to the tick grid so that schedule
/// queries and event application agree exactly.
class ReferenceSchedule {
 public:
  ReferenceSchedule() = default;

  ReferenceSchedule(Vec start, const std::vector<Waypoint>& waypoints,
                    std::vector<std::pair<double, AffineTransform>> transforms, double dt_s)
      : start_(std::move(start)), end_(start_) {
    Vec cur = start_;
    double t = 0.0;
    for (size_t i = 0; i < waypoints.size(); ++i) {
      const auto& wp = waypoints[i];
      if (!(wp.speed_mps > 0.0)) throw ValidationError("waypoint speed must be positive");
      double dist = (wp.position_m - cur).norm();
      if (dist > 0.0) {
        double dur = dist / wp.speed_mps;
        legs_.push_back({t, t + dur, cur, wp.position_m, wp.speed_mps, static_cast<int>(i)});
        t += dur;
      }
      cur = wp.position_m;
    }
    end_ = cur;
    last_waypoint_ = static_cast<int>(waypoints.size()) - 1;
    for (auto& [time, tr] : transforms) {
      switches_.push_back({detail::event_tick(time, dt_s) * dt_s, std::move(tr)});
    }
    std::sort(switches_.begin(), switches_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  int dimension() const { return static_cast<int>(start_.size()); }
  double path_end_time_s() const { return legs_.empty() ? 0.0 : legs_.back().t1; }

  Vec centroid_at(double t) const {
    for (const auto& leg : legs_) {
      if (t < leg.t0) return leg.from;
      if (t < leg.t1) return leg.from + (leg.to - leg.from) * ((t - leg.t0) / (leg.t1 - leg.t0));
    }
    return end_;
  }

  Vec velocity_at(double t) const {
    const Leg* leg = active_leg(t);
    if (leg == nullptr) return Vec::Zero(dimension());
    return (leg->to - leg->from).normalized() * leg->speed;
  }

  Vec goal_direction_at(double t) const {
    const Leg* leg = active_leg(t);
    if (leg == nullptr) return Vec::Zero(dimension());
    return (leg->to - leg->from).normalized();
  }

  double commanded_speed_at(double t) const {
    const Leg* leg = active_leg(t);
    return leg == nullptr ? 0.0 : leg->speed;
  }

  /// Index of the waypoint currently being approached; the final waypoint
  /// once the path is exhausted, -1 when there are no waypoints.
  int active_waypoint_at(double t) const {
    const Leg* leg = active_leg(t);
    return leg == nullptr ? last_waypoint_ : leg->waypoint;
  }

  Vec next_waypoint_at(double t) const {
    const Leg* leg = active_leg(t);
    return leg == nullptr ? end_ : leg->to;
  }

  AffineTransform transform_at(double t) const {
    AffineTransform active = AffineTransform::identity(dimension());
    for (const auto& [time, tr] : switches_) {
      if (time <= t + 1e-12) {
        active = tr;
      } else {
        break;
      }
    }
    return active;
  }

 private:
  struct Leg {
    double t0, t1;
    Vec from, to;
    double speed;
    int waypoint;
  };

  const Leg* active_leg(double t) const {
    for (const auto& leg : legs_) {
      if (t < leg.t1 && t >= leg.t0) return &leg;
      if (t < leg.t0) return nullptr;  // between legs only if a leg was skipped; hold
    }
    return nullptr;
  }

  Vec start_;
  Vec end_;
  std::vector<Leg> legs_;
  std::vector<std::pair<double, AffineTransform>> switches_;
  int last_waypoint_ = -1;
};

/// Instantaneous target for every agent: the active affine image of the
/// nominal pattern, centered on the scheduled centroid,
/// x̄_a(t) = c(t) + A(t) (r_a − r̄) + b(t).
inline Configuration reference_targets(const Configuration& nominal,
                                       const ReferenceSchedule& schedule, double t) {
  AffineTransform tr = schedule.transform_at(t);
  Vec c = schedule.centroid_at(t);
  Vec rbar = nominal.centroid();
  Mat out(nominal.dimension(), nominal.count());
  for (int a = 0; a < nominal.count(); ++a) {
    out.col(a) = c + tr.A * (nominal.point(a) - rbar) + tr.b;
  }
  return Configuration(std::move(out));
}

struct LeaderReference {
  Configuration targets;  // one column per requested leader, in the given order
  Vec velocity;           // common target velocity (the centroid path derivative)
};

/// Targets and target velocity for the listed leaders at time t. The path is
/// held (zero velocity) once the waypoint list is exhausted.
inline LeaderReference leader_reference(const Configuration& nominal,
                                        const std::vector<int>& leaders,
                                        const ReferenceSchedule& schedule, double t) {
  Configuration all = reference_targets(nominal, schedule, t);
  LeaderReference ref;
  ref.targets = all.select(leaders);
  ref.velocity = schedule.velocity_at(t);
  return ref;
}

namespace detail {

inline Vec cap_speed(Vec v, double cap) {
  double norm = v.norm();
  if (norm > cap) v *= cap / norm;
  return v;
}

inline int node_of_agent(const FormationState& state, int agent_id) {
  for (size_t node = 0; node < state.roster.size(); ++node) {
    if (state.roster[node] == agent_id) return static_cast<int>(node);
  }
  throw IndexOutOfRangeError("agent " + std::to_string(agent_id) + " is not in the roster");
}

}  // namespace detail

/// One consensus step for an alive follower:
///   ẋ_i = (1/Σω) ( Σ ω ẋ_j − k_p Σ ω (x_i − x_j) )
/// over alive in-neighbors j, using the neighbors' previous-tick velocities;
/// the commanded speed is capped and the position integrated explicitly.
inline AgentState follower_step(const FormationState& state, int agent_id,
                                const SimParams& params) {
  const AgentState& self = state.agents[agent_id];
  if (!self.alive || self.role != Role::Follower) {
    throw ValidationError("follower_step requires an alive follower");
  }
  const int node = detail::node_of_agent(state, agent_id);
  const int d = static_cast<int>(self.position.size());
  double wsum = 0.0;
  Vec vel_term = Vec::Zero(d);
  Vec pos_term = Vec::Zero(d);
  for (int j : state.graph.in_neighbors(node)) {
    const AgentState& nb = state.agents[state.roster[j]];
    if (!nb.alive) continue;
    double w = state.stress.weights.at({j, node});
    wsum += w;
    vel_term += w * nb.velocity;
    pos_term += w * (self.position - nb.position);
  }
  if (std::abs(wsum) <= 1e-12) {
    throw ZeroWeightSumError("follower " + std::to_string(agent_id) +
                             " has zero alive neighbor weight sum");
  }
  AgentState next = self;
  next.velocity = detail::cap_speed((vel_term - params.gains.k_p_per_s * pos_term) / wsum,
                                    params.gains.speed_cap_mps);
  next.position = self.position + next.velocity * params.dt_s;
  return next;
}

struct TraceAgent {
  int id = -1;
  Role role = Role::Follower;
  bool alive = true;
  Vec position;
  Vec velocity;
  Vec error;  // x − x̄ for alive agents; empty for dead agents
};

/// Event as recorded in the trace. Wall-clock reorganization latency is
/// deliberately not part of the trace (traces are bit-deterministic); it is
/// reported through ReorganizationPlan::switch_latency_s instead.
struct TraceEvent {
  std::string kind;  // "transform" | "reorganize" | "fail"
  double time_s = 0.0;
  int agent = -1;
  std::vector<int> old_leaders;
  std::vector<int> new_leaders;
  std::string cost;
  // winning cost value for auto reorganizations; NaN (omitted on disk) otherwise
  double cost_value = std::numeric_limits<double>::quiet_NaN();
  Mat a;
  Vec b;
};

struct TraceTick {
  long tick = 0;
  double time_s = 0.0;
  std::vector<TraceAgent> agents;
  std::vector<TraceEvent> events;
};

struct AgentMetrics {
  int id = -1;
  double path_length_m = 0.0;
  double mean_speed_mps = 0.0;
  double max_speed_mps = 0.0;
};

struct TraceSummary {
  std::vector<AgentMetrics> agents;
  double path_length_spread_m = 0.0;     // max - min over agents alive at the end
  double mean_speed_spread_mps = 0.0;
  double max_speed_spread_mps = 0.0;
  double tracking_rms_mean_m = 0.0;
  double tracking_rms_max_m = 0.0;
  double tracking_rms_final_m = 0.0;
  long reorganizations = 0;
  long ticks = 0;
  double duration_s = 0.0;
};

struct Trace {
  int schema = 1;
  std::string library_version;
  std::string scenario_name;
  std::string scenario_hash;  // FNV-1a 64 of the canonical scenario encoding, hex
  int d = 0;
  int n = 0;
  double dt_s = 0.0;
  std::vector<TraceTick> ticks;
  TraceSummary summary;
};

/// Summary metrics recomputed from the tick records: per-agent path length
/// (sum of displacement norms), mean speed (path over duration), max
/// instantaneous speed, their max-min spreads over agents alive at the end,
/// the per-tick RMS tracking error series reduced to mean/max/final, and the
/// number of reorganizations applied.
inline TraceSummary metrics(const Trace& trace) {
  if (trace.ticks.empty()) {
    throw ValidationError("trace has no tick records");
  }
  const auto& ticks = trace.ticks;
  const size_t n = ticks.front().agents.size();
  TraceSummary s;
  s.ticks = static_cast<long>(ticks.size());
  s.duration_s = ticks.back().time_s - ticks.front().time_s;

  for (size_t a = 0; a < n; ++a) {
    AgentMetrics m;
    m.id = ticks.front().agents[a].id;
    for (size_t k = 0; k < ticks.size(); ++k) {
      if (k > 0) {
        m.path_length_m += (ticks[k].agents[a].position - ticks[k - 1].agents[a].position).norm();
      }
      m.max_speed_mps = std::max(m.max_speed_mps, ticks[k].agents[a].velocity.norm());
    }
    m.mean_speed_mps = s.duration_s > 0.0 ? m.path_length_m / s.duration_s : 0.0;
    s.agents.push_back(m);
  }

  double path_lo = std::numeric_limits<double>::infinity(), path_hi = 0.0;
  double mean_lo = std::numeric_limits<double>::infinity(), mean_hi = 0.0;
  double max_lo = std::numeric_limits<double>::infinity(), max_hi = 0.0;
  bool any_alive = false;
  for (size_t a = 0; a < n; ++a) {
    if (!ticks.back().agents[a].alive) continue;
    any_alive = true;
    path_lo = std::min(path_lo, s.agents[a].path_length_m);
    path_hi = std::max(path_hi, s.agents[a].path_length_m);
    mean_lo = std::min(mean_lo, s.agents[a].mean_speed_mps);
    mean_hi = std::max(mean_hi, s.agents[a].mean_speed_mps);
    max_lo = std::min(max_lo, s.agents[a].max_speed_mps);
    max_hi = std::max(max_hi, s.agents[a].max_speed_mps);
  }
  if (any_alive) {
    s.path_length_spread_m = path_hi - path_lo;
    s.mean_speed_spread_mps = mean_hi - mean_lo;
    s.max_speed_spread_mps = max_hi - max_lo;
  }

  double rms_sum = 0.0;
  long rms_count = 0;
  for (const auto& tk : ticks) {
    double sq = 0.0;
    int cnt = 0;
    for (const auto& ag : tk.agents) {
      if (ag.alive && ag.error.size() > 0) {
        sq += ag.error.squaredNorm();
        ++cnt;
      }
    }
    if (cnt == 0) continue;
    double rms = std::sqrt(sq / cnt);
    rms_sum += rms;
    ++rms_count;
    s.tracking_rms_max_m = std::max(s.tracking_rms_max_m, rms);
    s.tracking_rms_final_m = rms;
  }
  if (rms_count > 0) s.tracking_rms_mean_m = rms_sum / rms_count;
  for (const auto& tk : ticks) {
    for (const auto& ev : tk.events) {
      if (ev.kind == "reorganize") ++s.reorganizations;
    }
  }
  return s;
}

namespace detail {

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline void append_number(std::string& s, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, res.ptr);
  s.push_back(';');
}

inline void append_number(std::string& s, long long v) {
  s += std::to_string(v);
  s.push_back(';');
}

/// Canonical text encoding of a scenario for fingerprinting; field order is
/// fixed and doubles use shortest round-trip form, so equal scenarios hash
/// equal regardless of source formatting.
inline std::string scenario_canonical_text(const Scenario& sc) {
  std::string s;
  s += sc.name;
  s.push_back(';');
  append_number(s, static_cast<long long>(sc.d));
  append_number(s, sc.dt_s);
  append_number(s, sc.duration_s);
  append_number(s, static_cast<long long>(sc.seed));
  append_number(s, static_cast<long long>(sc.nominal.count()));
  for (int a = 0; a < sc.nominal.count(); ++a) {
    for (int k = 0; k < sc.nominal.dimension(); ++k) append_number(s, sc.nominal.point(a)(k));
  }
  for (const auto& [t, h] : sc.edges) {
    append_number(s, static_cast<long long>(t));
    append_number(s, static_cast<long long>(h));
  }
  s.push_back('|');
  for (int l : sc.leaders) append_number(s, static_cast<long long>(l));
  s += sc.stress_policy;
  s.push_back(';');
  append_number(s, sc.control.k_p_per_s);
  append_number(s, sc.control.k_l_per_s);
  append_number(s, sc.control.speed_cap_mps);
  s += sc.failure_cost;
  s.push_back(';');
  for (const auto& wp : sc.waypoints) {
    for (int k = 0; k < wp.position_m.size(); ++k) append_number(s, wp.position_m(k));
    append_number(s, wp.speed_mps);
  }
  s.push_back('|');
  for (const auto& ev : sc.events) {
    append_number(s, ev.time_s);
    switch (ev.kind) {
      case EventKind::Transform:
        s += "transform;";
        for (int i = 0; i < ev.a.rows(); ++i) {
          for (int j = 0; j < ev.a.cols(); ++j) append_number(s, ev.a(i, j));
        }
        for (int i = 0; i < ev.b.size(); ++i) append_number(s, ev.b(i));
        break;
      case EventKind::Reorganize:
        s += "reorganize;";
        for (int l : ev.new_leaders) append_number(s, static_cast<long long>(l));
        s += ev.cost;
        s.push_back(';');
        break;
      case EventKind::Fail:
        s += "fail;";
        append_number(s, static_cast<long long>(ev.agent));
        break;
    }
  }
  return s;
}

inline std::string scenario_fingerprint(const Scenario& sc) {
  return to_hex(fnv1a64(scenario_canonical_text(sc)));
}

/// Deterministic standard-normal stream (Box–Muller over mt19937_64); the
/// stream depends only on the seed, never on platform library details.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

/// Discrete-time kinematic simulator. Each tick applies the events due at
/// that tick atomically before dynamics, then advances leaders (first-order
/// lag toward the scheduled reference) and followers (consensus law) by one
/// explicit Euler step. Deterministic: identical scenarios produce identical
/// traces.
class Simulator {
 public:
  explicit Simulator(Scenario scenario) : scenario_(std::move(scenario)) {
    auto errors = validate_scenario(scenario_);
    if (!errors.empty()) {
      std::string all = "invalid scenario:";
      for (const auto& e : errors) all += "\n  " + e;
      throw ValidationError(all);
    }
    params_.dt_s = scenario_.dt_s;
    params_.gains = scenario_.control;
    total_ticks_ = static_cast<long>(std::llround(scenario_.duration_s / scenario_.dt_s));

    const int n = scenario_.nominal.count();
    state_.nominal = scenario_.nominal;
    state_.roster.resize(n);
    for (int i = 0; i < n; ++i) state_.roster[i] = i;
    state_.graph = FormationGraph::build(n, scenario_.d, scenario_.edges, scenario_.leaders);
    state_.stress = build_initial_stress();
    leader_count_ = static_cast<int>(scenario_.leaders.size());

    std::set<int> leader_set(scenario_.leaders.begin(), scenario_.leaders.end());
    state_.agents.resize(n);
    for (int i = 0; i < n; ++i) {
      state_.agents[i].id = i;
      state_.agents[i].position = scenario_.nominal.point(i);
      state_.agents[i].velocity = Vec::Zero(scenario_.d);
      state_.agents[i].role = leader_set.count(i) ? Role::Leader : Role::Follower;
      state_.agents[i].alive = true;
    }

    std::vector<std::pair<double, AffineTransform>> transforms;
    for (const auto& ev : scenario_.events) {
      if (ev.kind == EventKind::Transform) transforms.push_back({ev.time_s, {ev.a, ev.b}});
    }
    schedule_ = ReferenceSchedule(scenario_.nominal.centroid(), scenario_.waypoints,
                                  std::move(transforms), scenario_.dt_s);
    apply_due_events();
  }

  const FormationState& state() const { return state_; }
  const ReferenceSchedule& schedule() const { return schedule_; }
  const SimParams& params() const { return params_; }
  long total_ticks() const { return total_ticks_; }
  bool done() const { return state_.tick >= total_ticks_; }

  /// Wall-clock latency of each reorganization executed so far, in order.
  /// Reported out of band; traces stay bit-deterministic.
  const std::vector<double>& measured_reorganization_latencies_s() const {
    return measured_latencies_s_;
  }

  /// Snapshot of the current tick: agent states, per-alive-agent tracking
  /// errors against the instantaneous targets, and the events applied at
  /// this tick.
  TraceTick record() const {
    TraceTick tk;
    tk.tick = state_.tick;
    tk.time_s = state_.time_s;
    Configuration targets = reference_targets(state_.nominal, schedule_, state_.time_s);
    for (const auto& ag : state_.agents) {
      TraceAgent ta;
      ta.id = ag.id;
      ta.role = ag.role;
      ta.alive = ag.alive;
      ta.position = ag.position;
      ta.velocity = ag.velocity;
      if (ag.alive) ta.error = ag.position - targets.point(ag.id);
      tk.agents.push_back(std::move(ta));
    }
    tk.events = pending_events_;
    return tk;
  }

  /// Advances one tick: integrates dynamics from the current state, then
  /// applies the events due at the new tick.
  void step() {
    if (done()) throw ValidationError("simulation already finished");
    const double t = state_.time_s;
    Configuration targets = reference_targets(state_.nominal, schedule_, t);
    Vec vbar = schedule_.velocity_at(t);

    std::vector<AgentState> next = state_.agents;
    for (const auto& ag : state_.agents) {
      if (!ag.alive) continue;
      if (ag.role == Role::Leader) {
        Vec vcmd = detail::cap_speed(
            vbar + params_.gains.k_l_per_s * (targets.point(ag.id) - ag.position),
            params_.gains.speed_cap_mps);
        next[ag.id].velocity = vcmd;
        next[ag.id].position = ag.position + vcmd * params_.dt_s;
      } else {
        next[ag.id] = follower_step(state_, ag.id, params_);
      }
    }
    state_.agents = std::move(next);
    state_.tick += 1;
    state_.time_s = static_cast<double>(state_.tick) * params_.dt_s;
    pending_events_.clear();
    apply_due_events();
  }

  /// Runs to the end of the scenario and returns the full trace with summary.
  Trace run() {
    Trace trace;
    trace.schema = 1;
    trace.library_version = SWARMFORM_VERSION;
    trace.scenario_name = scenario_.name;
    trace.scenario_hash = detail::scenario_fingerprint(scenario_);
    trace.d = scenario_.d;
    trace.n = scenario_.nominal.count();
    trace.dt_s = scenario_.dt_s;
    trace.ticks.push_back(record());
    while (!done()) {
      step();
      trace.ticks.push_back(record());
    }
    trace.summary = metrics(trace);
    return trace;
  }

 private:
  StressAssignment build_initial_stress() const {
    const FormationGraph& g = state_.graph;
    bool power_shape = false;
    {
      std::vector<int> followers = g.followers();
      try {
        auto expected = power_centric_topology(g.leaders(), followers, g.dimension());
        power_shape = detail::edge_sets_equal(
            std::vector<std::pair<int, int>>(g.edges().begin(), g.edges().end()), expected);
      } catch (const Error&) {
        power_shape = false;
      }
    }
    bool use_power = scenario_.stress_policy == "power_centric" ||
                     (scenario_.stress_policy == "auto" && power_shape);
    if (use_power && !power_shape) {
      throw ValidationError("power_centric stress requires the power-centric topology");
    }
    if (use_power) {
      return power_centric_stress(g, scenario_.nominal);
    }
    return compute_equilibrium_stress(g, scenario_.nominal);
  }

  static StressAssignment power_centric_stress(const FormationGraph& g,
                                               const Configuration& nominal) {
    Configuration anchors = nominal.select(g.leaders());
    EdgeWeights weights;
    for (int a : g.leaders()) {
      for (int b : g.leaders()) {
        if (a != b) weights[{a, b}] = 0.0;
      }
    }
    for (int f : g.followers()) {
      PerFollowerStress pf = per_follower_stress(nominal.point(f), anchors);
      const auto& leaders = g.leaders();
      for (size_t j = 0; j < leaders.size(); ++j) weights[{leaders[j], f}] = pf.weights[j];
    }
    return make_stress_assignment(g, std::move(weights));
  }

  FormationView current_view() const {
    FormationView view;
    Mat pos(scenario_.d, state_.agents.size());
    std::vector<bool> alive;
    for (const auto& ag : state_.agents) {
      pos.col(ag.id) = ag.position;
      alive.push_back(ag.alive);
    }
    view.positions = Configuration(std::move(pos));
    view.nominal = state_.nominal;
    view.alive = std::move(alive);
    view.leader_count = leader_count_;
    return view;
  }

  EnvironmentInfo current_env() const {
    EnvironmentInfo env;
    env.goal_direction = schedule_.goal_direction_at(state_.time_s);
    env.next_waypoint = schedule_.next_waypoint_at(state_.time_s);
    env.commanded_speed_mps = schedule_.commanded_speed_at(state_.time_s);
    return env;
  }

  std::vector<int> current_leaders() const {
    std::vector<int> ids;
    for (int node : state_.graph.leaders()) ids.push_back(state_.roster[node]);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  void apply_plan(const ReorganizationPlan& plan) {
    state_.graph = plan.graph;
    state_.roster = plan.roster;
    state_.stress = plan.stress;
    leader_count_ = static_cast<int>(plan.new_leaders.size());
    std::set<int> leader_set(plan.new_leaders.begin(), plan.new_leaders.end());
    for (auto& ag : state_.agents) {
      if (!ag.alive) continue;
      ag.role = leader_set.count(ag.id) ? Role::Leader : Role::Follower;
    }
  }

  void apply_due_events() {
    while (next_event_ < scenario_.events.size() &&
           detail::event_tick(scenario_.events[next_event_].time_s, params_.dt_s) <=
               state_.tick) {
      const ScenarioEvent& ev = scenario_.events[next_event_];
      TraceEvent te;
      te.time_s = ev.time_s;
      switch (ev.kind) {
        case EventKind::Transform:
          // The schedule holds the transform timeline; nothing to mutate.
          te.kind = "transform";
          te.a = ev.a;
          te.b = ev.b;
          break;
        case EventKind::Reorganize: {
          te.old_leaders = current_leaders();
          ReorganizationPlan plan =
              ev.new_leaders.empty()
                  ? select_leaders(current_view(), leader_count_,
                                   leader_cost_registry().at(ev.cost), current_env())
                  : reorganize(current_view(), ev.new_leaders);
          apply_plan(plan);
          measured_latencies_s_.push_back(plan.switch_latency_s);
          te.kind = "reorganize";
          te.new_leaders = plan.new_leaders;
          te.cost = ev.cost;
          te.cost_value = plan.cost_value;
          break;
        }
        case EventKind::Fail: {
          AgentState& ag = state_.agents[ev.agent];
          bool was_leader = ag.alive && ag.role == Role::Leader;
          ag.alive = false;
          ag.velocity = Vec::Zero(scenario_.d);
          te.kind = "fail";
          te.agent = ev.agent;
          pending_events_.push_back(te);
          if (was_leader) {
            std::vector<int> before = current_leaders();
            ReorganizationPlan plan =
                select_leaders(current_view(), leader_count_,
                               leader_cost_registry().at(scenario_.failure_cost),
                               current_env(), {ev.agent});
            apply_plan(plan);
            measured_latencies_s_.push_back(plan.switch_latency_s);
            TraceEvent re;
            re.kind = "reorganize";
            re.time_s = ev.time_s;
            re.old_leaders = std::move(before);
            re.new_leaders = plan.new_leaders;
            re.cost = scenario_.failure_cost;
            re.cost_value = plan.cost_value;
            pending_events_.push_back(re);
          }
          ++next_event_;
          continue;
        }
      }
      pending_events_.push_back(std::move(te));
      ++next_event_;
    }
  }

  Scenario scenario_;
  SimParams params_;
  long total_ticks_ = 0;
  FormationState state_;
  ReferenceSchedule schedule_;
  int leader_count_ = 0;
  size_t next_event_ = 0;
  std::vector<TraceEvent> pending_events_;
  std::vector<double> measured_latencies_s_;
};

inline Trace run_scenario(Scenario scenario) { return Simulator(std::move(scenario)).run(); }

struct ProbeResult {
  double rms_m = 0.0;
  std::vector<double> per_follower_rms_m;    // by follower order of the topology
  std::vector<double> per_draw_mean_sq_m2;   // mean squared error per draw
};

/// Monte-Carlo estimate of the follower target-position error induced by
/// i.i.d. zero-mean Gaussian perturbations (sigma_m per coordinate) of every
/// neighbor position, with follower-neighbor errors compounded through the
/// dependency chain. Follower rows are normalized to unit weight sum, so the
/// error obeys omega_ff e = sum_j w_j eta_j and is solved exactly per draw.
/// The noise stream depends only on the seed, so calling with the same seed
/// across topologies yields paired draws.
inline std::vector<ProbeResult> error_propagation_probe(
    const std::vector<StressAssignment>& topologies, double sigma_m, int draws,
    std::uint64_t seed) {
  if (draws < 1000) throw ValidationError("error propagation probe needs at least 1000 draws");
  if (!(sigma_m >= 0.0) || !std::isfinite(sigma_m)) {
    throw ValidationError("sigma must be nonnegative and finite");
  }
  std::vector<ProbeResult> results;
  for (const auto& topo : topologies) {
    LocalizabilityReport rep = is_affinely_localizable(topo);
    if (!rep.localizable) {
      throw NotLocalizableError("probe topology has a singular follower block");
    }
    const FormationGraph& g = topo.graph;
    const int d = g.dimension();
    const int n = g.agent_count();
    const std::vector<int>& followers = topo.blocks.followers;
    const int nf = static_cast<int>(followers.size());
    std::vector<int> follower_index(n, -1);
    for (int k = 0; k < nf; ++k) follower_index[followers[k]] = k;

    // Row-normalized neighbor weights per follower.
    std::vector<std::vector<std::pair<int, double>>> rows(nf);
    Mat omega_ff = Mat::Identity(nf, nf);
    for (int k = 0; k < nf; ++k) {
      int f = followers[k];
      double wsum = 0.0;
      for (int j : g.in_neighbors(f)) wsum += topo.weights.at({j, f});
      if (std::abs(wsum) <= 1e-12) {
        throw ZeroWeightSumError("follower " + std::to_string(f) + " has zero weight sum");
      }
      for (int j : g.in_neighbors(f)) {
        double w = topo.weights.at({j, f}) / wsum;
        rows[k].push_back({j, w});
        if (follower_index[j] >= 0) omega_ff(k, follower_index[j]) -= w;
      }
    }
    Eigen::PartialPivLU<Mat> lu(omega_ff);

    ProbeResult res;
    res.per_follower_rms_m.assign(nf, 0.0);
    res.per_draw_mean_sq_m2.assign(draws, 0.0);
    detail::NormalStream noise(seed);
    Mat eta(n, d);
    Mat rhs(nf, d);
    double total_sq = 0.0;
    std::vector<double> follower_sq(nf, 0.0);
    for (int draw = 0; draw < draws; ++draw) {
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < d; ++c) eta(a, c) = sigma_m * noise.next();
      }
      rhs.setZero();
      for (int k = 0; k < nf; ++k) {
        for (const auto& [j, w] : rows[k]) rhs.row(k) += w * eta.row(j);
      }
      Mat e = lu.solve(rhs);
      double sq = e.squaredNorm();
      total_sq += sq;
      if (nf > 0) res.per_draw_mean_sq_m2[draw] = sq / (nf * d);
      for (int k = 0; k < nf; ++k) follower_sq[k] += e.row(k).squaredNorm();
    }
    if (nf > 0) {
      res.rms_m = std::sqrt(total_sq / (static_cast<double>(draws) * nf * d));
      for (int k = 0; k < nf; ++k) {
        res.per_follower_rms_m[k] = std::sqrt(follower_sq[k] / (static_cast<double>(draws) * d));
      }
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace swarmform
