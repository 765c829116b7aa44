#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "swarmform/scenario_io.hpp"
#include "swarmform/sim_engine.hpp"

using namespace swarmform;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(SWARMFORM_SCENARIO_DIR) + "/" + name;
}

Configuration pentagon() {
  Mat r(2, 5);
  const double R = 0.6 / std::sin(M_PI / 5.0);
  for (int k = 0; k < 5; ++k) {
    const double a = M_PI / 2.0 + 2.0 * M_PI * k / 5.0;
    r(0, k) = R * std::cos(a);
    r(1, k) = R * std::sin(a);
  }
  return Configuration(r);
}

Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

/// Pentagon under the power-centric topology, leaders {0,1,2}, no schedule.
Scenario pentagon_scenario() {
  Scenario sc;
  sc.name = "pentagon-test";
  sc.d = 2;
  sc.dt_s = 0.01;
  sc.duration_s = 1.0;
  sc.seed = 11;
  sc.nominal = pentagon();
  sc.edges = power_centric_topology({0, 1, 2}, {3, 4}, 2);
  sc.leaders = {0, 1, 2};
  sc.stress_policy = "auto";
  return sc;
}

Scenario triangle_scenario() {
  Scenario sc;
  sc.name = "triangle-test";
  sc.d = 2;
  sc.dt_s = 0.01;
  sc.duration_s = 1.0;
  sc.seed = 12;
  sc.nominal = Configuration::from_points({vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(0.5, 1.0)});
  sc.edges = {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}};
  sc.leaders = {0, 1, 2};
  sc.stress_policy = "auto";
  return sc;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Follower 2 listens only to agent 0 with unit weight, so its equilibrium
/// point is agent 0's position; it starts displaced from there by offset.
FormationState single_neighbor_state(const Vec& offset) {
  FormationState st;
  st.graph = FormationGraph::build(3, 2, {{0, 1}, {1, 0}, {0, 2}}, {0, 1});
  st.nominal = Configuration::from_points({vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(0.0, 1.0)});
  st.stress = make_stress_assignment(st.graph, {{{0, 1}, 0.0}, {{1, 0}, 0.0}, {{0, 2}, 1.0}});
  st.roster = {0, 1, 2};
  st.agents.resize(3);
  for (int i = 0; i < 3; ++i) {
    st.agents[i].id = i;
    st.agents[i].position = st.nominal.point(i);
    st.agents[i].velocity = Vec::Zero(2);
    st.agents[i].role = i == 2 ? Role::Follower : Role::Leader;
    st.agents[i].alive = true;
  }
  st.agents[2].position = st.agents[0].position + offset;
  return st;
}

}  // namespace

TEST(ReferenceSchedule, FollowsPiecewiseLinearLegs) {
  std::vector<Waypoint> wps = {{vec2(2.0, 0.0), 0.5}, {vec2(2.0, 3.0), 1.0}};
  ReferenceSchedule sched(vec2(0.0, 0.0), wps, {}, 0.01);

  EXPECT_NEAR((sched.centroid_at(0.0) - vec2(0.0, 0.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((sched.centroid_at(2.0) - vec2(1.0, 0.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((sched.velocity_at(2.0) - vec2(0.5, 0.0)).norm(), 0.0, 1e-12);
  EXPECT_EQ(sched.active_waypoint_at(2.0), 0);

  EXPECT_NEAR((sched.centroid_at(5.0) - vec2(2.0, 1.0)).norm(), 0.0, 1e-12);
  EXPECT_EQ(sched.active_waypoint_at(5.0), 1);
  EXPECT_NEAR((sched.next_waypoint_at(5.0) - vec2(2.0, 3.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sched.commanded_speed_at(5.0), 1.0, 1e-12);
  EXPECT_NEAR(sched.path_end_time_s(), 7.0, 1e-12);

  // Hold after the last waypoint.
  EXPECT_NEAR((sched.centroid_at(100.0) - vec2(2.0, 3.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sched.velocity_at(100.0).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sched.commanded_speed_at(100.0), 0.0, 1e-12);
}

TEST(ReferenceSchedule, EmptyWaypointListHoldsTheStart) {
  ReferenceSchedule sched(vec2(3.0, -1.0), {}, {}, 0.01);
  EXPECT_NEAR((sched.centroid_at(9.0) - vec2(3.0, -1.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sched.velocity_at(9.0).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sched.path_end_time_s(), 0.0, 1e-12);
}

TEST(ReferenceSchedule, TransformsSnapToTheTickGrid) {
  EXPECT_EQ(detail::event_tick(3.1, 0.01), 310);
  EXPECT_EQ(detail::event_tick(0.0, 0.01), 0);
  EXPECT_EQ(detail::event_tick(0.004, 0.01), 1);

  Mat a = 0.8 * Mat::Identity(2, 2);
  ReferenceSchedule sched(vec2(0.0, 0.0), {}, {{3.1, {a, Vec::Zero(2)}}}, 0.01);
  EXPECT_NEAR(sched.transform_at(3.09).A(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(sched.transform_at(3.10).A(0, 0), 0.8, 1e-12);
  EXPECT_NEAR(sched.transform_at(7.0).A(0, 0), 0.8, 1e-12);
}

TEST(LeaderReference, TranslatesNominalBeforeAnyTransform) {
  Configuration nominal = pentagon();
  std::vector<Waypoint> wps = {{vec2(4.0, 0.0), 1.0}};
  ReferenceSchedule sched(nominal.centroid(), wps, {}, 0.01);

  LeaderReference ref = leader_reference(nominal, {0, 1, 2}, sched, 2.0);
  Vec c = sched.centroid_at(2.0);
  for (int k = 0; k < 3; ++k) {
    Vec expect = c + (nominal.point(k) - nominal.centroid());
    EXPECT_NEAR((ref.targets.point(k) - expect).norm(), 0.0, 1e-12);
  }
  EXPECT_NEAR((ref.velocity - vec2(1.0, 0.0)).norm(), 0.0, 1e-12);
}

TEST(LeaderReference, ScalesOffsetsAtTheSwitchInstant) {
  Configuration nominal = pentagon();
  Mat a = 0.8 * Mat::Identity(2, 2);
  ReferenceSchedule sched(nominal.centroid(), {}, {{1.5, {a, Vec::Zero(2)}}}, 0.01);

  LeaderReference ref = leader_reference(nominal, {0, 1, 2}, sched, 1.5);
  Vec c = sched.centroid_at(1.5);
  for (int k = 0; k < 3; ++k) {
    Vec offset = nominal.point(k) - nominal.centroid();
    EXPECT_NEAR((ref.targets.point(k) - (c + 0.8 * offset)).norm(), 0.0, 1e-12);
  }
}

TEST(LeaderReference, HoldsWithZeroVelocityAfterExhaustion) {
  Configuration nominal = pentagon();
  std::vector<Waypoint> wps = {{vec2(1.0, 0.0), 2.0}};
  ReferenceSchedule sched(nominal.centroid(), wps, {}, 0.01);
  LeaderReference early = leader_reference(nominal, {0, 1, 2}, sched, 50.0);
  LeaderReference late = leader_reference(nominal, {0, 1, 2}, sched, 90.0);
  EXPECT_NEAR(early.velocity.norm(), 0.0, 1e-12);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR((early.targets.point(k) - late.targets.point(k)).norm(), 0.0, 1e-12);
  }
}

TEST(FollowerStep, NominalConfigurationIsAFixedPoint) {
  Scenario sc = pentagon_scenario();
  Simulator sim(sc);
  FormationState st = sim.state();
  for (int f : {3, 4}) {
    AgentState next = follower_step(st, f, sim.params());
    EXPECT_NEAR(next.velocity.norm(), 0.0, 1e-12);
    EXPECT_NEAR((next.position - st.agents[f].position).norm(), 0.0, 1e-12);
  }
}

TEST(FollowerStep, SingleUnitWeightNeighborGivesMinusOffset) {
  Vec delta = vec2(0.3, -0.2);
  FormationState st = single_neighbor_state(delta);
  SimParams params;
  AgentState next = follower_step(st, 2, params);
  EXPECT_NEAR((next.velocity - (-delta)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((next.position - (st.agents[2].position - delta * params.dt_s)).norm(), 0.0, 1e-12);
}

TEST(FollowerStep, CommandedSpeedIsCapped) {
  FormationState st = single_neighbor_state(vec2(30.0, -40.0));
  SimParams params;
  AgentState next = follower_step(st, 2, params);
  EXPECT_NEAR(next.velocity.norm(), params.gains.speed_cap_mps, 1e-12);
}

TEST(FollowerStep, DeadNeighborsAreDropped) {
  FormationState st;
  st.graph = FormationGraph::build(4, 2, {{0, 1}, {1, 0}, {0, 2}, {0, 3}, {1, 3}}, {0, 1});
  st.nominal = Configuration::from_points(
      {vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(0.5, 0.5)});
  st.stress = make_stress_assignment(
      st.graph, {{{0, 1}, 0.0}, {{1, 0}, 0.0}, {{0, 2}, 1.0}, {{0, 3}, 0.5}, {{1, 3}, 0.5}});
  st.roster = {0, 1, 2, 3};
  st.agents.resize(4);
  for (int i = 0; i < 4; ++i) {
    st.agents[i].id = i;
    st.agents[i].position = st.nominal.point(i);
    st.agents[i].velocity = Vec::Zero(2);
    st.agents[i].role = i >= 2 ? Role::Follower : Role::Leader;
    st.agents[i].alive = true;
  }
  Vec delta = vec2(0.1, 0.2);
  st.agents[3].position = st.agents[1].position + delta;
  st.agents[0].alive = false;

  AgentState next = follower_step(st, 3, SimParams{});
  EXPECT_NEAR((next.velocity - (-delta)).norm(), 0.0, 1e-12);

  st.agents[1].alive = false;
  EXPECT_THROW(follower_step(st, 3, SimParams{}), ZeroWeightSumError);
}

TEST(FollowerStep, RejectsLeadersAndDeadAgents) {
  FormationState st = single_neighbor_state(Vec::Zero(2));
  EXPECT_THROW(follower_step(st, 0, SimParams{}), ValidationError);
  st.agents[2].alive = false;
  EXPECT_THROW(follower_step(st, 2, SimParams{}), ValidationError);
}

TEST(Simulator, StaticScenarioStaysAtNominal) {
  Scenario sc = load_scenario(scenario_path("simplex_static.json"));
  Trace trace = run_scenario(sc);
  ASSERT_EQ(trace.ticks.size(), 501u);
  for (const auto& tk : trace.ticks) {
    for (const auto& ag : tk.agents) {
      EXPECT_NEAR((ag.position - sc.nominal.point(ag.id)).norm(), 0.0, 1e-12);
      EXPECT_NEAR(ag.velocity.norm(), 0.0, 1e-12);
      EXPECT_NEAR(ag.error.norm(), 0.0, 1e-12);
    }
  }
  for (const auto& am : trace.summary.agents) EXPECT_NEAR(am.path_length_m, 0.0, 1e-12);
  EXPECT_NEAR(trace.summary.tracking_rms_max_m, 0.0, 1e-12);
  EXPECT_EQ(trace.summary.reorganizations, 0);
}

TEST(Simulator, AutoPolicyPicksThePathwayFromTheEdgeSet) {
  Simulator power(pentagon_scenario());
  PerFollowerStress pf =
      per_follower_stress(pentagon().point(3), pentagon().select({0, 1, 2}));
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(power.state().stress.weights.at({j, 3}), pf.weights[j], 1e-12);
  }

  Scenario square;
  square.name = "square-test";
  square.d = 2;
  square.dt_s = 0.01;
  square.duration_s = 0.0;
  square.seed = 3;
  square.nominal = Configuration::from_points(
      {vec2(0.5, 0.5), vec2(-0.5, 0.5), vec2(-0.5, -0.5), vec2(0.5, -0.5)});
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) square.edges.push_back({i, j});
    }
  }
  square.leaders = {0, 1, 2};
  square.stress_policy = "auto";
  Simulator equil(square);
  EXPECT_LT(equilibrium_residual(equil.state().stress, square.nominal), 1e-9);
  EXPECT_TRUE(is_affinely_localizable(equil.state().stress).localizable);
  // The complete digraph has follower out-edges, so it is not the power shape.
  EXPECT_NE(equil.state().stress.weights.at({0, 1}), 0.0);

  square.stress_policy = "power_centric";
  EXPECT_THROW(Simulator{square}, ValidationError);
}

TEST(Simulator, TransformsApplyBeforeDynamicsAtTheirTick) {
  Scenario sc = pentagon_scenario();
  ScenarioEvent ev;
  ev.time_s = 0.05;
  ev.kind = EventKind::Transform;
  ev.a = Mat(2, 2);
  ev.a << 2.0, 0.0, 0.0, 0.5;
  ev.b = Vec::Zero(2);
  sc.events = {ev};

  Trace trace = run_scenario(sc);
  const TraceTick& tk = trace.ticks[5];
  ASSERT_EQ(tk.events.size(), 1u);
  EXPECT_EQ(tk.events[0].kind, "transform");
  EXPECT_TRUE(trace.ticks[4].events.empty());

  Vec rbar = sc.nominal.centroid();
  for (const auto& ag : tk.agents) {
    Vec offset = sc.nominal.point(ag.id) - rbar;
    Vec expect = (offset - ev.a * offset);
    // Nothing moved before the switch, so the recorded error is (I - A) r̃.
    EXPECT_NEAR((ag.error - expect).norm(), 0.0, 1e-12);
  }
}

TEST(Simulator, ExplicitReorganizationSwapsRoles) {
  Scenario sc = pentagon_scenario();
  ScenarioEvent ev;
  ev.time_s = 0.5;
  ev.kind = EventKind::Reorganize;
  ev.new_leaders = {1, 2, 3};
  sc.events = {ev};

  Simulator sim(sc);
  Trace trace = sim.run();
  const TraceTick& tk = trace.ticks[50];
  ASSERT_EQ(tk.events.size(), 1u);
  EXPECT_EQ(tk.events[0].kind, "reorganize");
  EXPECT_EQ(tk.events[0].old_leaders, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(tk.events[0].new_leaders, (std::vector<int>{1, 2, 3}));
  EXPECT_TRUE(std::isnan(tk.events[0].cost_value));

  for (const auto& ag : trace.ticks.back().agents) {
    Role expect = (ag.id >= 1 && ag.id <= 3) ? Role::Leader : Role::Follower;
    EXPECT_EQ(ag.role, expect) << "agent " << ag.id;
  }
  EXPECT_EQ(trace.summary.reorganizations, 1);
  ASSERT_EQ(sim.measured_reorganization_latencies_s().size(), 1u);
  EXPECT_GE(sim.measured_reorganization_latencies_s()[0], 0.0);
}

TEST(Simulator, LeaderFailureReorganizesInTheSameTick) {
  Scenario sc = load_scenario(scenario_path("leader_failure.json"));
  Simulator sim(sc);
  Trace trace = sim.run();

  const TraceTick& tk = trace.ticks[400];
  ASSERT_EQ(tk.events.size(), 2u);
  EXPECT_EQ(tk.events[0].kind, "fail");
  EXPECT_EQ(tk.events[0].agent, 0);
  EXPECT_EQ(tk.events[1].kind, "reorganize");
  EXPECT_EQ(tk.events[1].old_leaders, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(tk.events[1].new_leaders, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(tk.events[1].cost, "heading_align");
  EXPECT_TRUE(std::isfinite(tk.events[1].cost_value));

  // The failed agent freezes; survivors keep tracking.
  Vec frozen = tk.agents[0].position;
  for (size_t k = 400; k < trace.ticks.size(); ++k) {
    const auto& ag = trace.ticks[k].agents[0];
    EXPECT_FALSE(ag.alive);
    EXPECT_EQ((ag.position - frozen).norm(), 0.0);
    EXPECT_EQ(ag.velocity.norm(), 0.0);
  }
  for (const auto& ag : trace.ticks.back().agents) {
    if (!ag.alive) continue;
    Role expect = ag.id >= 2 ? Role::Leader : Role::Follower;
    EXPECT_EQ(ag.role, expect) << "agent " << ag.id;
    EXPECT_LT(ag.error.norm(), 0.05);
  }
  EXPECT_EQ(sim.state().roster, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(trace.summary.reorganizations, 1);
}

TEST(Simulator, ZeroDurationRecordsOnlyTickZero) {
  Scenario sc = triangle_scenario();
  sc.duration_s = 0.0;
  Trace trace = run_scenario(sc);
  ASSERT_EQ(trace.ticks.size(), 1u);
  EXPECT_EQ(trace.ticks[0].tick, 0);
  EXPECT_EQ(trace.summary.ticks, 1);
  EXPECT_NEAR(trace.summary.duration_s, 0.0, 1e-12);
  for (const auto& am : trace.summary.agents) EXPECT_EQ(am.mean_speed_mps, 0.0);
}

TEST(Simulator, ValidationNamesTheOffendingFields) {
  Scenario sc = pentagon_scenario();
  ScenarioEvent ev;
  ev.time_s = 0.5;
  ev.kind = EventKind::Fail;
  ev.agent = 9;
  sc.events = {ev};
  std::vector<std::string> errors = validate_scenario(sc);
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NE(errors[0].find("events[0]"), std::string::npos);
  EXPECT_THROW(Simulator{sc}, ValidationError);

  Scenario bad = pentagon_scenario();
  bad.d = 4;
  bad.dt_s = -0.01;
  bad.leaders = {0};
  errors = validate_scenario(bad);
  EXPECT_GE(errors.size(), 3u);
  bool saw_d = false, saw_dt = false, saw_leaders = false;
  for (const auto& e : errors) {
    saw_d |= e.rfind("d:", 0) == 0;
    saw_dt |= e.rfind("dt_s:", 0) == 0;
    saw_leaders |= e.rfind("graph.leaders", 0) == 0;
  }
  EXPECT_TRUE(saw_d);
  EXPECT_TRUE(saw_dt);
  EXPECT_TRUE(saw_leaders);
}

TEST(Simulator, StepAfterTheEndThrows) {
  Scenario sc = triangle_scenario();
  sc.duration_s = 0.02;
  Simulator sim(sc);
  sim.step();
  sim.step();
  EXPECT_TRUE(sim.done());
  EXPECT_THROW(sim.step(), ValidationError);
}

TEST(Simulator, RerunsAreBitIdentical) {
  Scenario sc = load_scenario(scenario_path("square_stress.json"));
  Trace a = run_scenario(sc);
  Trace b = run_scenario(sc);
  std::string pa = testing::TempDir() + "trace_a.jsonl";
  std::string pb = testing::TempDir() + "trace_b.jsonl";
  write_trace(a, pa);
  write_trace(b, pb);
  EXPECT_EQ(file_bytes(pa), file_bytes(pb));
}

TEST(Simulator, TranslationEquivariance) {
  Scenario base = pentagon_scenario();
  base.duration_s = 3.0;
  base.waypoints = {{vec2(2.0, 1.0), 1.0}};

  Scenario shifted = base;
  Vec b = vec2(13.0, -4.5);
  Mat moved(2, 5);
  for (int a = 0; a < 5; ++a) moved.col(a) = base.nominal.point(a) + b;
  shifted.nominal = Configuration(moved);
  shifted.waypoints[0].position_m = base.waypoints[0].position_m + b;

  Trace ta = run_scenario(base);
  Trace tb = run_scenario(shifted);
  ASSERT_EQ(ta.ticks.size(), tb.ticks.size());
  for (size_t k = 0; k < ta.ticks.size(); k += 25) {
    for (int a = 0; a < 5; ++a) {
      const auto& pa = ta.ticks[k].agents[a];
      const auto& pb = tb.ticks[k].agents[a];
      EXPECT_NEAR((pb.position - pa.position - b).norm(), 0.0, 1e-9);
      EXPECT_NEAR((pb.error - pa.error).norm(), 0.0, 1e-9);
    }
  }
}

TEST(Simulator, SpeedCapHoldsThroughTransformsAndReorganizations) {
  Scenario sc = load_scenario(scenario_path("pentagon_uturn.json"));
  Trace trace = run_scenario(sc);
  long reorgs = 0, transforms = 0;
  for (const auto& tk : trace.ticks) {
    for (const auto& ag : tk.agents) {
      EXPECT_LE(ag.velocity.norm(), sc.control.speed_cap_mps + 1e-12);
    }
    for (const auto& ev : tk.events) {
      reorgs += ev.kind == "reorganize";
      transforms += ev.kind == "transform";
    }
  }
  EXPECT_EQ(reorgs, 3);
  EXPECT_EQ(transforms, 6);
  EXPECT_EQ(trace.summary.reorganizations, 3);
}

TEST(Simulator, ConvergesExponentiallyFromAStepOffset) {
  Scenario sc = pentagon_scenario();
  sc.duration_s = 20.0;
  ScenarioEvent ev;
  ev.time_s = 0.0;
  ev.kind = EventKind::Transform;
  ev.a = Mat::Identity(2, 2);
  ev.b = vec2(0.5, 0.3);
  sc.events = {ev};

  Trace trace = run_scenario(sc);
  std::vector<double> rms;
  for (const auto& tk : trace.ticks) {
    double sq = 0.0;
    for (const auto& ag : tk.agents) sq += ag.error.squaredNorm();
    rms.push_back(std::sqrt(sq / 5.0));
  }
  EXPECT_GT(rms[0], 0.5);
  for (size_t k = 51; k < rms.size(); ++k) {
    EXPECT_LE(rms[k], rms[k - 1] + 1e-12) << "tick " << k;
  }
  EXPECT_LT(rms[2000], 1e-3);
}

TEST(Simulator, TetraRouteAppliesFiveReorganizations) {
  Scenario sc = load_scenario(scenario_path("tetra_route3d.json"));
  Trace trace = run_scenario(sc);
  EXPECT_EQ(trace.d, 3);
  EXPECT_EQ(trace.n, 5);
  EXPECT_EQ(trace.summary.reorganizations, 5);
  for (const auto& tk : trace.ticks) {
    for (const auto& ev : tk.events) {
      if (ev.kind != "reorganize") continue;
      // The center of the pattern is the one point fixed by every symmetry,
      // so the leader set can never rotate onto it.
      EXPECT_EQ(ev.new_leaders, (std::vector<int>{0, 1, 2, 3}));
    }
  }
  EXPECT_LT(trace.summary.tracking_rms_final_m, 1e-2);
}

TEST(Metrics, StraightLineAtUnitSpeed) {
  Trace trace;
  trace.d = 2;
  trace.n = 1;
  trace.dt_s = 0.01;
  for (int k = 0; k <= 1000; ++k) {
    TraceTick tk;
    tk.tick = k;
    tk.time_s = 0.01 * k;
    TraceAgent ag;
    ag.id = 0;
    ag.role = Role::Leader;
    ag.position = vec2(0.01 * k, 0.0);
    ag.velocity = vec2(1.0, 0.0);
    tk.agents.push_back(ag);
    trace.ticks.push_back(tk);
  }
  TraceSummary s = metrics(trace);
  EXPECT_NEAR(s.agents[0].path_length_m, 10.0, 0.01);
  EXPECT_NEAR(s.agents[0].mean_speed_mps, 1.0, 0.01);
  EXPECT_NEAR(s.agents[0].max_speed_mps, 1.0, 1e-12);
  EXPECT_NEAR(s.duration_s, 10.0, 1e-9);
}

TEST(Metrics, SpreadsSkipAgentsDeadAtTheEnd) {
  Trace trace;
  trace.d = 2;
  trace.n = 3;
  trace.dt_s = 0.01;
  for (int k = 0; k < 2; ++k) {
    TraceTick tk;
    tk.tick = k;
    tk.time_s = 0.01 * k;
    for (int a = 0; a < 3; ++a) {
      TraceAgent ag;
      ag.id = a;
      ag.position = vec2(k * (a == 0 ? 1.0 : a == 1 ? 2.0 : 100.0), 0.0);
      ag.velocity = Vec::Zero(2);
      ag.alive = a != 2;
      tk.agents.push_back(ag);
    }
    trace.ticks.push_back(tk);
  }
  TraceSummary s = metrics(trace);
  EXPECT_NEAR(s.agents[2].path_length_m, 100.0, 1e-12);
  EXPECT_NEAR(s.path_length_spread_m, 1.0, 1e-12);
}

TEST(Metrics, RmsSeriesReductions) {
  Trace trace;
  trace.d = 2;
  trace.n = 1;
  trace.dt_s = 0.01;
  for (int k = 0; k < 2; ++k) {
    TraceTick tk;
    tk.tick = k;
    tk.time_s = 0.01 * k;
    TraceAgent ag;
    ag.id = 0;
    ag.position = Vec::Zero(2);
    ag.velocity = Vec::Zero(2);
    ag.error = k == 0 ? vec2(3.0, 4.0) : vec2(0.0, 0.0);
    tk.agents.push_back(ag);
    trace.ticks.push_back(tk);
  }
  TraceSummary s = metrics(trace);
  EXPECT_NEAR(s.tracking_rms_max_m, 5.0, 1e-12);
  EXPECT_NEAR(s.tracking_rms_mean_m, 2.5, 1e-12);
  EXPECT_NEAR(s.tracking_rms_final_m, 0.0, 1e-12);

  Trace empty;
  EXPECT_THROW(metrics(empty), ValidationError);
}

namespace {

/// Followers 3 and 4 both anchored directly to the leaders.
StressAssignment leader_only_topology() {
  Configuration nominal = pentagon();
  FormationGraph g = FormationGraph::build(
      5, 2, power_centric_topology({0, 1, 2}, {3, 4}, 2), {0, 1, 2});
  EdgeWeights w;
  for (int a : {0, 1, 2}) {
    for (int b : {0, 1, 2}) {
      if (a != b) w[{a, b}] = 0.0;
    }
  }
  Configuration anchors = nominal.select({0, 1, 2});
  for (int f : {3, 4}) {
    PerFollowerStress pf = per_follower_stress(nominal.point(f), anchors);
    for (int j = 0; j < 3; ++j) w[{j, f}] = pf.weights[j];
  }
  return make_stress_assignment(g, std::move(w));
}

/// Follower 4 hangs off follower 3, compounding its neighbors' errors.
StressAssignment chained_topology() {
  Configuration nominal = pentagon();
  FormationGraph g = FormationGraph::build(
      5, 2,
      {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1},
       {0, 3}, {1, 3}, {2, 3}, {0, 4}, {1, 4}, {3, 4}},
      {0, 1, 2});
  EdgeWeights w;
  for (int a : {0, 1, 2}) {
    for (int b : {0, 1, 2}) {
      if (a != b) w[{a, b}] = 0.0;
    }
  }
  PerFollowerStress p3 = per_follower_stress(nominal.point(3), nominal.select({0, 1, 2}));
  for (int j = 0; j < 3; ++j) w[{j, 3}] = p3.weights[j];
  PerFollowerStress p4 = per_follower_stress(nominal.point(4), nominal.select({0, 1, 3}));
  w[{0, 4}] = p4.weights[0];
  w[{1, 4}] = p4.weights[1];
  w[{3, 4}] = p4.weights[2];
  return make_stress_assignment(g, std::move(w));
}

}  // namespace

TEST(ErrorPropagationProbe, ZeroSigmaGivesExactlyZero) {
  auto res = error_propagation_probe({leader_only_topology()}, 0.0, 1000, 5);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].rms_m, 0.0);
  for (double v : res[0].per_follower_rms_m) EXPECT_EQ(v, 0.0);
  for (double v : res[0].per_draw_mean_sq_m2) EXPECT_EQ(v, 0.0);
}

TEST(ErrorPropagationProbe, LeaderOnlyBeatsTheChain) {
  auto res = error_propagation_probe({leader_only_topology(), chained_topology()}, 0.01,
                                     4000, 99);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_LT(res[0].rms_m, res[1].rms_m);
  // Follower 3 sees the same anchors in both topologies.
  EXPECT_NEAR(res[0].per_follower_rms_m[0], res[1].per_follower_rms_m[0], 1e-15);
  EXPECT_LT(res[0].per_follower_rms_m[1], res[1].per_follower_rms_m[1]);
}

TEST(ErrorPropagationProbe, RmsIsLinearInSigma) {
  auto lo = error_propagation_probe({leader_only_topology()}, 0.01, 2000, 7);
  auto hi = error_propagation_probe({leader_only_topology()}, 0.02, 2000, 7);
  EXPECT_NEAR(hi[0].rms_m, 2.0 * lo[0].rms_m, 1e-12);
}

TEST(ErrorPropagationProbe, ValidatesItsInputs) {
  EXPECT_THROW(error_propagation_probe({leader_only_topology()}, 0.01, 999, 1),
               ValidationError);
  EXPECT_THROW(error_propagation_probe({leader_only_topology()}, -0.1, 1000, 1),
               ValidationError);

  FormationGraph g = FormationGraph::build(
      5, 2, power_centric_topology({0, 1, 2}, {3, 4}, 2), {0, 1, 2});
  EdgeWeights w;
  for (const auto& e : g.edges()) w[e] = 0.0;
  StressAssignment dead = make_stress_assignment(g, std::move(w));
  EXPECT_THROW(error_propagation_probe({dead}, 0.01, 1000, 1), NotLocalizableError);
}

TEST(NormalStream, SeededStreamsAreReproducible) {
  detail::NormalStream a(42), b(42), c(43);
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    double va = a.next();
    EXPECT_EQ(va, b.next());
    differs |= va != c.next();
  }
  EXPECT_TRUE(differs);

  detail::NormalStream s(7);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    double v = s.next();
    sum += v;
    sumsq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sumsq / n, 1.0, 0.05);
}

TEST(ScenarioFingerprint, TracksContentNotFormatting) {
  Scenario a = pentagon_scenario();
  Scenario b = pentagon_scenario();
  EXPECT_EQ(detail::scenario_fingerprint(a), detail::scenario_fingerprint(b));
  b.seed += 1;
  EXPECT_NE(detail::scenario_fingerprint(a), detail::scenario_fingerprint(b));
  EXPECT_EQ(detail::scenario_fingerprint(a).size(), 16u);
}
