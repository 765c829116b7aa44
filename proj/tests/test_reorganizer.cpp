#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "swarmform/reorganizer.hpp"
#include "oracles.hpp"

using namespace swarmform;

namespace {

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

FormationView pentagon_view() {
  FormationView view;
  view.nominal = pentagon();
  view.positions = view.nominal;
  view.alive = {true, true, true, true, true};
  view.leader_count = 3;
  return view;
}

EnvironmentInfo env_toward(double x, double y) {
  EnvironmentInfo env;
  env.goal_direction = Vec(2);
  env.goal_direction << x, y;
  env.next_waypoint = Vec(2);
  env.next_waypoint << 4.0 * x, 4.0 * y;
  env.commanded_speed_mps = 1.0;
  return env;
}

}  // namespace

TEST(PowerCentricTopology, FollowersListenOnlyToLeaders) {
  auto edges = power_centric_topology({0, 1, 2}, {3, 4}, 2);
  auto g = FormationGraph::build(5, 2, edges, {0, 1, 2});
  EXPECT_EQ(g.in_neighbors(3), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(g.in_neighbors(4), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(g.in_neighbors(0), (std::vector<int>{1, 2}));
  EXPECT_TRUE(is_d_plus_1_rooted(g).rooted);
}

TEST(PowerCentricTopology, Validation) {
  EXPECT_THROW(power_centric_topology({0, 1}, {2, 3}, 2), TooFewLeadersError);
  EXPECT_THROW(power_centric_topology({0, 1, 2}, {2, 3}, 2), InvalidLeaderSetError);
  EXPECT_THROW(power_centric_topology({0, 1, 2}, {4}, 2), InvalidLeaderSetError);
}

TEST(PerFollowerStress, CentroidGivesBarycentricWeights) {
  Mat tri(2, 3);
  tri << 0.0, 1.0, 0.5,
         0.0, 0.0, 0.9;
  Configuration anchors(tri);
  Vec f = anchors.centroid();
  auto pf = per_follower_stress(f, anchors);
  ASSERT_EQ(pf.weights.size(), 3u);
  for (double w : pf.weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-12);
}

TEST(PerFollowerStress, FollowerOnLeaderTakesThatLeader) {
  Mat tri(2, 3);
  tri << 0.0, 1.0, 0.5,
         0.0, 0.0, 0.9;
  Configuration anchors(tri);
  auto pf = per_follower_stress(anchors.point(1), anchors);
  EXPECT_NEAR(pf.weights[0], 0.0, 1e-12);
  EXPECT_NEAR(pf.weights[1], 1.0, 1e-12);
  EXPECT_NEAR(pf.weights[2], 0.0, 1e-12);
}

TEST(PerFollowerStress, OutsideHullGivesNegativeWeights) {
  Mat tri(2, 3);
  tri << 0.0, 1.0, 0.5,
         0.0, 0.0, 0.9;
  Configuration anchors(tri);
  Vec f(2);
  f << 3.0, 0.1;
  auto pf = per_follower_stress(f, anchors);
  double sum = 0.0, residual = 0.0;
  Vec acc = Vec::Zero(2);
  bool negative = false;
  for (size_t j = 0; j < pf.weights.size(); ++j) {
    sum += pf.weights[j];
    acc += pf.weights[j] * (anchors.point(static_cast<int>(j)) - f);
    negative = negative || pf.weights[j] < 0.0;
  }
  residual = acc.norm();
  EXPECT_TRUE(negative);
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_LT(residual, 1e-12);
}

TEST(PerFollowerStress, MatchesKktOracle) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = (trial % 2) ? 3 : 2;
    const int k = d + 1 + static_cast<int>(rng() % 3);
    Mat a = oracle::random_spanning_config(rng, d, k);
    Vec f(d);
    for (int i = 0; i < d; ++i) f(i) = unif(rng);

    auto pf = per_follower_stress(f, Configuration(a));
    Mat offsets = a.colwise() - f;
    Vec ref = oracle::min_norm_affine_weights(offsets);
    for (int j = 0; j < k; ++j) {
      EXPECT_NEAR(pf.weights[j], ref(j), 1e-9) << "trial " << trial << " j " << j;
    }
  }
}

TEST(PerFollowerStress, DegenerateAnchorsRejected) {
  Mat line(2, 3);
  line << 0.0, 1.0, 2.0,
          0.0, 0.0, 0.0;
  Vec f(2);
  f << 0.5, 1.0;
  EXPECT_THROW(per_follower_stress(f, Configuration(line)), DegenerateLeadersError);

  Mat two(2, 2);
  two << 0.0, 1.0,
         0.0, 1.0;
  EXPECT_THROW(per_follower_stress(f, Configuration(two)), TooFewLeadersError);
}

TEST(BlockOmegaFf, NormalizedWeightsGiveIdentity) {
  Configuration anchors = pentagon().select({0, 1, 2});
  std::vector<PerFollowerStress> fs;
  fs.push_back(per_follower_stress(pentagon().point(3), anchors));
  fs.push_back(per_follower_stress(pentagon().point(4), anchors));
  auto block = block_omega_ff(fs);
  ASSERT_EQ(block.row_sums.size(), 2u);
  EXPECT_NEAR(block.row_sums[0], 1.0, 1e-12);
  EXPECT_NEAR(block.row_sums[1], 1.0, 1e-12);
  EXPECT_NEAR(block.det_abs, 1.0, 1e-12);
}

TEST(BlockOmegaFf, ScalesLinearly) {
  PerFollowerStress a{{0.5, 0.5, 1.0}, 2.0};   // sums to 2
  PerFollowerStress b{{0.2, 0.3, 0.5}, 1.0};   // sums to 1
  auto block = block_omega_ff({a, b});
  EXPECT_NEAR(block.row_sums[0], 2.0, 1e-15);
  EXPECT_NEAR(block.row_sums[1], 1.0, 1e-15);
  EXPECT_NEAR(block.det_abs, 2.0, 1e-15);
}

TEST(BlockOmegaFf, MatchesDenseDeterminant) {
  // assemble the same digraph stress densely and compare the ff determinant
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = (trial % 2) ? 3 : 2;
    const int nl = d + 1 + static_cast<int>(rng() % 2);
    const int nf = 1 + static_cast<int>(rng() % 3);
    const int n = nl + nf;
    Mat pts = oracle::random_spanning_config(rng, d, n);
    Configuration config(pts);

    std::vector<int> leaders(nl), followers(nf);
    for (int i = 0; i < nl; ++i) leaders[i] = i;
    for (int i = 0; i < nf; ++i) followers[i] = nl + i;
    Configuration anchors = config.select(leaders);

    std::vector<PerFollowerStress> fs;
    EdgeWeights weights;
    for (int a : leaders)
      for (int b : leaders)
        if (a != b) weights[{a, b}] = 0.0;
    bool degenerate = false;
    try {
      for (int f : followers) {
        auto pf = per_follower_stress(config.point(f), anchors);
        // undo the normalization so the raw equilibrium weights land in Omega
        for (int j = 0; j < nl; ++j) {
          weights[{leaders[j], f}] = pf.weights[j] * pf.raw_weight_sum;
        }
        PerFollowerStress raw = pf;
        for (double& w : raw.weights) w *= pf.raw_weight_sum;
        fs.push_back(raw);
      }
    } catch (const DegenerateLeadersError&) {
      degenerate = true;  // rejection-sampled configs may still align; skip
    }
    if (degenerate) continue;

    auto g = FormationGraph::build(n, d, power_centric_topology(leaders, followers, d),
                                   leaders);
    auto s = make_stress_assignment(g, weights);
    auto block = block_omega_ff(fs);
    double dense = std::abs(s.blocks.ff.determinant());
    EXPECT_NEAR(block.det_abs, dense, 1e-9 * std::max(1.0, dense)) << "trial " << trial;
  }
}

TEST(Reorganize, RotatedPentagonLeaderSet) {
  auto view = pentagon_view();
  auto plan = reorganize(view, {1, 2, 3});
  EXPECT_EQ(plan.new_leaders, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(plan.roster, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_TRUE(plan.report.localizable);
  EXPECT_LT((plan.stress.blocks.ff - Mat::Identity(2, 2)).norm(), 1e-12);
  EXPECT_GE(plan.switch_latency_s, 0.0);

  // follower in-neighborhoods are exactly the leader set
  for (int f : plan.graph.followers()) {
    EXPECT_EQ(plan.graph.in_neighbors(f), (std::vector<int>{1, 2, 3}));
    EXPECT_GE(static_cast<int>(plan.graph.in_neighbors(f).size()), 3);
  }

  // nominal formation is reproduced by the new stress
  Configuration nom_leaders = view.nominal.select(plan.graph.leaders());
  Configuration rec = follower_positions_from_leaders(plan.stress, nom_leaders);
  Configuration nom_followers = view.nominal.select(plan.graph.followers());
  EXPECT_LT((rec.points() - nom_followers.points()).norm(), 1e-9);
}

TEST(Reorganize, ValidationErrors) {
  auto view = pentagon_view();
  EXPECT_THROW(reorganize(view, {0, 1}), TooFewLeadersError);
  EXPECT_THROW(reorganize(view, {0, 1, 7}), IndexOutOfRangeError);
  EXPECT_THROW(reorganize(view, {0, 1, 1}), InvalidLeaderSetError);
  EXPECT_THROW(reorganize(view, {0, 1, 2}, {2}), InvalidLeaderSetError);

  auto dead = view;
  dead.alive[2] = false;
  EXPECT_THROW(reorganize(dead, {0, 1, 2}), InvalidLeaderSetError);

  // a non-symmetric pattern admits only the identity leader prefix
  std::mt19937_64 rng(43);
  FormationView generic;
  generic.nominal = Configuration(oracle::random_spanning_config(rng, 2, 5));
  generic.positions = generic.nominal;
  generic.alive = {true, true, true, true, true};
  generic.leader_count = 3;
  EXPECT_THROW(reorganize(generic, {0, 1, 3}), NotViableAssignmentError);
}

TEST(Reorganize, CollinearLeadersDoNotSpan) {
  Mat pts(2, 5);
  pts << 0.0, 1.0, 2.0, 0.0, 1.0,
         0.0, 0.0, 0.0, 1.0, 1.0;
  FormationView view;
  view.nominal = Configuration(pts);
  view.positions = view.nominal;
  view.alive = {true, true, true, true, true};
  view.leader_count = 3;
  EXPECT_THROW(reorganize(view, {0, 1, 2}), LeadersDoNotSpanError);
}

TEST(Reorganize, CompactsRosterAfterDeath) {
  auto view = pentagon_view();
  view.alive[1] = false;
  auto plan = reorganize(view, {0, 2, 3});
  EXPECT_EQ(plan.roster, (std::vector<int>{0, 2, 3, 4}));
  EXPECT_EQ(plan.graph.agent_count(), 4);
  EXPECT_EQ(plan.new_leaders, (std::vector<int>{0, 2, 3}));
  EXPECT_TRUE(plan.report.localizable);
  // witness is reported in agent ids over the alive roster
  EXPECT_EQ(plan.assignment.permutation, (std::vector<int>{0, 2, 3, 4}));
}

TEST(Reorganize, Theorem3EndToEnd) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = (trial % 2) ? 3 : 2;
    const int n = d + 2 + static_cast<int>(rng() % (8 - d));
    const int nl = d + 1 + static_cast<int>(rng() % (n - d - 1));
    Mat pts = oracle::random_spanning_config(rng, d, n);
    Configuration config(pts);

    std::vector<int> leaders(nl);
    for (int i = 0; i < nl; ++i) leaders[i] = i;
    if (!affinely_spans(config.select(leaders))) continue;

    std::vector<int> followers;
    for (int i = nl; i < n; ++i) followers.push_back(i);

    EdgeWeights weights;
    for (int a : leaders)
      for (int b : leaders)
        if (a != b) weights[{a, b}] = 0.0;
    Configuration anchors = config.select(leaders);
    for (int f : followers) {
      auto pf = per_follower_stress(config.point(f), anchors);
      for (int j = 0; j < nl; ++j) weights[{leaders[j], f}] = pf.weights[j];
    }
    auto g = FormationGraph::build(n, d, power_centric_topology(leaders, followers, d),
                                   leaders);
    auto s = make_stress_assignment(g, weights);
    auto rep = is_affinely_localizable(s);
    EXPECT_TRUE(rep.localizable) << "trial " << trial;
    if (!followers.empty()) {
      EXPECT_GT(std::abs(s.blocks.ff.determinant()), 0.0) << "trial " << trial;
    }
  }
}

TEST(SelectLeaders, HeadingAlignmentPicksGoalFacingLeaders) {
  auto view = pentagon_view();

  auto back = select_leaders(view, 3, heading_alignment_cost, env_toward(-1.0, 0.0));
  EXPECT_EQ(back.new_leaders, (std::vector<int>{0, 1, 2}));

  auto fwd = select_leaders(view, 3, heading_alignment_cost, env_toward(1.0, 0.0));
  EXPECT_EQ(fwd.new_leaders, (std::vector<int>{0, 3, 4}));
  EXPECT_TRUE(std::isfinite(fwd.cost_value));
  EXPECT_LT(fwd.cost_value, 0.0);
}

TEST(SelectLeaders, ConstantCostBreaksTiesLexicographically) {
  auto view = pentagon_view();
  LeaderCost constant = [](const RoleAssignment&, const FormationView&,
                           const EnvironmentInfo&) { return 7.25; };
  auto plan = select_leaders(view, 3, constant, env_toward(1.0, 0.0));
  EXPECT_EQ(plan.new_leaders, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(plan.cost_value, 7.25);
}

TEST(SelectLeaders, SingleViableAssignmentWinsRegardlessOfCost) {
  std::mt19937_64 rng(53);
  FormationView view;
  view.nominal = Configuration(oracle::random_spanning_config(rng, 2, 5));
  view.positions = view.nominal;
  view.alive = {true, true, true, true, true};
  view.leader_count = 3;
  LeaderCost worst = [](const RoleAssignment&, const FormationView&,
                        const EnvironmentInfo&) { return 1e9; };
  auto plan = select_leaders(view, 3, worst, env_toward(1.0, 0.0));
  EXPECT_EQ(plan.new_leaders, (std::vector<int>{0, 1, 2}));
}

TEST(SelectLeaders, ExclusionFiltersCandidates) {
  auto view = pentagon_view();
  view.alive[0] = false;
  auto plan = select_leaders(view, 3, heading_alignment_cost, env_toward(1.0, 0.0), {0});
  EXPECT_EQ(plan.new_leaders, (std::vector<int>{2, 3, 4}));
  for (int id : plan.roster) EXPECT_NE(id, 0);
}

TEST(SelectLeaders, ErrorsAndDeterminism) {
  auto view = pentagon_view();
  LeaderCost bad = [](const RoleAssignment&, const FormationView&,
                      const EnvironmentInfo&) { return std::nan(""); };
  EXPECT_THROW(select_leaders(view, 3, bad, env_toward(1.0, 0.0)), ValidationError);
  EXPECT_THROW(select_leaders(view, 6, heading_alignment_cost, env_toward(1.0, 0.0)),
               NoViableAssignmentError);
  EXPECT_THROW(select_leaders(view, 2, heading_alignment_cost, env_toward(1.0, 0.0)),
               TooFewLeadersError);

  auto a = select_leaders(view, 3, path_balance_cost, env_toward(1.0, 0.0));
  auto b = select_leaders(view, 3, path_balance_cost, env_toward(1.0, 0.0));
  EXPECT_EQ(a.new_leaders, b.new_leaders);
  EXPECT_EQ(a.assignment.permutation, b.assignment.permutation);
  EXPECT_EQ(a.cost_value, b.cost_value);
}

TEST(LeaderCosts, DegenerateInputsAreSafe) {
  auto view = pentagon_view();
  RoleAssignment identity{{0, 1, 2}, {0, 1, 2, 3, 4}};

  EnvironmentInfo no_goal;
  no_goal.goal_direction = Vec::Zero(2);
  no_goal.next_waypoint = Vec::Zero(2);
  EXPECT_EQ(heading_alignment_cost(identity, view, no_goal), 0.0);

  EnvironmentInfo empty;
  EXPECT_EQ(path_balance_cost(identity, view, empty), 0.0);
  EXPECT_GE(path_balance_cost(identity, view, env_toward(1.0, 0.0)), 0.0);
}
