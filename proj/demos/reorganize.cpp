// Walks a pentagon formation through a leader failure: enumerates the viable
// role assignments, then runs the selector and prints the chosen plan.

#include <cmath>
#include <cstdio>

#include "swarmform/swarmform.hpp"

using namespace swarmform;

static Configuration pentagon() {
  Mat r(2, 5);
  const double R = 0.6 / std::sin(M_PI / 5.0);
  for (int k = 0; k < 5; ++k) {
    const double a = M_PI / 2.0 + 2.0 * M_PI * k / 5.0;
    r(0, k) = R * std::cos(a);
    r(1, k) = R * std::sin(a);
  }
  return Configuration(r);
}

int main() {
  Configuration nominal = pentagon();

  auto assignments = enumerate_viable_assignments(nominal, 3);
  std::printf("viable role assignments with 3 leaders: %zu\n",
              assignments.size());
  for (const auto& a : assignments) {
    std::printf("  leaders {%d,%d,%d}  slots [", a.leaders[0], a.leaders[1],
                a.leaders[2]);
    for (std::size_t i = 0; i < a.permutation.size(); ++i)
      std::printf("%s%d", i ? " " : "", a.permutation[i]);
    std::printf("]\n");
  }

  FormationView view;
  view.nominal = nominal;
  view.positions = nominal;
  view.alive = {true, true, true, true, true};
  view.leader_count = 3;

  EnvironmentInfo env;
  env.goal_direction = Vec::Zero(2);
  env.goal_direction(0) = 1.0;
  env.next_waypoint = Vec::Zero(2);
  env.commanded_speed_mps = 1.0;

  // agent 0 just failed while leading; pick replacements facing the goal
  view.alive[0] = false;
  auto plan = select_leaders(view, 3, heading_alignment_cost, env, {0});

  std::printf("\nafter failure of agent 0:\n  new leaders {");
  for (std::size_t i = 0; i < plan.new_leaders.size(); ++i)
    std::printf("%s%d", i ? "," : "", plan.new_leaders[i]);
  std::printf("}\n  localizable: %s\n",
              plan.report.localizable ? "yes" : "no");
  std::printf("  det omega_ff: %.6f\n", plan.report.det_omega_ff);
  std::printf("  switch latency: %.3f ms\n", plan.switch_latency_s * 1e3);
  return 0;
}
