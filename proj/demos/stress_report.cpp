// Computes an equilibrium stress for a complete graph over a unit square and
// reports the weights, block structure and localizability diagnostics.

#include <cstdio>

#include "swarmform/swarmform.hpp"

using namespace swarmform;

int main() {
  Mat r(2, 4);
  r << 0.5, -0.5, -0.5, 0.5,
       0.5, 0.5, -0.5, -0.5;
  Configuration nominal(r);

  auto g = FormationGraph::build(4, 2, complete_digraph_edges(4),
                                 {0, 1, 2});
  auto stress = compute_equilibrium_stress(g, nominal);

  std::printf("stress weights (undirected support):\n");
  for (const auto& [edge, w] : stress.weights) {
    if (edge.first < edge.second)
      std::printf("  (%d,%d)  % .6f\n", edge.first, edge.second, w);
  }

  std::printf("\nequilibrium residual: %.3e m\n",
              equilibrium_residual(stress, nominal));

  auto report = is_affinely_localizable(stress);
  std::printf("localizable: %s\n", report.localizable ? "yes" : "no");
  std::printf("det omega_ff: %.6f\n", report.det_omega_ff);
  std::printf("min singular value of omega_ff: %.6f\n",
              report.min_singular_value_ff);

  Mat lead(2, 3);
  lead << 1.5, 0.5, 0.5,
          1.5, 1.5, 0.5;
  Configuration followers =
      follower_positions_from_leaders(stress, Configuration(lead));
  std::printf("\nfollower position from shifted leaders: (%.4f, %.4f)\n",
              followers.point(0)(0), followers.point(0)(1));
  return 0;
}
