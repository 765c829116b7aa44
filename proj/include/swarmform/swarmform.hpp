#pragma once

#include "swarmform/affine_geometry.hpp"
#include "swarmform/cli.hpp"
#include "swarmform/core.hpp"
#include "swarmform/formation_graph.hpp"
#include "swarmform/reorganizer.hpp"
#include "swarmform/scenario_io.hpp"
#include "swarmform/sim_engine.hpp"
#include "swarmform/stress_solver.hpp"
#include "swarmform/version.hpp"
