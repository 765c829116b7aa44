#pragma once

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swarmform/affine_geometry.hpp"
#include "swarmform/core.hpp"
#include "swarmform/formation_graph.hpp"
#include "swarmform/reorganizer.hpp"
#include "swarmform/scenario_io.hpp"
#include "swarmform/sim_engine.hpp"
#include "swarmform/stress_solver.hpp"

namespace swarmform {

namespace detail {

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

inline std::string id_list(const std::vector<int>& ids) {
  std::string s = "[";
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(ids[i]);
  }
  return s + "]";
}

inline int run_command(const std::string& scenario_path, const std::string& out_dir,
                       double dt_override, long long seed_override, bool csv,
                       std::ostream& out) {
  Scenario sc = load_scenario(scenario_path);
  if (dt_override > 0.0) sc.dt_s = dt_override;
  if (seed_override >= 0) sc.seed = static_cast<std::uint64_t>(seed_override);
  Simulator sim(sc);
  Trace trace = sim.run();

  std::filesystem::create_directories(out_dir);
  std::filesystem::path base = std::filesystem::path(out_dir) / (sc.name + ".trace");
  std::string trace_path = base.string() + ".jsonl";
  write_trace(trace, trace_path);
  out << "trace: " << trace_path << "\n";
  if (csv) {
    std::string csv_path = base.string() + ".csv";
    write_trace_csv(trace, csv_path);
    out << "csv: " << csv_path << "\n";
  }

  const TraceSummary& s = trace.summary;
  out << "scenario: " << sc.name << " (hash " << trace.scenario_hash << ")\n";
  out << "ticks: " << s.ticks << "  duration_s: " << fmt(s.duration_s) << "\n";
  out << "reorganizations: " << s.reorganizations;
  const auto& lat = sim.measured_reorganization_latencies_s();
  if (!lat.empty()) {
    out << "  latencies_ms:";
    for (double l : lat) out << ' ' << fmt(l * 1e3, 4);
  }
  out << "\n";
  out << "tracking_rms_m: mean " << fmt(s.tracking_rms_mean_m) << "  max "
      << fmt(s.tracking_rms_max_m) << "  final " << fmt(s.tracking_rms_final_m) << "\n";
  out << "agent  path_m  mean_mps  max_mps\n";
  for (const auto& a : s.agents) {
    out << "  " << a.id << "  " << fmt(a.path_length_m) << "  " << fmt(a.mean_speed_mps) << "  "
        << fmt(a.max_speed_mps) << "\n";
  }
  out << "spreads: path " << fmt(s.path_length_spread_m) << " m, mean speed "
      << fmt(s.mean_speed_spread_mps) << " m/s, max speed " << fmt(s.max_speed_spread_mps)
      << " m/s\n";
  return 0;
}

inline int verify_command(const std::string& scenario_path, std::ostream& out) {
  Scenario sc = load_scenario(scenario_path);
  bool ok = true;
  auto report = [&](bool pass, const std::string& what) {
    out << (pass ? "ok:   " : "FAIL: ") << what << "\n";
    if (!pass) ok = false;
  };

  const int n = sc.nominal.count();
  const int nl = static_cast<int>(sc.leaders.size());
  out << "scenario: " << sc.name << " (n=" << n << ", d=" << sc.d << ", leaders "
      << id_list(sc.leaders) << ")\n";

  report(affinely_spans(sc.nominal), "nominal configuration affinely spans R^d");
  report(affinely_spans(sc.nominal.select(sc.leaders)), "leader positions affinely span R^d");

  FormationGraph g = FormationGraph::build(n, sc.d, sc.edges, sc.leaders);
  RootedWitness w = is_d_plus_1_rooted(g);
  report(w.rooted, std::string("graph is (d+1)-rooted") +
                       (w.rooted ? " with roots " + id_list(w.roots) : ""));

  try {
    Simulator sim(sc);
    const StressAssignment& stress = sim.state().stress;
    double residual = equilibrium_residual(stress, sc.nominal);
    report(residual <= Tol::equilibrium_m,
           "stress is an equilibrium stress (residual " + fmt(residual, 3) + " m)");
    LocalizabilityReport rep = is_affinely_localizable(stress);
    report(rep.localizable, "formation is affinely localizable (min sigma " +
                                fmt(rep.min_singular_value_ff, 3) + ", det " +
                                fmt(rep.det_omega_ff, 3) + ")");
  } catch (const Error& e) {
    report(false, std::string("stress construction failed: ") + e.what());
  }

  int viable_sets = 0, total_sets = 0;
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  swarmform::detail::for_each_combination(all, nl, [&](const std::vector<int>& set) {
    ++total_sets;
    bool viable =
        !swarmform::detail::viable_assignments_for_leader_set(sc.nominal, set, Tol::membership_m,
                                                              true)
             .empty();
    if (viable) ++viable_sets;
    out << "  leader set " << id_list(set) << ": " << (viable ? "viable" : "not viable") << "\n";
    return false;
  });
  report(viable_sets > 0, "at least one viable leader set of size " + std::to_string(nl) + " (" +
                              std::to_string(viable_sets) + "/" + std::to_string(total_sets) +
                              " viable)");

  out << (ok ? "verify: PASS" : "verify: FAIL") << "\n";
  return ok ? 0 : 1;
}

inline int enumerate_command(const std::string& scenario_path, int nl, std::ostream& out) {
  Scenario sc = load_scenario(scenario_path);
  if (nl <= 0) nl = static_cast<int>(sc.leaders.size());
  if (nl < sc.d + 1 || nl > sc.nominal.count()) {
    out << "invalid leader count " << nl << " (need d+1 <= nl <= n)\n";
    return 1;
  }
  auto assignments = enumerate_viable_assignments(sc.nominal, nl);
  if (assignments.empty()) {
    out << "no viable assignments\n";
    return 1;
  }
  out << assignments.size() << " viable assignments with " << nl << " leaders:\n";
  for (const auto& a : assignments) {
    out << "  leaders " << id_list(a.leaders) << "  slots " << id_list(a.permutation) << "\n";
  }
  return 0;
}

inline int probe_command(const std::string& scenario_path, double sigma, int draws,
                         long long seed_override, std::ostream& out) {
  Scenario sc = load_scenario(scenario_path);
  std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : sc.seed;

  Simulator sim(sc);
  StressAssignment scenario_stress = sim.state().stress;

  FormationGraph g = FormationGraph::build(sc.nominal.count(), sc.d, sc.edges, sc.leaders);
  std::vector<int> followers = g.followers();
  auto leader_only_edges = power_centric_topology(sc.leaders, followers, sc.d);
  FormationGraph leader_only =
      FormationGraph::build(sc.nominal.count(), sc.d, leader_only_edges, sc.leaders);
  Configuration anchors = sc.nominal.select(sc.leaders);
  EdgeWeights weights;
  for (int a : sc.leaders) {
    for (int b : sc.leaders) {
      if (a != b) weights[{a, b}] = 0.0;
    }
  }
  for (int f : followers) {
    PerFollowerStress pf = per_follower_stress(sc.nominal.point(f), anchors);
    for (size_t j = 0; j < sc.leaders.size(); ++j) weights[{sc.leaders[j], f}] = pf.weights[j];
  }
  StressAssignment leader_only_stress = make_stress_assignment(leader_only, std::move(weights));

  auto results = error_propagation_probe({leader_only_stress, scenario_stress}, sigma, draws, seed);
  out << "error propagation at sigma " << fmt(sigma) << " m, " << draws << " draws, seed " << seed
      << ":\n";
  const char* names[2] = {"leader-only (power-centric)", "scenario topology"};
  for (size_t i = 0; i < results.size(); ++i) {
    out << "  " << names[i] << ": rms " << fmt(results[i].rms_m) << " m, per-follower rms [";
    for (size_t k = 0; k < results[i].per_follower_rms_m.size(); ++k) {
      if (k > 0) out << ", ";
      out << fmt(results[i].per_follower_rms_m[k]);
    }
    out << "]\n";
  }
  if (results[1].rms_m > 0.0) {
    out << "  amplification (scenario / leader-only): "
        << fmt(results[0].rms_m > 0.0 ? results[1].rms_m / results[0].rms_m : 0.0) << "\n";
  }
  return 0;
}

inline int metrics_command(const std::string& trace_path, std::ostream& out) {
  Trace trace = read_trace(trace_path);
  TraceSummary recomputed = metrics(trace);
  const TraceSummary& s = trace.summary;

  double drift = std::abs(recomputed.tracking_rms_mean_m - s.tracking_rms_mean_m) +
                 std::abs(recomputed.tracking_rms_final_m - s.tracking_rms_final_m) +
                 std::abs(recomputed.duration_s - s.duration_s);
  for (size_t i = 0; i < s.agents.size() && i < recomputed.agents.size(); ++i) {
    drift += std::abs(recomputed.agents[i].path_length_m - s.agents[i].path_length_m);
  }
  bool consistent = recomputed.agents.size() == s.agents.size() &&
                    recomputed.ticks == s.ticks &&
                    recomputed.reorganizations == s.reorganizations && drift <= 1e-12;

  out << "trace: " << trace.scenario_name << " (schema " << trace.schema << ", library "
      << trace.library_version << ", hash " << trace.scenario_hash << ")\n";
  out << "ticks: " << s.ticks << "  duration_s: " << fmt(s.duration_s)
      << "  reorganizations: " << s.reorganizations << "\n";
  out << "tracking_rms_m: mean " << fmt(s.tracking_rms_mean_m) << "  max "
      << fmt(s.tracking_rms_max_m) << "  final " << fmt(s.tracking_rms_final_m) << "\n";
  out << "agent  path_m  mean_mps  max_mps\n";
  for (const auto& a : s.agents) {
    out << "  " << a.id << "  " << fmt(a.path_length_m) << "  " << fmt(a.mean_speed_mps) << "  "
        << fmt(a.max_speed_mps) << "\n";
  }
  out << "spreads: path " << fmt(s.path_length_spread_m) << " m, mean speed "
      << fmt(s.mean_speed_spread_mps) << " m/s, max speed " << fmt(s.max_speed_spread_mps)
      << " m/s\n";
  out << "summary integrity: " << (consistent ? "ok" : "MISMATCH (stored vs recomputed)") << "\n";
  return consistent ? 0 : 1;
}

}  // namespace detail

/// Command-line front end; args is the full argv including the program name.
/// Exit codes: 0 success, 1 validation or verification failure, 2 runtime
/// error.
inline int cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"affine formation scenarios: stresses, reorganization, simulation"};
  app.require_subcommand(1);

  std::string scenario_path, trace_path, out_dir = ".";
  double dt_override = -1.0, sigma = 0.01;
  long long seed_override = -1;
  int nl = 0, draws = 2000;
  bool csv = false;

  CLI::App* run = app.add_subcommand("run", "simulate a scenario and write its trace");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--out", out_dir, "output directory (default .)");
  run->add_option("--dt", dt_override, "override dt_s");
  run->add_option("--seed", seed_override, "override the scenario seed");
  run->add_flag("--csv", csv, "also write the CSV projection");

  CLI::App* verify = app.add_subcommand("verify", "check span/rootedness/stress/viability");
  verify->add_option("scenario", scenario_path, "scenario JSON file")->required();

  CLI::App* enumerate = app.add_subcommand("enumerate", "list viable role assignments");
  enumerate->add_option("scenario", scenario_path, "scenario JSON file")->required();
  enumerate->add_option("--nl", nl, "leader count (default: the scenario's)");

  CLI::App* probe = app.add_subcommand("probe", "compare error propagation across topologies");
  probe->add_option("scenario", scenario_path, "scenario JSON file")->required();
  probe->add_option("--sigma", sigma, "noise sigma in meters (default 0.01)");
  probe->add_option("--draws", draws, "Monte-Carlo draws (default 2000)");
  probe->add_option("--seed", seed_override, "override the scenario seed");

  CLI::App* metrics_cmd = app.add_subcommand("metrics", "summarize a trace file");
  metrics_cmd->add_option("trace", trace_path, "trace JSONL file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      return detail::run_command(scenario_path, out_dir, dt_override, seed_override, csv, out);
    }
    if (verify->parsed()) return detail::verify_command(scenario_path, out);
    if (enumerate->parsed()) return detail::enumerate_command(scenario_path, nl, out);
    if (probe->parsed()) return detail::probe_command(scenario_path, sigma, draws, seed_override, out);
    if (metrics_cmd->parsed()) return detail::metrics_command(trace_path, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const SchemaVersionMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace swarmform
