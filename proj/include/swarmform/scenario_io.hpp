#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmform/core.hpp"
#include "swarmform/sim_engine.hpp"

namespace swarmform {

/// Insertion-ordered JSON keeps serialization byte-deterministic.
using Json = nlohmann::ordered_json;

namespace detail {

inline std::string join_errors(const std::string& head, const std::vector<std::string>& list) {
  std::string out = head;
  for (const auto& e : list) {
    out += "\n  ";
    out += e;
  }
  return out;
}

inline Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json mat_json(const Mat& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// Parses and fully validates a scenario document (strict schema: unknown
/// fields are rejected). Collects every problem found, both structural and
/// semantic, before throwing.
inline Scenario parse_scenario_json(const Json& root) {
  if (!root.is_object()) throw ParseError("scenario root must be a JSON object");
  std::vector<std::string> errors;
  auto err = [&](const std::string& path, const std::string& what) {
    errors.push_back(path + ": " + what);
  };
  auto join = [](const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  };
  auto check_keys = [&](const Json& obj, const std::string& prefix,
                        std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : allowed) {
        if (it.key() == k) {
          known = true;
          break;
        }
      }
      if (!known) err(join(prefix, it.key()), "unknown field (strict schema)");
    }
  };
  auto find = [](const Json& obj, const char* key) -> const Json* {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  };
  auto get_double = [&](const Json& obj, const std::string& prefix, const char* key, double& out,
                        bool required) {
    const Json* f = find(obj, key);
    if (f == nullptr) {
      if (required) err(join(prefix, key), "missing required field");
      return false;
    }
    if (!f->is_number()) {
      err(join(prefix, key), "must be a number");
      return false;
    }
    out = f->get<double>();
    return true;
  };
  auto get_vec = [&](const Json& arr, const std::string& path, int expect_d, Vec& out) {
    if (!arr.is_array()) {
      err(path, "must be an array of numbers");
      return false;
    }
    for (const auto& v : arr) {
      if (!v.is_number()) {
        err(path, "must contain only numbers");
        return false;
      }
    }
    if (expect_d > 0 && static_cast<int>(arr.size()) != expect_d) {
      err(path, "must have length " + std::to_string(expect_d));
      return false;
    }
    out.resize(static_cast<int>(arr.size()));
    for (size_t i = 0; i < arr.size(); ++i) out(static_cast<int>(i)) = arr[i].get<double>();
    return true;
  };

  Scenario sc;
  check_keys(root, "",
             {"schema", "name", "d", "dt_s", "duration_s", "seed", "nominal_m", "graph", "stress",
              "control", "failure_cost", "waypoints", "events"});

  if (const Json* f = find(root, "schema"); f == nullptr) {
    err("schema", "missing required field");
  } else if (!f->is_number_integer()) {
    err("schema", "must be an integer");
  } else if (f->get<long long>() != 1) {
    err("schema", "unsupported version (expected 1)");
  }

  if (const Json* f = find(root, "name"); f == nullptr) {
    err("name", "missing required field");
  } else if (!f->is_string()) {
    err("name", "must be a string");
  } else {
    sc.name = f->get<std::string>();
  }

  int d = -1;
  if (const Json* f = find(root, "d"); f == nullptr) {
    err("d", "missing required field");
  } else if (!f->is_number_integer()) {
    err("d", "must be an integer");
  } else {
    sc.d = f->get<int>();
    if (sc.d == 2 || sc.d == 3) {
      d = sc.d;
    } else {
      err("d", "must be 2 or 3");
    }
  }

  get_double(root, "", "dt_s", sc.dt_s, true);
  get_double(root, "", "duration_s", sc.duration_s, true);

  if (const Json* f = find(root, "seed"); f == nullptr) {
    err("seed", "missing required field");
  } else if (!f->is_number_integer() || (!f->is_number_unsigned() && f->get<long long>() < 0)) {
    err("seed", "must be a nonnegative integer");
  } else {
    sc.seed = f->get<std::uint64_t>();
  }

  if (const Json* f = find(root, "nominal_m"); f == nullptr) {
    err("nominal_m", "missing required field");
  } else if (!f->is_array() || f->empty()) {
    err("nominal_m", "must be a nonempty array of points");
  } else if (d > 0) {
    const int n = static_cast<int>(f->size());
    Mat pts(d, n);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      Vec p;
      if (!get_vec((*f)[i], "nominal_m[" + std::to_string(i) + "]", d, p)) {
        ok = false;
        continue;
      }
      pts.col(i) = p;
    }
    if (ok) {
      try {
        sc.nominal = Configuration(std::move(pts));
      } catch (const Error& e) {
        err("nominal_m", e.what());
      }
    }
  }

  if (const Json* f = find(root, "graph"); f == nullptr) {
    err("graph", "missing required field");
  } else if (!f->is_object()) {
    err("graph", "must be an object");
  } else {
    check_keys(*f, "graph", {"edges", "leaders"});
    if (const Json* e = find(*f, "edges"); e == nullptr) {
      err("graph.edges", "missing required field");
    } else if (!e->is_array()) {
      err("graph.edges", "must be an array of [tail, head] pairs");
    } else {
      for (size_t i = 0; i < e->size(); ++i) {
        const Json& pair = (*e)[i];
        const std::string path = "graph.edges[" + std::to_string(i) + "]";
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
            !pair[1].is_number_integer()) {
          err(path, "must be a [tail, head] integer pair");
        } else {
          sc.edges.push_back({pair[0].get<int>(), pair[1].get<int>()});
        }
      }
    }
    if (const Json* l = find(*f, "leaders"); l == nullptr) {
      err("graph.leaders", "missing required field");
    } else if (!l->is_array()) {
      err("graph.leaders", "must be an array of agent ids");
    } else {
      for (size_t i = 0; i < l->size(); ++i) {
        if (!(*l)[i].is_number_integer()) {
          err("graph.leaders[" + std::to_string(i) + "]", "must be an integer");
        } else {
          sc.leaders.push_back((*l)[i].get<int>());
        }
      }
    }
  }

  if (const Json* f = find(root, "stress"); f != nullptr) {
    if (!f->is_string()) {
      err("stress", "must be a string");
    } else {
      sc.stress_policy = f->get<std::string>();
    }
  }

  if (const Json* f = find(root, "control"); f != nullptr) {
    if (!f->is_object()) {
      err("control", "must be an object");
    } else {
      check_keys(*f, "control", {"k_p_per_s", "k_l_per_s", "speed_cap_mps"});
      get_double(*f, "control", "k_p_per_s", sc.control.k_p_per_s, false);
      get_double(*f, "control", "k_l_per_s", sc.control.k_l_per_s, false);
      get_double(*f, "control", "speed_cap_mps", sc.control.speed_cap_mps, false);
    }
  }

  if (const Json* f = find(root, "failure_cost"); f != nullptr) {
    if (!f->is_string()) {
      err("failure_cost", "must be a string");
    } else {
      sc.failure_cost = f->get<std::string>();
    }
  }

  if (const Json* f = find(root, "waypoints"); f != nullptr) {
    if (!f->is_array()) {
      err("waypoints", "must be an array");
    } else {
      for (size_t i = 0; i < f->size(); ++i) {
        const std::string path = "waypoints[" + std::to_string(i) + "]";
        const Json& w = (*f)[i];
        if (!w.is_object()) {
          err(path, "must be an object");
          continue;
        }
        check_keys(w, path, {"position_m", "speed_mps"});
        Waypoint wp;
        if (const Json* p = find(w, "position_m"); p == nullptr) {
          err(path + ".position_m", "missing required field");
        } else {
          get_vec(*p, path + ".position_m", d, wp.position_m);
        }
        get_double(w, path, "speed_mps", wp.speed_mps, true);
        sc.waypoints.push_back(std::move(wp));
      }
    }
  }

  if (const Json* f = find(root, "events"); f != nullptr) {
    if (!f->is_array()) {
      err("events", "must be an array");
    } else {
      for (size_t i = 0; i < f->size(); ++i) {
        const std::string path = "events[" + std::to_string(i) + "]";
        const Json& e = (*f)[i];
        if (!e.is_object()) {
          err(path, "must be an object");
          continue;
        }
        const Json* kind = find(e, "kind");
        if (kind == nullptr || !kind->is_string()) {
          err(path + ".kind", "missing or non-string kind");
          continue;
        }
        ScenarioEvent ev;
        get_double(e, path, "time_s", ev.time_s, true);
        const std::string k = kind->get<std::string>();
        if (k == "transform") {
          ev.kind = EventKind::Transform;
          check_keys(e, path, {"time_s", "kind", "matrix", "offset_m"});
          if (const Json* m = find(e, "matrix"); m == nullptr) {
            err(path + ".matrix", "missing required field");
          } else if (!m->is_array() || (d > 0 && static_cast<int>(m->size()) != d)) {
            err(path + ".matrix", "must be a d x d matrix");
          } else {
            const int rows = static_cast<int>(m->size());
            Mat a(rows, rows);
            bool ok = true;
            for (int r = 0; r < rows; ++r) {
              Vec row;
              if (!get_vec((*m)[r], path + ".matrix[" + std::to_string(r) + "]", rows, row)) {
                ok = false;
                continue;
              }
              a.row(r) = row.transpose();
            }
            if (ok) ev.a = std::move(a);
          }
          if (const Json* o = find(e, "offset_m"); o != nullptr) {
            get_vec(*o, path + ".offset_m", d, ev.b);
          } else if (d > 0) {
            ev.b = Vec::Zero(d);
          }
        } else if (k == "reorganize") {
          ev.kind = EventKind::Reorganize;
          check_keys(e, path, {"time_s", "kind", "new_leaders", "cost"});
          if (const Json* nl = find(e, "new_leaders"); nl != nullptr) {
            if (!nl->is_array()) {
              err(path + ".new_leaders", "must be an array of agent ids");
            } else {
              for (const auto& v : *nl) {
                if (!v.is_number_integer()) {
                  err(path + ".new_leaders", "must contain integers");
                  break;
                }
                ev.new_leaders.push_back(v.get<int>());
              }
            }
          }
          if (const Json* c = find(e, "cost"); c != nullptr) {
            if (!c->is_string()) {
              err(path + ".cost", "must be a string");
            } else {
              ev.cost = c->get<std::string>();
            }
          }
        } else if (k == "fail") {
          ev.kind = EventKind::Fail;
          check_keys(e, path, {"time_s", "kind", "agent"});
          if (const Json* a = find(e, "agent"); a == nullptr) {
            err(path + ".agent", "missing required field");
          } else if (!a->is_number_integer()) {
            err(path + ".agent", "must be an integer");
          } else {
            ev.agent = a->get<int>();
          }
        } else {
          err(path + ".kind", "unknown kind '" + k + "'");
          continue;
        }
        sc.events.push_back(std::move(ev));
      }
    }
  }

  if (!errors.empty()) {
    throw ValidationError(detail::join_errors("invalid scenario:", errors));
  }
  auto semantic = validate_scenario(sc);
  if (!semantic.empty()) {
    throw ValidationError(detail::join_errors("invalid scenario:", semantic));
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("scenario file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario_json(root);
}

namespace detail {

inline Json trace_event_json(const TraceEvent& ev) {
  Json j;
  j["kind"] = ev.kind;
  j["time_s"] = ev.time_s;
  if (ev.kind == "transform") {
    j["matrix"] = mat_json(ev.a);
    j["offset_m"] = vec_json(ev.b);
  } else if (ev.kind == "reorganize") {
    j["old_leaders"] = ev.old_leaders;
    j["new_leaders"] = ev.new_leaders;
    if (!ev.cost.empty()) j["cost"] = ev.cost;
    if (!std::isnan(ev.cost_value)) j["cost_value"] = ev.cost_value;
  } else if (ev.kind == "fail") {
    j["agent"] = ev.agent;
  }
  return j;
}

inline Json trace_tick_json(const TraceTick& tk) {
  Json j;
  j["kind"] = "tick";
  j["tick"] = tk.tick;
  j["time_s"] = tk.time_s;
  Json agents = Json::array();
  for (const auto& a : tk.agents) {
    Json ja;
    ja["id"] = a.id;
    ja["role"] = a.role == Role::Leader ? "leader" : "follower";
    ja["alive"] = a.alive;
    ja["pos_m"] = vec_json(a.position);
    ja["vel_mps"] = vec_json(a.velocity);
    if (a.alive && a.error.size() > 0) ja["err_m"] = vec_json(a.error);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  Json events = Json::array();
  for (const auto& ev : tk.events) events.push_back(trace_event_json(ev));
  j["events"] = std::move(events);
  return j;
}

inline Json trace_summary_json(const TraceSummary& s) {
  Json j;
  Json agents = Json::array();
  for (const auto& a : s.agents) {
    Json ja;
    ja["id"] = a.id;
    ja["path_length_m"] = a.path_length_m;
    ja["mean_speed_mps"] = a.mean_speed_mps;
    ja["max_speed_mps"] = a.max_speed_mps;
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  j["path_length_spread_m"] = s.path_length_spread_m;
  j["mean_speed_spread_mps"] = s.mean_speed_spread_mps;
  j["max_speed_spread_mps"] = s.max_speed_spread_mps;
  j["tracking_rms_mean_m"] = s.tracking_rms_mean_m;
  j["tracking_rms_max_m"] = s.tracking_rms_max_m;
  j["tracking_rms_final_m"] = s.tracking_rms_final_m;
  j["reorganizations"] = s.reorganizations;
  j["ticks"] = s.ticks;
  j["duration_s"] = s.duration_s;
  return j;
}

inline Vec parse_vec(const Json& arr, const std::string& what) {
  if (!arr.is_array()) throw ParseError(what + " must be an array of numbers");
  Vec v(static_cast<int>(arr.size()));
  for (size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ParseError(what + " must contain only numbers");
    v(static_cast<int>(i)) = arr[i].get<double>();
  }
  return v;
}

inline Mat parse_mat(const Json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty()) throw ParseError(what + " must be an array of rows");
  const int r = static_cast<int>(rows.size());
  Mat m;
  for (int i = 0; i < r; ++i) {
    Vec row = parse_vec(rows[i], what);
    if (i == 0) m.resize(r, row.size());
    if (row.size() != m.cols()) throw ParseError(what + " rows differ in length");
    m.row(i) = row.transpose();
  }
  return m;
}

template <typename T>
inline T require_field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + " is missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + " field '" + key + "' has the wrong type");
  }
}

inline TraceEvent parse_trace_event(const Json& j, const std::string& where) {
  TraceEvent ev;
  ev.kind = require_field<std::string>(j, "kind", where);
  ev.time_s = require_field<double>(j, "time_s", where);
  if (ev.kind == "transform") {
    ev.a = parse_mat(j.contains("matrix") ? j["matrix"] : Json(), where + ".matrix");
    ev.b = parse_vec(j.contains("offset_m") ? j["offset_m"] : Json(), where + ".offset_m");
  } else if (ev.kind == "reorganize") {
    if (j.contains("old_leaders")) {
      ev.old_leaders = require_field<std::vector<int>>(j, "old_leaders", where);
    }
    ev.new_leaders = require_field<std::vector<int>>(j, "new_leaders", where);
    if (j.contains("cost")) ev.cost = require_field<std::string>(j, "cost", where);
    if (j.contains("cost_value")) {
      ev.cost_value = require_field<double>(j, "cost_value", where);
    }
  } else if (ev.kind == "fail") {
    ev.agent = require_field<int>(j, "agent", where);
  } else {
    throw ParseError(where + " has unknown event kind '" + ev.kind + "'");
  }
  return ev;
}

inline TraceTick parse_trace_tick(const Json& j, const std::string& where) {
  TraceTick tk;
  tk.tick = require_field<long>(j, "tick", where);
  tk.time_s = require_field<double>(j, "time_s", where);
  auto agents = j.find("agents");
  if (agents == j.end() || !agents->is_array()) {
    throw ParseError(where + " is missing its agents array");
  }
  for (size_t i = 0; i < agents->size(); ++i) {
    const Json& ja = (*agents)[i];
    const std::string wa = where + ".agents[" + std::to_string(i) + "]";
    TraceAgent a;
    a.id = require_field<int>(ja, "id", wa);
    std::string role = require_field<std::string>(ja, "role", wa);
    if (role == "leader") {
      a.role = Role::Leader;
    } else if (role == "follower") {
      a.role = Role::Follower;
    } else {
      throw ParseError(wa + " has unknown role '" + role + "'");
    }
    a.alive = require_field<bool>(ja, "alive", wa);
    a.position = parse_vec(ja.contains("pos_m") ? ja["pos_m"] : Json(), wa + ".pos_m");
    a.velocity = parse_vec(ja.contains("vel_mps") ? ja["vel_mps"] : Json(), wa + ".vel_mps");
    if (ja.contains("err_m")) a.error = parse_vec(ja["err_m"], wa + ".err_m");
    tk.agents.push_back(std::move(a));
  }
  auto events = j.find("events");
  if (events == j.end() || !events->is_array()) {
    throw ParseError(where + " is missing its events array");
  }
  for (size_t i = 0; i < events->size(); ++i) {
    tk.events.push_back(
        parse_trace_event((*events)[i], where + ".events[" + std::to_string(i) + "]"));
  }
  return tk;
}

inline TraceSummary parse_trace_summary(const Json& j, const std::string& where) {
  TraceSummary s;
  auto agents = j.find("agents");
  if (agents == j.end() || !agents->is_array()) {
    throw ParseError(where + " is missing its agents array");
  }
  for (size_t i = 0; i < agents->size(); ++i) {
    const Json& ja = (*agents)[i];
    const std::string wa = where + ".agents[" + std::to_string(i) + "]";
    AgentMetrics m;
    m.id = require_field<int>(ja, "id", wa);
    m.path_length_m = require_field<double>(ja, "path_length_m", wa);
    m.mean_speed_mps = require_field<double>(ja, "mean_speed_mps", wa);
    m.max_speed_mps = require_field<double>(ja, "max_speed_mps", wa);
    s.agents.push_back(m);
  }
  s.path_length_spread_m = require_field<double>(j, "path_length_spread_m", where);
  s.mean_speed_spread_mps = require_field<double>(j, "mean_speed_spread_mps", where);
  s.max_speed_spread_mps = require_field<double>(j, "max_speed_spread_mps", where);
  s.tracking_rms_mean_m = require_field<double>(j, "tracking_rms_mean_m", where);
  s.tracking_rms_max_m = require_field<double>(j, "tracking_rms_max_m", where);
  s.tracking_rms_final_m = require_field<double>(j, "tracking_rms_final_m", where);
  s.reorganizations = require_field<long>(j, "reorganizations", where);
  s.ticks = require_field<long>(j, "ticks", where);
  s.duration_s = require_field<double>(j, "duration_s", where);
  return s;
}

}  // namespace detail

/// Writes the trace as JSON-lines: a header record, one record per tick, and
/// a final end record carrying the tick count and summary (which doubles as
/// the truncation check on read). Output bytes are deterministic.
inline void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  Json h;
  h["kind"] = "header";
  h["schema"] = trace.schema;
  h["library_version"] = trace.library_version;
  h["scenario_name"] = trace.scenario_name;
  h["scenario_hash"] = trace.scenario_hash;
  h["d"] = trace.d;
  h["n"] = trace.n;
  h["dt_s"] = trace.dt_s;
  out << h.dump() << '\n';
  for (const auto& tk : trace.ticks) out << detail::trace_tick_json(tk).dump() << '\n';
  Json e;
  e["kind"] = "end";
  e["ticks"] = static_cast<long>(trace.ticks.size());
  e["summary"] = detail::trace_summary_json(trace.summary);
  out << e.dump() << '\n';
  out.flush();
  if (!out) throw IoError("short write to '" + path + "'");
}

/// Reads a trace back; throws rather than returning a partial trace when the
/// file is truncated (missing end record or tick-count mismatch) or when the
/// schema version is unsupported.
inline Trace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ParseError("trace file '" + path + "' is empty");
  auto parse_line = [&](size_t i) {
    try {
      return Json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("trace line " + std::to_string(i + 1) + ": " + e.what());
    }
  };

  Json h = parse_line(0);
  if (!h.is_object() || h.value("kind", std::string()) != "header") {
    throw ParseError("first trace line is not a header record");
  }
  if (!h.contains("schema") || !h["schema"].is_number_integer()) {
    throw ParseError("trace header is missing its schema version");
  }
  if (h["schema"].get<int>() != 1) {
    throw SchemaVersionMismatchError("unsupported trace schema " + h["schema"].dump());
  }
  Trace t;
  t.schema = 1;
  t.library_version = detail::require_field<std::string>(h, "library_version", "header");
  t.scenario_name = detail::require_field<std::string>(h, "scenario_name", "header");
  t.scenario_hash = detail::require_field<std::string>(h, "scenario_hash", "header");
  t.d = detail::require_field<int>(h, "d", "header");
  t.n = detail::require_field<int>(h, "n", "header");
  t.dt_s = detail::require_field<double>(h, "dt_s", "header");

  bool saw_end = false;
  long declared_ticks = -1;
  for (size_t i = 1; i < lines.size(); ++i) {
    Json j = parse_line(i);
    const std::string where = "trace line " + std::to_string(i + 1);
    const std::string kind = j.value("kind", std::string());
    if (kind == "tick") {
      if (saw_end) throw ParseError(where + ": tick record after the end record");
      t.ticks.push_back(detail::parse_trace_tick(j, where));
    } else if (kind == "end") {
      if (saw_end) throw ParseError(where + ": duplicate end record");
      declared_ticks = detail::require_field<long>(j, "ticks", where);
      auto s = j.find("summary");
      if (s == j.end()) throw ParseError(where + ": end record is missing its summary");
      t.summary = detail::parse_trace_summary(*s, where + ".summary");
      saw_end = true;
    } else {
      throw ParseError(where + ": unknown record kind '" + kind + "'");
    }
  }
  if (!saw_end) throw ParseError("trace file '" + path + "' is truncated (no end record)");
  if (declared_ticks != static_cast<long>(t.ticks.size())) {
    throw ParseError("trace file '" + path + "' is truncated (" +
                     std::to_string(t.ticks.size()) + " tick records, end record declares " +
                     std::to_string(declared_ticks) + ")");
  }
  return t;
}

/// Flat CSV projection of a trace (one row per agent per tick) for plotting.
inline void write_trace_csv(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  static const char* axis[3] = {"x", "y", "z"};
  out << "tick,time_s,agent,role,alive";
  for (const char* p : {"pos", "vel", "err"}) {
    for (int k = 0; k < trace.d; ++k) out << ',' << p << '_' << axis[k];
  }
  out << '\n';
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& tk : trace.ticks) {
    for (const auto& a : tk.agents) {
      out << tk.tick << ',' << num(tk.time_s) << ',' << a.id << ','
          << (a.role == Role::Leader ? "leader" : "follower") << ',' << (a.alive ? 1 : 0);
      for (int k = 0; k < trace.d; ++k) out << ',' << num(a.position(k));
      for (int k = 0; k < trace.d; ++k) out << ',' << num(a.velocity(k));
      for (int k = 0; k < trace.d; ++k) {
        out << ',';
        if (a.error.size() > 0) out << num(a.error(k));
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace swarmform
