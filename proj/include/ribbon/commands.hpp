#pragma once

// Experiment driver behind the `run` and `table` subcommands.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ribbon/energy.hpp"
#include "ribbon/frames.hpp"
#include "ribbon/gradient_flow.hpp"
#include "ribbon/io.hpp"
#include "ribbon/mesh_fe.hpp"

namespace ribbon {

/// Environment variable naming the root for relative output directories.
inline constexpr const char* kOutputRootEnv = "RIBBON_OUTPUT_ROOT";

/// Run configuration. Unset optionals fall back to the default schedule
/// tau = h/10, eps1 = h, eps2 = h^{1/2}, delta = h^{1/2}, T = 10.
struct RunConfig {
  std::string preset = "moebius";  // moebius | helix | circle | straight
  std::optional<InitialData> custom;
  int N = 80;
  std::optional<double> tau, delta, eps1, eps2, horizon;
  std::optional<int> steps;
  std::optional<double> eps_stop;
  std::optional<int> snapshot_stride;
  std::filesystem::path output_dir;
  double width = 0.2;
  HelixAxis helix_axis = HelixAxis::z;
  std::optional<double> twist_rate;
  MonotonicityGuard guard = MonotonicityGuard::off;

  /// Applies `key = value` settings; unknown keys are rejected by name.
  void apply(const KeyValues& kv) {
    for (const auto& [key, value] : kv) {
      if (key == "preset") preset = value;
      else if (key == "N") N = parse_int(key, value);
      else if (key == "tau") tau = parse_double(key, value);
      else if (key == "delta") delta = parse_double(key, value);
      else if (key == "eps1") eps1 = parse_double(key, value);
      else if (key == "eps2") eps2 = parse_double(key, value);
      else if (key == "T") horizon = parse_double(key, value);
      else if (key == "K") steps = parse_int(key, value);
      else if (key == "eps_stop") eps_stop = parse_double(key, value);
      else if (key == "snapshot_stride") snapshot_stride = parse_int(key, value);
      else if (key == "output") output_dir = value;
      else if (key == "width") width = parse_double(key, value);
      else if (key == "twist_rate") twist_rate = parse_double(key, value);
      else if (key == "helix_axis") {
        if (value == "z") helix_axis = HelixAxis::z;
        else if (value == "x") helix_axis = HelixAxis::x;
        else throw std::invalid_argument("invalid value for `helix_axis`: " + value + " (expected x or z)");
      } else if (key == "guard") {
        if (value == "off") guard = MonotonicityGuard::off;
        else if (value == "halve") guard = MonotonicityGuard::halve_step;
        else throw std::invalid_argument("invalid value for `guard`: " + value + " (expected off or halve)");
      } else {
        throw std::invalid_argument("unknown configuration key `" + key + "`");
      }
    }
  }
};

/// Everything needed to start a flow.
struct ResolvedRun {
  InitialData data;
  Mesh mesh;
  FlowParams params;
  std::vector<int> snapshot_steps;  // sorted; always contains 0 and K
  std::filesystem::path output_dir;
};

inline InitialData preset_initial(const RunConfig& cfg) {
  if (cfg.custom) return *cfg.custom;
  if (cfg.preset == "moebius") return moebius_initial(2.0 * std::numbers::pi, cfg.twist_rate.value_or(1.5));
  if (cfg.preset == "helix") {
    HelixShape shape;
    shape.axis = cfg.helix_axis;
    return helix_initial(shape, cfg.twist_rate.value_or(1.0));
  }
  if (cfg.preset == "circle") return flat_circle_initial();
  if (cfg.preset == "straight") return straight_initial();
  throw std::invalid_argument("unknown preset `" + cfg.preset + "` (expected moebius, helix, circle or straight)");
}

/// Snapshot indices of the published figures for the two presets.
inline std::vector<int> preset_snapshot_steps(const std::string& preset) {
  if (preset == "moebius") return {0, 102, 204, 306, 408, 510, 2448, 5092};
  if (preset == "helix") return {0, 408, 816, 1224, 1632, 2040, 2448, 5092};
  return {0};
}

inline ResolvedRun resolve(const RunConfig& cfg) {
  if (cfg.N < 2) throw std::invalid_argument("N must be at least 2");
  if (!(cfg.width > 0.0)) throw std::invalid_argument("width must be positive");
  if (cfg.horizon && cfg.steps) throw std::invalid_argument("set at most one of T and K");
  InitialData data = preset_initial(cfg);
  Mesh mesh = make_uniform_mesh(data.length, cfg.N);
  const double h = mesh.h();

  FlowParams p;
  p.tau = cfg.tau.value_or(h / 10.0);
  p.reg.delta = cfg.delta.value_or(std::sqrt(h));
  p.reg.eps1 = cfg.eps1.value_or(h);
  p.reg.eps2 = cfg.eps2.value_or(std::sqrt(h));
  if (cfg.steps) p.steps = *cfg.steps;
  else p.horizon = cfg.horizon.value_or(10.0);
  p.eps_stop = cfg.eps_stop;
  p.guard = cfg.guard;
  p.validate();

  const int K = p.step_count();
  std::set<int> snaps{0, K};
  if (cfg.snapshot_stride) {
    if (*cfg.snapshot_stride < 1) throw std::invalid_argument("snapshot_stride must be positive");
    for (int k = 0; k <= K; k += *cfg.snapshot_stride) snaps.insert(k);
  } else {
    for (const int k : preset_snapshot_steps(cfg.custom ? std::string() : cfg.preset))
      if (k <= K) snaps.insert(k);
  }

  std::filesystem::path out = cfg.output_dir.empty()
                                  ? std::filesystem::path(cfg.preset + "_N" + std::to_string(cfg.N))
                                  : cfg.output_dir;
  if (out.is_relative())
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) out = std::filesystem::path(root) / out;

  return {std::move(data), std::move(mesh), p, std::vector<int>(snaps.begin(), snaps.end()), out};
}

/// `key = value` echo of the parameters actually used.
inline std::string parameter_echo(const RunConfig& cfg, const ResolvedRun& run) {
  const auto& p = run.params;
  std::string s;
  auto line = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  line("preset", cfg.custom ? "custom" : cfg.preset);
  if (cfg.preset == "helix" && !cfg.custom) line("helix_axis", cfg.helix_axis == HelixAxis::z ? "z" : "x");
  line("N", std::to_string(cfg.N));
  line("L", format_number(run.mesh.length()));
  line("h", format_number(run.mesh.h()));
  line("tau", format_number(p.tau));
  line("delta", format_number(p.reg.delta));
  line("eps1", format_number(p.reg.eps1));
  line("eps2", format_number(p.reg.eps2));
  if (p.horizon) line("T", format_number(*p.horizon));
  line("K", std::to_string(p.step_count()));
  if (p.eps_stop) line("eps_stop", format_number(*p.eps_stop));
  line("guard", p.guard == MonotonicityGuard::off ? "off" : "halve");
  line("width", format_number(cfg.width));
  return s;
}

struct RunSummary {
  FlowResult flow;
  std::filesystem::path output_dir;
  int csv_rows = 0;
};

inline void write_snapshot(const std::filesystem::path& dir, int k, const Mesh& mesh, const FrameState& s,
                           double width) {
  char tag[16];
  std::snprintf(tag, sizeof(tag), "%06d", k);
  write_frame_csv(dir / ("frame_" + std::string(tag) + ".csv"), mesh, s);
  write_element_csv(dir / ("elements_" + std::string(tag) + ".csv"), mesh, s);
  write_ribbon_obj(dir / ("ribbon_" + std::string(tag) + ".obj"), mesh, s, width);
}

/// Runs one flow and writes energies.csv, params.txt and snapshots under
/// the output directory.
inline RunSummary cmd_run(const RunConfig& cfg, std::ostream* log = nullptr) {
  const ResolvedRun run = resolve(cfg);
  const auto& mesh = run.mesh;
  const FEMatrices fe = assemble_matrices(mesh);
  const DiscreteInitial init = discretize_initial(run.data, mesh);

  const auto snap_dir = run.output_dir / "snapshots";
  std::filesystem::create_directories(snap_dir);
  {
    auto echo = open_output(run.output_dir / "params.txt");
    echo << parameter_echo(cfg, run);
  }
  auto csv = open_output(run.output_dir / "energies.csv");
  csv << kEnergyCsvHeader;

  write_snapshot(snap_dir, 0, mesh, init.state, cfg.width);
  const int K = run.params.step_count();
  std::size_t next_snap = 1;  // snapshot_steps[0] == 0
  int rows = 0;
  const StepSink sink = [&](const StepReport& r, const FrameState& s) {
    csv << energy_csv_row(r);
    ++rows;
    while (next_snap < run.snapshot_steps.size() && run.snapshot_steps[next_snap] < r.k) ++next_snap;
    if (next_snap < run.snapshot_steps.size() && run.snapshot_steps[next_snap] == r.k) {
      write_snapshot(snap_dir, r.k, mesh, s, cfg.width);
      ++next_snap;
    }
    if (log && (r.k % 500 == 0 || r.k == K))
      *log << "k = " << r.k << "  E = " << format_number(r.energy.total) << '\n';
  };
  RunSummary out;
  out.flow = run_flow(mesh, fe, init.state, init.bc, run.params, sink);
  // a tolerance stop ends the run before the scheduled final snapshot
  if (out.flow.steps != K) write_snapshot(snap_dir, out.flow.steps, mesh, out.flow.final_state, cfg.width);
  out.output_dir = run.output_dir;
  out.csv_rows = rows;
  if (log)
    *log << "final E_quad = " << format_number(out.flow.final_energy.total) << " after " << out.flow.steps
         << " steps; " << out.flow.energy_increases << " energy increases\n";
  return out;
}

struct TableEntry {
  int N = 0;
  double energy = 0.0;
  FlowResult flow;
  std::string echo;
};

/// Final-iterate energies for a list of meshes, with the parameter echo of
/// every run.
inline std::vector<TableEntry> run_table(const RunConfig& base, const std::vector<int>& Ns, std::ostream* log = nullptr) {
  if (Ns.empty()) throw std::invalid_argument("table: N list is empty");
  std::vector<TableEntry> out;
  for (const int N : Ns) {
    RunConfig cfg = base;
    cfg.N = N;
    const ResolvedRun run = resolve(cfg);
    const FEMatrices fe = assemble_matrices(run.mesh);
    const DiscreteInitial init = discretize_initial(run.data, run.mesh);
    TableEntry e;
    e.N = N;
    e.flow = run_flow(run.mesh, fe, init.state, init.bc, run.params);
    e.energy = e.flow.final_energy.total;
    e.echo = parameter_echo(cfg, run);
    if (log) *log << "N = " << N << ": E_quad = " << format_number(e.energy) << '\n';
    out.push_back(std::move(e));
  }
  return out;
}

/// Table in the layout of the published convergence tables.
inline std::string format_table(const std::vector<TableEntry>& entries) {
  std::string head = "| N ~ 1/h |", sep = "|---|", row = "| E_quad |";
  for (const auto& e : entries) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.4f |", e.energy);
    head += " " + std::to_string(e.N) + " |";
    sep += "---|";
    row += buf;
  }
  std::string s = head + "\n" + sep + "\n" + row + "\n";
  for (const auto& e : entries) {
    s += "\n# N = " + std::to_string(e.N) + "\n";
    s += "E_quad = " + format_number(e.energy) + "\n" + e.echo;
  }
  return s;
}

}  // namespace ribbon
