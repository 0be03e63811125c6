#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ribbon/commands.hpp"
#include "ribbon/io.hpp"
#include "ribbon/properties.hpp"

namespace {

// command-line spellings of the configuration keys
const std::vector<std::pair<std::string, std::string>> kConfigFlags = {
    {"preset", "moebius | helix | circle | straight"},
    {"N", "number of elements"},
    {"tau", "step size (default h/10)"},
    {"delta", "regularization (default h^(1/2))"},
    {"eps1", "penalty for y'.b (default h)"},
    {"eps2", "penalty for y'.b' (default h^(1/2))"},
    {"T", "time horizon (default 10)"},
    {"K", "step count, instead of T"},
    {"eps_stop", "stop once |d_t y|_star + |d_t b|_dagger falls below this"},
    {"snapshot_stride", "snapshot every this many steps"},
    {"output", "output directory (relative paths resolve against $RIBBON_OUTPUT_ROOT)"},
    {"width", "ribbon width used for the OBJ strips"},
    {"helix_axis", "z | x, axis of the helix preset"},
    {"twist_rate", "director twist rate of the preset"},
    {"guard", "off | halve, reaction to an energy increase"},
};

struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> flags;
};

void add_config_options(CLI::App& cmd, ConfigOptions& opts, bool with_preset = true) {
  cmd.add_option("--config", opts.file, "key = value configuration file")->check(CLI::ExistingFile);
  for (const auto& [key, help] : kConfigFlags) {
    if (key == "preset" && !with_preset) continue;
    cmd.add_option("--" + key, opts.flags[key], help);
  }
}

ribbon::RunConfig build_config(CLI::App& cmd, const ConfigOptions& opts) {
  ribbon::RunConfig cfg;
  if (!opts.file.empty()) cfg.apply(ribbon::read_key_values(opts.file));
  ribbon::KeyValues kv;
  for (const auto& [key, value] : opts.flags)
    if (cmd.count("--" + key) > 0) kv[key] = value;
  cfg.apply(kv);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient flow simulation of inextensible elastic ribbons"};
  app.require_subcommand(1);

  ConfigOptions run_opts;
  auto* run = app.add_subcommand("run", "run one flow and write energies, frames and OBJ strips");
  add_config_options(*run, run_opts);

  ConfigOptions table_opts;
  std::string table_preset;
  std::vector<int> table_ns{80, 160, 320};
  std::string table_out;
  auto* table = app.add_subcommand("table", "final energies for a list of meshes");
  table->add_option("preset", table_preset, "moebius | helix | circle | straight")->required();
  table->add_option("--meshes", table_ns, "element counts")->delimiter(',');
  table->add_option("--out", table_out, "write the table to this file as well");
  add_config_options(*table, table_opts, false);

  ribbon::VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "run the property suites of all modules");
  verify->add_option("--seed", verify_opts.seed, "random seed");
  verify->add_option("--samples", verify_opts.samples, "sample count of the density sweeps");
  verify->add_option("--fault", verify_opts.fault, "inject a known fault (psi-ds-sign)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto summary = ribbon::cmd_run(build_config(*run, run_opts), &std::cout);
      std::cout << "wrote " << summary.output_dir.string() << '\n';
      return 0;
    }
    if (*table) {
      ribbon::RunConfig cfg = build_config(*table, table_opts);
      cfg.preset = table_preset;
      const auto entries = ribbon::run_table(cfg, table_ns, &std::cerr);
      const std::string text = ribbon::format_table(entries);
      std::cout << text;
      if (!table_out.empty()) ribbon::open_output(table_out) << text;
      return 0;
    }
    if (*verify) return ribbon::cmd_verify(verify_opts, std::cout) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
