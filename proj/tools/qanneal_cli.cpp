// qanneal: command line front end for the annealing simulator.
//
//   qanneal run --preset <name> [--set key=value]...
//   qanneal sweep --preset <name> --axis <key> --values a,b,c [--jobs N]
//   qanneal optimize --preset <name> [--mode uniform|per-site]
//   qanneal cumulative --preset fig7
//   qanneal config --preset <name>        print the resolved configuration
//
// Output goes to --out, else $QANNEAL_OUT, else ./qanneal-out.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "qanneal/runner.hpp"

namespace {

struct Common {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_jobs) {
  cmd->add_option("--preset", c.preset, "named preset")->required();
  cmd->add_option("--config", c.config_file, "JSON document merged over the preset");
  cmd->add_option("--set", c.sets, "override, key=value (dotted keys, repeatable)");
  cmd->add_option("--out", c.out, "output root");
  if (with_jobs) cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

qanneal::RunConfig load(const Common& c) {
  using namespace qanneal;
  json j = to_json(preset(c.preset));
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw Error(Errc::io_error, "cannot read " + c.config_file);
    json patch;
    try {
      patch = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::config_error, c.config_file + ": " + e.what());
    }
    j.merge_patch(patch);
    j["preset"] = c.preset;
  }
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::config_error, "--set expects key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return apply_overrides(config_from_json(j), kv);
}

qanneal::RunOptions options(const Common& c) {
  qanneal::RunOptions o;
  o.root = c.out.empty() ? qanneal::default_output_root() : qanneal::fs::path(c.out);
  o.jobs = c.jobs;
  return o;
}

int report(const qanneal::Report& r) {
  qanneal::json files = qanneal::json::array();
  for (const auto& f : r.files) files.push_back(f.string());
  std::cout << qanneal::json{{"dir", r.dir.string()}, {"files", files}, {"failures", r.failures}}.dump(2) << '\n';
  return r.failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-system quantum annealing of transverse-field Ising models"};
  app.require_subcommand(1);

  Common run_c, sweep_c, opt_c, cum_c, cfg_c;
  auto* run = app.add_subcommand("run", "evolve every point of the preset grid");
  add_common(run, run_c, true);

  auto* sweep = app.add_subcommand("sweep", "vary one key over a list of values");
  add_common(sweep, sweep_c, true);
  std::string axis;
  std::vector<double> values;
  sweep->add_option("--axis", axis, "config key (dotted) or alias kappa_uniform / tau")->required();
  sweep->add_option("--values", values, "comma separated values")->required()->delimiter(',');

  auto* optimize = app.add_subcommand("optimize", "Nelder-Mead search over the couplings");
  add_common(optimize, opt_c, false);
  std::string mode;
  optimize->add_option("--mode", mode, "uniform or per-site")->check(CLI::IsMember({"uniform", "per-site", "per_site"}));

  auto* cumulative = app.add_subcommand("cumulative", "cumulative failure probability of repeated runs");
  add_common(cumulative, cum_c, true);

  auto* config = app.add_subcommand("config", "print the resolved configuration");
  add_common(config, cfg_c, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return report(qanneal::cmd_run(load(run_c), options(run_c)));
    if (*sweep) return report(qanneal::cmd_sweep(load(sweep_c), axis, values, options(sweep_c)));
    if (*optimize) return report(qanneal::cmd_optimize(load(opt_c), mode, options(opt_c)));
    if (*cumulative) return report(qanneal::cmd_cumulative(load(cum_c), options(cum_c)));
    if (*config) {
      qanneal::RunConfig r = qanneal::resolve(load(cfg_c));
      qanneal::validate(r);
      std::cout << qanneal::to_json(r).dump(2) << '\n';
      return 0;
    }
  } catch (const qanneal::Error& e) {
    std::cerr << qanneal::json{{"error", std::string(qanneal::to_string(e.code()))}, {"message", e.what()}}.dump()
              << '\n';
    return e.code() == qanneal::Errc::config_error ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << qanneal::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
