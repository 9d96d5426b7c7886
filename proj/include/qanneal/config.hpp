#pragma once

// Run configuration: a versioned preset table, dotted-key overrides and
// resolution of the "auto" fields (pinning m0, initial field mx0).

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qanneal/bath.hpp"
#include "qanneal/error.hpp"
#include "qanneal/evolve.hpp"
#include "qanneal/model.hpp"
#include "qanneal/optimize.hpp"
#include "qanneal/redfield.hpp"

namespace qanneal {

using nlohmann::json;

inline constexpr int kConfigVersion = 1;

struct InstanceSpec {
  GraphClass graph = GraphClass::linear;
  int n = 3;
  std::uint64_t seed = 1;  // graph sampler (noncomplete class)
  std::string coupling = "uniform";  // uniform | gaussian
  double J = 1.0;
  double mean = -2.0;
  double std = 0.1;
  std::uint64_t coupling_seed = 1;
  std::optional<double> m0;  // nullopt = auto: 0.1 mean |J|
  bool operator==(const InstanceSpec&) const = default;
};

struct ScheduleSpec {
  std::optional<double> mx0;  // nullopt = auto: mx0_factor * max row sum |J|
  double mx0_factor = 20.0;
  double tau = 0.5;
  ScheduleMode mode = ScheduleMode::annealed;
  bool operator==(const ScheduleSpec&) const = default;
};

struct KappaSpec {
  std::string mode = "uniform";  // uniform | explicit
  double value = 0.0;
  std::vector<double> values;
  bool operator==(const KappaSpec&) const = default;
};

struct EvolveSpec {
  double t_max = 6.0;
  double t_max_per_tau = 0.0;  // > 0: t_max = t_max_per_tau * tau
  int samples = 50;            // sample_dt = t_max / samples
  std::string step = "adaptive";
  double rtol = 1e-6;
  double atol = 1e-9;
  double h = 1e-3;
  double rebuild_rel_tol = 1e-2;
  std::string secular = "strict";
  double secular_factor = 10.0;
  std::uint64_t nonzero_budget = kDefaultNonzeroBudget;
  bool operator==(const EvolveSpec&) const = default;
};

struct OptimizeSpec {
  std::string mode = "per_site";  // uniform | per_site
  std::string target = "target";  // target | instantaneous
  std::string x0 = "uniform";     // uniform | random | best_grid
  double x0_value = 1.0;
  std::uint64_t seed = 7;
  OptimizerConfig nm;
  bool operator==(const OptimizeSpec&) const = default;
};

struct GridAxis {
  std::string axis;
  std::vector<double> values;
  bool operator==(const GridAxis&) const = default;
};

struct ExperimentSpec {
  std::vector<GridAxis> grid;
  bool trajectories = true;
  bool gap_profile = false;
  bool histogram = false;
  bool optimize = false;
  int frozen_chains = 0;
  int optimized_chains = 0;
  std::uint64_t chain_seed = 11;
  bool operator==(const ExperimentSpec&) const = default;
};

struct RunConfig {
  int version = kConfigVersion;
  std::string preset;
  InstanceSpec instance;
  BathParams bath{2.0, 30.0, 1.0};
  ScheduleSpec schedule;
  KappaSpec kappas;
  EvolveSpec evolve;
  OptimizeSpec optimize;
  ExperimentSpec experiment;
  bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline json auto_or(const std::optional<double>& v) { return v ? json(*v) : json("auto"); }

inline std::optional<double> parse_auto(const json& j, const char* what) {
  if (j.is_string()) {
    if (j.get<std::string>() == "auto") return std::nullopt;
    throw Error(Errc::config_error, std::string(what) + " must be a number or \"auto\"");
  }
  if (!j.is_number()) throw Error(Errc::config_error, std::string(what) + " must be a number or \"auto\"");
  return j.get<double>();
}

template <class T>
T get(const json& j, const char* section, const char* key) {
  if (!j.contains(key)) throw Error(Errc::config_error, std::string("missing field ") + section + "." + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::config_error, std::string("wrong type for ") + section + "." + key);
  }
}

inline void expect_one_of(const std::string& v, std::initializer_list<const char*> allowed, const char* what) {
  for (const char* a : allowed)
    if (v == a) return;
  throw Error(Errc::config_error, std::string("invalid value '") + v + "' for " + what);
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  j["preset"] = c.preset;
  const auto& in = c.instance;
  j["instance"] = {{"graph", std::string(to_string(in.graph))},
                   {"n", in.n},
                   {"seed", in.seed},
                   {"coupling", in.coupling},
                   {"J", in.J},
                   {"mean", in.mean},
                   {"std", in.std},
                   {"coupling_seed", in.coupling_seed},
                   {"m0", detail::auto_or(in.m0)}};
  j["bath"] = {{"beta", c.bath.beta}, {"omega_c", c.bath.omega_c}, {"eta", c.bath.eta}};
  j["schedule"] = {{"mx0", detail::auto_or(c.schedule.mx0)},
                   {"mx0_factor", c.schedule.mx0_factor},
                   {"tau", c.schedule.tau},
                   {"mode", c.schedule.mode == ScheduleMode::sudden ? "sudden" : "annealed"}};
  j["kappas"] = {{"mode", c.kappas.mode}, {"value", c.kappas.value}, {"values", c.kappas.values}};
  const auto& e = c.evolve;
  j["evolve"] = {{"t_max", e.t_max},
                 {"t_max_per_tau", e.t_max_per_tau},
                 {"samples", e.samples},
                 {"step", e.step},
                 {"rtol", e.rtol},
                 {"atol", e.atol},
                 {"h", e.h},
                 {"rebuild_rel_tol", e.rebuild_rel_tol},
                 {"secular", e.secular},
                 {"secular_factor", e.secular_factor},
                 {"nonzero_budget", e.nonzero_budget}};
  const auto& o = c.optimize;
  j["optimize"] = {{"mode", o.mode},           {"target", o.target},
                   {"x0", o.x0},               {"x0_value", o.x0_value},
                   {"seed", o.seed},           {"max_iters", o.nm.max_iters},
                   {"f_tol", o.nm.f_tol},      {"x_tol", o.nm.x_tol},
                   {"init_spread", o.nm.init_spread}, {"lower", o.nm.lower},
                   {"upper", o.nm.upper},      {"alpha", o.nm.alpha},
                   {"gamma", o.nm.gamma},      {"rho", o.nm.rho},
                   {"sigma", o.nm.sigma}};
  json grid = json::array();
  for (const auto& a : c.experiment.grid) grid.push_back({{"axis", a.axis}, {"values", a.values}});
  const auto& x = c.experiment;
  j["experiment"] = {{"grid", grid},
                     {"trajectories", x.trajectories},
                     {"gap_profile", x.gap_profile},
                     {"histogram", x.histogram},
                     {"optimize", x.optimize},
                     {"frozen_chains", x.frozen_chains},
                     {"optimized_chains", x.optimized_chains},
                     {"chain_seed", x.chain_seed}};
  return j;
}

inline RunConfig config_from_json(const json& j) {
  using detail::get;
  RunConfig c;
  c.version = get<int>(j, "", "version");
  if (c.version != kConfigVersion)
    throw Error(Errc::config_error, "unsupported config version " + std::to_string(c.version));
  c.preset = get<std::string>(j, "", "preset");

  const json& in = j.at("instance");
  c.instance.graph = graph_class_from_string(get<std::string>(in, "instance", "graph"));
  c.instance.n = get<int>(in, "instance", "n");
  c.instance.seed = get<std::uint64_t>(in, "instance", "seed");
  c.instance.coupling = get<std::string>(in, "instance", "coupling");
  detail::expect_one_of(c.instance.coupling, {"uniform", "gaussian"}, "instance.coupling");
  c.instance.J = get<double>(in, "instance", "J");
  c.instance.mean = get<double>(in, "instance", "mean");
  c.instance.std = get<double>(in, "instance", "std");
  c.instance.coupling_seed = get<std::uint64_t>(in, "instance", "coupling_seed");
  c.instance.m0 = detail::parse_auto(in.at("m0"), "instance.m0");

  const json& b = j.at("bath");
  c.bath = {get<double>(b, "bath", "beta"), get<double>(b, "bath", "omega_c"), get<double>(b, "bath", "eta")};

  const json& s = j.at("schedule");
  c.schedule.mx0 = detail::parse_auto(s.at("mx0"), "schedule.mx0");
  c.schedule.mx0_factor = get<double>(s, "schedule", "mx0_factor");
  c.schedule.tau = get<double>(s, "schedule", "tau");
  const auto mode = get<std::string>(s, "schedule", "mode");
  detail::expect_one_of(mode, {"annealed", "sudden"}, "schedule.mode");
  c.schedule.mode = mode == "sudden" ? ScheduleMode::sudden : ScheduleMode::annealed;

  const json& k = j.at("kappas");
  c.kappas.mode = get<std::string>(k, "kappas", "mode");
  detail::expect_one_of(c.kappas.mode, {"uniform", "explicit"}, "kappas.mode");
  c.kappas.value = get<double>(k, "kappas", "value");
  c.kappas.values = get<std::vector<double>>(k, "kappas", "values");

  const json& e = j.at("evolve");
  c.evolve.t_max = get<double>(e, "evolve", "t_max");
  c.evolve.t_max_per_tau = get<double>(e, "evolve", "t_max_per_tau");
  c.evolve.samples = get<int>(e, "evolve", "samples");
  c.evolve.step = get<std::string>(e, "evolve", "step");
  detail::expect_one_of(c.evolve.step, {"adaptive", "fixed"}, "evolve.step");
  c.evolve.rtol = get<double>(e, "evolve", "rtol");
  c.evolve.atol = get<double>(e, "evolve", "atol");
  c.evolve.h = get<double>(e, "evolve", "h");
  c.evolve.rebuild_rel_tol = get<double>(e, "evolve", "rebuild_rel_tol");
  c.evolve.secular = get<std::string>(e, "evolve", "secular");
  detail::expect_one_of(c.evolve.secular, {"strict", "cutoff"}, "evolve.secular");
  c.evolve.secular_factor = get<double>(e, "evolve", "secular_factor");
  c.evolve.nonzero_budget = get<std::uint64_t>(e, "evolve", "nonzero_budget");

  const json& o = j.at("optimize");
  c.optimize.mode = get<std::string>(o, "optimize", "mode");
  detail::expect_one_of(c.optimize.mode, {"uniform", "per_site"}, "optimize.mode");
  c.optimize.target = get<std::string>(o, "optimize", "target");
  detail::expect_one_of(c.optimize.target, {"target", "instantaneous"}, "optimize.target");
  c.optimize.x0 = get<std::string>(o, "optimize", "x0");
  detail::expect_one_of(c.optimize.x0, {"uniform", "random", "best_grid"}, "optimize.x0");
  c.optimize.x0_value = get<double>(o, "optimize", "x0_value");
  c.optimize.seed = get<std::uint64_t>(o, "optimize", "seed");
  auto& nm = c.optimize.nm;
  nm.max_iters = get<int>(o, "optimize", "max_iters");
  nm.f_tol = get<double>(o, "optimize", "f_tol");
  nm.x_tol = get<double>(o, "optimize", "x_tol");
  nm.init_spread = get<double>(o, "optimize", "init_spread");
  nm.lower = get<double>(o, "optimize", "lower");
  nm.upper = get<double>(o, "optimize", "upper");
  nm.alpha = get<double>(o, "optimize", "alpha");
  nm.gamma = get<double>(o, "optimize", "gamma");
  nm.rho = get<double>(o, "optimize", "rho");
  nm.sigma = get<double>(o, "optimize", "sigma");

  const json& x = j.at("experiment");
  for (const auto& a : x.at("grid")) {
    GridAxis g;
    g.axis = get<std::string>(a, "experiment.grid", "axis");
    g.values = get<std::vector<double>>(a, "experiment.grid", "values");
    c.experiment.grid.push_back(std::move(g));
  }
  c.experiment.trajectories = get<bool>(x, "experiment", "trajectories");
  c.experiment.gap_profile = get<bool>(x, "experiment", "gap_profile");
  c.experiment.histogram = get<bool>(x, "experiment", "histogram");
  c.experiment.optimize = get<bool>(x, "experiment", "optimize");
  c.experiment.frozen_chains = get<int>(x, "experiment", "frozen_chains");
  c.experiment.optimized_chains = get<int>(x, "experiment", "optimized_chains");
  c.experiment.chain_seed = get<std::uint64_t>(x, "experiment", "chain_seed");
  return c;
}

// ---------------------------------------------------------------------------
// Preset table (version 1). Every default lives here.

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"smoke", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"};
  return names;
}

inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.evolve.samples = 50;

  auto random_instance = [&](int n, double beta) {
    c.instance.graph = GraphClass::noncomplete;
    c.instance.n = n;
    c.instance.seed = 1;
    c.instance.coupling = "gaussian";
    c.instance.mean = -2.0;
    c.instance.std = 0.1;
    c.instance.coupling_seed = 1;
    c.bath = {beta, 30.0, 1.0};
    c.schedule.tau = 0.5;
  };

  if (name == "smoke") {
    c.instance.n = 3;
    c.bath = {2.0, 30.0, 1.0};
    c.schedule.tau = 0.5;
    c.kappas.value = 0.5;
    c.evolve.t_max = 3.0;
  } else if (name == "fig2") {
    c.instance.n = 7;
    c.bath = {1.3, 30.0, 1.0};
    c.schedule.mx0 = 140.0;
    c.kappas.value = 0.0;
    c.evolve.t_max_per_tau = 8.0;
    c.evolve.samples = 200;
    c.experiment.grid = {{"tau", {0.5, 1.0, 2.0, 4.0}}};
    c.experiment.gap_profile = true;
  } else if (name == "fig3") {
    c.instance.n = 7;
    c.bath = {1.3, 30.0, 1.0};
    c.schedule.mx0 = 140.0;
    c.schedule.tau = 0.5;
    c.evolve.t_max = 6.0;
    c.experiment.grid = {{"kappa_uniform", {0.0, 1.5}}};
    c.experiment.histogram = true;
  } else if (name == "fig4") {
    random_instance(6, 2.2);
    c.evolve.t_max = 6.0;
    c.experiment.trajectories = false;
    c.experiment.optimize = true;
    c.optimize.mode = "per_site";
    c.optimize.x0 = "uniform";
    c.optimize.x0_value = 1.0;
    c.optimize.nm.max_iters = 30;
    c.optimize.nm.f_tol = 0.0;
    c.optimize.nm.x_tol = 0.0;
  } else if (name == "fig5") {
    random_instance(5, 1.2);
    c.evolve.t_max = 8.0;
    c.experiment.grid = {{"kappa_uniform", {0.1, 0.5, 1.0, 1.5, 2.0}}};
    c.experiment.optimize = true;
    c.optimize.mode = "uniform";
    c.optimize.x0 = "best_grid";
    c.optimize.nm.max_iters = 30;
  } else if (name == "fig6") {
    random_instance(5, 2.0);
    c.evolve.t_max = 5.0;
    c.evolve.samples = 250;
    c.experiment.grid = {{"kappa_uniform", {0.3, 1.9}}, {"tau", {0.0, 0.5, 1.0, 2.0}}};
  } else if (name == "fig7") {
    random_instance(6, 2.2);
    c.evolve.t_max = 6.0;
    c.experiment.trajectories = false;
    c.experiment.frozen_chains = 2;
    c.experiment.optimized_chains = 2;
    c.experiment.chain_seed = 11;
    c.optimize.mode = "per_site";
    c.optimize.x0 = "random";
    c.optimize.nm.max_iters = 30;
    c.optimize.nm.f_tol = 0.0;
    c.optimize.nm.x_tol = 0.0;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw Error(Errc::config_error, "unknown preset '" + name + "' (known: " + known + ")");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Overrides: dotted keys into the JSON form plus two aliases.
//   kappa_uniform=v  -> kappas.mode=uniform, kappas.value=v
//   tau=v            -> schedule.tau=v (annealed); tau=0 selects the sudden protocol

inline json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

inline void set_json_path(json& root, const std::string& key, const json& value) {
  json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(part)) throw Error(Errc::config_error, "invalid override key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  const bool was_auto = node->is_string() && node->get<std::string>() == "auto";
  const bool ok = (node->is_number() && value.is_number()) || (node->is_string() && value.is_string()) ||
                  (node->is_boolean() && value.is_boolean()) || (node->is_array() && value.is_array()) ||
                  (was_auto && value.is_number()) || (node->is_number() && value == "auto");
  if (!ok) throw Error(Errc::config_error, "override '" + key + "' has the wrong type");
  *node = value;
}

inline void apply_override(json& j, const std::string& key, const json& value) {
  if (key == "kappa_uniform") {
    if (!value.is_number()) throw Error(Errc::config_error, "kappa_uniform needs a number");
    j["kappas"]["mode"] = "uniform";
    j["kappas"]["value"] = value;
    return;
  }
  if (key == "tau") {
    if (!value.is_number()) throw Error(Errc::config_error, "tau needs a number");
    const double tau = value.get<double>();
    if (tau < 0.0) throw Error(Errc::config_error, "tau must be >= 0");
    if (tau == 0.0) {
      j["schedule"]["mode"] = "sudden";
    } else {
      j["schedule"]["mode"] = "annealed";
      j["schedule"]["tau"] = tau;
    }
    return;
  }
  set_json_path(j, key, value);
}

inline RunConfig apply_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& kv) {
  json j = to_json(base);
  for (const auto& [k, v] : kv) apply_override(j, k, parse_override_value(v));
  return config_from_json(j);
}

inline RunConfig with_axis_value(const RunConfig& base, const std::string& axis, double value) {
  json j = to_json(base);
  apply_override(j, axis, json(value));
  return config_from_json(j);
}

inline bool is_axis_key(const RunConfig& c, const std::string& key) {
  if (key == "kappa_uniform" || key == "tau") return true;
  try {
    json j = to_json(c);
    set_json_path(j, key, json(1.0));
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Resolution and construction of the physical problem

inline SpinGraph build_graph(const InstanceSpec& in) {
  SpinGraph g;
  switch (in.graph) {
    case GraphClass::linear: g = build_linear_graph(in.n); break;
    case GraphClass::complete: g = build_complete_graph(in.n); break;
    case GraphClass::noncomplete: g = sample_noncomplete_graph(in.n, in.seed); break;
    default: throw Error(Errc::config_error, "graph class must be linear, complete or noncomplete");
  }
  if (in.coupling == "uniform")
    g = assign_couplings(std::move(g), UniformCoupling{in.J});
  else
    g = assign_couplings(std::move(g), GaussianCoupling{in.mean, in.std, in.coupling_seed});
  g.m0 = in.m0 ? *in.m0 : default_pinning(g);
  return g;
}

/// Fills the auto fields; the result has no "auto" left.
inline RunConfig resolve(const RunConfig& c) {
  RunConfig r = c;
  const SpinGraph g = build_graph(c.instance);
  r.instance.m0 = g.m0;
  if (!r.schedule.mx0) r.schedule.mx0 = r.schedule.mx0_factor * max_abs_row_sum(g);
  return r;
}

inline void validate(const RunConfig& c) {
  c.bath.validate();
  if (c.evolve.samples < 1) throw Error(Errc::config_error, "evolve.samples must be >= 1");
  if (c.evolve.t_max_per_tau > 0.0 && c.schedule.mode == ScheduleMode::sudden)
    throw Error(Errc::config_error, "t_max_per_tau needs the annealed protocol");
  if (c.kappas.mode == "explicit" && static_cast<int>(c.kappas.values.size()) != c.instance.n)
    throw Error(Errc::config_error, "kappas.values needs one entry per qubit");
  if (c.experiment.frozen_chains < 0 || c.experiment.optimized_chains < 0)
    throw Error(Errc::config_error, "chain counts must be >= 0");
  c.optimize.nm.validate();
  for (const auto& a : c.experiment.grid) {
    if (!is_axis_key(c, a.axis)) throw Error(Errc::config_error, "unknown grid axis '" + a.axis + "'");
    if (a.values.empty()) throw Error(Errc::config_error, "grid axis '" + a.axis + "' has no values");
  }
}

inline double resolved_t_max(const RunConfig& c) {
  return c.evolve.t_max_per_tau > 0.0 ? c.evolve.t_max_per_tau * c.schedule.tau : c.evolve.t_max;
}

inline EvolveConfig make_evolve_config(const RunConfig& c) {
  EvolveConfig e;
  e.t_max = resolved_t_max(c);
  e.sample_dt = e.t_max / c.evolve.samples;
  e.step = c.evolve.step == "fixed" ? StepPolicy::fixed(c.evolve.h) : StepPolicy::adaptive(c.evolve.rtol, c.evolve.atol);
  e.rebuild_rel_tol = c.evolve.rebuild_rel_tol;
  e.secular = c.evolve.secular == "cutoff" ? SecularPolicy::cutoff(c.evolve.secular_factor) : SecularPolicy::strict();
  e.nonzero_budget = static_cast<std::size_t>(c.evolve.nonzero_budget);
  return e;
}

inline HamiltonianSet make_problem_hamiltonians(const RunConfig& resolved) {
  if (!resolved.schedule.mx0) throw Error(Errc::contract_violation, "config not resolved");
  return make_hamiltonians(build_graph(resolved.instance),
                           {*resolved.schedule.mx0, resolved.schedule.tau, resolved.schedule.mode});
}

inline RealVector make_kappa_vector(const RunConfig& c) {
  if (c.kappas.mode == "uniform") return RealVector::Constant(c.instance.n, c.kappas.value);
  if (static_cast<int>(c.kappas.values.size()) != c.instance.n)
    throw Error(Errc::config_error, "kappas.values needs one entry per qubit");
  return Eigen::Map<const RealVector>(c.kappas.values.data(), c.instance.n);
}

inline AnnealingProblem make_annealing_problem(const RunConfig& resolved) {
  AnnealingProblem p;
  p.h = make_problem_hamiltonians(resolved);
  p.bath = resolved.bath;
  p.evolve = make_evolve_config(resolved);
  p.target = resolved.optimize.target == "instantaneous" ? FidelityTarget::instantaneous : FidelityTarget::target;
  return p;
}

}  // namespace qanneal
