#pragma once

// Orchestration behind the CLI verbs: grid expansion, a bounded worker pool,
// and the CSV / JSON artifacts written under <root>/<preset>/<verb>/.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qanneal/config.hpp"

namespace qanneal {

namespace fs = std::filesystem;

using Coords = std::vector<std::pair<std::string, double>>;

struct RunOptions {
  fs::path root = "qanneal-out";
  int jobs = 1;
  std::ostream* log = &std::cerr;
};

inline fs::path default_output_root() {
  if (const char* env = std::getenv("QANNEAL_OUT"); env && *env) return env;
  return "qanneal-out";
}

struct PointResult {
  Coords coords;
  RunConfig config;  // resolved
  Trajectory traj;
  bool ok = false;
  std::string error;
};

struct ChainResult {
  bool optimized = false;
  int index = 0;
  RealVector x0;
  std::vector<double> P;  // per-run success probability
  CumulativeRecord record;
  OptimizationRun run;  // optimized chains only
};

/// What a verb wrote, plus the in-memory results behind it.
struct Report {
  fs::path dir;
  std::vector<fs::path> files;
  std::size_t failures = 0;
  std::vector<PointResult> points;
  std::optional<OptimizationRun> optimization;
  std::optional<PointResult> optimized_point;
  std::vector<ChainResult> chains;
};

// ---------------------------------------------------------------------------
// small helpers

namespace detail {

class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void event(const json& j) {
    if (!os_) return;
    std::lock_guard lock(mu_);
    *os_ << j.dump() << '\n';
    os_->flush();
  }

 private:
  std::ostream* os_;
  std::mutex mu_;
};

inline std::string fmt_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::string label(const Coords& c) {
  if (c.empty()) return "base";
  std::string s;
  for (const auto& [k, v] : c) s += (s.empty() ? "" : "_") + k + "-" + fmt_value(v);
  return s;
}

inline void write_file(const fs::path& path, const std::string& body, Report& rep) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(Errc::io_error, "cannot open " + tmp.string());
    os << body;
    if (!os) throw Error(Errc::io_error, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, "cannot rename to " + path.string() + ": " + ec.message());
  rep.files.push_back(path);
}

template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

inline std::vector<Coords> expand_grid(const std::vector<GridAxis>& grid) {
  std::vector<Coords> out{{}};
  for (const auto& axis : grid) {
    std::vector<Coords> next;
    for (const auto& c : out)
      for (double v : axis.values) {
        Coords d = c;
        d.emplace_back(axis.axis, v);
        next.push_back(std::move(d));
      }
    out = std::move(next);
  }
  return out;
}

inline RunConfig point_config(const RunConfig& base, const Coords& coords) {
  RunConfig c = base;
  for (const auto& [k, v] : coords) c = with_axis_value(c, k, v);
  RunConfig r = resolve(c);
  validate(r);
  return r;
}

/// Resolved config written next to the outputs; must survive a JSON round trip.
inline void write_resolved_config(const RunConfig& resolved, const fs::path& dir, Report& rep) {
  const json j = to_json(resolved);
  if (!(config_from_json(j) == resolved) || to_json(config_from_json(j)) != j)
    throw Error(Errc::contract_violation, "resolved config does not round-trip");
  write_file(dir / "resolved_config.json", j.dump(2) + "\n", rep);
}

inline double max_kappa(const RunConfig& c) {
  return c.kappas.mode == "uniform" ? c.kappas.value
                                    : *std::max_element(c.kappas.values.begin(), c.kappas.values.end());
}

inline void log_born_markov(Logger& log, const BathParams& bath, double kappa_max) {
  const auto d = born_markov_check(bath, kappa_max);
  log.event({{"event", "born_markov"},
             {"kappa_max", kappa_max},
             {"tau_bath", d.tau_bath},
             {"tau_relax_estimate", std::isfinite(d.tau_relax_estimate) ? json(d.tau_relax_estimate) : json(nullptr)},
             {"ratio", d.ratio},
             {"threshold", d.threshold},
             {"pass", d.pass}});
}

inline json point_meta(const PointResult& p) {
  json coords = json::object();
  for (const auto& [k, v] : p.coords) coords[k] = v;
  json m = {{"coords", coords}, {"config", to_json(p.config)}, {"ok", p.ok}};
  if (p.ok) {
    m["evolve"] = p.traj.meta;
    m["P_fin"] = p.traj.final_sample().P;
    m["chi_max"] = p.traj.chi_max();
    m["t_argmax"] = p.traj.t_argmax_chi();
    m["chi_target_max"] = p.traj.chi_target_max();
    m["t_argmax_target"] = p.traj.t_argmax_chi_target();
  } else {
    m["error"] = p.error;
  }
  return m;
}

inline std::string summary_row_tail(const PointResult& p) {
  std::ostringstream os;
  if (p.ok) {
    os << format_double(p.traj.final_sample().P) << ',' << format_double(p.traj.chi_max()) << ','
       << format_double(p.traj.t_argmax_chi()) << ',' << format_double(p.traj.chi_target_max()) << ','
       << format_double(p.traj.t_argmax_chi_target()) << ',' << (p.traj.flagged ? 1 : 0) << ",ok";
  } else {
    os << "nan,nan,nan,nan,nan,0,error";
  }
  return os.str();
}

inline constexpr const char* kSummaryTail = "P_fin,chi_max,t_argmax,chi_target_max,t_argmax_target,flagged,status";

}  // namespace detail

inline Trajectory run_point(const RunConfig& resolved) {
  const HamiltonianSet h = make_problem_hamiltonians(resolved);
  return evolve(h, make_couplings(h.n, make_kappa_vector(resolved)), resolved.bath, make_evolve_config(resolved));
}

/// Evaluates every grid point on the pool; results keep grid order.
inline std::vector<PointResult> run_points(const RunConfig& base, const std::vector<Coords>& points, int jobs,
                                           detail::Logger& log) {
  std::vector<PointResult> out(points.size());
  detail::parallel_for(points.size(), jobs, [&](std::size_t i) {
    PointResult& r = out[i];
    r.coords = points[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.config = detail::point_config(base, points[i]);
      r.traj = run_point(r.config);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json ev = {{"event", "point"}, {"label", detail::label(r.coords)}, {"ok", r.ok}, {"seconds", secs}};
    if (r.ok)
      ev["P_fin"] = r.traj.final_sample().P;
    else
      ev["error"] = r.error;
    log.event(ev);
  });
  return out;
}

inline void write_point_files(const PointResult& p, const fs::path& dir, Report& rep) {
  const std::string name = "traj_" + detail::label(p.coords);
  if (p.ok) {
    std::ostringstream os;
    write_trajectory_csv(p.traj, os);
    detail::write_file(dir / (name + ".csv"), os.str(), rep);
  }
  detail::write_file(dir / (name + ".json"), detail::point_meta(p).dump(2) + "\n", rep);
}

// ---------------------------------------------------------------------------
// artifacts

/// Gap of H_sys against t / tau; the profile is the same for every tau.
inline std::string gap_profile_csv(const RunConfig& resolved, int points = 401) {
  const HamiltonianSet h = make_problem_hamiltonians(resolved);
  const double tau = resolved.schedule.tau;
  const double s_max = resolved_t_max(resolved) / tau;
  std::vector<double> times(points);
  for (int k = 0; k < points; ++k) times[k] = tau * s_max * k / (points - 1);
  const auto gaps = gap_profile(h, times);
  std::ostringstream os;
  os << "t_over_tau,field,gap\n";
  for (int k = 0; k < points; ++k)
    os << format_double(times[k] / tau) << ',' << format_double(field_at(h.schedule, times[k])) << ','
       << format_double(gaps[k]) << '\n';
  return os.str();
}

/// Final populations over the eigenlevels of H_sys(t_max), one column per point.
inline std::string histogram_csv(const std::vector<PointResult>& points) {
  std::vector<const PointResult*> ok;
  for (const auto& p : points)
    if (p.ok) ok.push_back(&p);
  if (ok.empty()) return "k,energy\n";
  const RunConfig& c = ok.front()->config;
  const HamiltonianSet h = make_problem_hamiltonians(c);
  const EigenFrame f = diagonalize(system_hamiltonian_at(h, resolved_t_max(c)));
  std::ostringstream os;
  os << "k,energy";
  for (const auto* p : ok) os << ",pop_" << detail::label(p->coords);
  os << '\n';
  for (Eigen::Index k = 0; k < f.energies.size(); ++k) {
    os << k << ',' << format_double(f.energies(k));
    for (const auto* p : ok) os << ',' << format_double(p->traj.final_sample().populations[k]);
    os << '\n';
  }
  return os.str();
}

inline std::string summary_csv(const std::vector<PointResult>& points, const std::vector<GridAxis>& grid) {
  std::ostringstream os;
  for (const auto& a : grid) os << a.axis << ',';
  os << detail::kSummaryTail << '\n';
  for (const auto& p : points) {
    for (const auto& c : p.coords) os << format_double(c.second) << ',';
    os << detail::summary_row_tail(p) << '\n';
  }
  return os.str();
}

inline json optimization_meta(const OptimizationRun& run) {
  auto vec = [](const RealVector& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  return {{"stop_reason", run.stop_reason},
          {"iterations", run.iterates.empty() ? 0 : run.iterates.back().iter},
          {"evaluations", run.evaluation_count()},
          {"best", {{"kappas", vec(run.best.x)}, {"y", run.best.y}, {"P_fin", run.best.p_fin}}},
          {"best_by_p_fin",
           {{"kappas", vec(run.best_by_p_fin.x)},
            {"y", run.best_by_p_fin.value.y},
            {"P_fin", run.best_by_p_fin.value.p_fin}}}};
}

// ---------------------------------------------------------------------------
// verbs

namespace detail {

inline RealVector initial_point(const RunConfig& resolved, CouplingSearch mode,
                                const std::vector<PointResult>& grid_points) {
  const Eigen::Index dim = mode == CouplingSearch::uniform ? 1 : resolved.instance.n;
  const auto& o = resolved.optimize;
  if (o.x0 == "uniform") return project_to_bounds(RealVector::Constant(dim, o.x0_value), o.nm);
  if (o.x0 == "random") return random_initial_kappas(dim, o.nm, o.seed);
  // best_grid: the uniform kappa with the highest peak fidelity
  const bool inst = o.target == "instantaneous";
  double best = -1.0, kappa = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : grid_points) {
    if (!p.ok || p.config.kappas.mode != "uniform") continue;
    const double v = inst ? p.traj.chi_max() : p.traj.chi_target_max();
    if (v > best) best = v, kappa = p.config.kappas.value;
  }
  if (!std::isfinite(kappa)) throw Error(Errc::config_error, "x0=best_grid needs a successful kappa_uniform grid");
  return project_to_bounds(RealVector::Constant(dim, kappa), o.nm);
}

inline void optimize_stage(const RunConfig& resolved, CouplingSearch mode, const fs::path& dir, Report& rep,
                           Logger& log) {
  struct {
    RealVector x0;
    OptimizationRun run;
  } out;
  out.x0 = initial_point(resolved, mode, rep.points);
  const AnnealingProblem prob = make_annealing_problem(resolved);
  out.run = optimize_couplings(prob, mode, out.x0, resolved.optimize.nm);

  std::ostringstream os;
  write_optimization_csv(out.run, os);
  write_file(dir / "optimization.csv", os.str(), rep);
  json meta = optimization_meta(out.run);
  meta["mode"] = mode == CouplingSearch::uniform ? "uniform" : "per_site";
  meta["x0"] = std::vector<double>(out.x0.data(), out.x0.data() + out.x0.size());
  write_file(dir / "optimization.json", meta.dump(2) + "\n", rep);

  // trajectory at the best coupling vector
  PointResult best;
  best.config = resolved;
  best.config.kappas.mode = "explicit";
  best.config.kappas.values.assign(out.run.best.x.data(), out.run.best.x.data() + out.run.best.x.size());
  best.coords = {};
  best.traj = run_point(best.config);
  best.ok = true;
  std::ostringstream ts;
  write_trajectory_csv(best.traj, ts);
  write_file(dir / "traj_optimized.csv", ts.str(), rep);
  write_file(dir / "traj_optimized.json", point_meta(best).dump(2) + "\n", rep);
  log.event({{"event", "optimize"},
             {"stop_reason", out.run.stop_reason},
             {"evaluations", out.run.evaluation_count()},
             {"best_y", out.run.best.y},
             {"best_P_fin", out.run.best.p_fin}});
  rep.optimization = std::move(out.run);
  rep.optimized_point = std::move(best);
}

inline CouplingSearch search_mode(const std::string& s) {
  if (s == "uniform") return CouplingSearch::uniform;
  if (s == "per_site" || s == "per-site") return CouplingSearch::per_site;
  throw Error(Errc::config_error, "optimize mode must be uniform or per-site");
}

inline void cumulative_stage(const RunConfig& resolved, const fs::path& dir, int jobs, Report& rep, Logger& log) {
  const auto& x = resolved.experiment;
  const int chains = x.frozen_chains + x.optimized_chains;
  if (chains == 0) throw Error(Errc::config_error, "cumulative needs at least one chain");
  const AnnealingProblem prob = make_annealing_problem(resolved);
  const auto& nm = resolved.optimize.nm;
  const std::size_t length = static_cast<std::size_t>(nm.max_iters) + 1;

  std::vector<ChainResult> out(chains);
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    ChainResult& c = out[i];
    c.optimized = static_cast<int>(i) >= x.frozen_chains;
    c.index = c.optimized ? static_cast<int>(i) - x.frozen_chains : static_cast<int>(i);
    // chain k of either kind starts from the same random draw
    c.x0 = random_initial_kappas(resolved.instance.n, nm, x.chain_seed + static_cast<std::uint64_t>(c.index));
    if (!c.optimized) {
      c.P.assign(length, evaluate_annealing(prob, c.x0).p_fin);
    } else {
      c.run = optimize_couplings(prob, CouplingSearch::per_site, c.x0, nm);
      for (const auto& it : c.run.iterates) c.P.push_back(it.p_fin_best_so_far);
      // a converged search keeps rerunning its best protocol
      while (c.P.size() < length) c.P.push_back(c.P.back());
    }
    log.event({{"event", "chain"}, {"kind", c.optimized ? "optimized" : "frozen"}, {"index", c.index},
               {"P_1", c.P.front()}, {"P_last", c.P.back()}});
  });

  json summary = json::array();
  for (auto& c : out) {
    const std::string name = std::string(c.optimized ? "optimized" : "frozen") + std::to_string(c.index);
    c.record = cumulative_probability(c.P);
    const CumulativeRecord& rec = c.record;
    std::ostringstream os;
    write_cumulative_csv(rec, os);
    write_file(dir / ("cumulative_" + name + ".csv"), os.str(), rep);
    json s = {{"chain", name},
              {"x0", std::vector<double>(c.x0.data(), c.x0.data() + c.x0.size())},
              {"P_1", c.P.front()},
              {"P_c_final", rec.cumulative.back()}};
    if (c.optimized) {
      std::ostringstream ro;
      write_optimization_csv(c.run, ro);
      write_file(dir / ("optimization_" + name + ".csv"), ro.str(), rep);
      s["optimization"] = optimization_meta(c.run);
    }
    summary.push_back(s);
  }
  write_file(dir / "cumulative.json", summary.dump(2) + "\n", rep);
  rep.chains = std::move(out);
}

inline RunConfig prepare(const RunConfig& cfg) {
  RunConfig r = resolve(cfg);
  validate(r);
  return r;
}

}  // namespace detail

/// `run`: every stage the preset's experiment section enables.
inline Report cmd_run(const RunConfig& cfg, const RunOptions& opt) {
  detail::Logger log(opt.log);
  const RunConfig base = detail::prepare(cfg);
  Report rep;
  rep.dir = opt.root / base.preset / "run";
  detail::write_resolved_config(base, rep.dir, rep);

  const auto& x = base.experiment;
  double kmax = detail::max_kappa(base);
  for (const auto& a : x.grid)
    if (a.axis == "kappa_uniform") kmax = *std::max_element(a.values.begin(), a.values.end());
  if (x.optimize || x.optimized_chains > 0) kmax = std::max(kmax, base.optimize.nm.upper);
  detail::log_born_markov(log, base.bath, kmax);

  if (x.trajectories) {
    rep.points = run_points(cfg, detail::expand_grid(x.grid), opt.jobs, log);
    for (const auto& p : rep.points) {
      write_point_files(p, rep.dir, rep);
      if (!p.ok) ++rep.failures;
    }
    detail::write_file(rep.dir / "summary.csv", summary_csv(rep.points, x.grid), rep);
    if (x.histogram) detail::write_file(rep.dir / "histogram.csv", histogram_csv(rep.points), rep);
  }
  if (x.gap_profile) detail::write_file(rep.dir / "gap_profile.csv", gap_profile_csv(base), rep);
  if (x.optimize)
    detail::optimize_stage(base, detail::search_mode(base.optimize.mode), rep.dir, rep, log);
  if (x.frozen_chains + x.optimized_chains > 0) detail::cumulative_stage(base, rep.dir, opt.jobs, rep, log);
  return rep;
}

/// `sweep`: one summary per combination of the remaining grid axes, one row per value.
inline Report cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values,
                        const RunOptions& opt) {
  detail::Logger log(opt.log);
  if (values.empty()) throw Error(Errc::config_error, "sweep needs at least one value");
  const RunConfig base = detail::prepare(cfg);
  if (!is_axis_key(base, axis)) throw Error(Errc::config_error, "unknown sweep axis '" + axis + "'");

  std::vector<GridAxis> outer;
  for (const auto& a : base.experiment.grid)
    if (a.axis != axis) outer.push_back(a);
  const auto outer_points = detail::expand_grid(outer);
  std::vector<Coords> points;
  for (const auto& o : outer_points)
    for (double v : values) {
      Coords c = o;
      c.emplace_back(axis, v);
      points.push_back(std::move(c));
    }

  Report rep;
  rep.dir = opt.root / base.preset / ("sweep_" + axis);
  detail::write_resolved_config(base, rep.dir, rep);
  double kmax = detail::max_kappa(base);
  if (axis == "kappa_uniform") kmax = *std::max_element(values.begin(), values.end());
  for (const auto& a : outer)
    if (a.axis == "kappa_uniform") kmax = *std::max_element(a.values.begin(), a.values.end());
  detail::log_born_markov(log, base.bath, kmax);

  rep.points = run_points(cfg, points, opt.jobs, log);
  const auto& results = rep.points;
  for (std::size_t o = 0; o < outer_points.size(); ++o) {
    std::ostringstream os;
    os << "value," << detail::kSummaryTail << '\n';
    for (std::size_t k = 0; k < values.size(); ++k) {
      const PointResult& p = results[o * values.size() + k];
      os << format_double(values[k]) << ',' << detail::summary_row_tail(p) << '\n';
      write_point_files(p, rep.dir, rep);
      if (!p.ok) ++rep.failures;
    }
    const std::string name =
        outer_points[o].empty() ? "summary.csv" : "summary_" + detail::label(outer_points[o]) + ".csv";
    detail::write_file(rep.dir / name, os.str(), rep);
  }
  if (rep.failures > 0) {
    json errs = json::array();
    for (const auto& p : results)
      if (!p.ok) errs.push_back({{"point", detail::label(p.coords)}, {"error", p.error}});
    detail::write_file(rep.dir / "errors.json", errs.dump(2) + "\n", rep);
  }
  return rep;
}

/// `optimize`: the Nelder-Mead stage alone (a best_grid start runs its grid first).
inline Report cmd_optimize(const RunConfig& cfg, const std::string& mode, const RunOptions& opt) {
  detail::Logger log(opt.log);
  RunConfig base = detail::prepare(cfg);
  if (!mode.empty()) base.optimize.mode = detail::search_mode(mode) == CouplingSearch::uniform ? "uniform" : "per_site";
  Report rep;
  rep.dir = opt.root / base.preset / "optimize";
  detail::write_resolved_config(base, rep.dir, rep);
  detail::log_born_markov(log, base.bath, base.optimize.nm.upper);

  if (base.optimize.x0 == "best_grid") {
    rep.points = run_points(cfg, detail::expand_grid(base.experiment.grid), opt.jobs, log);
    for (const auto& p : rep.points) write_point_files(p, rep.dir, rep);
    detail::write_file(rep.dir / "summary.csv", summary_csv(rep.points, base.experiment.grid), rep);
  }
  detail::optimize_stage(base, detail::search_mode(base.optimize.mode), rep.dir, rep, log);
  return rep;
}

/// `cumulative`: frozen and optimized chains with their cumulative failure probability.
inline Report cmd_cumulative(const RunConfig& cfg, const RunOptions& opt) {
  detail::Logger log(opt.log);
  const RunConfig base = detail::prepare(cfg);
  Report rep;
  rep.dir = opt.root / base.preset / "cumulative";
  detail::write_resolved_config(base, rep.dir, rep);
  detail::log_born_markov(log, base.bath, base.optimize.nm.upper);
  detail::cumulative_stage(base, rep.dir, opt.jobs, rep, log);
  return rep;
}

}  // namespace qanneal
