#pragma once

// Nelder-Mead over coupling vectors, the annealing objective
// y = 1 - max_t chi(t), and the cumulative miss probability of repeated runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "qanneal/bath.hpp"
#include "qanneal/error.hpp"
#include "qanneal/evolve.hpp"
#include "qanneal/linalg.hpp"
#include "qanneal/metrics.hpp"
#include "qanneal/model.hpp"

namespace qanneal {

struct OptimizerConfig {
  int max_iters = 30;
  double f_tol = 1e-8;  // f_tol = x_tol = 0 turns the tolerance stop off
  double x_tol = 1e-6;
  double init_spread = 0.25;
  double lower = 0.01;
  double upper = 2.5;
  double alpha = 1.0;  // reflection
  double gamma = 2.0;  // expansion
  double rho = 0.5;    // contraction
  double sigma = 0.5;  // shrink

  void validate() const {
    if (max_iters < 0) throw Error(Errc::invalid_parameter, "max_iters must be >= 0");
    if (!(f_tol >= 0.0) || !(x_tol >= 0.0)) throw Error(Errc::invalid_parameter, "tolerances must be >= 0");
    if (!(init_spread > 0.0)) throw Error(Errc::invalid_parameter, "init_spread must be > 0");
    if (!(lower > 0.0 && lower < upper) || !std::isfinite(upper))
      throw Error(Errc::invalid_parameter, "kappa bounds need 0 < lower < upper");
    if (!(alpha > 0.0) || !(gamma > 1.0) || !(rho > 0.0 && rho < 1.0) || !(sigma > 0.0 && sigma < 1.0))
      throw Error(Errc::invalid_parameter, "Nelder-Mead coefficients out of range");
  }
  bool operator==(const OptimizerConfig&) const = default;
};

/// What one objective call reports. p_fin is NaN for plain test functions.
struct ObjectiveValue {
  double y = 0.0;
  double p_fin = std::numeric_limits<double>::quiet_NaN();
  double chi_max = std::numeric_limits<double>::quiet_NaN();
  bool unreliable = false;
};

using Objective = std::function<ObjectiveValue(const RealVector&)>;

struct Evaluation {
  RealVector x;
  ObjectiveValue value;
  int iteration = 0;  // iteration during which it was requested
};

struct Iterate {
  int iter = 0;
  RealVector x;  // best vertex after this iteration
  double y = 0.0;
  double p_fin = 0.0;
  double kappa_mean = 0.0;
  bool unreliable = false;
  double p_fin_best_so_far = 0.0;  // max P_fin over all evaluations so far
};

struct OptimizationRun {
  std::vector<Iterate> iterates;
  std::vector<Evaluation> evaluations;
  Iterate best;          // lowest y
  Evaluation best_by_p_fin;  // highest P_fin among all evaluations
  std::string stop_reason;

  [[nodiscard]] std::size_t evaluation_count() const { return evaluations.size(); }
};

inline RealVector project_to_bounds(const RealVector& x, const OptimizerConfig& cfg) {
  return x.cwiseMax(cfg.lower).cwiseMin(cfg.upper);
}

namespace detail {

class NelderMead {
 public:
  NelderMead(const Objective& f, const OptimizerConfig& cfg) : f_(f), cfg_(cfg) {}

  OptimizationRun run(const RealVector& x0) {
    cfg_.validate();
    if (x0.size() == 0) throw Error(Errc::invalid_size, "empty starting point");
    if ((x0.array() < cfg_.lower).any() || (x0.array() > cfg_.upper).any())
      throw Error(Errc::invalid_parameter, "starting point outside the kappa bounds");

    const auto n = x0.size();
    vertices_.push_back(eval(x0));
    record(vertices_.front());
    if (cfg_.max_iters == 0) return finish("max_iters");

    iteration_ = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      RealVector x = x0;
      x(i) += cfg_.init_spread;
      if (x(i) > cfg_.upper) x(i) = x0(i) - cfg_.init_spread;
      vertices_.push_back(eval(project_to_bounds(x, cfg_)));
    }
    if (std::all_of(vertices_.begin(), vertices_.end(), [](const Vertex& v) { return std::isinf(v.y); }))
      throw Error(Errc::optimization_failure, "objective is non-finite on the whole initial simplex");

    for (; iteration_ <= cfg_.max_iters; ++iteration_) {
      order();
      step(n);
      order();
      record(vertices_.front());
      if (converged()) return finish("tolerance");
    }
    return finish("max_iters");
  }

 private:
  struct Vertex {
    RealVector x;
    double y;
    std::size_t eval_index;
  };

  Vertex eval(const RealVector& x) {
    ObjectiveValue v = f_(x);
    const double y = std::isfinite(v.y) ? v.y : std::numeric_limits<double>::infinity();
    run_.evaluations.push_back({x, v, iteration_});
    return {x, y, run_.evaluations.size() - 1};
  }

  void order() {
    std::stable_sort(vertices_.begin(), vertices_.end(), [](const Vertex& a, const Vertex& b) { return a.y < b.y; });
  }

  void step(Eigen::Index n) {
    RealVector c = RealVector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) c += vertices_[static_cast<std::size_t>(i)].x;
    c /= static_cast<double>(n);
    const Vertex& worst = vertices_.back();
    const double f_best = vertices_.front().y;
    const double f_second_worst = vertices_[vertices_.size() - 2].y;

    Vertex r = eval(project_to_bounds(c + cfg_.alpha * (c - worst.x), cfg_));
    if (r.y < f_best) {
      Vertex e = eval(project_to_bounds(c + cfg_.gamma * (r.x - c), cfg_));
      vertices_.back() = e.y < r.y ? e : r;
      return;
    }
    if (r.y < f_second_worst) {
      vertices_.back() = r;
      return;
    }
    if (r.y < worst.y) {
      Vertex oc = eval(project_to_bounds(c + cfg_.rho * (r.x - c), cfg_));
      if (oc.y <= r.y) {
        vertices_.back() = oc;
        return;
      }
    } else {
      Vertex ic = eval(project_to_bounds(c + cfg_.rho * (worst.x - c), cfg_));
      if (ic.y < worst.y) {
        vertices_.back() = ic;
        return;
      }
    }
    const RealVector best = vertices_.front().x;
    for (std::size_t i = 1; i < vertices_.size(); ++i)
      vertices_[i] = eval(project_to_bounds(best + cfg_.sigma * (vertices_[i].x - best), cfg_));
  }

  [[nodiscard]] bool converged() const {
    if (cfg_.f_tol == 0.0 && cfg_.x_tol == 0.0) return false;
    double fspread = 0.0, xspread = 0.0;
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
      fspread = std::max(fspread, std::abs(vertices_[i].y - vertices_.front().y));
      xspread = std::max(xspread, (vertices_[i].x - vertices_.front().x).cwiseAbs().maxCoeff());
    }
    return fspread <= cfg_.f_tol && xspread <= cfg_.x_tol;
  }

  void record(const Vertex& v) {
    const auto& ev = run_.evaluations[v.eval_index];
    Iterate it;
    it.iter = iteration_;
    it.x = v.x;
    it.y = v.y;
    it.p_fin = ev.value.p_fin;
    it.kappa_mean = v.x.mean();
    it.unreliable = ev.value.unreliable;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : run_.evaluations)
      if (e.value.p_fin > best) best = e.value.p_fin;
    it.p_fin_best_so_far = std::isfinite(best) ? best : std::numeric_limits<double>::quiet_NaN();
    run_.iterates.push_back(std::move(it));
  }

  OptimizationRun finish(std::string reason) {
    run_.stop_reason = std::move(reason);
    run_.best = run_.iterates.front();
    for (const auto& it : run_.iterates)
      if (it.y < run_.best.y) run_.best = it;
    run_.best_by_p_fin = run_.evaluations.front();
    for (const auto& e : run_.evaluations)
      if (e.value.p_fin > run_.best_by_p_fin.value.p_fin) run_.best_by_p_fin = e;
    return std::move(run_);
  }

  const Objective& f_;
  OptimizerConfig cfg_;
  std::vector<Vertex> vertices_;
  OptimizationRun run_;
  int iteration_ = 0;
};

}  // namespace detail

/// Bounded Nelder-Mead. Iterate 0 is the evaluation of x0; iterate k >= 1 is
/// the best simplex vertex after iteration k. Non-finite objective values are
/// treated as +inf.
inline OptimizationRun nelder_mead(const Objective& f, const RealVector& x0, const OptimizerConfig& cfg) {
  return detail::NelderMead(f, cfg).run(x0);
}

inline OptimizationRun nelder_mead(const std::function<double(const RealVector&)>& f, const RealVector& x0,
                                   const OptimizerConfig& cfg) {
  const Objective wrapped = [&](const RealVector& x) {
    ObjectiveValue v;
    v.y = f(x);
    return v;
  };
  return detail::NelderMead(wrapped, cfg).run(x0);
}

// ---------------------------------------------------------------------------

// instantaneous: reference is the tracked ground state of H_sys(t); since the
// run starts in that state, chi(0) = 1 and y vanishes identically.
// target: reference is the ground state of H_G (the annealing target).
enum class FidelityTarget { instantaneous, target };

struct AnnealingProblem {
  HamiltonianSet h;
  BathParams bath;
  EvolveConfig evolve;
  FidelityTarget target = FidelityTarget::target;
};

/// y = 1 - max over the sample grid of chi.
inline ObjectiveValue evaluate_annealing(const AnnealingProblem& prob, const RealVector& kappas) {
  const Trajectory traj = evolve(prob.h, make_couplings(prob.h.n, kappas), prob.bath, prob.evolve);
  ObjectiveValue v;
  v.p_fin = traj.final_sample().P;
  v.unreliable = traj.flagged;
  v.chi_max = prob.target == FidelityTarget::instantaneous ? traj.chi_max() : traj.chi_target_max();
  v.y = 1.0 - v.chi_max;
  return v;
}

inline Objective annealing_objective(const AnnealingProblem& prob) {
  return [&prob](const RealVector& kappas) { return evaluate_annealing(prob, kappas); };
}

enum class CouplingSearch { uniform, per_site };

/// Runs Nelder-Mead on the annealing objective. In uniform mode the search
/// variable is a single kappa applied to every site; iterates still report
/// the expanded per-site vector.
inline OptimizationRun optimize_couplings(const AnnealingProblem& prob, CouplingSearch mode, const RealVector& x0,
                                          const OptimizerConfig& cfg) {
  const int n = prob.h.n;
  const Eigen::Index dim = mode == CouplingSearch::uniform ? 1 : n;
  if (x0.size() != dim) throw Error(Errc::dimension_mismatch, "starting point has the wrong dimension for the mode");
  auto expand = [&](const RealVector& x) -> RealVector {
    return mode == CouplingSearch::uniform ? RealVector::Constant(n, x(0)) : x;
  };
  const Objective f = [&](const RealVector& x) { return evaluate_annealing(prob, expand(x)); };
  OptimizationRun run = nelder_mead(f, x0, cfg);
  if (mode == CouplingSearch::uniform) {
    for (auto& it : run.iterates) it.x = expand(it.x), it.kappa_mean = it.x.mean();
    for (auto& e : run.evaluations) e.x = expand(e.x);
    run.best.x = expand(run.best.x);
    run.best.kappa_mean = run.best.x.mean();
    run.best_by_p_fin.x = expand(run.best_by_p_fin.x);
  }
  return run;
}

/// Seeded uniform draw inside the bounds box.
inline RealVector random_initial_kappas(Eigen::Index dim, const OptimizerConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(cfg.lower, cfg.upper);
  RealVector x(dim);
  for (Eigen::Index i = 0; i < dim; ++i) x(i) = u(rng);
  return x;
}

// ---------------------------------------------------------------------------

struct CumulativeRecord {
  std::vector<double> per_run_P;
  std::vector<double> cumulative;  // P_c(n) = prod_{i<=n} (1 - P_i)
};

inline CumulativeRecord cumulative_probability(const std::vector<double>& per_run_P) {
  CumulativeRecord r;
  double prod = 1.0;
  for (double p : per_run_P) {
    if (!(p >= -1e-9 && p <= 1.0 + 1e-9)) throw Error(Errc::invalid_probability, "P_i outside [0, 1]");
    p = std::clamp(p, 0.0, 1.0);
    prod *= 1.0 - p;
    r.per_run_P.push_back(p);
    r.cumulative.push_back(prod);
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV writers

inline void write_optimization_csv(const OptimizationRun& run, std::ostream& os) {
  const std::size_t n = run.iterates.empty() ? 0 : static_cast<std::size_t>(run.iterates.front().x.size());
  os << "iter,y,P_fin,kappa_mean";
  for (std::size_t k = 0; k < n; ++k) os << ",kappa_" << k;
  os << '\n';
  for (const auto& it : run.iterates) {
    os << it.iter << ',' << format_double(it.y) << ',' << format_double(it.p_fin) << ','
       << format_double(it.kappa_mean);
    for (Eigen::Index k = 0; k < it.x.size(); ++k) os << ',' << format_double(it.x(k));
    os << '\n';
  }
}

inline void write_cumulative_csv(const CumulativeRecord& rec, std::ostream& os) {
  os << "n,P_n,P_c\n";
  for (std::size_t i = 0; i < rec.per_run_P.size(); ++i)
    os << i + 1 << ',' << format_double(rec.per_run_P[i]) << ',' << format_double(rec.cumulative[i]) << '\n';
}

}  // namespace qanneal
