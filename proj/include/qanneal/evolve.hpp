#pragma once

// Time evolution of the reduced density matrix under the time-dependent
// Bloch-Redfield equation.
//
// The state is propagated in the interaction picture of the eigenframe of the
// most recent rebuild. The Hamiltonian part is exact at every instant,
// H(t) = H(t_k) + (f_k - f(t)) hx, while the secular dissipator is frozen
// between rebuilds. A rebuild happens whenever the transverse field has
// decayed by `rebuild_rel_tol` relative to its value at the previous rebuild.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qanneal/bath.hpp"
#include "qanneal/error.hpp"
#include "qanneal/linalg.hpp"
#include "qanneal/metrics.hpp"
#include "qanneal/model.hpp"
#include "qanneal/ode.hpp"
#include "qanneal/redfield.hpp"

namespace qanneal {

struct StepPolicy {
  enum class Kind { adaptive, fixed };
  Kind kind = Kind::adaptive;
  double rtol = 1e-6;
  double atol = 1e-9;
  double h = 1e-3;  // fixed mode step

  static StepPolicy adaptive(double rtol = 1e-6, double atol = 1e-9) { return {Kind::adaptive, rtol, atol, 1e-3}; }
  static StepPolicy fixed(double h) { return {Kind::fixed, 1e-6, 1e-9, h}; }
  bool operator==(const StepPolicy&) const = default;
};

struct EvolveConfig {
  double t_max = 6.0;
  double sample_dt = 0.12;
  StepPolicy step;
  double rebuild_rel_tol = 1e-2;
  bool record_states = false;
  SecularPolicy secular;
  std::size_t nonzero_budget = kDefaultNonzeroBudget;

  void validate() const {
    if (!(t_max > 0.0) || !std::isfinite(t_max)) throw Error(Errc::invalid_parameter, "t_max must be > 0");
    if (!(sample_dt > 0.0)) throw Error(Errc::invalid_parameter, "sample_dt must be > 0");
    if (!(rebuild_rel_tol > 0.0 && rebuild_rel_tol < 1.0))
      throw Error(Errc::invalid_parameter, "rebuild_rel_tol must lie in (0, 1)");
    if (step.kind == StepPolicy::Kind::adaptive && (!(step.rtol > 0.0) || !(step.atol > 0.0)))
      throw Error(Errc::invalid_parameter, "rtol and atol must be > 0");
    if (step.kind == StepPolicy::Kind::fixed && !(step.h > 0.0))
      throw Error(Errc::invalid_parameter, "fixed step must be > 0");
  }
};

inline constexpr double kTraceTolerance = 1e-9;
inline constexpr double kHermiticityTolerance = 1e-9;
inline constexpr double kPositivityFloor = -1e-6;

struct Trajectory {
  std::vector<double> times;
  std::vector<MetricSample> samples;
  Matrix final_rho;
  std::vector<Matrix> states;  // only with record_states
  nlohmann::json meta;

  bool flagged = false;  // an invariant was violated; results are unreliable
  std::vector<std::string> flags;
  double max_trace_error = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t rebuilds = 0;
  std::size_t rhs_evals = 0;

  [[nodiscard]] const MetricSample& final_sample() const { return samples.back(); }

  [[nodiscard]] double chi_max() const {
    double m = -1.0;
    for (const auto& s : samples) m = std::max(m, s.chi);
    return m;
  }

  [[nodiscard]] double t_argmax_chi() const {
    double m = -1.0, t = 0.0;
    for (const auto& s : samples)
      if (s.chi > m) m = s.chi, t = s.t;
    return t;
  }

  [[nodiscard]] double chi_target_max() const {
    double m = -1.0;
    for (const auto& s : samples) m = std::max(m, s.chi_target);
    return m;
  }

  [[nodiscard]] double t_argmax_chi_target() const {
    double m = -1.0, t = 0.0;
    for (const auto& s : samples)
      if (s.chi_target > m) m = s.chi_target, t = s.t;
    return t;
  }
};

/// Degeneracy threshold on energies, relative to the spectral span.
inline double degeneracy_tolerance(const EigenFrame& f) { return 1e-9 * std::max(1.0, f.spectral_span()); }

inline Matrix initial_state(const HamiltonianSet& h) {
  const EigenFrame f = diagonalize(system_hamiltonian_at(h, 0.0));
  if (f.dimension() > 1 && f.energies(1) - f.energies(0) <= degeneracy_tolerance(f))
    throw Error(Errc::ambiguous_preparation, "ground state of H_sys(0) is degenerate");
  return projector(f.vectors.col(0));
}

/// Ground state of the problem Hamiltonian H_G (lowest index on ties).
inline Vector target_ground_state(const HamiltonianSet& h) { return diagonalize(h.hg).vectors.col(0); }

inline std::vector<double> gap_profile(const HamiltonianSet& h, const std::vector<double>& grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(system_hamiltonian_at(h, t), Eigen::EigenvaluesOnly);
    const auto& e = es.eigenvalues();
    out.push_back(e.size() > 1 ? e(1) - e(0) : 0.0);
  }
  return out;
}

/// Picks the ground state among eigenvectors degenerate with the lowest level
/// by maximum overlap with the previously tracked ground state.
inline Eigen::Index track_ground(const EigenFrame& f, const std::optional<Vector>& previous) {
  if (!previous) return 0;
  const double tol = degeneracy_tolerance(f);
  Eigen::Index best = 0;
  double best_overlap = -1.0;
  for (Eigen::Index k = 0; k < f.dimension() && f.energies(k) - f.energies(0) <= tol; ++k) {
    const double ov = std::abs(f.vectors.col(k).dot(*previous));
    if (ov > best_overlap + 1e-12) {
      best_overlap = ov;
      best = k;
    }
  }
  return best;
}

/// Sample times k * sample_dt up to t_max, always ending exactly at t_max.
inline std::vector<double> sample_grid(double t_max, double sample_dt) {
  std::vector<double> ts;
  const auto count = static_cast<long long>(std::floor(t_max / sample_dt + 1e-9));
  for (long long k = 0; k <= count; ++k) ts.push_back(static_cast<double>(k) * sample_dt);
  if (t_max - ts.back() > 1e-9 * t_max)
    ts.push_back(t_max);
  else
    ts.back() = t_max;
  return ts;
}

namespace detail {

class Propagator {
 public:
  Propagator(const HamiltonianSet& h, const CouplingSet& c, const BathParams& p, const EvolveConfig& cfg)
      : h_(h), c_(c), p_(p), cfg_(cfg) {}

  void rebuild(double t) {
    t_ref_ = t;
    field_ = field_after(h_.schedule, t);
    frame_ = diagonalize(hamiltonian_with_field(h_, field_));
    generator_ = build_generator(frame_, c_, p_, cfg_.secular, cfg_.nonzero_budget);
    x_ = to_eigenbasis(frame_, h_.hx);
    x_ = 0.5 * (x_ + x_.adjoint()).eval();
    ++rebuilds_;
  }

  [[nodiscard]] double next_rebuild(double t) const {
    const auto& s = h_.schedule;
    if (s.mode == ScheduleMode::sudden || s.mx0 == 0.0) return std::numeric_limits<double>::infinity();
    return t - s.tau * std::log1p(-cfg_.rebuild_rel_tol);
  }

  // The integrated state is y = U^dagger rho_e U with U = diag(exp(-i E (t - t_ref))),
  // so the diagonal part of H(t_ref) drops out of the right-hand side.
  [[nodiscard]] Vector phases(double t) const {
    const double s = t - t_ref_;
    Vector u(frame_.dimension());
    for (Eigen::Index a = 0; a < u.size(); ++a) u(a) = std::polar(1.0, -(frame_.energies(a) - frame_.energies(0)) * s);
    return u;
  }

  [[nodiscard]] Matrix to_frame(double t, const Matrix& y) const {
    const Vector u = phases(t);
    return u.asDiagonal() * y * u.conjugate().asDiagonal();
  }

  void operator()(double t, const Matrix& y, Matrix& dy) const {
    const double delta = field_ - field_after(h_.schedule, t);
    const bool open = generator_.has_dissipator();
    if (delta == 0.0 && !open) {
      dy.setZero(y.rows(), y.cols());
      return;
    }
    const Vector u = phases(t);
    rho_ = u.asDiagonal() * y * u.conjugate().asDiagonal();
    if (delta != 0.0) {
      // rho is Hermitian: -i[X, rho] = -i (X rho - (X rho)^dagger)
      xr_.noalias() = x_ * rho_;
      drho_ = (-I * delta) * (xr_ - xr_.adjoint());
    } else {
      drho_.setZero(y.rows(), y.cols());
    }
    if (open) {
      const auto n = rho_.size();
      Eigen::Map<Vector>(drho_.data(), n).noalias() += generator_.dissipator * Eigen::Map<const Vector>(rho_.data(), n);
    }
    dy = u.conjugate().asDiagonal() * drho_ * u.asDiagonal();
  }

  [[nodiscard]] const EigenFrame& frame() const { return frame_; }
  [[nodiscard]] std::size_t rebuilds() const { return rebuilds_; }

 private:
  const HamiltonianSet& h_;
  const CouplingSet& c_;
  const BathParams& p_;
  const EvolveConfig& cfg_;
  double t_ref_ = 0.0;
  double field_ = 0.0;
  EigenFrame frame_;
  RedfieldGenerator generator_;
  Matrix x_;
  std::size_t rebuilds_ = 0;
  mutable Matrix rho_, xr_, drho_;
};

inline void record_sample(const HamiltonianSet& h, double t, const Matrix& rho, const Vector& target,
                          std::optional<Vector>& tracked, Trajectory& traj) {
  const Matrix ht = system_hamiltonian_at(h, t);
  const EigenFrame f = diagonalize(ht);
  const Eigen::Index g = track_ground(f, tracked);
  tracked = f.vectors.col(g);

  MetricSample s;
  s.t = t;
  const RealVector pops = (f.vectors.adjoint() * rho * f.vectors).diagonal().real();
  s.populations.reserve(static_cast<std::size_t>(pops.size()));
  s.populations.push_back(pops(g));
  for (Eigen::Index k = 0; k < pops.size(); ++k)
    if (k != g) s.populations.push_back(pops(k));
  s.P = ground_state_probability(rho, f, g);
  s.chi = chi(rho, f, g);
  s.chi_target = std::pow(superfidelity_pure(rho, target), 2);
  s.energy = instantaneous_energy(rho, ht);
  s.gap = f.dimension() > 1 ? f.energies(1) - f.energies(0) : 0.0;

  const double trace_err = std::abs(rho.trace() - cplx{1.0, 0.0});
  const double herm_err = hermiticity_residual(rho);
  const Matrix sym = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues()(0);
  traj.max_trace_error = std::max(traj.max_trace_error, trace_err);
  traj.max_hermiticity_error = std::max(traj.max_hermiticity_error, herm_err);
  traj.min_eigenvalue = std::min(traj.min_eigenvalue, min_eig);
  auto flag = [&](const std::string& why) {
    traj.flagged = true;
    char buf[160];
    std::snprintf(buf, sizeof buf, "t=%.6g: %s", t, why.c_str());
    traj.flags.emplace_back(buf);
  };
  if (trace_err >= kTraceTolerance) flag("trace drift " + std::to_string(trace_err));
  if (herm_err >= kHermiticityTolerance) flag("hermiticity residual " + std::to_string(herm_err));
  if (min_eig <= kPositivityFloor) flag("negative eigenvalue " + std::to_string(min_eig));

  traj.times.push_back(t);
  traj.samples.push_back(std::move(s));
}

template <class Integrator>
Trajectory run(const HamiltonianSet& h, const CouplingSet& c, const BathParams& p, const EvolveConfig& cfg,
               const Matrix& rho0, Integrator integrator) {
  Trajectory traj;
  const auto grid = sample_grid(cfg.t_max, cfg.sample_dt);
  std::optional<Vector> tracked;
  const Vector target = target_ground_state(h);

  Propagator prop(h, c, p, cfg);
  prop.rebuild(0.0);
  double next_rebuild = prop.next_rebuild(0.0);
  Matrix y = to_eigenbasis(prop.frame(), rho0);

  detail::record_sample(h, 0.0, rho0, target, tracked, traj);
  if (cfg.record_states) traj.states.push_back(rho0);

  double t = 0.0;
  double step = cfg.step.kind == StepPolicy::Kind::fixed ? cfg.step.h : 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double ts = grid[k];
    while (t < ts) {
      const bool rebuild_first = next_rebuild < ts;
      const double t_end = rebuild_first ? next_rebuild : ts;
      integrator.integrate(prop, y, t, t_end, step);
      t = t_end;
      if (rebuild_first) {
        const Matrix rho_c = from_eigenbasis(prop.frame(), prop.to_frame(t, y));
        prop.rebuild(t);
        y = to_eigenbasis(prop.frame(), rho_c);
        next_rebuild = prop.next_rebuild(t);
      }
    }
    const Matrix rho_c = from_eigenbasis(prop.frame(), prop.to_frame(ts, y));
    detail::record_sample(h, ts, rho_c, target, tracked, traj);
    if (cfg.record_states) traj.states.push_back(rho_c);
    if (k + 1 == grid.size()) traj.final_rho = rho_c;
  }
  if (grid.size() == 1) traj.final_rho = rho0;
  traj.rebuilds = prop.rebuilds();
  traj.rhs_evals = integrator.stats().rhs_evals;
  return traj;
}

}  // namespace detail

inline nlohmann::json evolve_meta(const HamiltonianSet& h, const CouplingSet& c, const BathParams& p,
                                  const EvolveConfig& cfg) {
  nlohmann::json m;
  m["n"] = h.n;
  m["schedule"] = {{"mx0", h.schedule.mx0},
                   {"tau", h.schedule.tau},
                   {"mode", h.schedule.mode == ScheduleMode::sudden ? "sudden" : "annealed"}};
  m["bath"] = {{"beta", p.beta}, {"omega_c", p.omega_c}, {"eta", p.eta}};
  m["kappas"] = std::vector<double>(c.kappas.data(), c.kappas.data() + c.kappas.size());
  m["evolve"] = {{"t_max", cfg.t_max},
                 {"sample_dt", cfg.sample_dt},
                 {"step", cfg.step.kind == StepPolicy::Kind::fixed ? "fixed" : "adaptive"},
                 {"rtol", cfg.step.rtol},
                 {"atol", cfg.step.atol},
                 {"h", cfg.step.h},
                 {"rebuild_rel_tol", cfg.rebuild_rel_tol},
                 {"secular", cfg.secular.mode == SecularPolicy::Mode::strict ? "strict" : "cutoff"},
                 {"secular_factor", cfg.secular.factor}};
  return m;
}

/// Integrates from the ground state of H_sys(0) (or `rho0` when given) up to
/// cfg.t_max, sampling observables every cfg.sample_dt.
inline Trajectory evolve(const HamiltonianSet& h, const CouplingSet& c, const BathParams& p,
                         const EvolveConfig& cfg, const std::optional<Matrix>& rho0 = std::nullopt) {
  cfg.validate();
  if (c.sites() != h.n) throw Error(Errc::dimension_mismatch, "coupling set does not match qubit count");
  const Matrix start = rho0 ? *rho0 : initial_state(h);
  if (start.rows() != h.dimension() || start.cols() != h.dimension())
    throw Error(Errc::dimension_mismatch, "initial state dimension mismatch");

  Trajectory traj;
  if (cfg.step.kind == StepPolicy::Kind::fixed)
    traj = detail::run(h, c, p, cfg, start, ode::ClassicalRK4<Matrix>(cfg.step.h));
  else
    traj = detail::run(h, c, p, cfg, start, ode::DormandPrince<Matrix>({cfg.step.rtol, cfg.step.atol}));

  traj.meta = evolve_meta(h, c, p, cfg);
  traj.meta["rebuilds"] = traj.rebuilds;
  traj.meta["rhs_evals"] = traj.rhs_evals;
  traj.meta["flagged"] = traj.flagged;
  traj.meta["flags"] = traj.flags;
  return traj;
}

// ---------------------------------------------------------------------------
// CSV: t,P,chi,energy,gap,pop_0..pop_{D-1},chi_target; 17 significant digits.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  const std::size_t d = traj.samples.empty() ? 0 : traj.samples.front().populations.size();
  os << "t,P,chi,energy,gap";
  for (std::size_t k = 0; k < d; ++k) os << ",pop_" << k;
  os << ",chi_target\n";
  for (const auto& s : traj.samples) {
    os << format_double(s.t) << ',' << format_double(s.P) << ',' << format_double(s.chi) << ','
       << format_double(s.energy) << ',' << format_double(s.gap);
    for (double v : s.populations) os << ',' << format_double(v);
    os << ',' << format_double(s.chi_target) << '\n';
  }
}

}  // namespace qanneal
