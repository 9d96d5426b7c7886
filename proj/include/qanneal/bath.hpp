#pragma once

// Ohmic bosonic bath: spectral density, Bose occupation and the noise power
// spectrum S(w), extended to w <= 0 so that S(-w) = exp(-beta w) S(w).

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qanneal/error.hpp"

namespace qanneal {

struct BathParams {
  double beta = 1.0;
  double omega_c = 30.0;
  double eta = 1.0;

  void validate() const {
    if (!(beta > 0.0) || !(omega_c > 0.0) || !(eta > 0.0) || !std::isfinite(beta) ||
        !std::isfinite(omega_c) || !std::isfinite(eta))
      throw Error(Errc::invalid_parameter, "bath parameters beta, omega_c, eta must be finite and > 0");
  }

  bool operator==(const BathParams&) const = default;
};

inline double ohmic_density(const BathParams& p, double omega) {
  if (!(omega >= 0.0)) throw Error(Errc::domain_error, "ohmic_density needs omega >= 0");
  return p.eta * omega * std::exp(-omega / p.omega_c);
}

inline double bose_occupation(const BathParams& p, double omega) {
  if (!(omega > 0.0)) throw Error(Errc::domain_error, "bose_occupation needs omega > 0");
  return 1.0 / std::expm1(p.beta * omega);
}

inline double noise_power_spectrum(const BathParams& p, double omega) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (omega == 0.0) return two_pi * p.eta / p.beta;
  const double w = std::abs(omega);
  const double n = bose_occupation(p, w);
  return two_pi * ohmic_density(p, w) * (omega > 0.0 ? 1.0 + n : n);
}

struct BornMarkovDiagnostic {
  double tau_bath = 0.0;
  double tau_relax_estimate = 0.0;
  double ratio = 0.0;
  double threshold = 0.1;
  bool pass = true;
};

/// Weak-coupling validity estimate: tau_bath = max(2 pi / omega_c, beta)
/// against tau_relax ~ 1 / kappa_max^2. Advisory only.
inline BornMarkovDiagnostic born_markov_check(const BathParams& p, double kappa_max,
                                              double threshold = 0.1) {
  if (kappa_max < 0.0) throw Error(Errc::invalid_parameter, "kappa_max must be >= 0");
  BornMarkovDiagnostic d;
  d.threshold = threshold;
  d.tau_bath = std::max(2.0 * std::numbers::pi / p.omega_c, p.beta);
  d.tau_relax_estimate = kappa_max > 0.0 ? 1.0 / (kappa_max * kappa_max) : INFINITY;
  d.ratio = kappa_max > 0.0 ? d.tau_bath / d.tau_relax_estimate : 0.0;
  d.pass = d.ratio < threshold;
  return d;
}

}  // namespace qanneal
