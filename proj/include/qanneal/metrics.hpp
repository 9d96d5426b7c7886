#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qanneal/error.hpp"
#include "qanneal/linalg.hpp"
#include "qanneal/redfield.hpp"

namespace qanneal {

struct MetricSample {
  double t = 0.0;
  double P = 0.0;       // population of the tracked instantaneous ground state
  double chi = 0.0;     // superfidelity(rho, |g><g|)^2
  double chi_target = 0.0;  // same against the ground state of H_G
  double energy = 0.0;  // Tr(rho H_sys(t))
  double gap = 0.0;     // E_1 - E_0
  std::vector<double> populations;  // eigenbasis diagonal, tracked ground state first
};

inline constexpr double kRadicandClamp = 1e-12;

namespace detail {

// Re Tr(x y) for Hermitian y, summed as sum_ij Re(x_ij conj(y_ij)); the
// expression is symmetric in (x, y) term by term.
inline double hermitian_overlap(const Matrix& x, const Matrix& y) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      s += x(i, j).real() * y(i, j).real() + x(i, j).imag() * y(i, j).imag();
  return s;
}

inline double purity_radical(const Matrix& rho) {
  const double r = 1.0 - hermitian_overlap(rho, rho);
  if (r < -kRadicandClamp) throw Error(Errc::invalid_state, "purity exceeds 1 beyond rounding");
  return std::sqrt(std::max(0.0, r));
}

}  // namespace detail

/// Tr(r1 r2) + sqrt(1 - Tr r1^2) sqrt(1 - Tr r2^2): an upper bound on the
/// Uhlmann fidelity that is exact when either argument is pure.
inline double superfidelity(const Matrix& rho1, const Matrix& rho2) {
  if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols() || rho1.rows() != rho1.cols())
    throw Error(Errc::dimension_mismatch, "superfidelity needs equal square matrices");
  return detail::hermitian_overlap(rho1, rho2) + detail::purity_radical(rho1) * detail::purity_radical(rho2);
}

inline Matrix projector(const Vector& psi) { return psi * psi.adjoint(); }

/// Superfidelity against a pure reference: the reference radical is exactly
/// zero, leaving <psi|rho|psi>.
inline double superfidelity_pure(const Matrix& rho, const Vector& psi) {
  if (rho.rows() != psi.size() || rho.cols() != psi.size())
    throw Error(Errc::dimension_mismatch, "state and reference dimensions differ");
  return (psi.adjoint() * rho * psi)(0, 0).real() / psi.squaredNorm();
}

inline double ground_state_probability(const Matrix& rho, const EigenFrame& frame, Eigen::Index ground = 0) {
  const auto g = frame.vectors.col(ground);
  return (g.adjoint() * rho * g)(0, 0).real();
}

inline double chi(const Matrix& rho, const EigenFrame& frame, Eigen::Index ground = 0) {
  const double f = superfidelity_pure(rho, frame.vectors.col(ground));
  return f * f;
}

inline double instantaneous_energy(const Matrix& rho, const Matrix& h) {
  if (rho.rows() != h.rows() || rho.cols() != h.cols())
    throw Error(Errc::dimension_mismatch, "state and Hamiltonian dimensions differ");
  const cplx e = (rho * h).trace();
  if (std::abs(e.imag()) > 1e-9 * std::max(1.0, std::abs(e.real())))
    throw Error(Errc::numerical_corruption, "Tr(rho H) has a non-negligible imaginary part");
  return e.real();
}

inline Matrix gibbs_state(const EigenFrame& frame, double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error(Errc::invalid_parameter, "beta must be finite and >= 0");
  const RealVector w = (-beta * (frame.energies.array() - frame.energies(0))).exp();
  const RealVector p = w / w.sum();
  return frame.vectors * p.cast<cplx>().asDiagonal() * frame.vectors.adjoint();
}

inline Matrix gibbs_state(const Matrix& h, double beta) { return gibbs_state(diagonalize(h), beta); }

}  // namespace qanneal
