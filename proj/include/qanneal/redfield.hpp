#pragma once

// Secular Bloch-Redfield generator in the instantaneous eigenbasis of H_sys.
//
//   d rho_ab / dt = -i w_ab rho_ab + sum_cd R_abcd rho_cd
//   R_abcd = -1/2 [ d_bd sum_n A_an A_nc S(w_cn) - A_ac A_db S(w_ca)
//                 + d_ac sum_n A_dn A_nb S(w_dn) - A_ac A_db S(w_db) ]
//
// with A = sum_i kappa_i sigma^x_i (all sites share one bath operator, so the
// double site sum collapses onto the total coupling operator). Only terms with
// |w_ab - w_cd| inside the secular window are materialised.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qanneal/bath.hpp"
#include "qanneal/error.hpp"
#include "qanneal/linalg.hpp"
#include "qanneal/model.hpp"

namespace qanneal {

struct EigenFrame {
  RealVector energies;  // ascending
  Matrix vectors;       // columns are eigenvectors
  RealMatrix omega;     // omega(a, b) = E_a - E_b

  [[nodiscard]] Eigen::Index dimension() const { return energies.size(); }
  [[nodiscard]] double spectral_span() const {
    return energies.size() == 0 ? 0.0 : energies(energies.size() - 1) - energies(0);
  }
};

/// Hermitian eigendecomposition with a deterministic phase: the largest
/// magnitude entry of every eigenvector is real and positive (ties go to the
/// lowest index).
inline EigenFrame diagonalize(const Matrix& h) {
  if (h.rows() != h.cols()) throw Error(Errc::dimension_mismatch, "diagonalize needs a square matrix");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (hermiticity_residual(h) > 1e-10 * scale)
    throw Error(Errc::contract_violation, "diagonalize needs a Hermitian matrix");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
  if (solver.info() != Eigen::Success)
    throw Error(Errc::numerical_corruption, "eigen decomposition failed");

  EigenFrame f;
  f.energies = solver.eigenvalues();
  f.vectors = solver.eigenvectors();
  for (Eigen::Index k = 0; k < f.vectors.cols(); ++k) {
    auto col = f.vectors.col(k);
    const double peak = col.cwiseAbs().maxCoeff();
    Eigen::Index pivot = 0;
    while (std::abs(col(pivot)) < peak * (1.0 - 1e-12)) ++pivot;
    const cplx z = col(pivot);
    col *= std::conj(z) / std::abs(z);
    col(pivot) = std::abs(col(pivot));
  }
  const Eigen::Index d = f.energies.size();
  f.omega.resize(d, d);
  for (Eigen::Index b = 0; b < d; ++b)
    for (Eigen::Index a = 0; a < d; ++a) f.omega(a, b) = f.energies(a) - f.energies(b);
  return f;
}

inline Matrix to_eigenbasis(const EigenFrame& frame, const Matrix& a) {
  if (a.rows() != frame.dimension() || a.cols() != frame.dimension())
    throw Error(Errc::dimension_mismatch, "operator and frame dimensions differ");
  return frame.vectors.adjoint() * a * frame.vectors;
}

inline Matrix from_eigenbasis(const EigenFrame& frame, const Matrix& a) {
  if (a.rows() != frame.dimension() || a.cols() != frame.dimension())
    throw Error(Errc::dimension_mismatch, "operator and frame dimensions differ");
  return frame.vectors * a * frame.vectors.adjoint();
}

struct CouplingSet {
  RealVector kappas;
  std::vector<Matrix> a_ops;  // kappa_i sigma^x_i, computational basis

  [[nodiscard]] int sites() const { return static_cast<int>(kappas.size()); }
  [[nodiscard]] double max_kappa() const { return kappas.size() ? kappas.cwiseAbs().maxCoeff() : 0.0; }
  [[nodiscard]] bool is_closed() const { return max_kappa() == 0.0; }

  /// sum_i A_i
  [[nodiscard]] Matrix total() const {
    Matrix t = Matrix::Zero(a_ops.front().rows(), a_ops.front().cols());
    for (const auto& a : a_ops) t += a;
    return t;
  }
};

inline CouplingSet make_couplings(int n, const RealVector& kappas) {
  if (kappas.size() != n) throw Error(Errc::dimension_mismatch, "need one kappa per qubit");
  for (Eigen::Index i = 0; i < kappas.size(); ++i)
    if (!(kappas(i) >= 0.0) || !std::isfinite(kappas(i)))
      throw Error(Errc::invalid_parameter, "kappa values must be finite and >= 0");
  CouplingSet c;
  c.kappas = kappas;
  for (int i = 0; i < n; ++i) c.a_ops.push_back(kappas(i) * site_sigma_x(n, i));
  return c;
}

inline CouplingSet uniform_couplings(int n, double kappa) {
  return make_couplings(n, RealVector::Constant(n, kappa));
}

struct SecularPolicy {
  enum class Mode { strict, cutoff };
  Mode mode = Mode::strict;
  double factor = 10.0;  // cutoff mode: window = factor * max kappa^2 * max S

  static SecularPolicy strict() { return {}; }
  static SecularPolicy cutoff(double f = 10.0) { return {Mode::cutoff, f}; }
  bool operator==(const SecularPolicy&) const = default;
};

inline constexpr double kStrictSecularTolerance = 1e-10;  // relative to spectral span
inline constexpr std::size_t kDefaultNonzeroBudget = 25'000'000;

struct RedfieldGenerator {
  std::size_t dimension = 0;  // D^2
  RealVector omega;           // w_ab per vectorised index (unitary part is -i w)
  SparseMatrix dissipator;    // R, column-major vectorisation in the eigenbasis
  SecularPolicy secular_policy;
  EigenFrame frame;

  /// Full generator (unitary + dissipator) as one sparse matrix.
  [[nodiscard]] SparseMatrix matrix() const {
    SparseMatrix u(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(dimension));
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(dimension);
    for (Eigen::Index k = 0; k < omega.size(); ++k)
      if (omega(k) != 0.0) t.emplace_back(k, k, -I * omega(k));
    u.setFromTriplets(t.begin(), t.end());
    if (dissipator.nonZeros() == 0) return u;
    return u + dissipator;
  }

  [[nodiscard]] bool has_dissipator() const { return dissipator.nonZeros() > 0; }
};

namespace detail {

// Indices of (a, b) pairs sorted by w_ab; ties broken by index for determinism.
inline std::vector<std::size_t> pairs_by_frequency(const RealVector& omega_vec) {
  std::vector<std::size_t> order(static_cast<std::size_t>(omega_vec.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return omega_vec(static_cast<Eigen::Index>(x)) < omega_vec(static_cast<Eigen::Index>(y));
  });
  return order;
}

}  // namespace detail

inline RedfieldGenerator build_generator(const EigenFrame& frame, const CouplingSet& c,
                                         const BathParams& p, SecularPolicy policy = {},
                                         std::size_t nonzero_budget = kDefaultNonzeroBudget) {
  const Eigen::Index d = frame.dimension();
  if (c.a_ops.empty() || c.a_ops.front().rows() != d)
    throw Error(Errc::dimension_mismatch, "coupling operators do not match the frame dimension");
  p.validate();

  RedfieldGenerator g;
  g.dimension = static_cast<std::size_t>(d * d);
  g.secular_policy = policy;
  g.frame = frame;
  g.omega.resize(d * d);
  for (Eigen::Index b = 0; b < d; ++b)
    for (Eigen::Index a = 0; a < d; ++a) g.omega(a + b * d) = frame.omega(a, b);
  g.dissipator.resize(d * d, d * d);
  if (c.is_closed()) return g;

  const Matrix a = to_eigenbasis(frame, c.total());
  RealMatrix s(d, d);  // s(x, y) = S(w_xy)
  for (Eigen::Index y = 0; y < d; ++y)
    for (Eigen::Index x = 0; x < d; ++x) s(x, y) = noise_power_spectrum(p, frame.omega(x, y));

  // m1(a, c) = sum_n A_an A_nc S(w_cn);  m2(d, b) = sum_n A_dn A_nb S(w_dn)
  const Matrix m1 = a * a.cwiseProduct(s.transpose().cast<cplx>());
  const Matrix m2 = a.cwiseProduct(s.cast<cplx>()) * a;

  const auto order = detail::pairs_by_frequency(g.omega);
  const std::size_t npairs = order.size();
  auto w_at = [&](std::size_t k) { return g.omega(static_cast<Eigen::Index>(order[k])); };

  // Secular window as [lo, hi) ranges over `order`, one per sorted position.
  std::vector<std::size_t> lo(npairs), hi(npairs);
  if (policy.mode == SecularPolicy::Mode::strict) {
    const double tol = kStrictSecularTolerance * std::max(frame.spectral_span(), 1e-300);
    std::size_t start = 0;
    for (std::size_t k = 1; k <= npairs; ++k) {
      if (k == npairs || w_at(k) - w_at(k - 1) >= tol) {
        for (std::size_t q = start; q < k; ++q) {
          lo[q] = start;
          hi[q] = k;
        }
        start = k;
      }
    }
  } else {
    if (!(policy.factor > 0.0)) throw Error(Errc::invalid_parameter, "secular cutoff factor must be > 0");
    const double kmax = c.max_kappa();
    const double window = policy.factor * kmax * kmax * s.maxCoeff();
    std::size_t l = 0, h = 0;
    for (std::size_t k = 0; k < npairs; ++k) {
      while (w_at(k) - w_at(l) >= window) ++l;
      if (h < k + 1) h = k + 1;
      while (h < npairs && w_at(h) - w_at(k) < window) ++h;
      lo[k] = l;
      hi[k] = h;
    }
  }

  std::size_t estimate = 0;
  for (std::size_t k = 0; k < npairs; ++k) estimate += hi[k] - lo[k];
  if (estimate > nonzero_budget)
    throw Error(Errc::memory_guard,
                "secular generator would hold " + std::to_string(estimate) + " entries (budget " +
                    std::to_string(nonzero_budget) + "); use strict secular mode or a smaller system");

  std::vector<Eigen::Triplet<cplx>> triplets;
  triplets.reserve(estimate);
  for (std::size_t k = 0; k < npairs; ++k) {
    const auto row = static_cast<Eigen::Index>(order[k]);
    const Eigen::Index ia = row % d, ib = row / d;
    for (std::size_t q = lo[k]; q < hi[k]; ++q) {
      const auto col = static_cast<Eigen::Index>(order[q]);
      const Eigen::Index ic = col % d, id = col / d;
      cplx v = 0.5 * a(ia, ic) * a(id, ib) * (s(ic, ia) + s(id, ib));
      if (ib == id) v -= 0.5 * m1(ia, ic);
      if (ia == ic) v -= 0.5 * m2(id, ib);
      if (v != cplx{0.0, 0.0}) triplets.emplace_back(row, col, v);
    }
  }
  g.dissipator.setFromTriplets(triplets.begin(), triplets.end());
  g.dissipator.makeCompressed();
  return g;
}

inline Vector apply(const RedfieldGenerator& g, const Vector& rho_vec) {
  if (static_cast<std::size_t>(rho_vec.size()) != g.dimension)
    throw Error(Errc::dimension_mismatch, "state length does not match the generator");
  Vector out = (-I * g.omega.cast<cplx>()).cwiseProduct(rho_vec);
  if (g.has_dissipator()) out.noalias() += g.dissipator * rho_vec;
  return out;
}

/// Nonzero triplets of the full generator as CSV (row,col,re,im).
inline void dump_generator_csv(const RedfieldGenerator& g, std::ostream& os) {
  os << "row,col,re,im\n";
  const SparseMatrix m = g.matrix();
  char buf[128];
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g\n", static_cast<long long>(it.row()),
                    static_cast<long long>(it.col()), it.value().real(), it.value().imag());
      os << buf;
    }
  }
}

}  // namespace qanneal
