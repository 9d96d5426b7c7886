#pragma once

// Explicit Runge-Kutta steppers for linear ODEs on dense complex states
// (Eigen matrices or vectors). Dormand-Prince 5(4) with the usual
// Hairer-Norsett-Wanner step-size controller, plus classical fixed-step RK4.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "qanneal/error.hpp"

namespace qanneal::ode {

struct Tolerance {
  double rtol = 1e-6;
  double atol = 1e-9;
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

namespace detail {

template <class State>
double error_norm(const State& err, const State& y0, const State& y1, const Tolerance& tol) {
  const auto scale = (tol.atol + tol.rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array());
  const double sq = (err.cwiseAbs().array() / scale).square().sum();
  return std::sqrt(sq / static_cast<double>(err.size()));
}

}  // namespace detail

/// Dormand-Prince 5(4). `rhs(t, y, dydt)` writes the derivative into dydt.
template <class State>
class DormandPrince {
 public:
  explicit DormandPrince(Tolerance tol, double max_step = 0.0) : tol_(tol), max_step_(max_step) {
    if (!(tol.rtol > 0.0) || !(tol.atol > 0.0))
      throw Error(Errc::invalid_parameter, "rtol and atol must be > 0");
  }

  [[nodiscard]] const StepStats& stats() const { return stats_; }

  /// Advances y from t0 to t1 exactly. `h` is the suggested first step (0 to
  /// let the stepper pick) and receives the suggestion for the next call.
  template <class Rhs>
  void integrate(Rhs&& rhs, State& y, double t0, double t1, double& h) {
    if (t1 <= t0) return;
    double t = t0;
    k1_.resizeLike(y);
    rhs(t, y, k1_);
    ++stats_.rhs_evals;
    if (!(h > 0.0)) h = initial_step(rhs, y, t, t1);
    while (t < t1) {
      double step = std::min(h, t1 - t);
      if (max_step_ > 0.0) step = std::min(step, max_step_);
      const bool last = (t + step >= t1) || (t1 - (t + step) <= 1e-14 * std::max(1.0, std::abs(t1)));
      if (last) step = t1 - t;
      if (step < 1e-14 * std::max(1.0, std::abs(t)))
        throw Error(Errc::integration_failure, "step size underflow at t = " + std::to_string(t));

      stage(rhs, y, t, step);
      const double err = detail::error_norm(err_, y, y5_, tol_);
      if (!std::isfinite(err))
        throw Error(Errc::integration_failure, "non-finite error estimate at t = " + std::to_string(t));
      if (err <= 1.0) {
        t = last ? t1 : t + step;
        y.swap(y5_);
        k1_.swap(k7_);  // first-same-as-last
        ++stats_.accepted;
        const double fac = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        if (!last || fac * step > h) h = step * fac;
      } else {
        ++stats_.rejected;
        h = step * std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
  }

 private:
  template <class Rhs>
  double initial_step(Rhs& rhs, const State& y, double t, double t1) {
    auto scale = [&](const State& v) {
      return std::sqrt((v.cwiseAbs().array() / (tol_.atol + tol_.rtol * y.cwiseAbs().array())).square().sum() /
                       static_cast<double>(v.size()));
    };
    const double d0 = scale(y), d1 = scale(k1_);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t1 - t);
    tmp_ = y + h0 * k1_;
    State f1;
    f1.resizeLike(y);
    rhs(t + h0, tmp_, f1);
    ++stats_.rhs_evals;
    const double d2 = scale(State(f1 - k1_)) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min({100.0 * h0, h1, t1 - t});
  }

  template <class Rhs>
  void stage(Rhs& rhs, const State& y, double t, double h) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    k2_.resizeLike(y);
    k3_.resizeLike(y);
    k4_.resizeLike(y);
    k5_.resizeLike(y);
    k6_.resizeLike(y);
    k7_.resizeLike(y);

    tmp_ = y + h * a21 * k1_;
    rhs(t + c2 * h, tmp_, k2_);
    tmp_ = y + h * (a31 * k1_ + a32 * k2_);
    rhs(t + c3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    rhs(t + c4 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    rhs(t + c5 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    rhs(t + h, tmp_, k6_);
    y5_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    rhs(t + h, y5_, k7_);
    err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    stats_.rhs_evals += 6;
  }

  Tolerance tol_;
  double max_step_;
  StepStats stats_;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, y5_, err_;
};

/// Classical RK4 with a fixed step; the final step is shortened to land on t1.
template <class State>
class ClassicalRK4 {
 public:
  explicit ClassicalRK4(double h) : h_(h) {
    if (!(h > 0.0)) throw Error(Errc::invalid_parameter, "fixed step must be > 0");
  }

  [[nodiscard]] const StepStats& stats() const { return stats_; }

  template <class Rhs>
  void integrate(Rhs&& rhs, State& y, double t0, double t1, double& /*h*/) {
    if (t1 <= t0) return;
    const auto steps = static_cast<long long>(std::ceil((t1 - t0) / h_ - 1e-9));
    const double h = (t1 - t0) / static_cast<double>(std::max(1LL, steps));
    k1_.resizeLike(y);
    k2_.resizeLike(y);
    k3_.resizeLike(y);
    k4_.resizeLike(y);
    for (long long i = 0; i < std::max(1LL, steps); ++i) {
      const double t = t0 + static_cast<double>(i) * h;
      rhs(t, y, k1_);
      tmp_ = y + 0.5 * h * k1_;
      rhs(t + 0.5 * h, tmp_, k2_);
      tmp_ = y + 0.5 * h * k2_;
      rhs(t + 0.5 * h, tmp_, k3_);
      tmp_ = y + h * k3_;
      rhs(t + h, tmp_, k4_);
      y += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
      ++stats_.accepted;
      stats_.rhs_evals += 4;
    }
  }

 private:
  double h_;
  StepStats stats_;
  State k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace qanneal::ode
