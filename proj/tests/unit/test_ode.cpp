#include <gtest/gtest.h>

#include <cmath>

#include "qanneal/linalg.hpp"
#include "qanneal/ode.hpp"

using namespace qanneal;

namespace {

// y' = lambda y, complex lambda
struct Exponential {
  cplx lambda;
  void operator()(double, const Vector& y, Vector& dy) const { dy = lambda * y; }
};

// y' = cos(t) y, y(0) = 1 -> exp(sin t)
struct Forced {
  void operator()(double t, const Vector& y, Vector& dy) const { dy = std::cos(t) * y; }
};

}  // namespace

TEST(DormandPrince, ComplexExponential) {
  const Exponential f{cplx(-0.3, 2.0)};
  ode::DormandPrince<Vector> dp({1e-10, 1e-12});
  Vector y = Vector::Ones(1);
  double h = 0.0;
  dp.integrate(f, y, 0.0, 3.0, h);
  EXPECT_LT(std::abs(y(0) - std::exp(f.lambda * 3.0)), 1e-8);
  EXPECT_GT(dp.stats().accepted, 0u);
}

TEST(DormandPrince, ToleranceControlsError) {
  double prev = 1.0;
  for (double rtol : {1e-4, 1e-6, 1e-8, 1e-10}) {
    ode::DormandPrince<Vector> dp({rtol, rtol * 1e-3});
    Vector y = Vector::Ones(1);
    double h = 0.0;
    dp.integrate(Forced{}, y, 0.0, 5.0, h);
    const double err = std::abs(y(0) - std::exp(std::sin(5.0)));
    EXPECT_LT(err, 100 * rtol);
    EXPECT_LE(err, prev);
    prev = err;
  }
}

TEST(DormandPrince, ChainedIntervalsLandExactly) {
  ode::DormandPrince<Vector> dp({1e-9, 1e-12});
  Vector y = Vector::Ones(1);
  double h = 0.0;
  for (int k = 0; k < 50; ++k) dp.integrate(Forced{}, y, 0.1 * k, 0.1 * (k + 1), h);
  EXPECT_LT(std::abs(y(0) - std::exp(std::sin(5.0))), 1e-7);
}

TEST(DormandPrince, MatrixState) {
  // rotation generator: y' = -i[H, y] with H = sigma_x keeps y unitary-equivalent
  const Matrix hx = (Matrix(2, 2) << 0, 1, 1, 0).finished();
  auto rhs = [&](double, const Matrix& y, Matrix& dy) { dy = -I * (hx * y - y * hx); };
  Matrix rho = Matrix::Zero(2, 2);
  rho(0, 0) = 1.0;
  ode::DormandPrince<Matrix> dp({1e-10, 1e-12});
  double h = 0.0;
  const double t = 0.7;
  dp.integrate(rhs, rho, 0.0, t, h);
  EXPECT_NEAR(rho(0, 0).real(), std::cos(t) * std::cos(t), 1e-9);
  EXPECT_NEAR(rho(1, 1).real(), std::sin(t) * std::sin(t), 1e-9);
}

TEST(DormandPrince, NonFiniteRhsFails) {
  auto rhs = [](double, const Vector& y, Vector& dy) { dy = y * std::numeric_limits<double>::quiet_NaN(); };
  ode::DormandPrince<Vector> dp({1e-6, 1e-9});
  Vector y = Vector::Ones(1);
  double h = 0.1;
  EXPECT_THROW(dp.integrate(rhs, y, 0.0, 1.0, h), Error);
}

TEST(DormandPrince, InvalidTolerance) {
  EXPECT_THROW(ode::DormandPrince<Vector>({0.0, 1e-9}), Error);
  EXPECT_THROW(ode::DormandPrince<Vector>({1e-6, -1.0}), Error);
}

TEST(ClassicalRK4, FourthOrderConvergence) {
  auto err = [](double step) {
    ode::ClassicalRK4<Vector> rk(step);
    Vector y = Vector::Ones(1);
    double h = step;
    rk.integrate(Forced{}, y, 0.0, 2.0, h);
    return std::abs(y(0) - std::exp(std::sin(2.0)));
  };
  const double e1 = err(0.1), e2 = err(0.05);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.3);
}

TEST(ClassicalRK4, LandsOnEndpoint) {
  ode::ClassicalRK4<Vector> rk(0.3);
  Vector y = Vector::Ones(1);
  double h = 0.3;
  // 1.0 / 0.3 is not an integer; steps are shortened uniformly
  rk.integrate(Exponential{cplx(-1.0, 0.0)}, y, 0.0, 1.0, h);
  EXPECT_EQ(rk.stats().accepted, 4u);
  EXPECT_NEAR(y(0).real(), std::exp(-1.0), 1e-4);
  EXPECT_THROW(ode::ClassicalRK4<Vector>(0.0), Error);
}
