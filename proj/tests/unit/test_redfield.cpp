#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "qanneal/metrics.hpp"
#include "qanneal/model.hpp"
#include "qanneal/redfield.hpp"

using namespace qanneal;

namespace {

Matrix sigma_x() { return (Matrix(2, 2) << 0, 1, 1, 0).finished(); }
Matrix sigma_z() { return (Matrix(2, 2) << 1, 0, 0, -1).finished(); }

Matrix random_density(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = cplx(nd(rng), nd(rng));
  Matrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

Matrix random_hermitian(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = cplx(nd(rng), nd(rng));
  return 0.5 * (g + g.adjoint());
}

HamiltonianSet three_qubit_chain(double mx0) {
  auto g = assign_couplings(build_linear_graph(3), UniformCoupling{1.0});
  g.m0 = 0.1;
  return make_hamiltonians(g, {mx0, 1.0, ScheduleMode::annealed});
}

// Literal tensor: sum over site pairs (j, k) of the four-term expression,
// restricted to |w_ab - w_cd| < tol. Independent of the production path
// (no total-operator collapse, no frequency sorting, no precomputed products).
Matrix brute_force_generator(const EigenFrame& f, const CouplingSet& c, const BathParams& p, double tol) {
  const Eigen::Index d = f.dimension();
  std::vector<Matrix> a;
  for (const auto& op : c.a_ops) a.push_back(f.vectors.adjoint() * op * f.vectors);
  auto S = [&](Eigen::Index x, Eigen::Index y) { return noise_power_spectrum(p, f.energies(x) - f.energies(y)); };
  Matrix gen = Matrix::Zero(d * d, d * d);
  for (Eigen::Index ia = 0; ia < d; ++ia)
    for (Eigen::Index ib = 0; ib < d; ++ib)
      for (Eigen::Index ic = 0; ic < d; ++ic)
        for (Eigen::Index id = 0; id < d; ++id) {
          const double wab = f.energies(ia) - f.energies(ib), wcd = f.energies(ic) - f.energies(id);
          if (std::abs(wab - wcd) >= tol) continue;
          cplx r = 0.0;
          for (std::size_t j = 0; j < a.size(); ++j)
            for (std::size_t k = 0; k < a.size(); ++k) {
              cplx term = 0.0;
              if (ib == id)
                for (Eigen::Index n = 0; n < d; ++n) term += a[j](ia, n) * a[k](n, ic) * S(ic, n);
              term -= a[j](ia, ic) * a[k](id, ib) * S(ic, ia);
              if (ia == ic)
                for (Eigen::Index n = 0; n < d; ++n) term += a[j](id, n) * a[k](n, ib) * S(id, n);
              term -= a[j](ia, ic) * a[k](id, ib) * S(id, ib);
              r += -0.5 * term;
            }
          gen(ia + ib * d, ic + id * d) += r;
        }
  for (Eigen::Index ia = 0; ia < d; ++ia)
    for (Eigen::Index ib = 0; ib < d; ++ib) gen(ia + ib * d, ia + ib * d) += -I * (f.energies(ia) - f.energies(ib));
  return gen;
}

}  // namespace

TEST(Diagonalize, PauliExamples) {
  auto fz = diagonalize(sigma_z());
  EXPECT_NEAR(fz.energies(0), -1.0, 1e-15);
  EXPECT_NEAR(fz.energies(1), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(fz.vectors(1, 0)), 1.0, 1e-15);  // spin down
  EXPECT_EQ(fz.vectors(1, 0), cplx(1.0));

  // sigma^x: E=-1 eigenvector is (1,-1)/sqrt2, phase fixed so the first
  // largest-magnitude entry is real positive.
  auto fx = diagonalize(sigma_x());
  EXPECT_NEAR(fx.energies(0), -1.0, 1e-15);
  EXPECT_NEAR(fx.vectors(0, 0).real(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(fx.vectors(1, 0).real(), -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(fx.vectors(0, 1).real(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(fx.vectors(1, 1).real(), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Diagonalize, TwoQubitIsingSpectrum) {
  auto g = assign_couplings(build_linear_graph(2), UniformCoupling{1.0});
  g.m0 = 0.1;
  auto f = diagonalize(ising_hamiltonian(g));
  const double want[] = {-1.1, -0.9, 0.9, 1.1};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(f.energies(k), want[k], 1e-14);
}

TEST(Diagonalize, FrameInvariants) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix h = random_hermitian(16, rng);
    const auto f = diagonalize(h);
    for (Eigen::Index k = 1; k < f.energies.size(); ++k) EXPECT_LE(f.energies(k - 1), f.energies(k));
    EXPECT_LT((f.vectors.adjoint() * f.vectors - Matrix::Identity(16, 16)).norm(), 1e-10);
    EXPECT_LT((h * f.vectors - f.vectors * f.energies.cast<cplx>().asDiagonal()).norm(), 1e-9 * h.norm());
    EXPECT_TRUE((f.omega + f.omega.transpose()).isZero(0.0));
    for (Eigen::Index k = 0; k < 16; ++k) {
      Eigen::Index arg;
      f.vectors.col(k).cwiseAbs().maxCoeff(&arg);
      EXPECT_EQ(f.vectors(arg, k).imag(), 0.0);
      EXPECT_GT(f.vectors(arg, k).real(), 0.0);
    }
    // deterministic
    EXPECT_EQ(diagonalize(h).vectors, f.vectors);
  }
}

TEST(Diagonalize, RejectsNonHermitian) {
  Matrix m = sigma_x();
  m(0, 1) = 2.0;
  try {
    diagonalize(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::contract_violation);
  }
}

TEST(ToEigenbasis, Examples) {
  std::mt19937_64 rng(3);
  const auto f = diagonalize(random_hermitian(8, rng));
  EXPECT_LT((to_eigenbasis(f, Matrix::Identity(8, 8)) - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(hermiticity_residual(to_eigenbasis(f, random_hermitian(8, rng))), 1e-12);
  const Matrix x = to_eigenbasis(diagonalize(sigma_z()), sigma_x());
  EXPECT_EQ(x(0, 0), cplx(0.0));
  EXPECT_EQ(x(1, 1), cplx(0.0));
  EXPECT_NEAR(std::abs(x(0, 1)), 1.0, 1e-15);
  EXPECT_THROW(to_eigenbasis(f, Matrix::Identity(4, 4)), Error);
}

class TwoLevelOracle : public ::testing::TestWithParam<double> {};

TEST_P(TwoLevelOracle, RatesMatchNoiseSpectrum) {
  const double beta = GetParam();
  const double w0 = 1.0, kappa = 0.7;
  const BathParams p{beta, 30.0, 1.0};
  const auto f = diagonalize(0.5 * w0 * sigma_z());
  const auto c = uniform_couplings(1, kappa);
  const auto gen = build_generator(f, c, p);
  const Matrix g = Matrix(gen.matrix());
  const double down = kappa * kappa * noise_power_spectrum(p, w0);
  const double up = kappa * kappa * noise_power_spectrum(p, -w0);
  // vectorised population indices: gg -> 0, ee -> 3
  EXPECT_NEAR(g(0, 0).real(), -up, 1e-12 * down);
  EXPECT_NEAR(g(0, 3).real(), down, 1e-12 * down);
  EXPECT_NEAR(g(3, 0).real(), up, 1e-12 * down);
  EXPECT_NEAR(g(3, 3).real(), -down, 1e-12 * down);
  // coherences decay at (up + down) / 2 and rotate at w0
  EXPECT_NEAR(g(1, 1).real(), -0.5 * (up + down), 1e-12 * down);
  EXPECT_NEAR(g(1, 1).imag(), -(f.energies(1) - f.energies(0)), 1e-12);
  // steady state of the population block
  EXPECT_NEAR(up / down, std::exp(-beta * w0), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Betas, TwoLevelOracle, ::testing::Values(1.3, 2.0, 2.2));

TEST(Generator, ClosedSystemHasNoDissipator) {
  const auto h = three_qubit_chain(2.0);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  const auto gen = build_generator(f, uniform_couplings(3, 0.0), {1.0, 30.0, 1.0});
  EXPECT_EQ(gen.dissipator.nonZeros(), 0);
  const Vector mixed = vectorize(Matrix::Identity(8, 8) / 8.0);
  EXPECT_EQ(qanneal::apply(gen, mixed).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Generator, MatchesBruteForceTensorStrict) {
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  RealVector kappas(3);
  kappas << 0.3, 1.1, 0.6;
  const auto c = make_couplings(3, kappas);
  const BathParams p{1.3, 30.0, 1.0};
  const Matrix ref = brute_force_generator(f, c, p, kStrictSecularTolerance * f.spectral_span());
  const Matrix got = Matrix(build_generator(f, c, p).matrix());
  EXPECT_LT((ref - got).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST(Generator, MatchesBruteForceTensorCutoff) {
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  const auto c = uniform_couplings(3, 0.2);
  const BathParams p{2.0, 30.0, 1.0};
  double smax = 0.0;
  for (Eigen::Index x = 0; x < 8; ++x)
    for (Eigen::Index y = 0; y < 8; ++y) smax = std::max(smax, noise_power_spectrum(p, f.omega(x, y)));
  const double window = 0.5 * 0.04 * smax;
  const Matrix ref = brute_force_generator(f, c, p, window);
  const Matrix got = Matrix(build_generator(f, c, p, SecularPolicy::cutoff(0.5)).matrix());
  EXPECT_LT((ref - got).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
  // a wider window keeps strictly more terms than strict mode
  EXPECT_GT(build_generator(f, c, p, SecularPolicy::cutoff(0.5)).dissipator.nonZeros(),
            build_generator(f, c, p).dissipator.nonZeros());
}

TEST(Generator, TraceAndHermiticityPreservation) {
  std::mt19937_64 rng(11);
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  RealVector kappas(3);
  kappas << 0.5, 1.5, 0.9;
  const BathParams p{2.2, 30.0, 1.0};
  for (auto policy : {SecularPolicy::strict(), SecularPolicy::cutoff(10.0)}) {
    const auto gen = build_generator(f, make_couplings(3, kappas), p, policy);
    for (int rep = 0; rep < 1000; ++rep) {
      const Matrix rho = random_density(8, rng);
      const Matrix out = unvectorize(qanneal::apply(gen, vectorize(rho)), 8);
      EXPECT_LT(std::abs(out.trace()), 1e-10);
      EXPECT_LT(hermiticity_residual(out), 1e-10);
    }
  }
}

TEST(Generator, GibbsStateIsStationary) {
  const BathParams p{1.3, 30.0, 1.0};
  for (double mx0 : {0.0, 0.3, 2.0}) {  // mx0 = 0 exercises a degenerate spectrum
    const auto h = three_qubit_chain(mx0);
    const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
    const auto gen = build_generator(f, uniform_couplings(3, 0.8), p);
    const Matrix rho_g = to_eigenbasis(f, gibbs_state(f, p.beta));
    EXPECT_LT(qanneal::apply(gen, vectorize(rho_g)).norm(), 1e-8) << "mx0=" << mx0;
  }
}

TEST(Generator, KappaScaling) {
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  RealVector kappas(3);
  kappas << 0.5, 1.5, 0.9;
  const BathParams p{2.2, 30.0, 1.0};
  const Matrix d1 = Matrix(build_generator(f, make_couplings(3, kappas), p).dissipator);
  const Matrix d3 = Matrix(build_generator(f, make_couplings(3, 3.0 * kappas), p).dissipator);
  EXPECT_LT((d3 - 9.0 * d1).cwiseAbs().maxCoeff(), 1e-12 * d3.cwiseAbs().maxCoeff());
}

TEST(Generator, Linearity) {
  std::mt19937_64 rng(5);
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  const auto gen = build_generator(f, uniform_couplings(3, 0.9), {2.0, 30.0, 1.0});
  const Vector r1 = vectorize(random_density(8, rng)), r2 = vectorize(random_density(8, rng));
  const cplx a{0.3, -1.2}, b{2.0, 0.5};
  const Vector lhs = qanneal::apply(gen, a * r1 + b * r2);
  const Vector rhs = a * qanneal::apply(gen, r1) + b * qanneal::apply(gen, r2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * lhs.cwiseAbs().maxCoeff());
  EXPECT_THROW(qanneal::apply(gen, Vector::Zero(10)), Error);
}

TEST(Generator, MemoryGuard) {
  const auto h = three_qubit_chain(0.8);
  const auto f = diagonalize(system_hamiltonian_at(h, 0.0));
  try {
    build_generator(f, uniform_couplings(3, 0.9), {2.0, 30.0, 1.0}, SecularPolicy::cutoff(1e6), 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::memory_guard);
  }
}

TEST(Generator, CsvDump) {
  const auto gen = build_generator(diagonalize(0.5 * sigma_z()), uniform_couplings(1, 0.5), {1.0, 30.0, 1.0});
  std::ostringstream os;
  dump_generator_csv(gen, os);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("row,col,re,im\n", 0), 0U);
  EXPECT_EQ(static_cast<long>(std::count(s.begin(), s.end(), '\n')), gen.matrix().nonZeros() + 1);
}
