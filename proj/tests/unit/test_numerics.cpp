#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>

#include "wavecraft/numerics.hpp"
#include "wavecraft/random.hpp"

using namespace wavecraft;

namespace {

Matrix random_hermitian(int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
  }
  return 0.5 * (a + a.adjoint());
}

}  // namespace

TEST(HermitianEig, DiagonalInput) {
  Matrix h = Matrix::Zero(3, 3);
  h(0, 0) = 1.0;
  h(1, 1) = 3.0;
  h(2, 2) = 2.0;
  const auto e = hermitian_eig(h);
  EXPECT_NEAR(e.values(0), 3.0, 1e-14);
  EXPECT_NEAR(e.values(1), 2.0, 1e-14);
  EXPECT_NEAR(e.values(2), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-14);
}

TEST(HermitianEig, IdentityAndTwoByTwo) {
  const auto id = hermitian_eig(Matrix::Identity(5, 5));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(id.values(i), 1.0, 1e-14);
  Matrix h(2, 2);
  h << 2.0, cdouble(0, 1), cdouble(0, -1), 2.0;
  const auto e = hermitian_eig(h);
  EXPECT_NEAR(e.values(0), 3.0, 1e-14);
  EXPECT_NEAR(e.values(1), 1.0, 1e-14);
}

TEST(HermitianEig, PauliY) {
  Matrix h(2, 2);
  h << 0.0, cdouble(0, -1), cdouble(0, 1), 0.0;
  const auto e = hermitian_eig(h);
  EXPECT_NEAR(e.values(0), 1.0, 1e-14);
  EXPECT_NEAR(e.values(1), -1.0, 1e-14);
  const Vector v = e.vectors.col(0);
  EXPECT_LT((h * v - v).norm(), 1e-13);
}

TEST(HermitianEig, RandomReconstructionAndResiduals) {
  for (int n : {1, 2, 5, 20, 60}) {
    const Matrix h = random_hermitian(n, 100 + n);
    const auto e = hermitian_eig(h);
    const double norm = h.norm();
    const Matrix recon = e.vectors * e.values.cast<cdouble>().asDiagonal() * e.vectors.adjoint();
    EXPECT_LE((recon - h).norm(), 1e-8 * norm) << n;
    EXPECT_LE((e.vectors.adjoint() * e.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10) << n;
    for (int i = 0; i < n; ++i) {
      EXPECT_LE((h * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm(), 1e-8 * norm);
      if (i > 0) EXPECT_GE(e.values(i - 1), e.values(i));
    }
  }
}

TEST(HermitianEig, MatchesEigenLibrary) {
  const Matrix h = random_hermitian(30, 7);
  const auto mine = hermitian_eig(h);
  Eigen::SelfAdjointEigenSolver<Matrix> ref(h);
  for (int i = 0; i < 30; ++i) EXPECT_NEAR(mine.values(i), ref.eigenvalues()(29 - i), 1e-12);
}

TEST(HermitianEig, PhaseConvention) {
  const auto e = hermitian_eig(random_hermitian(8, 3));
  for (int c = 0; c < 8; ++c) {
    Eigen::Index k;
    e.vectors.col(c).cwiseAbs().maxCoeff(&k);
    EXPECT_GT(e.vectors(k, c).real(), 0.0);
    EXPECT_EQ(e.vectors(k, c).imag(), 0.0);
  }
}

TEST(HermitianEig, RejectsBadInput) {
  Matrix h = Matrix::Identity(3, 3);
  h(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(hermitian_eig(h), NumericalError);
  EXPECT_THROW(hermitian_eig(Matrix(2, 3)), std::invalid_argument);
}

TEST(TopEigpair, AgreesWithFullDecomposition) {
  const Matrix h = random_hermitian(25, 11);
  const auto full = hermitian_eig(h);
  const auto top = top_eigpair(h);
  EXPECT_DOUBLE_EQ(top.value, full.values(0));
  EXPECT_LT((top.vector - full.vectors.col(0)).norm(), 1e-12);
}

TEST(MarcumQ1, ClosedFormsAtEdges) {
  for (double b : {0.0, 0.3, 1.0, 2.5, 6.0}) EXPECT_NEAR(marcum_q1(0.0, b), std::exp(-0.5 * b * b), 1e-14);
  for (double a : {0.0, 0.7, 4.0, 30.0}) EXPECT_DOUBLE_EQ(marcum_q1(a, 0.0), 1.0);
}

TEST(MarcumQ1, MatchesRiceTailIntegral) {
  for (double a : {0.2, 1.0, 2.0, 4.5, 8.0}) {
    for (double b : {0.1, 1.0, 3.0, 6.0, 10.0}) {
      const auto pdf = [a](double x) {
        return cdouble(x * std::exp(-0.5 * (x - a) * (x - a)) * std::exp(-a * x) * std::cyl_bessel_i(0.0, a * x),
                       0.0);
      };
      const double tail = integrate_1d(pdf, b, a + b + 40.0, 1e-14).value.real();
      EXPECT_NEAR(marcum_q1(a, b), tail, 1e-10) << a << ' ' << b;
    }
  }
}

TEST(MarcumQ1, MonotoneInArguments) {
  double prev = 0.0;
  for (double a = 0.0; a < 6.0; a += 0.5) {
    const double q = marcum_q1(a, 2.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
  prev = 1.0;
  for (double b = 0.0; b < 8.0; b += 0.5) {
    const double q = marcum_q1(2.0, b);
    EXPECT_LE(q, prev);
    prev = q;
  }
}

TEST(MarcumQ1, RejectsNonFinite) {
  EXPECT_THROW(marcum_q1(std::nan(""), 1.0), std::invalid_argument);
  EXPECT_DOUBLE_EQ(marcum_q1(-1.5, 2.0), marcum_q1(1.5, 2.0));
}

TEST(Integrate1d, Polynomial) {
  const auto r = integrate_1d([](double t) { return cdouble(t * t * t, 0.0); }, 0.0, 2.0, 1e-13);
  EXPECT_NEAR(r.value.real(), 4.0, 1e-12);
}

TEST(Integrate1d, OscillatoryExponential) {
  const double w = 200.0;
  const auto r = integrate_1d([w](double t) { return std::polar(1.0, w * t); }, 0.0, 1.0, 1e-12);
  const cdouble exact = (std::polar(1.0, w) - 1.0) / cdouble(0.0, w);
  EXPECT_LT(std::abs(r.value - exact), 1e-11);
  EXPECT_LE(r.error, 1e-12);
}

TEST(Integrate1d, GaussianPeak) {
  const double s = 1e-3;
  const auto r = integrate_1d(
      [s](double t) { return cdouble(std::exp(-0.5 * t * t / (s * s)) / (s * std::sqrt(2 * std::numbers::pi)), 0.0); },
      -1.0, 1.0, 1e-12);
  EXPECT_NEAR(r.value.real(), 1.0, 1e-10);
}

TEST(Integrate1d, HalvingToleranceStaysWithinEstimate) {
  const auto f = [](double t) { return cdouble(std::sin(30.0 * t) * std::exp(-t), std::cos(7.0 * t)); };
  QuadratureOptions loose{1e-8, 0.0, 4000};
  QuadratureOptions tight{5e-9, 0.0, 4000};
  const auto a = integrate_1d(f, 0.0, 3.0, loose);
  const auto b = integrate_1d(f, 0.0, 3.0, tight);
  EXPECT_LE(std::abs(a.value - b.value), a.error + b.error + 1e-15);
}

TEST(Integrate1d, ThrowsWhenBudgetExhausted) {
  QuadratureOptions opts{1e-15, 0.0, 3};
  EXPECT_THROW(integrate_1d([](double t) { return cdouble(std::sin(1e4 * t), 0.0); }, 0.0, 1.0, opts),
               NumericalError);
}

TEST(Random, DeriveSeedIsStable) {
  EXPECT_EQ(derive_seed(1, {tag("a"), 2}), derive_seed(1, {tag("a"), 2}));
  EXPECT_NE(derive_seed(1, {tag("a"), 2}), derive_seed(1, {tag("a"), 3}));
  EXPECT_NE(derive_seed(1, {tag("a")}), derive_seed(2, {tag("a")}));
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(r);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
