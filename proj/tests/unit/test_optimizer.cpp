#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "wavecraft/baselines.hpp"
#include "wavecraft/optimizer.hpp"

using namespace wavecraft;

namespace {

WhitenedSystem toy_system(std::uint64_t seed, int r = 2, int points = 2) {
  Rng rng(seed);
  WhitenedSystem ws;
  ws.energies = Eigen::VectorXd::Ones(r);
  ws.range_basis = Matrix::Identity(r, r);
  ws.transform = Matrix::Identity(r, r);
  for (int k = 0; k < points; ++k) {
    Matrix a(r, r);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) a(i, j) = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
    }
    ws.whitened.push_back(a);
  }
  return ws;
}

// Grid search over unit vectors (cos a, e^{jb} sin a) followed by a local
// coordinate refinement.
double brute_force(const WhitenedSystem& ws, const std::vector<double>& w, int n) {
  auto f = [&](double a, double b) {
    Vector u(2);
    u << std::cos(a), std::polar(std::sin(a), b);
    return weighted_objective(ws, w, u);
  };
  double best = -1.0, ba = 0.0, bb = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double a = 0.5 * std::numbers::pi * i / n, b = 2.0 * std::numbers::pi * j / n;
      const double v = f(a, b);
      if (v > best) {
        best = v;
        ba = a;
        bb = b;
      }
    }
  }
  for (double h = 2.0 * std::numbers::pi / n; h > 1e-12; h *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (auto [da, db] : {std::pair{h, 0.0}, {-h, 0.0}, {0.0, h}, {0.0, -h}}) {
        const double v = f(ba + da, bb + db);
        if (v > best) {
          best = v;
          ba += da;
          bb += db;
          moved = true;
        }
      }
    }
  }
  return best;
}

struct Design {
  SystemConfig cfg = SystemConfig::standard(3, 30, 1.0, 200.0);
  ArrayGeometry geom = ArrayGeometry::uniform_linear(3, 400.0);
  BasisSet basis;
  explicit Design(std::uint64_t seed) : basis(make(seed)) {}
  BasisSet make(std::uint64_t seed) {
    Rng rng(seed);
    return sample_basis(cfg, rng);
  }
};

}  // namespace

TEST(BuildM, HermitianAndMatchesDefinition) {
  const auto ws = toy_system(1, 3, 3);
  const std::vector<double> w = {0.2, 0.3, 0.5}, phi = {0.1, -2.0, 1.3};
  const Matrix m = build_M(ws, w, phi);
  EXPECT_LE((m - m.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
  Matrix ref = Matrix::Zero(3, 3);
  for (int k = 0; k < 3; ++k) {
    ref += w[k] * (std::polar(1.0, -phi[k]) * ws.whitened[k] + std::polar(1.0, phi[k]) * ws.whitened[k].adjoint());
  }
  EXPECT_LE((m - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildM, RejectsBadWeights) {
  const auto ws = toy_system(1);
  const std::vector<double> phi = {0.0, 0.0};
  EXPECT_THROW(build_M(ws, std::vector<double>{0.7, 0.7}, phi), std::invalid_argument);
  EXPECT_THROW(build_M(ws, std::vector<double>{1.5, -0.5}, phi), std::invalid_argument);
  EXPECT_THROW(build_M(ws, std::vector<double>{1.0}, std::vector<double>{0.0}), std::invalid_argument);
}

TEST(InnerCyclic, SingleIdentityPointConvergesImmediately) {
  WhitenedSystem ws;
  ws.energies = Eigen::VectorXd::Ones(4);
  ws.whitened.push_back(Matrix::Identity(4, 4));
  const std::vector<double> w = {1.0}, phi = {0.0};
  const auto st = inner_cyclic(ws, w, phi);
  EXPECT_NEAR(st.cost, 1.0, 1e-14);
  EXPECT_TRUE(st.converged);
  EXPECT_LE(st.iterations, 2);
}

TEST(InnerCyclic, MonotoneTraceAndStepOptimality) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ws = toy_system(seed, 6, 3);
    const std::vector<double> w = {0.5, 0.3, 0.2}, phi = {0.0, 0.0, 0.0};
    const auto st = inner_cyclic(ws, w, phi);
    for (std::size_t i = 1; i < st.trace.size(); ++i) EXPECT_GE(st.trace[i], st.trace[i - 1] - 1e-12);
    for (int k = 0; k < 3; ++k) {
      const cdouble q = st.u.dot(ws.whitened[k] * st.u);
      EXPECT_NEAR((std::polar(1.0, -st.phases[k]) * q).real(), std::abs(q), 1e-12);
    }
    EXPECT_NEAR(st.cost, weighted_objective(ws, w, st.u), 1e-10);
    EXPECT_NEAR(st.u.norm(), 1.0, 1e-12);
  }
}

TEST(InnerCyclic, EigenStepIsTopEigenvector) {
  const auto ws = toy_system(4, 5, 2);
  const std::vector<double> w = {0.6, 0.4}, phi = {0.3, 1.0};
  InnerOptions one{1e-8, 1};
  const auto st = inner_cyclic(ws, w, phi, one);
  const Matrix m = build_M(ws, w, phi);
  EXPECT_NEAR(st.u.dot(m * st.u).real(), hermitian_eig(m).values(0), 1e-9);
}

TEST(InnerMultistart, ReachesBruteForceOnToySystems) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ws = toy_system(seed);
    for (double lam : {0.0, 0.3, 0.5, 1.0}) {
      const std::vector<double> w = {lam, 1.0 - lam}, phi = {0.0, 0.0};
      const auto st = inner_multistart(ws, w, phi, {}, 8, seed);
      EXPECT_NEAR(st.cost, brute_force(ws, w, 300), 1e-4) << seed << ' ' << lam;
      EXPECT_GE(st.cost, inner_cyclic(ws, w, phi).cost);
    }
  }
}

TEST(OuterSearch, LatticeMinimality) {
  for (std::uint64_t seed : {2u, 7u}) {
    const auto ws = toy_system(seed, 4, 2);
    DesignOptions opts;
    opts.seed = seed;
    const auto res = outer_search(ws, opts);
    ASSERT_GE(res.outer_evaluations.size(), 21u);
    // The first 21 evaluations are the lattice; later ones are refinement probes.
    for (std::size_t i = 0; i < 21; ++i) {
      const auto& [lam, f] = res.outer_evaluations[i];
      EXPECT_GE(f, res.cost - 1e-9) << lam;
    }
    EXPECT_GE(res.lambda, 0.0);
    EXPECT_LE(res.lambda, 1.0);
    EXPECT_EQ(res.method, "grid");
  }
}

TEST(OuterSearch, BisectionAgreesWithGrid) {
  const auto ws = toy_system(5, 4, 2);
  DesignOptions grid;
  DesignOptions bis;
  bis.method = OuterMethod::bisection;
  const auto a = outer_search(ws, grid);
  const auto b = outer_search(ws, bis);
  EXPECT_NEAR(a.cost, b.cost, 1e-6);
}

TEST(OuterSearch, EqualPointsTieBreakAtHalf) {
  auto ws = toy_system(3, 3, 1);
  ws.whitened.push_back(ws.whitened[0]);
  const auto res = outer_search(ws, {});
  EXPECT_DOUBLE_EQ(res.lambda, 0.5);
}

TEST(OuterSearch, RequiresTwoPoints) {
  const auto ws = toy_system(1, 2, 3);
  EXPECT_THROW(outer_search(ws, {}), std::invalid_argument);
}

TEST(OuterSearchSimplex, ImprovesWorstPoint) {
  const auto ws = toy_system(9, 5, 4);
  DesignOptions opts;
  opts.simplex_starts = 1;
  const auto res = outer_search_simplex(ws, opts);
  double worst = 1e300;
  for (const auto& m : ws.whitened) worst = std::min(worst, std::abs(res.u.dot(m * res.u)));
  EXPECT_NEAR(worst, res.worst_response, 1e-12);
  // No better than the uniform-weight solution's worst point would be odd.
  const std::vector<double> w(4, 0.25), phi(4, 0.0);
  const auto flat = inner_cyclic(ws, w, phi);
  double flat_worst = 1e300;
  for (const auto& m : ws.whitened) flat_worst = std::min(flat_worst, std::abs(flat.u.dot(m * flat.u)));
  EXPECT_GE(res.worst_response, flat_worst - 1e-12);
  double total = 0.0;
  for (double x : res.weights) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(OuterSearchSimplex, ScreenedStartsRecordEveryStep) {
  const auto ws = toy_system(4, 5, 6);
  DesignOptions opts;
  opts.simplex_starts = 5;
  opts.simplex_screen_iterations = 12;
  opts.simplex_iterations = 40;
  const auto res = outer_search_simplex(ws, opts);
  EXPECT_EQ(res.outer_evaluations.size(), 5u * 12u + 40u);
  double worst = 1e300;
  for (const auto& m : ws.whitened) worst = std::min(worst, std::abs(res.u.dot(m * res.u)));
  EXPECT_NEAR(worst, res.worst_response, 1e-12);
  opts.simplex_starts = 0;
  EXPECT_THROW(outer_search_simplex(ws, opts), std::invalid_argument);
}

TEST(DesignWaveform, DegenerateBoxMatchesAtCenter) {
  Design d(3);
  ParameterBox box = ParameterBox::from_resolution(d.cfg, 1.0, 1e-9, 1e-9);
  const auto res = design_waveform(d.basis, d.geom, box, {});
  const ResponseModel model(d.basis, d.geom, res.s, 0.94);
  EXPECT_NEAR(std::abs(model({0.0, 0.94, 1.0})), 1.0, 1e-6);
}

TEST(DesignWaveform, UnitEnergyAndHighInBoxCorrelation) {
  Design d(7);
  const auto box = ParameterBox::from_resolution(d.cfg, 1.0);
  const auto res = design_waveform(d.basis, d.geom, box, {});
  const auto r0 = build_R0(d.basis, d.geom, 0.94);
  EXPECT_NEAR(res.s.dot(r0.entries * res.s).real(), 1.0, 1e-9);
  for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_GE(res.trace[i], res.trace[i - 1] - 1e-12);
  EXPECT_EQ(res.grid.size(), 16u);
  const ResponseModel model(d.basis, d.geom, res.s, 0.94);
  const auto stats = box_correlation_stats([&](const TargetParams& t) { return model(t); }, box, 51, 51, 0.94);
  EXPECT_GE(stats.minimum, 0.9);
  EXPECT_GE(stats.average, stats.minimum);
}

TEST(DesignWaveform, CornerPairPipeline) {
  Design d(4);
  DesignOptions opts;
  opts.grid = DesignGrid::corner_pair;
  const auto box = ParameterBox::from_resolution(d.cfg, 1.0);
  const auto res = design_waveform(d.basis, d.geom, box, opts);
  ASSERT_EQ(res.grid.size(), 2u);
  const auto [a, b] = corner_pair(box);
  EXPECT_EQ(res.corner_a.scale, a.scale);
  EXPECT_EQ(res.corner_b.delay_offset, b.delay_offset);
  const ResponseModel model(d.basis, d.geom, res.s, 0.94);
  // At lambda* the two corner responses bound the inner cost from below.
  EXPECT_GE(std::min(std::abs(model(a)), std::abs(model(b))), res.worst_response - 1e-9);
  const auto r0 = build_R0(d.basis, d.geom, 0.94);
  EXPECT_NEAR(res.s.dot(r0.entries * res.s).real(), 1.0, 1e-9);
}

TEST(DesignWaveform, DeterministicForSeed) {
  Design d(5);
  DesignOptions opts;
  opts.seed = 99;
  const auto box = ParameterBox::from_resolution(d.cfg, 0.6);
  const auto a = design_waveform(d.basis, d.geom, box, opts);
  const auto b = design_waveform(d.basis, d.geom, box, opts);
  EXPECT_EQ((a.s - b.s).cwiseAbs().maxCoeff(), 0.0);
}
