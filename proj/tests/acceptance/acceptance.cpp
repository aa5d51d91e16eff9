// Acceptance criteria, one per invocation: `acceptance N` runs criterion N,
// no argument runs all of them. Prints one PASS/FAIL line per check and exits
// nonzero if any check failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "wavecraft/experiments.hpp"

namespace fs = std::filesystem;
using namespace wavecraft;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok, const std::string& detail) {
  std::printf("[%d] %s  %s  (%s)\n", criterion, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Vector random_coefficients(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
  return v;
}

// 1. Closed-form s^H R s against direct integration of the filter output.
void criterion1() {
  const auto cfg = SystemConfig::standard(3, 4, 1.0, 200.0);
  double worst = 0.0;
  double worst_pair = 0.0;
  for (int d = 0; d < 100; ++d) {
    Rng rng = substream(2024, {tag("acceptance-1"), static_cast<std::uint64_t>(d)});
    const BasisSet basis = sample_basis(cfg, rng);
    const ArrayGeometry geom =
        ArrayGeometry::uniform_linear(3, cfg.carrier_frequency, (uniform01(rng) - 0.5) * std::numbers::pi / 2.0);
    const Vector s = random_coefficients(12, rng);
    const ParameterBox box = ParameterBox::from_resolution(cfg, 0.2 + 0.8 * uniform01(rng));
    const TargetParams th = box.at_normalized(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);

    std::vector<TransmitWaveform> tx;
    for (int m = 0; m < 3; ++m) tx.push_back(basis_waveform(basis, s, m));
    const cdouble analytic = filter_output(s, build_R(basis, geom, th, cfg.nominal_scale), 1.0);
    const cdouble quad = correlation_quadrature(tx, geom, th, cfg.nominal_scale, cfg.omega_c()).value();
    worst = std::max(worst, std::abs(analytic - quad) / std::abs(quad));

    // One kernel pair per draw as well, compared in the log domain.
    const auto i = static_cast<std::size_t>(uniform01(rng) * 12.0);
    const auto j = static_cast<std::size_t>(uniform01(rng) * 12.0);
    const double rel = geom.relative_delay(basis.generator_of(i), basis.generator_of(j));
    const cdouble la = correlation_entry_log(basis[i], basis[j], th.delay_offset, rel, th.scale, cfg.nominal_scale,
                                             cfg.omega_c());
    const auto qp = kernel_pair_quadrature(basis[i], basis[j], th.delay_offset, rel, th.scale, cfg.nominal_scale,
                                           cfg.omega_c());
    const double dphase = std::remainder(la.imag() - qp.log_value.imag(), 2.0 * std::numbers::pi);
    // |log a - log b| bounds the relative error to first order.
    worst_pair = std::max(worst_pair, std::hypot(la.real() - qp.log_value.real(), dphase));
  }
  report(1, "s^H R s vs quadrature, 100 draws (M=3, N=4)", worst <= 1e-6, fmt("max rel err %.3g, bound 1e-6", worst));
  report(1, "single kernel pair vs quadrature, 100 draws", worst_pair <= 1e-6,
         fmt("max log err %.3g, bound 1e-6", worst_pair));
}

// 2. Closed-form P_FA / P_D against 10^6-trial Monte Carlo.
void criterion2() {
  const double noise = 0.1;
  const std::int64_t n = 1000000;
  const double gammas[] = {0.15, 0.3, 0.45, 0.6, 0.8};
  const double means[] = {0.0, 0.35, 0.7, 1.2};
  ParameterBox box;
  int probe = 0;
  double worst_z = 0.0;
  for (double g : gammas) {
    for (double m : means) {
      DetectorConfig det;
      det.noise_power = noise;
      det.thresholds = {g};
      MonteCarloOptions opts;
      opts.trials = n;
      opts.seed = derive_seed(7, {tag("acceptance-2"), static_cast<std::uint64_t>(probe)});
      const cdouble mean = std::polar(m, 0.9 * probe);
      const auto mc = roc_monte_carlo([mean](const TargetParams&) { return mean; }, 1.0, box, det, opts);
      const double pfa = pfa_analytic(g, noise, 1.0);
      const double pd = pd_analytic(g, mean, noise, 1.0);
      auto z = [n](double est, double p) {
        const double sd = std::max(std::sqrt(p * (1.0 - p) / static_cast<double>(n)), 1.0 / static_cast<double>(n));
        return std::abs(est - p) / sd;
      };
      worst_z = std::max({worst_z, z(mc.rows[0].pfa, pfa), z(mc.rows[0].pd, pd)});
      ++probe;
    }
  }
  report(2, "P_FA and P_D vs 1e6-trial Monte Carlo at 20 probes", worst_z <= 4.0,
         fmt("max deviation %.2f binomial sd, bound 4", worst_z));
}

// Grid over unit vectors (cos a, e^{jb} sin a) with 10^6 probes, then a
// shrinking-step coordinate polish.
double brute_force(const WhitenedSystem& ws, const std::vector<double>& w) {
  auto f = [&](double a, double b) {
    Vector u(2);
    u << std::cos(a), std::polar(std::sin(a), b);
    return weighted_objective(ws, w, u);
  };
  const int n = 1000;
  double best = -1.0, ba = 0.0, bb = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double a = 0.5 * std::numbers::pi * i / (n - 1), b = 2.0 * std::numbers::pi * j / n;
      const double v = f(a, b);
      if (v > best) {
        best = v;
        ba = a;
        bb = b;
      }
    }
  }
  for (double h = 2.0 * std::numbers::pi / n; h > 1e-13; h *= 0.5) {
    for (bool moved = true; moved;) {
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

// 3. Inner solver against brute force on 2-dimensional whitened systems. The
// solve is the one the optimizer runs: zero initial phases plus the default
// number of random restarts. The zero-start shortfall alone is printed too.
void criterion3() {
  const int restarts = DesignOptions{}.restarts;
  double worst_gap = 0.0;
  double worst_single = 0.0;
  int single_misses = 0;
  bool monotone = true;
  for (int k = 0; k < 20; ++k) {
    Rng rng = substream(11, {tag("acceptance-3"), static_cast<std::uint64_t>(k)});
    WhitenedSystem ws;
    ws.energies = Eigen::VectorXd::Ones(2);
    ws.range_basis = Matrix::Identity(2, 2);
    ws.transform = Matrix::Identity(2, 2);
    for (int p = 0; p < 2; ++p) {
      Matrix a(2, 2);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) a(i, j) = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
      }
      ws.whitened.push_back(a);
    }
    const double lam = uniform01(rng);
    const std::vector<double> w = {lam, 1.0 - lam}, phi = {0.0, 0.0};
    const auto st = inner_multistart(ws, w, phi, {}, restarts, static_cast<std::uint64_t>(k));
    const auto single = inner_cyclic(ws, w, phi);
    for (const auto* s : {&st, &single}) {
      for (std::size_t i = 1; i < s->trace.size(); ++i) monotone = monotone && s->trace[i] >= s->trace[i - 1] - 1e-12;
    }
    const double best = brute_force(ws, w);
    worst_gap = std::max(worst_gap, best - st.cost);
    worst_single = std::max(worst_single, best - single.cost);
    if (best - single.cost > 1e-4) ++single_misses;
  }
  std::printf("    zero-start only: %d of 20 instances short by > 1e-4, worst %.3g\n", single_misses, worst_single);
  report(3, "inner solve (zero start + " + std::to_string(restarts) + " restarts) vs brute force, 20 instances",
         worst_gap <= 1e-4, fmt("max shortfall %.3g, bound 1e-4", worst_gap));
  report(3, "inner traces nondecreasing", monotone, "every run");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.output_dir = fs::temp_directory_path() / "wavecraft_acceptance";
  return c;
}

// 4. Correlation tables.
void criterion4() {
  ExperimentConfig c = default_config();
  c.draws = 20;
  const auto rows = compute_tables(c);
  auto find = [&](const std::string& alg, double beta) {
    for (const auto& r : rows) {
      if (r.algorithm == alg && r.beta == beta) return r;
    }
    throw std::runtime_error("missing table row");
  };
  const auto d1 = find("designed", 1.0);
  report(4, "designed avg at beta=1 >= 0.95", d1.average >= 0.95, fmt("avg %.4f", d1.average));
  report(4, "designed min at beta=1 >= 0.90", d1.minimum >= 0.90, fmt("min %.4f", d1.minimum));
  bool ordered = true;
  double lfm_min = 0.0;
  for (double b : c.box.betas) {
    const auto d = find("designed", b), g = find("gaussian", b), l = find("lfm", b);
    std::printf("    beta=%.1f  designed %.4f/%.4f  gaussian %.4f/%.4f  lfm %.4f/%.5f\n", b, d.average, d.minimum,
                g.average, g.minimum, l.average, l.minimum);
    ordered = ordered && d.average >= g.average && g.average >= l.average;
    lfm_min = std::max(lfm_min, l.minimum);
  }
  report(4, "avg ordering designed >= gaussian >= lfm at every beta", ordered, "5 betas");
  report(4, "lfm min <= 0.01 at every beta", lfm_min <= 0.01, fmt("largest lfm min %.5f", lfm_min));
}

// 5. ROC family over beta.
void criterion5() {
  ExperimentConfig c = default_config();
  c.roc_draws = 5;
  c.detector.trials = 100000;
  const auto fam = compute_roc(c);
  std::vector<double> auc;
  for (std::size_t k = 0; k < fam.betas.size(); ++k) {
    auc.push_back(fam.tables[k].auc());
    std::printf("    beta=%.1f  AUC %.4f\n", fam.betas[k], auc.back());
  }
  bool nonincreasing = true;
  for (std::size_t k = 1; k < auc.size(); ++k) nonincreasing = nonincreasing && auc[k] <= auc[k - 1];
  report(5, "AUC nonincreasing as beta decreases", nonincreasing, "betas 1, 0.8, 0.6, 0.4, 0.2");
  const double gap = auc.front() - auc.back();
  report(5, "AUC(beta=1) - AUC(beta=0.2) >= 0.05", gap >= 0.05, fmt("gap %.4f", gap));
}

// 6. Out-of-region reflector at beta = 0.6.
void criterion6() {
  ExperimentConfig c = default_config();
  c.outsource.beta = 0.6;
  c.outsource.reflections = {1.0, -1.0};
  const auto cmp = compute_roc_outsource(c);
  const auto& plus = cmp.with_source[0];
  const auto& minus = cmp.with_source[1];
  const double n = static_cast<double>(plus.trials);
  double worst_z = 0.0;
  for (std::size_t g = 0; g < plus.rows.size(); ++g) {
    for (auto [a, b] : {std::pair{plus.rows[g].pfa, minus.rows[g].pfa}, {plus.rows[g].pd, minus.rows[g].pd}}) {
      const double p = 0.5 * (a + b);
      // Two independent estimates: the difference has twice the variance.
      const double sd = std::max(std::sqrt(2.0 * p * (1.0 - p) / n), 1.0 / n);
      worst_z = std::max(worst_z, std::abs(a - b) / sd);
    }
  }
  report(6, "sigma_os = +1 and -1 curves agree within MC error", worst_z <= 4.0,
         fmt("max deviation %.2f sd, bound 4", worst_z));
  const double base = cmp.without_source.auc();
  const double drop = std::max(std::abs(plus.auc() - base), std::abs(minus.auc() - base));
  report(6, "|AUC(with source) - AUC(without)| < 0.1", drop < 0.1,
         fmt("AUC without %.4f, largest change %.4f", base, drop));
}

// 7. Properties.
void criterion7() {
  ExperimentConfig c = default_config();
  const ArrayGeometry geom = c.make_geometry();
  double eig_residual = 0.0;
  double constraint = 0.0;
  for (int d = 0; d < 3; ++d) {
    const BasisSet basis = draw_basis(c, d);
    const auto r0 = build_R0(basis, geom, c.system.nominal_scale);
    const auto e = hermitian_eig(r0.entries);
    const double scale = std::abs(e.values(0));
    for (Eigen::Index i = 0; i < e.values.size(); ++i) {
      const double res = (r0.entries * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm() / scale;
      eig_residual = std::max(eig_residual, res);
    }
    for (double beta : c.box.betas) {
      const auto res = design_for(c, basis, beta, d);
      constraint = std::max(constraint, std::abs(res.s.dot(r0.entries * res.s).real() - 1.0));
    }
  }
  report(7, "eigen residuals of R0 (relative to |lambda_max|)", eig_residual <= 1e-8,
         fmt("max %.3g, bound 1e-8", eig_residual));
  report(7, "s^H R0 s = 1 on every design (3 draws x 5 betas)", constraint <= 1e-9,
         fmt("max deviation %.3g, bound 1e-9", constraint));

  c.roc_draws = 2;
  c.detector.trials = 20000;
  c.detector.chunk = 3000;
  c.output_dir = fs::temp_directory_path() / "wavecraft_acceptance_t1";
  fs::remove_all(c.output_dir);
  const auto a1 = run_roc(c);
  ExperimentConfig c4 = c;
  c4.threads = 4;
  c4.output_dir = fs::temp_directory_path() / "wavecraft_acceptance_t4";
  fs::remove_all(c4.output_dir);
  const auto a4 = run_roc(c4);
  bool identical = a1.files == a4.files;
  for (const auto& f : a1.files) {
    identical = identical && sha256_hex(c.output_dir / f) == sha256_hex(c4.output_dir / f);
  }
  report(7, "ROC artifacts byte-identical with 1 and 4 workers", identical,
         std::to_string(a1.files.size()) + " files");

  bool monotone = true;
  for (const auto& f : a1.files) {
    if (f.extension() != ".csv" || f.filename().string().rfind("roc_beta_", 0) != 0) continue;
    std::ifstream in(c.output_dir / f);
    const RocTable t = read_roc_csv(in);
    for (std::size_t g = 1; g < t.rows.size(); ++g) {
      monotone = monotone && t.rows[g].pfa <= t.rows[g - 1].pfa && t.rows[g].pd <= t.rows[g - 1].pd;
    }
  }
  report(7, "ROC P_FA and P_D nonincreasing in gamma", monotone, "all betas");
}

}  // namespace

int main(int argc, char** argv) {
  void (*criteria[])() = {criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7};
  std::vector<int> which;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  } else {
    for (int i = 1; i <= 7; ++i) which.push_back(i);
  }
  try {
    for (int k : which) {
      if (k < 1 || k > 7) {
        std::fprintf(stderr, "unknown criterion %d\n", k);
        return 2;
      }
      const auto start = std::chrono::steady_clock::now();
      criteria[k - 1]();
      std::printf("[%d] runtime %.1f s\n", k,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  } catch (const std::exception& e) {
    std::printf("FAIL  exception: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
