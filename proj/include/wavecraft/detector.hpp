#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wavecraft/baselines.hpp"
#include "wavecraft/numerics.hpp"
#include "wavecraft/signal_model.hpp"

namespace wavecraft {

/// Noise power and threshold sweep for the magnitude detector |r| > gamma.
struct DetectorConfig {
  double noise_power = 0.1;       // sigma^2
  std::vector<double> thresholds;  // strictly increasing, >= 0
  std::optional<double> alpha;    // target false-alarm rate

  void validate() const;
};

/// 0, 0.05, ..., 4 (81 values, computed as i * 0.05).
std::vector<double> default_threshold_sweep();

/// sigma^2 such that sigma_t^2 * s_energy / sigma^2 equals the given SNR.
double noise_power_for_snr(double snr_db, double reflection = 1.0, double s_energy = 1.0);

/// True iff |r| > gamma (a tie is not a detection).
bool glrt_decide(cdouble r, double gamma);

/// exp(-gamma^2 / (s_energy sigma^2)).
double pfa_analytic(double gamma, double noise_power, double s_energy);

/// Q1(|mean| sqrt(2/v), gamma sqrt(2/v)) with v = s_energy sigma^2.
double pd_analytic(double gamma, cdouble mean, double noise_power, double s_energy);

/// gamma with pfa_analytic(gamma) = alpha.
double calibrate_threshold(double alpha, double noise_power, double s_energy);

struct RocRow {
  double gamma = 0.0;
  double pfa = 0.0;
  double pd = 0.0;
};

struct RocTable {
  std::vector<RocRow> rows;
  std::string provenance;  // "analytic" or "monte-carlo"
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
  /// Extra `# key=value` lines for the CSV header, in insertion order.
  std::vector<std::pair<std::string, std::string>> metadata;
  /// P_D averaged analytically over the same theta draws, when requested.
  std::vector<double> pd_reference;

  /// Trapezoidal area under (pfa, pd), closed with the (0, 0) and (1, 1) corners.
  double auc() const;
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
};

/// Header `gamma,pfa,pd` preceded by `# key=value` metadata lines.
void write_csv(const RocTable& table, std::ostream& out);
/// Inverse of write_csv; throws std::runtime_error on malformed input.
RocTable read_roc_csv(std::istream& in);

enum class ThetaMode { uniform_random, worst_case_grid };

struct MonteCarloOptions {
  std::int64_t trials = 100000;
  std::uint64_t seed = 0;
  ThetaMode mode = ThetaMode::uniform_random;
  double reflection = 1.0;   // sigma_t
  /// Uniform theta is drawn from an n x n node lattice of the box whose
  /// responses are computed once; 0 draws continuous theta and evaluates the
  /// response per trial (exact but much slower).
  int theta_lattice = 101;
  int worst_case_grid = 21;  // n x n grid searched in worst-case mode
  int threads = 1;
  std::int64_t chunk = 8192;  // trials per independent substream
  bool analytic_reference = false;  // fill RocTable::pd_reference
};

/// Interferer outside the box: each normalized coordinate is drawn uniformly
/// from [-frame, -1] U [1, frame].
struct OutsourceOptions {
  double reflection = 1.0;  // sigma_os
  double frame = 1.5;
  int lattice = 51;  // nodes per half-frame per axis; 0 means continuous
};

using ResponseFn = CorrelationFn;

/// Monte Carlo ROC of the detector for a waveform whose noiseless response is
/// `response` and whose energy is s_energy. Results depend only on the seed,
/// never on the thread count.
RocTable roc_monte_carlo(const ResponseFn& response, double s_energy, const ParameterBox& box,
                         const DetectorConfig& det, const MonteCarloOptions& opts);

/// Same trials with an out-of-region reflector added under both hypotheses.
/// The in-box draws and the noise match roc_monte_carlo for the same seed.
RocTable roc_with_outsource(const ResponseFn& response, double s_energy, const ParameterBox& box,
                            const DetectorConfig& det, const MonteCarloOptions& opts,
                            const OutsourceOptions& source);

/// Analytic ROC at a single fixed target response.
RocTable roc_analytic(cdouble mean, double s_energy, const DetectorConfig& det);

struct EpsWorseOptions {
  int scale_points = 21;
  int delay_points = 21;
  std::vector<double> reflections;  // sigma_t grid
  double alpha = 1e-3;
  double noise_power = 0.1;
};

struct EpsWorseArea {
  double fraction = 0.0;  // share of (theta, sigma_t) grid cells in S_eps
  double pd_worst = 0.0;
  double gamma = 0.0;
};

/// Share of the (theta, sigma_t) grid where P_D < P_D,worst + eps.
EpsWorseArea eps_worse_area(const ResponseFn& response, double s_energy, const ParameterBox& region, double eps,
                            const EpsWorseOptions& opts);

}  // namespace wavecraft
