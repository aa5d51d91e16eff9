#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wavecraft/detector.hpp"
#include "wavecraft/optimizer.hpp"
#include "wavecraft/signal_model.hpp"

namespace wavecraft {

struct GeometrySpec {
  double direction = 0.0;       // radians from broadside
  std::vector<double> delays;   // explicit element delays; empty means uniform linear
};

struct BoxSpec {
  double delay_cells = 2.0;  // half-width in units of 1/B
  double scale_cells = 1.0;  // half-width in units of 1/(f_c T)
  std::vector<double> betas = {1.0, 0.8, 0.6, 0.4, 0.2};
};

struct DetectorSpec {
  double snr_db = 10.0;
  std::vector<double> thresholds = default_threshold_sweep();
  std::int64_t trials = 100000;
  ThetaMode theta_mode = ThetaMode::uniform_random;
  int theta_lattice = 101;
  int worst_case_grid = 21;
  std::int64_t chunk = 8192;
};

struct OutsourceSpec {
  std::vector<double> reflections = {1.0, -1.0};
  double frame = 1.5;
  double beta = 0.6;
  int lattice = 51;
};

struct TablesSpec {
  int scale_points = 51;
  int delay_points = 51;
  double gaussian_sigma = 0.0;  // 0 selects T/8
};

struct ExperimentConfig {
  SystemConfig system = SystemConfig::standard(3, 30, 1.0, 200.0);
  GeometrySpec geometry;
  BoxSpec box;
  DesignOptions design;
  DetectorSpec detector;
  OutsourceSpec outsource;
  TablesSpec tables;
  int draws = 10;      // basis draws for the correlation tables
  int roc_draws = 10;  // basis draws averaged in each ROC
  std::uint64_t master_seed = 1;
  std::filesystem::path output_dir = "out";
  int threads = 1;

  void validate() const;
  /// 100 table draws, 10 ROC draws of 10^6 trials each.
  void apply_full_scale();
  ArrayGeometry make_geometry() const;
  ParameterBox make_box(double beta) const;
};

/// Parses a JSON document; absent keys keep their defaults. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full JSON of the effective configuration, defaults included.
std::string config_to_json(const ExperimentConfig& config);

/// Basis draw d of a run: independent of beta, thread count and other draws.
BasisSet draw_basis(const ExperimentConfig& config, int draw);

/// Design for draw d at shrink factor beta, seeded from the master seed.
DesignResult design_for(const ExperimentConfig& config, const BasisSet& basis, double beta, int draw);

struct TableRow {
  std::string algorithm;  // designed | gaussian | lfm
  double beta = 1.0;
  double average = 0.0;
  double minimum = 0.0;
  int draws = 0;
  std::uint64_t seed = 0;
};

struct ArtifactSet {
  std::vector<std::filesystem::path> files;  // relative to the output directory
};

std::vector<TableRow> compute_tables(const ExperimentConfig& config);
void write_tables_csv(const std::vector<TableRow>& rows, std::ostream& out);

struct RocFamily {
  std::vector<double> betas;
  std::vector<RocTable> tables;  // probability-averaged over draws
};

RocFamily compute_roc(const ExperimentConfig& config);

struct OutsourceComparison {
  double beta = 0.6;
  RocTable without_source;
  std::vector<RocTable> with_source;  // one per configured reflection
};

OutsourceComparison compute_roc_outsource(const ExperimentConfig& config);

struct ValidationCheck {
  std::string name;
  std::string category;
  double measured = 0.0;
  double bound = 0.0;
  bool passed = false;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool passed() const;
  std::size_t categories() const;
};

/// Test hook: applied to every correlation matrix the validation suite builds
/// before it is compared against quadrature.
using CorrelationFault = std::function<void(CorrelationMatrix&)>;

ValidationReport run_validation(const ExperimentConfig& config, const CorrelationFault& fault = {});
void write_report(const ValidationReport& report, std::ostream& out);

/// Writes manifest.json listing every artifact with its SHA-256.
void write_manifest(const ExperimentConfig& config, const std::string& command, const ArtifactSet& artifacts,
                    double wall_seconds);

std::string sha256_hex(const std::filesystem::path& file);

/// CLI entry points; each writes into config.output_dir and its manifest.
ArtifactSet run_design(const ExperimentConfig& config, double beta);
ArtifactSet run_tables(const ExperimentConfig& config);
ArtifactSet run_roc(const ExperimentConfig& config);
ArtifactSet run_roc_outsource(const ExperimentConfig& config);
/// Returns the report; the caller decides the exit status.
ValidationReport run_validate(const ExperimentConfig& config, ArtifactSet& artifacts);

/// Design serialized as JSON: coefficients as [re, im] pairs, config, seed, trace.
std::string design_to_json(const DesignResult& design, const ExperimentConfig& config, double beta, int draw);

struct PlotCurve {
  std::string label;
  std::vector<RocRow> rows;
};

/// Standalone SVG with one polyline per curve. Throws on an empty list.
std::string render_roc_svg(const std::vector<PlotCurve>& curves, const std::string& title);

/// Deterministic pool: runs f(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

}  // namespace wavecraft
