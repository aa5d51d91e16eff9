// wavecraft: robust wideband waveform design experiments.
//
//   wavecraft design|tables|roc|roc-outsource|validate --config FILE [--seed N] [--full-scale] [--out DIR]
//   wavecraft plot --input A.csv [--input B.csv ...] --output FIG.svg
//
// Exit status: 0 success, 1 failure (including failed validation checks),
// 2 configuration or usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wavecraft/experiments.hpp"

namespace fs = std::filesystem;
using namespace wavecraft;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
  std::string out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON configuration file (defaults are embedded)");
  cmd->add_option("--seed", args.seed, "master seed override");
  cmd->add_flag("--full-scale", args.full_scale, "100 table draws, 10 ROC draws of 10^6 trials");
  cmd->add_option("--out", args.out, "output directory override");
  cmd->add_option("--threads", args.threads, "worker threads (results do not depend on this)");
}

ExperimentConfig resolve(const CommonArgs& args) {
  ExperimentConfig c = args.config.empty() ? ExperimentConfig{} : load_config(args.config);
  if (args.seed) c.master_seed = *args.seed;
  if (args.full_scale) c.apply_full_scale();
  if (!args.out.empty()) c.output_dir = args.out;
  if (args.threads) c.threads = *args.threads;
  c.validate();
  return c;
}

std::string curve_label(const RocTable& t, const fs::path& file) {
  if (auto s = t.get("sigma_os")) return *s == "none" ? "no source" : "sigma_os = " + *s;
  if (auto b = t.get("beta")) return "beta = " + *b;
  return file.stem().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust wideband waveform design experiments"};
  app.require_subcommand(1);

  CommonArgs common;
  double design_beta = 1.0;
  auto* design = app.add_subcommand("design", "design one waveform and dump it with its in-box response");
  add_common(design, common);
  design->add_option("--beta", design_beta, "shrink factor of the design box");
  auto* tables = app.add_subcommand("tables", "average/minimum in-box correlation per beta");
  add_common(tables, common);
  auto* roc = app.add_subcommand("roc", "ROC family over beta");
  add_common(roc, common);
  auto* outsource = app.add_subcommand("roc-outsource", "ROC with and without an out-of-region reflector");
  add_common(outsource, common);
  auto* validate = app.add_subcommand("validate", "oracle suite at reduced scale");
  add_common(validate, common);

  std::vector<std::string> inputs;
  std::string output;
  std::string title = "ROC";
  auto* plot = app.add_subcommand("plot", "render ROC CSV files as SVG");
  plot->add_option("--input", inputs, "ROC CSV (repeatable)")->required();
  plot->add_option("--output", output, "SVG path")->required();
  plot->add_option("--title", title, "plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (plot->parsed()) {
      std::vector<PlotCurve> curves;
      for (const auto& in : inputs) {
        std::ifstream f(in);
        if (!f) throw std::runtime_error("cannot read " + in);
        const RocTable t = read_roc_csv(f);
        curves.push_back({curve_label(t, in), t.rows});
      }
      const std::string svg = render_roc_svg(curves, title);
      std::ofstream out(output, std::ios::binary);
      out << svg;
      if (!out) throw std::runtime_error("cannot write " + output);
      return 0;
    }

    const ExperimentConfig config = resolve(common);
    const auto start = std::chrono::steady_clock::now();
    ArtifactSet artifacts;
    std::string command;
    int status = 0;
    if (design->parsed()) {
      command = "design";
      if (!(design_beta > 0.0 && design_beta <= 1.0)) throw ConfigError("--beta must lie in (0, 1]");
      artifacts = run_design(config, design_beta);
    } else if (tables->parsed()) {
      command = "tables";
      artifacts = run_tables(config);
    } else if (roc->parsed()) {
      command = "roc";
      artifacts = run_roc(config);
    } else if (outsource->parsed()) {
      command = "roc-outsource";
      artifacts = run_roc_outsource(config);
    } else {
      command = "validate";
      const ValidationReport report = run_validate(config, artifacts);
      write_report(report, std::cout);
      status = report.passed() ? 0 : 1;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(config, command, artifacts, wall);
    for (const auto& f : artifacts.files) std::cout << (config.output_dir / f).string() << '\n';
    return status;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
