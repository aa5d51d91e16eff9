#include "wavecraft/experiments.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "wavecraft/baselines.hpp"
#include "wavecraft/correlation.hpp"
#include "wavecraft/random.hpp"

namespace wavecraft {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

const char* to_string(DesignGrid g) { return g == DesignGrid::lattice ? "lattice" : "corner_pair"; }
const char* to_string(OuterMethod m) { return m == OuterMethod::grid ? "grid" : "bisection"; }
const char* to_string(CornerChoice c) { return c == CornerChoice::diagonal ? "diagonal" : "anti_diagonal"; }
const char* to_string(ThetaMode m) { return m == ThetaMode::uniform_random ? "uniform-random" : "worst-case-grid"; }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::vector<double> parse_thresholds(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  check_keys(j, "detector.thresholds", {"start", "step", "count"});
  double start = 0.0, step = 0.05;
  int count = 81;
  read(j, "start", start);
  read(j, "step", step);
  read(j, "count", count);
  if (count < 1) throw ConfigError("detector.thresholds.count must be >= 1");
  std::vector<double> g(count);
  for (int i = 0; i < count; ++i) g[i] = start + i * step;
  return g;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string beta_label(double beta) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << beta;
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  system.validate();
  if (!geometry.delays.empty() && geometry.delays.size() != static_cast<std::size_t>(system.num_generators)) {
    throw ConfigError("geometry.delays must have one entry per generator");
  }
  if (!(box.delay_cells > 0.0) || !(box.scale_cells > 0.0)) throw ConfigError("box cells must be > 0");
  if (box.betas.empty()) throw ConfigError("box.betas is empty");
  for (double b : box.betas) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("every beta must lie in (0, 1]");
  }
  DetectorConfig det{0.1, detector.thresholds, std::nullopt};
  det.validate();
  if (detector.trials < 1) throw ConfigError("detector.trials must be >= 1");
  if (detector.chunk < 1) throw ConfigError("detector.chunk must be >= 1");
  if (detector.theta_lattice == 1 || detector.theta_lattice < 0) throw ConfigError("theta_lattice must be 0 or >= 2");
  if (detector.worst_case_grid < 2) throw ConfigError("worst_case_grid must be >= 2");
  if (!std::isfinite(detector.snr_db)) throw ConfigError("snr_db must be finite");
  if (!(outsource.frame > 1.0)) throw ConfigError("outsource.frame must exceed 1");
  if (!(outsource.beta > 0.0 && outsource.beta <= 1.0)) throw ConfigError("outsource.beta must lie in (0, 1]");
  if (outsource.lattice < 0) throw ConfigError("outsource.lattice must be >= 0");
  if (tables.scale_points < 2 || tables.delay_points < 2) throw ConfigError("tables grid must be at least 2 x 2");
  if (tables.gaussian_sigma < 0.0) throw ConfigError("tables.gaussian_sigma must be >= 0");
  if (draws < 1 || roc_draws < 1) throw ConfigError("draws must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (design.lattice_scale < 1 || design.lattice_delay < 1) throw ConfigError("design lattice must be nonempty");
  if (design.restarts < 0) throw ConfigError("design.restarts must be >= 0");
  if (!(design.rank_tol > 0.0 && design.rank_tol < 1.0)) throw ConfigError("design.rank_tol must lie in (0, 1)");
}

void ExperimentConfig::apply_full_scale() {
  draws = 100;
  roc_draws = 10;
  detector.trials = 1000000;
}

ArrayGeometry ExperimentConfig::make_geometry() const {
  if (!geometry.delays.empty()) return ArrayGeometry(geometry.delays, geometry.direction);
  return ArrayGeometry::uniform_linear(system.num_generators, system.carrier_frequency, geometry.direction);
}

ParameterBox ExperimentConfig::make_box(double beta) const {
  ParameterBox b = ParameterBox::from_resolution(system, beta, box.delay_cells, box.scale_cells);
  b.validate();
  return b;
}

namespace {

ExperimentConfig parse_config_impl(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  check_keys(j, "config", {"system", "geometry", "box", "design", "detector", "outsource", "tables", "draws",
                           "roc_draws", "master_seed", "output_dir", "threads"});
  if (j.contains("system")) {
    const auto& s = j["system"];
    check_keys(s, "system", {"num_generators", "num_basis", "pulse_duration", "bandwidth", "carrier_frequency",
                             "nominal_scale", "sigma_min"});
    auto& sys = c.system;
    read(s, "num_generators", sys.num_generators);
    read(s, "num_basis", sys.num_basis);
    read(s, "pulse_duration", sys.pulse_duration);
    read(s, "bandwidth", sys.bandwidth);
    sys.carrier_frequency = 2.0 * sys.bandwidth;
    read(s, "carrier_frequency", sys.carrier_frequency);
    read(s, "nominal_scale", sys.nominal_scale);
    read(s, "sigma_min", sys.sigma_min);
  }
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    check_keys(g, "geometry", {"direction", "delays"});
    read(g, "direction", c.geometry.direction);
    read(g, "delays", c.geometry.delays);
  }
  if (j.contains("box")) {
    const auto& b = j["box"];
    check_keys(b, "box", {"delay_cells", "scale_cells", "betas"});
    read(b, "delay_cells", c.box.delay_cells);
    read(b, "scale_cells", c.box.scale_cells);
    read(b, "betas", c.box.betas);
  }
  if (j.contains("design")) {
    const auto& d = j["design"];
    check_keys(d, "design", {"grid", "lattice", "corners", "outer", "lambda_points", "refine", "lambda_tol",
                             "restarts", "rank_tol", "simplex_iterations", "simplex_step",
                             "simplex_inner_iterations", "simplex_starts", "simplex_screen_iterations", "inner_tol", "inner_max_iter"});
    auto& o = c.design;
    if (d.contains("grid")) {
      const auto v = d["grid"].get<std::string>();
      if (v == "lattice") o.grid = DesignGrid::lattice;
      else if (v == "corner_pair") o.grid = DesignGrid::corner_pair;
      else throw ConfigError("design.grid must be lattice or corner_pair");
    }
    if (d.contains("lattice")) {
      const auto v = d["lattice"].get<std::vector<int>>();
      if (v.size() != 2) throw ConfigError("design.lattice must be [n_scale, n_delay]");
      o.lattice_scale = v[0];
      o.lattice_delay = v[1];
    }
    if (d.contains("corners")) {
      const auto v = d["corners"].get<std::string>();
      if (v == "diagonal") o.corners = CornerChoice::diagonal;
      else if (v == "anti_diagonal") o.corners = CornerChoice::anti_diagonal;
      else throw ConfigError("design.corners must be diagonal or anti_diagonal");
    }
    if (d.contains("outer")) {
      const auto v = d["outer"].get<std::string>();
      if (v == "grid") o.method = OuterMethod::grid;
      else if (v == "bisection") o.method = OuterMethod::bisection;
      else throw ConfigError("design.outer must be grid or bisection");
    }
    read(d, "lambda_points", o.lattice_points);
    read(d, "refine", o.refine);
    read(d, "lambda_tol", o.lambda_tol);
    read(d, "restarts", o.restarts);
    read(d, "rank_tol", o.rank_tol);
    read(d, "simplex_iterations", o.simplex_iterations);
    read(d, "simplex_step", o.simplex_step);
    read(d, "simplex_inner_iterations", o.simplex_inner_iterations);
    read(d, "simplex_starts", o.simplex_starts);
    read(d, "simplex_screen_iterations", o.simplex_screen_iterations);
    read(d, "inner_tol", o.inner.tol);
    read(d, "inner_max_iter", o.inner.max_iter);
  }
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    check_keys(d, "detector", {"snr_db", "thresholds", "trials", "theta_mode", "theta_lattice", "worst_case_grid",
                               "chunk"});
    read(d, "snr_db", c.detector.snr_db);
    if (d.contains("thresholds")) c.detector.thresholds = parse_thresholds(d["thresholds"]);
    read(d, "trials", c.detector.trials);
    if (d.contains("theta_mode")) {
      const auto v = d["theta_mode"].get<std::string>();
      if (v == "uniform-random") c.detector.theta_mode = ThetaMode::uniform_random;
      else if (v == "worst-case-grid") c.detector.theta_mode = ThetaMode::worst_case_grid;
      else throw ConfigError("detector.theta_mode must be uniform-random or worst-case-grid");
    }
    read(d, "theta_lattice", c.detector.theta_lattice);
    read(d, "worst_case_grid", c.detector.worst_case_grid);
    read(d, "chunk", c.detector.chunk);
  }
  if (j.contains("outsource")) {
    const auto& o = j["outsource"];
    check_keys(o, "outsource", {"reflections", "frame", "beta", "lattice"});
    read(o, "reflections", c.outsource.reflections);
    read(o, "frame", c.outsource.frame);
    read(o, "beta", c.outsource.beta);
    read(o, "lattice", c.outsource.lattice);
  }
  if (j.contains("tables")) {
    const auto& t = j["tables"];
    check_keys(t, "tables", {"grid", "gaussian_sigma"});
    if (t.contains("grid")) {
      const auto v = t["grid"].get<std::vector<int>>();
      if (v.size() != 2) throw ConfigError("tables.grid must be [n_scale, n_delay]");
      c.tables.scale_points = v[0];
      c.tables.delay_points = v[1];
    }
    read(t, "gaussian_sigma", c.tables.gaussian_sigma);
  }
  read(j, "draws", c.draws);
  read(j, "roc_draws", c.roc_draws);
  read(j, "master_seed", c.master_seed);
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  read(j, "threads", c.threads);
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  try {
    return parse_config_impl(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

json config_json(const ExperimentConfig& c) {
  const auto& s = c.system;
  const auto& d = c.design;
  return json{
      {"system",
       {{"num_generators", s.num_generators},
        {"num_basis", s.num_basis},
        {"pulse_duration", s.pulse_duration},
        {"bandwidth", s.bandwidth},
        {"carrier_frequency", s.carrier_frequency},
        {"nominal_scale", s.nominal_scale},
        {"sigma_min", s.sigma_min}}},
      {"geometry", {{"direction", c.geometry.direction}, {"delays", c.geometry.delays}}},
      {"box", {{"delay_cells", c.box.delay_cells}, {"scale_cells", c.box.scale_cells}, {"betas", c.box.betas}}},
      {"design",
       {{"grid", to_string(d.grid)},
        {"lattice", {d.lattice_scale, d.lattice_delay}},
        {"corners", to_string(d.corners)},
        {"outer", to_string(d.method)},
        {"lambda_points", d.lattice_points},
        {"refine", d.refine},
        {"lambda_tol", d.lambda_tol},
        {"restarts", d.restarts},
        {"rank_tol", d.rank_tol},
        {"simplex_iterations", d.simplex_iterations},
        {"simplex_step", d.simplex_step},
        {"simplex_inner_iterations", d.simplex_inner_iterations},
        {"simplex_starts", d.simplex_starts},
        {"simplex_screen_iterations", d.simplex_screen_iterations},
        {"inner_tol", d.inner.tol},
        {"inner_max_iter", d.inner.max_iter}}},
      {"detector",
       {{"snr_db", c.detector.snr_db},
        {"thresholds", c.detector.thresholds},
        {"trials", c.detector.trials},
        {"theta_mode", to_string(c.detector.theta_mode)},
        {"theta_lattice", c.detector.theta_lattice},
        {"worst_case_grid", c.detector.worst_case_grid},
        {"chunk", c.detector.chunk}}},
      {"outsource",
       {{"reflections", c.outsource.reflections},
        {"frame", c.outsource.frame},
        {"beta", c.outsource.beta},
        {"lattice", c.outsource.lattice}}},
      {"tables",
       {{"grid", {c.tables.scale_points, c.tables.delay_points}}, {"gaussian_sigma", c.tables.gaussian_sigma}}},
      {"draws", c.draws},
      {"roc_draws", c.roc_draws},
      {"master_seed", c.master_seed},
      {"output_dir", c.output_dir.string()},
      {"threads", c.threads}};
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

// ---------------------------------------------------------------- helpers

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  if (n <= 0) return;
  const int workers = std::clamp(threads, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto body = [&](int w) {
    for (int i = w; i < n; i += workers) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

BasisSet draw_basis(const ExperimentConfig& config, int draw) {
  Rng rng = substream(config.master_seed, {tag("basis"), static_cast<std::uint64_t>(draw)});
  return sample_basis(config.system, rng);
}

DesignResult design_for(const ExperimentConfig& config, const BasisSet& basis, double beta, int draw) {
  DesignOptions opts = config.design;
  opts.seed = derive_seed(config.master_seed,
                          {tag("design"), static_cast<std::uint64_t>(draw), std::bit_cast<std::uint64_t>(beta)});
  return design_waveform(basis, config.make_geometry(), config.make_box(beta), opts);
}

namespace {

double waveform_energy(const BasisSet& basis, const ArrayGeometry& geom, const Vector& s) {
  const CorrelationMatrix r0 = build_R0(basis, geom, basis.config().nominal_scale);
  return s.dot(r0.entries * s).real();
}

struct DrawError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class F>
auto with_draw(int draw, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DrawError("draw " + std::to_string(draw) + ": " + e.what());
  }
}

RocTable average_tables(const std::vector<RocTable>& parts) {
  RocTable out = parts.front();
  for (std::size_t g = 0; g < out.rows.size(); ++g) {
    double pfa = 0.0, pd = 0.0;
    for (const auto& p : parts) {
      pfa += p.rows[g].pfa;
      pd += p.rows[g].pd;
    }
    out.rows[g].pfa = pfa / static_cast<double>(parts.size());
    out.rows[g].pd = pd / static_cast<double>(parts.size());
  }
  out.pd_reference.clear();
  out.set("draws", std::to_string(parts.size()));
  out.set("averaging", "probability");
  return out;
}

MonteCarloOptions mc_options(const ExperimentConfig& config, std::uint64_t seed) {
  MonteCarloOptions mo;
  mo.trials = config.detector.trials;
  mo.seed = seed;
  mo.mode = config.detector.theta_mode;
  mo.theta_lattice = config.detector.theta_lattice;
  mo.worst_case_grid = config.detector.worst_case_grid;
  mo.chunk = config.detector.chunk;
  mo.threads = 1;  // parallelism lives at the (beta, draw) level
  return mo;
}

}  // namespace

// ---------------------------------------------------------------- tables

std::vector<TableRow> compute_tables(const ExperimentConfig& config) {
  config.validate();
  const auto& betas = config.box.betas;
  const int nb = static_cast<int>(betas.size());
  const ArrayGeometry geom = config.make_geometry();
  const double nominal = config.system.nominal_scale;
  const int ns = config.tables.scale_points, nd = config.tables.delay_points;

  // Designed waveforms: one job per (beta, draw).
  std::vector<BoxStats> designed(static_cast<std::size_t>(nb * config.draws));
  parallel_for(nb * config.draws, config.threads, [&](int job) {
    const int b = job / config.draws, d = job % config.draws;
    designed[job] = with_draw(d, [&] {
      const BasisSet basis = draw_basis(config, d);
      const DesignResult res = design_for(config, basis, betas[b], d);
      const ResponseModel resp(basis, geom, res.s, nominal);
      return box_correlation_stats([&](const TargetParams& t) { return resp(t); }, config.make_box(betas[b]), ns,
                                   nd, nominal);
    });
  });

  // Baselines do not depend on the basis draw, so each is evaluated once.
  const double sigma = config.tables.gaussian_sigma > 0.0 ? config.tables.gaussian_sigma
                                                          : default_gaussian_sigma(config.system.pulse_duration);
  const std::vector<TransmitWaveform> gauss(config.system.num_generators,
                                            gaussian_pulse(config.system.pulse_duration, sigma));
  const std::vector<TransmitWaveform> lfm(config.system.num_generators,
                                          lfm_pulse(config.system.pulse_duration, config.system.bandwidth));
  std::vector<BoxStats> baseline(static_cast<std::size_t>(2 * nb));
  parallel_for(2 * nb, config.threads, [&](int job) {
    const auto& tx = job % 2 == 0 ? gauss : lfm;
    const ParameterBox box = config.make_box(betas[job / 2]);
    baseline[job] = box_correlation_stats(
        [&](const TargetParams& t) {
          return correlation_quadrature(tx, geom, t, nominal, config.system.omega_c()).value();
        },
        box, ns, nd, nominal);
  });

  std::vector<TableRow> rows;
  for (int b = 0; b < nb; ++b) {
    double avg = 0.0, mn = 0.0;
    for (int d = 0; d < config.draws; ++d) {
      avg += designed[b * config.draws + d].average;
      mn += designed[b * config.draws + d].minimum;
    }
    rows.push_back({"designed", betas[b], avg / config.draws, mn / config.draws, config.draws, config.master_seed});
    rows.push_back({"gaussian", betas[b], baseline[2 * b].average, baseline[2 * b].minimum, config.draws,
                    config.master_seed});
    rows.push_back({"lfm", betas[b], baseline[2 * b + 1].average, baseline[2 * b + 1].minimum, config.draws,
                    config.master_seed});
  }
  return rows;
}

void write_tables_csv(const std::vector<TableRow>& rows, std::ostream& out) {
  out << "algorithm,beta,avg,min,draws,seed\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.beta << ',' << r.average << ',' << r.minimum << ',' << r.draws << ',' << r.seed
        << '\n';
  }
}

// ---------------------------------------------------------------- ROC

RocFamily compute_roc(const ExperimentConfig& config) {
  config.validate();
  const auto& betas = config.box.betas;
  const int nb = static_cast<int>(betas.size());
  const int nd = config.roc_draws;
  const ArrayGeometry geom = config.make_geometry();
  const double nominal = config.system.nominal_scale;
  const double noise = noise_power_for_snr(config.detector.snr_db);
  const DetectorConfig det{noise, config.detector.thresholds, std::nullopt};

  std::vector<RocTable> parts(static_cast<std::size_t>(nb * nd));
  parallel_for(nb * nd, config.threads, [&](int job) {
    const int b = job / nd, d = job % nd;
    parts[job] = with_draw(d, [&] {
      const BasisSet basis = draw_basis(config, d);
      const DesignResult res = design_for(config, basis, betas[b], d);
      const ResponseModel resp(basis, geom, res.s, nominal);
      // The same noise and theta streams for every beta.
      const auto seed = derive_seed(config.master_seed, {tag("roc"), static_cast<std::uint64_t>(d)});
      return roc_monte_carlo([&](const TargetParams& t) { return resp(t); }, waveform_energy(basis, geom, res.s),
                             config.make_box(betas[b]), det, mc_options(config, seed));
    });
  });

  RocFamily fam;
  for (int b = 0; b < nb; ++b) {
    std::vector<RocTable> mine(parts.begin() + b * nd, parts.begin() + (b + 1) * nd);
    RocTable t = average_tables(mine);
    t.seed = config.master_seed;
    t.set("beta", fmt(betas[b]));
    t.set("snr_db", fmt(config.detector.snr_db));
    fam.betas.push_back(betas[b]);
    fam.tables.push_back(std::move(t));
  }
  return fam;
}

OutsourceComparison compute_roc_outsource(const ExperimentConfig& config) {
  config.validate();
  const int nd = config.roc_draws;
  const auto& refl = config.outsource.reflections;
  const int variants = 1 + static_cast<int>(refl.size());
  const double beta = config.outsource.beta;
  const ArrayGeometry geom = config.make_geometry();
  const ParameterBox box = config.make_box(beta);
  const double nominal = config.system.nominal_scale;
  const double noise = noise_power_for_snr(config.detector.snr_db);
  const DetectorConfig det{noise, config.detector.thresholds, std::nullopt};

  // Designs first, then one MC job per (variant, draw) sharing the draw's seed.
  std::vector<Vector> designs(static_cast<std::size_t>(nd));
  std::vector<double> energies(static_cast<std::size_t>(nd));
  std::vector<BasisSet> bases;
  bases.reserve(nd);
  for (int d = 0; d < nd; ++d) bases.push_back(draw_basis(config, d));
  parallel_for(nd, config.threads, [&](int d) {
    with_draw(d, [&] {
      designs[d] = design_for(config, bases[d], beta, d).s;
      energies[d] = waveform_energy(bases[d], geom, designs[d]);
      return 0;
    });
  });

  std::vector<RocTable> parts(static_cast<std::size_t>(variants * nd));
  parallel_for(variants * nd, config.threads, [&](int job) {
    const int v = job / nd, d = job % nd;
    parts[job] = with_draw(d, [&] {
      const ResponseModel resp(bases[d], geom, designs[d], nominal);
      const ResponseFn fn = [&](const TargetParams& t) { return resp(t); };
      const auto seed = derive_seed(config.master_seed, {tag("roc-outsource"), static_cast<std::uint64_t>(d)});
      const MonteCarloOptions mo = mc_options(config, seed);
      if (v == 0) return roc_monte_carlo(fn, energies[d], box, det, mo);
      OutsourceOptions os;
      os.reflection = refl[v - 1];
      os.frame = config.outsource.frame;
      os.lattice = config.outsource.lattice;
      return roc_with_outsource(fn, energies[d], box, det, mo, os);
    });
  });

  OutsourceComparison out;
  out.beta = beta;
  for (int v = 0; v < variants; ++v) {
    std::vector<RocTable> mine(parts.begin() + v * nd, parts.begin() + (v + 1) * nd);
    RocTable t = average_tables(mine);
    t.seed = config.master_seed;
    t.set("beta", fmt(beta));
    t.set("snr_db", fmt(config.detector.snr_db));
    if (v == 0) {
      t.set("sigma_os", "none");
      out.without_source = std::move(t);
    } else {
      t.set("frame", fmt(config.outsource.frame));
      out.with_source.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------- validation

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
}

std::size_t ValidationReport::categories() const {
  std::set<std::string> cats;
  for (const auto& c : checks) cats.insert(c.category);
  return cats.size();
}

namespace {

class Checker {
 public:
  explicit Checker(ValidationReport& r) : report_(r) {}
  // Passes when measured <= bound.
  void upper(const std::string& category, const std::string& name, double measured, double bound) {
    report_.checks.push_back({name, category, measured, bound, std::isfinite(measured) && measured <= bound});
  }
  // Passes when measured >= bound.
  void lower(const std::string& category, const std::string& name, double measured, double bound) {
    report_.checks.push_back({name, category, measured, bound, std::isfinite(measured) && measured >= bound});
  }

 private:
  ValidationReport& report_;
};

Matrix random_hermitian(int n, Rng& rng) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = cdouble(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
  }
  return 0.5 * (a + a.adjoint());
}

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = cdouble(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
  return v;
}

double binomial_sigma(double p, double n) { return std::sqrt(std::max(p * (1.0 - p), 1e-300) / n); }

}  // namespace

ValidationReport run_validation(const ExperimentConfig& config, const CorrelationFault& fault) {
  config.validate();
  ValidationReport report;
  Checker check(report);
  const std::uint64_t seed = derive_seed(config.master_seed, {tag("validate")});

  // Quadrature oracle on a small basis.
  {
    SystemConfig small = SystemConfig::standard(3, 4, config.system.pulse_duration, config.system.bandwidth);
    small.nominal_scale = config.system.nominal_scale;
    Rng rng = substream(seed, {tag("quadrature")});
    const BasisSet basis = sample_basis(small, rng);
    const ArrayGeometry geom = ArrayGeometry::uniform_linear(3, small.carrier_frequency, 0.3);
    const ParameterBox box = ParameterBox::from_resolution(small, 0.5);
    const Vector s = random_vector(static_cast<int>(basis.size()), rng);
    std::vector<TransmitWaveform> tx;
    for (int m = 0; m < 3; ++m) tx.push_back(basis_waveform(basis, s, m));
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const TargetParams th = box.at_normalized(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
      CorrelationMatrix r = build_R(basis, geom, th, small.nominal_scale);
      if (fault) fault(r);
      const cdouble analytic = filter_output(s, r, 1.0);
      const cdouble quad = correlation_quadrature(tx, geom, th, small.nominal_scale, small.omega_c()).value();
      worst = std::max(worst, std::abs(analytic - quad) / std::abs(quad));
    }
    check.upper("quadrature", "analytic s^H R s vs direct integration (relative)", worst, 1e-6);

    CorrelationMatrix r0 = build_R0(basis, geom, small.nominal_scale);
    if (fault) fault(r0);
    const cdouble self = filter_output(s, r0, 1.0);
    check.upper("quadrature", "nominal self-correlation is real", std::abs(self.imag()) / std::abs(self), 1e-9);
  }

  // Eigensolver residuals.
  {
    Rng rng = substream(seed, {tag("eigen")});
    const Matrix h = random_hermitian(20, rng);
    const EigenDecomposition e = hermitian_eig(h);
    const double norm = h.norm();
    double residual = 0.0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i) {
      residual = std::max(residual, (h * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm() / norm);
    }
    check.upper("eigen", "residual |Hv - lv| / |H| (20x20)", residual, 1e-8);
    const double ortho = (e.vectors.adjoint() * e.vectors - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff();
    check.upper("eigen", "orthonormality of eigenvectors", ortho, 1e-10);
    const Matrix recon = e.vectors * e.values.cast<cdouble>().asDiagonal() * e.vectors.adjoint();
    check.upper("eigen", "reconstruction |V L V^H - H| / |H|", (recon - h).norm() / norm, 1e-8);
  }

  // Whitening and the design pipeline at full size.
  {
    const BasisSet basis = draw_basis(config, 0);
    const ArrayGeometry geom = config.make_geometry();
    const double nominal = config.system.nominal_scale;
    const CorrelationMatrix r0 = build_R0(basis, geom, nominal);
    const std::vector<CorrelationMatrix> none;
    const WhitenedSystem ws = whiten(r0, none, config.design.rank_tol);
    const auto r = ws.rank();
    check.upper("whitening", "whitened R0 vs identity",
                (ws.transform.adjoint() * r0.entries * ws.transform - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(),
                1e-8);
    check.upper("whitening", "U0^H U0 vs identity",
                (ws.range_basis.adjoint() * ws.range_basis - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);

    const double beta = config.box.betas.front();
    const DesignResult d = design_for(config, basis, beta, 0);
    check.upper("optimizer", "design energy |s^H R0 s - 1|", std::abs(d.s.dot(r0.entries * d.s).real() - 1.0), 1e-9);
    double drop = 0.0;
    for (std::size_t i = 1; i < d.trace.size(); ++i) drop = std::max(drop, d.trace[i - 1] - d.trace[i]);
    check.upper("optimizer", "inner trace decrease", drop, 1e-12);

    // Inner-step optimality on a corner pair.
    const auto [a, b] = corner_pair(config.make_box(beta), config.design.corners);
    const std::vector<CorrelationMatrix> rs = {build_R(basis, geom, a, nominal), build_R(basis, geom, b, nominal)};
    const WhitenedSystem w2 = whiten(r0, rs, config.design.rank_tol);
    const std::vector<double> weights = {0.5, 0.5}, phases = {0.0, 0.0};
    const InnerState st = inner_cyclic(w2, weights, phases, config.design.inner);
    double align = 0.0;
    for (int k = 0; k < 2; ++k) {
      const cdouble q = st.u.dot(w2.whitened[k] * st.u);
      align = std::max(align, std::abs(q) - (std::polar(1.0, -st.phases[k]) * q).real());
    }
    check.upper("optimizer", "phase step alignment |q| - Re(e^{-j phi} q)", align, 1e-12);
    check.upper("optimizer", "reported cost vs recomputed",
                std::abs(st.cost - weighted_objective(w2, weights, st.u)), 1e-10);

    const ResponseModel resp(basis, geom, d.s, nominal);
    check.upper("optimizer", "nominal response 1 - |s^H R0 s| (model)",
                std::abs(1.0 - std::abs(resp({0.0, nominal, 1.0}))), 1e-6);
  }

  // Marcum Q against integration of the Rice density.
  {
    double worst = 0.0;
    for (double a : {0.0, 0.5, 1.5, 3.0}) {
      for (double bb : {0.2, 1.0, 2.5, 4.0}) {
        const auto pdf = [a](double x) {
          // x exp(-(x^2 + a^2)/2) I0(a x), with the Bessel factor scaled for range.
          return cdouble(x * std::exp(-0.5 * (x - a) * (x - a)) * std::exp(-a * x) * std::cyl_bessel_i(0.0, a * x),
                         0.0);
        };
        const double tail = integrate_1d(pdf, bb, a + bb + 40.0, 1e-13).value.real();
        worst = std::max(worst, std::abs(tail - marcum_q1(a, bb)));
      }
    }
    check.upper("marcum", "Q1 vs Rice tail integral (abs)", worst, 1e-9);
  }

  // Detector closed forms against Monte Carlo.
  {
    const std::int64_t trials = 200000;
    const double noise = 0.1;
    DetectorConfig det{noise, {0.2, 0.5, 0.8}, std::nullopt};
    const cdouble mean = std::polar(0.7, 0.4);
    MonteCarloOptions mo;
    mo.trials = trials;
    mo.seed = derive_seed(seed, {tag("detector")});
    mo.theta_lattice = 2;
    const ParameterBox box;
    const RocTable mc = roc_monte_carlo([&](const TargetParams&) { return mean; }, 1.0, box, det, mo);
    double worst = 0.0;
    for (std::size_t g = 0; g < det.thresholds.size(); ++g) {
      const double pfa = pfa_analytic(det.thresholds[g], noise, 1.0);
      const double pd = pd_analytic(det.thresholds[g], mean, noise, 1.0);
      worst = std::max(worst, std::abs(mc.rows[g].pfa - pfa) / binomial_sigma(pfa, trials));
      worst = std::max(worst, std::abs(mc.rows[g].pd - pd) / binomial_sigma(pd, trials));
    }
    check.upper("detector", "analytic vs Monte Carlo (binomial sigmas)", worst, 4.0);
    const double g = calibrate_threshold(1e-3, noise, 1.0);
    check.upper("detector", "calibrated threshold round trip", std::abs(pfa_analytic(g, noise, 1.0) - 1e-3), 1e-12);
  }

  // ROC shape and determinism with a designed waveform.
  {
    ExperimentConfig small = config;
    small.detector.trials = 20000;
    small.detector.theta_lattice = 21;
    const BasisSet basis = draw_basis(small, 0);
    const ArrayGeometry geom = small.make_geometry();
    const double beta = small.box.betas.front();
    const DesignResult d = design_for(small, basis, beta, 0);
    const ResponseModel resp(basis, geom, d.s, small.system.nominal_scale);
    const ResponseFn fn = [&](const TargetParams& t) { return resp(t); };
    const DetectorConfig det{noise_power_for_snr(small.detector.snr_db), small.detector.thresholds, std::nullopt};
    MonteCarloOptions mo = mc_options(small, derive_seed(seed, {tag("roc")}));
    mo.chunk = 2500;
    const RocTable one = roc_monte_carlo(fn, 1.0, small.make_box(beta), det, mo);
    mo.threads = 3;
    const RocTable three = roc_monte_carlo(fn, 1.0, small.make_box(beta), det, mo);
    double rises = 0.0;
    for (std::size_t i = 1; i < one.rows.size(); ++i) {
      rises = std::max({rises, one.rows[i].pfa - one.rows[i - 1].pfa, one.rows[i].pd - one.rows[i - 1].pd});
    }
    check.upper("roc", "ROC increase along the threshold sweep", rises, 0.0);
    const bool zero_row = one.rows.front().gamma == 0.0 && one.rows.front().pfa == 1.0 && one.rows.front().pd == 1.0;
    check.upper("roc", "gamma = 0 row is (1, 1)", zero_row ? 0.0 : 1.0, 0.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < one.rows.size(); ++i) {
      diff = std::max({diff, std::abs(one.rows[i].pfa - three.rows[i].pfa), std::abs(one.rows[i].pd - three.rows[i].pd)});
    }
    check.upper("determinism", "ROC with 1 vs 3 workers", diff, 0.0);
    const DesignResult again = design_for(small, basis, beta, 0);
    check.upper("determinism", "design rerun", (again.s - d.s).cwiseAbs().maxCoeff(), 0.0);
  }

  // Baseline waveforms.
  {
    const auto& sys = config.system;
    const SampledWaveform lfm = lfm_waveform(sys.pulse_duration, sys.bandwidth, 16.0 * sys.bandwidth);
    const SampledWaveform gp = gaussian_pulse_waveform(sys.pulse_duration, sys.bandwidth, 16.0 * sys.bandwidth);
    check.upper("baselines", "sampled LFM energy - 1", std::abs(lfm.energy() - 1.0), 1e-6);
    check.upper("baselines", "sampled Gaussian energy - 1", std::abs(gp.energy() - 1.0), 1e-6);
    const ArrayGeometry geom = config.make_geometry();
    const std::vector<TransmitWaveform> tx(sys.num_generators, lfm_pulse(sys.pulse_duration, sys.bandwidth));
    const double peak = std::abs(
        correlation_quadrature(tx, geom, {0.0, sys.nominal_scale, 1.0}, sys.nominal_scale, sys.omega_c()).value());
    const double off = std::abs(correlation_quadrature(tx, geom, {10.0 / sys.bandwidth, sys.nominal_scale, 1.0},
                                                       sys.nominal_scale, sys.omega_c())
                                    .value());
    check.upper("baselines", "LFM response at tau0 = 10/B over peak", off / peak, 0.05);
  }
  return report;
}

void write_report(const ValidationReport& report, std::ostream& out) {
  out << "category,check,measured,bound,status\n" << std::setprecision(6);
  for (const auto& c : report.checks) {
    out << c.category << ",\"" << c.name << "\"," << c.measured << ',' << c.bound << ','
        << (c.passed ? "PASS" : "FAIL") << '\n';
  }
}

// ---------------------------------------------------------------- artifacts

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void write_manifest(const ExperimentConfig& config, const std::string& command, const ArtifactSet& artifacts,
                    double wall_seconds) {
  json files = json::array();
  auto sorted = artifacts.files;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& f : sorted) {
    const fs::path full = config.output_dir / f;
    files.push_back({{"path", f.generic_string()}, {"sha256", sha256_hex(full)}, {"bytes", fs::file_size(full)}});
  }
  json m = {{"command", command},
            {"config", config_json(config)},
            {"files", files},
            {"seeds",
             {{"master_seed", config.master_seed},
              {"scheme", "derive_seed(master, {tag, draw[, beta bits]}) via splitmix64"}}},
            {"roc_averaging", "probability average over basis draws"},
            {"wall_clock_seconds", wall_seconds}};
  std::ofstream out(config.output_dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest");
}

namespace {

class Output {
 public:
  explicit Output(const ExperimentConfig& config) : dir_(config.output_dir) { fs::create_directories(dir_); }

  template <class F>
  void write(const std::string& name, F&& body) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    body(out);
    if (!out) throw std::runtime_error("write failed for " + (dir_ / name).string());
    set_.files.emplace_back(name);
  }
  const ArtifactSet& artifacts() const { return set_; }

 private:
  fs::path dir_;
  ArtifactSet set_;
};

std::string roc_file(double beta) { return "roc_beta_" + beta_label(beta) + ".csv"; }

std::string sigma_label(double s) {
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(2) << s;
  return os.str();
}

}  // namespace

std::string design_to_json(const DesignResult& design, const ExperimentConfig& config, double beta, int draw) {
  json coeffs = json::array();
  for (Eigen::Index i = 0; i < design.s.size(); ++i) coeffs.push_back({design.s(i).real(), design.s(i).imag()});
  json grid = json::array();
  for (const auto& p : design.grid) grid.push_back({{"delay_offset", p.delay_offset}, {"scale", p.scale}});
  json j = {{"beta", beta},
            {"draw", draw},
            {"seed", design.seed},
            {"method", design.method},
            {"lambda", design.lambda},
            {"weights", design.weights},
            {"grid_points", grid},
            {"cost", design.cost},
            {"worst_grid_response", design.worst_response},
            {"rank", design.rank},
            {"converged", design.converged},
            {"trace", design.trace},
            {"coefficients", coeffs},
            {"config", config_json(config)}};
  return j.dump(2);
}

ArtifactSet run_design(const ExperimentConfig& config, double beta) {
  Output out(config);
  const BasisSet basis = draw_basis(config, 0);
  const DesignResult d = design_for(config, basis, beta, 0);
  out.write("design.json", [&](std::ostream& os) { os << design_to_json(d, config, beta, 0) << '\n'; });
  const ArrayGeometry geom = config.make_geometry();
  const ResponseModel resp(basis, geom, d.s, config.system.nominal_scale);
  const ParameterBox box = config.make_box(beta);
  out.write("design_response.csv", [&](std::ostream& os) {
    os << "# beta=" << fmt(beta) << "\n# seed=" << config.master_seed << "\ndelay_offset,scale,magnitude\n"
       << std::setprecision(17);
    for (const auto& t : box_grid(box, config.tables.scale_points, config.tables.delay_points)) {
      os << t.delay_offset << ',' << t.scale << ',' << std::abs(resp(t)) << '\n';
    }
  });
  return out.artifacts();
}

ArtifactSet run_tables(const ExperimentConfig& config) {
  Output out(config);
  const auto rows = compute_tables(config);
  out.write("tables.csv", [&](std::ostream& os) { write_tables_csv(rows, os); });
  return out.artifacts();
}

ArtifactSet run_roc(const ExperimentConfig& config) {
  Output out(config);
  const RocFamily fam = compute_roc(config);
  for (std::size_t i = 0; i < fam.betas.size(); ++i) {
    out.write(roc_file(fam.betas[i]), [&](std::ostream& os) { write_csv(fam.tables[i], os); });
  }
  out.write("roc_all.csv", [&](std::ostream& os) {
    os << "beta,gamma,pfa,pd\n" << std::setprecision(17);
    for (std::size_t i = 0; i < fam.betas.size(); ++i) {
      for (const auto& r : fam.tables[i].rows) os << fam.betas[i] << ',' << r.gamma << ',' << r.pfa << ',' << r.pd << '\n';
    }
  });
  out.write("roc_auc.csv", [&](std::ostream& os) {
    os << "beta,auc\n" << std::setprecision(17);
    for (std::size_t i = 0; i < fam.betas.size(); ++i) os << fam.betas[i] << ',' << fam.tables[i].auc() << '\n';
  });
  std::vector<PlotCurve> curves;
  for (std::size_t i = 0; i < fam.betas.size(); ++i) curves.push_back({"beta = " + beta_label(fam.betas[i]), fam.tables[i].rows});
  out.write("roc.svg", [&](std::ostream& os) {
    os << render_roc_svg(curves, "ROC, SNR " + beta_label(config.detector.snr_db) + " dB");
  });
  return out.artifacts();
}

ArtifactSet run_roc_outsource(const ExperimentConfig& config) {
  Output out(config);
  const OutsourceComparison cmp = compute_roc_outsource(config);
  out.write("roc_outsource_none.csv", [&](std::ostream& os) { write_csv(cmp.without_source, os); });
  std::vector<PlotCurve> curves = {{"no source", cmp.without_source.rows}};
  for (std::size_t i = 0; i < cmp.with_source.size(); ++i) {
    const std::string label = sigma_label(config.outsource.reflections[i]);
    out.write("roc_outsource_sigma" + label + ".csv", [&](std::ostream& os) { write_csv(cmp.with_source[i], os); });
    curves.push_back({"sigma_os = " + label, cmp.with_source[i].rows});
  }
  out.write("roc_outsource_auc.csv", [&](std::ostream& os) {
    os << "sigma_os,auc\n" << std::setprecision(17) << "none," << cmp.without_source.auc() << '\n';
    for (std::size_t i = 0; i < cmp.with_source.size(); ++i) {
      os << config.outsource.reflections[i] << ',' << cmp.with_source[i].auc() << '\n';
    }
  });
  out.write("roc_outsource.svg", [&](std::ostream& os) {
    os << render_roc_svg(curves, "Out-of-region source, beta = " + beta_label(cmp.beta));
  });
  return out.artifacts();
}

ValidationReport run_validate(const ExperimentConfig& config, ArtifactSet& artifacts) {
  Output out(config);
  const ValidationReport report = run_validation(config);
  out.write("validation_report.csv", [&](std::ostream& os) { write_report(report, os); });
  artifacts = out.artifacts();
  return report;
}

}  // namespace wavecraft
