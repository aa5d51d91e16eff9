#include "wavecraft/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "wavecraft/random.hpp"

namespace wavecraft {

void DetectorConfig::validate() const {
  if (!(noise_power > 0.0) || !std::isfinite(noise_power)) throw ConfigError("noise power must be > 0");
  if (thresholds.empty()) throw ConfigError("threshold sweep is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0) || !std::isfinite(thresholds[i])) throw ConfigError("thresholds must be >= 0");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ConfigError("thresholds must be strictly increasing");
  }
  if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

std::vector<double> default_threshold_sweep() {
  std::vector<double> g(81);
  for (int i = 0; i < 81; ++i) g[i] = i * 0.05;
  return g;
}

double noise_power_for_snr(double snr_db, double reflection, double s_energy) {
  return reflection * reflection * s_energy / std::pow(10.0, snr_db / 10.0);
}

bool glrt_decide(cdouble r, double gamma) { return std::abs(r) > gamma; }

double pfa_analytic(double gamma, double noise_power, double s_energy) {
  if (!(s_energy > 0.0) || !(noise_power > 0.0)) throw std::invalid_argument("pfa_analytic: energy and noise must be > 0");
  return std::exp(-gamma * gamma / (s_energy * noise_power));
}

double pd_analytic(double gamma, cdouble mean, double noise_power, double s_energy) {
  if (!(s_energy > 0.0) || !(noise_power > 0.0)) throw std::invalid_argument("pd_analytic: energy and noise must be > 0");
  const double k = std::sqrt(2.0 / (s_energy * noise_power));
  return marcum_q1(std::abs(mean) * k, gamma * k);
}

double calibrate_threshold(double alpha, double noise_power, double s_energy) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("calibrate_threshold: alpha must lie in (0, 1)");
  return std::sqrt(-s_energy * noise_power * std::log(alpha));
}

double RocTable::auc() const {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(rows.size() + 2);
  pts.emplace_back(0.0, 0.0);
  for (const auto& r : rows) pts.emplace_back(r.pfa, r.pd);
  pts.emplace_back(1.0, 1.0);
  std::stable_sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  }
  return area;
}

void RocTable::set(const std::string& key, const std::string& value) {
  for (auto& kv : metadata) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> RocTable::get(const std::string& key) const {
  for (const auto& kv : metadata) {
    if (kv.first == key) return kv.second;
  }
  return std::nullopt;
}

void write_csv(const RocTable& table, std::ostream& out) {
  out << "# provenance=" << table.provenance << '\n';
  out << "# trials=" << table.trials << '\n';
  out << "# seed=" << table.seed << '\n';
  for (const auto& [k, v] : table.metadata) out << "# " << k << '=' << v << '\n';
  out << "gamma,pfa,pd\n" << std::setprecision(17);
  for (const auto& r : table.rows) out << r.gamma << ',' << r.pfa << ',' << r.pd << '\n';
}

RocTable read_roc_csv(std::istream& in) {
  RocTable table;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.find_first_not_of("# ") == std::string::npos ? line.size()
                                                                                      : line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string value = body.substr(eq + 1);
      if (key == "provenance") {
        table.provenance = value;
      } else if (key == "trials") {
        table.trials = std::stoll(value);
      } else if (key == "seed") {
        table.seed = std::stoull(value);
      } else {
        table.metadata.emplace_back(key, value);
      }
      continue;
    }
    if (!header) {
      if (line != "gamma,pfa,pd") throw std::runtime_error("ROC CSV: expected header gamma,pfa,pd");
      header = true;
      continue;
    }
    std::istringstream row(line);
    RocRow r;
    char c1 = 0, c2 = 0;
    if (!(row >> r.gamma >> c1 >> r.pfa >> c2 >> r.pd) || c1 != ',' || c2 != ',') {
      throw std::runtime_error("ROC CSV: malformed row at line " + std::to_string(lineno));
    }
    table.rows.push_back(r);
  }
  if (!header) throw std::runtime_error("ROC CSV: missing header");
  if (table.rows.empty()) throw std::runtime_error("ROC CSV: no rows");
  return table;
}

namespace {

// Theta sampler for one region. With a lattice, responses are tabulated once
// and a draw is a node index; otherwise theta is continuous.
class ThetaSource {
 public:
  // Node coordinates per axis, normalized to the box.
  ThetaSource(const ResponseFn& response, const ParameterBox& box, std::vector<double> scale_nodes,
              std::vector<double> delay_nodes, int threads)
      : response_(response), box_(box), scale_nodes_(std::move(scale_nodes)), delay_nodes_(std::move(delay_nodes)) {
    tabulate(threads);
  }

  std::size_t nodes() const { return values_.size(); }
  cdouble value(std::size_t node) const { return values_[node]; }

  std::size_t draw_node(Rng& rng) const {
    const auto ns = scale_nodes_.size();
    const auto nd = delay_nodes_.size();
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(ns));
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(nd));
    return std::min(i, ns - 1) * nd + std::min(j, nd - 1);
  }

 private:
  void tabulate(int threads) {
    const std::size_t total = scale_nodes_.size() * delay_nodes_.size();
    values_.assign(total, 0.0);
    auto work = [&](std::size_t begin, std::size_t step) {
      for (std::size_t k = begin; k < total; k += step) {
        const double sc = scale_nodes_[k / delay_nodes_.size()];
        const double dc = delay_nodes_[k % delay_nodes_.size()];
        values_[k] = response_(box_.at_normalized(sc, dc));
      }
    };
    const auto n = static_cast<std::size_t>(std::max(1, threads));
    if (n == 1 || total < 64) {
      work(0, 1);
      return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& th : pool) th.join();
  }

  const ResponseFn& response_;
  ParameterBox box_;
  std::vector<double> scale_nodes_;
  std::vector<double> delay_nodes_;
  std::vector<cdouble> values_;
};

std::vector<double> lattice_coords(int n) {
  if (n == 1) return {0.0};
  std::vector<double> c(n);
  for (int i = 0; i < n; ++i) c[i] = -1.0 + 2.0 * i / (n - 1);
  c.back() = 1.0;
  return c;
}

// Both halves of [-frame, -1] U [1, frame], n nodes per half.
std::vector<double> frame_coords(int n, double frame) {
  std::vector<double> c;
  c.reserve(2 * n);
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    c.push_back(-frame + (frame - 1.0) * t);
  }
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    c.push_back(1.0 + (frame - 1.0) * t);
  }
  return c;
}

double continuous_frame_coord(Rng& rng, double frame) {
  const double u = uniform01(rng);
  const double mag = 1.0 + (frame - 1.0) * uniform01(rng);
  return u < 0.5 ? -mag : mag;
}

struct Scenario {
  const ResponseFn& response;
  double s_energy;
  ParameterBox box;
  const DetectorConfig& det;
  const MonteCarloOptions& opts;
  const OutsourceOptions* source = nullptr;
};

struct ChunkCounts {
  std::vector<std::int64_t> false_alarms;
  std::vector<std::int64_t> detections;
  std::vector<std::int64_t> node_hits;  // per in-box node, for the analytic reference
};

void count_exceedances(const std::vector<double>& thresholds, double mag, std::vector<std::int64_t>& counts) {
  // thresholds ascending: |r| > gamma holds for a prefix.
  const auto end = std::lower_bound(thresholds.begin(), thresholds.end(), mag);
  for (auto it = thresholds.begin(); it != end; ++it) ++counts[it - thresholds.begin()];
}

RocTable run_roc(const Scenario& sc) {
  sc.det.validate();
  sc.box.validate();
  const auto& opts = sc.opts;
  if (opts.trials < 1) throw std::invalid_argument("roc: trials must be >= 1");
  if (opts.chunk < 1) throw std::invalid_argument("roc: chunk must be >= 1");
  if (!(sc.s_energy > 0.0)) throw std::invalid_argument("roc: waveform energy must be > 0");
  const int threads = std::max(1, opts.threads);

  // In-box target.
  std::optional<ThetaSource> target;
  bool continuous_target = false;
  if (opts.mode == ThetaMode::worst_case_grid) {
    if (opts.worst_case_grid < 2) throw std::invalid_argument("roc: worst-case grid must be at least 2 x 2");
    const auto coords = lattice_coords(opts.worst_case_grid);
    ThetaSource grid(sc.response, sc.box, coords, coords, threads);
    std::size_t worst = 0;
    for (std::size_t k = 1; k < grid.nodes(); ++k) {
      if (std::abs(grid.value(k)) < std::abs(grid.value(worst))) worst = k;
    }
    const auto n = coords.size();
    target.emplace(sc.response, sc.box, std::vector<double>{coords[worst / n]}, std::vector<double>{coords[worst % n]},
                   1);
  } else if (opts.theta_lattice > 0) {
    if (opts.theta_lattice < 2) throw std::invalid_argument("roc: theta lattice must be 0 or >= 2");
    const auto coords = lattice_coords(opts.theta_lattice);
    target.emplace(sc.response, sc.box, coords, coords, threads);
  } else {
    continuous_target = true;
  }

  std::optional<ThetaSource> interferer;
  bool continuous_source = false;
  if (sc.source) {
    if (!(sc.source->frame > 1.0)) throw std::invalid_argument("roc: out-of-region frame must exceed 1");
    if (sc.source->lattice > 0) {
      const auto coords = frame_coords(sc.source->lattice, sc.source->frame);
      interferer.emplace(sc.response, sc.box, coords, coords, threads);
    } else {
      continuous_source = true;
    }
  }

  const double sd = std::sqrt(0.5 * sc.det.noise_power * sc.s_energy);
  const auto& gammas = sc.det.thresholds;
  const std::int64_t chunks = (opts.trials + opts.chunk - 1) / opts.chunk;
  const bool want_hits = opts.analytic_reference && !continuous_target;
  std::vector<ChunkCounts> results(static_cast<std::size_t>(chunks));

  auto run_chunk = [&](std::int64_t c) {
    ChunkCounts& out = results[static_cast<std::size_t>(c)];
    out.false_alarms.assign(gammas.size(), 0);
    out.detections.assign(gammas.size(), 0);
    if (want_hits) out.node_hits.assign(target->nodes(), 0);
    Rng noise_rng = substream(opts.seed, {tag("noise"), static_cast<std::uint64_t>(c)});
    Rng theta_rng = substream(opts.seed, {tag("theta"), static_cast<std::uint64_t>(c)});
    Rng source_rng = substream(opts.seed, {tag("outsource"), static_cast<std::uint64_t>(c)});
    std::normal_distribution<double> normal(0.0, sd);
    const std::int64_t begin = c * opts.chunk;
    const std::int64_t end = std::min(opts.trials, begin + opts.chunk);
    for (std::int64_t t = begin; t < end; ++t) {
      const double re = normal(noise_rng);
      const double im = normal(noise_rng);
      cdouble h0(re, im);
      if (sc.source) {
        cdouble clutter;
        if (continuous_source) {
          const double a = continuous_frame_coord(source_rng, sc.source->frame);
          const double b = continuous_frame_coord(source_rng, sc.source->frame);
          clutter = sc.response(sc.box.at_normalized(a, b));
        } else {
          clutter = interferer->value(interferer->draw_node(source_rng));
        }
        h0 += sc.source->reflection * clutter;
      }
      cdouble signal;
      if (continuous_target) {
        const double a = 2.0 * uniform01(theta_rng) - 1.0;
        const double b = 2.0 * uniform01(theta_rng) - 1.0;
        signal = sc.response(sc.box.at_normalized(a, b));
      } else {
        const std::size_t node = target->draw_node(theta_rng);
        signal = target->value(node);
        if (want_hits) ++out.node_hits[node];
      }
      const cdouble h1 = opts.reflection * signal + h0;
      count_exceedances(gammas, std::abs(h0), out.false_alarms);
      count_exceedances(gammas, std::abs(h1), out.detections);
    }
  };

  if (threads == 1 || chunks == 1) {
    for (std::int64_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::int64_t c = w; c < chunks; c += threads) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::int64_t> fa(gammas.size(), 0), det(gammas.size(), 0);
  std::vector<std::int64_t> hits(want_hits ? target->nodes() : 0, 0);
  for (const auto& r : results) {
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      fa[g] += r.false_alarms[g];
      det[g] += r.detections[g];
    }
    for (std::size_t k = 0; k < hits.size(); ++k) hits[k] += r.node_hits[k];
  }

  RocTable table;
  table.provenance = "monte-carlo";
  table.trials = opts.trials;
  table.seed = opts.seed;
  const auto n = static_cast<double>(opts.trials);
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    table.rows.push_back({gammas[g], static_cast<double>(fa[g]) / n, static_cast<double>(det[g]) / n});
  }
  table.set("mode", opts.mode == ThetaMode::uniform_random ? "uniform-random" : "worst-case-grid");
  table.set("theta_lattice", std::to_string(continuous_target ? 0 : opts.theta_lattice));
  if (sc.source) {
    std::ostringstream os;
    os << std::setprecision(17) << sc.source->reflection;
    table.set("sigma_os", os.str());
  }
  if (want_hits) {
    table.pd_reference.assign(gammas.size(), 0.0);
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      double acc = 0.0;
      for (std::size_t k = 0; k < hits.size(); ++k) {
        if (hits[k] == 0) continue;
        acc += static_cast<double>(hits[k]) *
               pd_analytic(gammas[g], opts.reflection * target->value(k), sc.det.noise_power, sc.s_energy);
      }
      table.pd_reference[g] = acc / n;
    }
  }
  return table;
}

}  // namespace

RocTable roc_monte_carlo(const ResponseFn& response, double s_energy, const ParameterBox& box,
                         const DetectorConfig& det, const MonteCarloOptions& opts) {
  return run_roc({response, s_energy, box, det, opts, nullptr});
}

RocTable roc_with_outsource(const ResponseFn& response, double s_energy, const ParameterBox& box,
                            const DetectorConfig& det, const MonteCarloOptions& opts,
                            const OutsourceOptions& source) {
  return run_roc({response, s_energy, box, det, opts, &source});
}

RocTable roc_analytic(cdouble mean, double s_energy, const DetectorConfig& det) {
  det.validate();
  RocTable table;
  table.provenance = "analytic";
  for (double g : det.thresholds) {
    table.rows.push_back({g, pfa_analytic(g, det.noise_power, s_energy), pd_analytic(g, mean, det.noise_power, s_energy)});
  }
  return table;
}

EpsWorseArea eps_worse_area(const ResponseFn& response, double s_energy, const ParameterBox& region, double eps,
                            const EpsWorseOptions& opts) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps_worse_area: eps must be > 0");
  if (opts.reflections.empty()) throw std::invalid_argument("eps_worse_area: reflection grid is empty");
  if (opts.scale_points < 1 || opts.delay_points < 1) throw std::invalid_argument("eps_worse_area: empty grid");
  EpsWorseArea out;
  out.gamma = calibrate_threshold(opts.alpha, opts.noise_power, s_energy);
  const auto thetas = box_grid(region, opts.scale_points, opts.delay_points);
  std::vector<double> pd;
  pd.reserve(thetas.size() * opts.reflections.size());
  for (const auto& th : thetas) {
    const cdouble r = response(th);
    for (double st : opts.reflections) pd.push_back(pd_analytic(out.gamma, st * r, opts.noise_power, s_energy));
  }
  out.pd_worst = *std::min_element(pd.begin(), pd.end());
  const auto inside = std::count_if(pd.begin(), pd.end(), [&](double p) { return p < out.pd_worst + eps; });
  out.fraction = static_cast<double>(inside) / static_cast<double>(pd.size());
  return out;
}

}  // namespace wavecraft
