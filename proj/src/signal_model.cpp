#include "wavecraft/signal_model.hpp"

#include <cmath>
#include <string>

namespace wavecraft {

SystemConfig SystemConfig::standard(int generators, int basis, double duration, double bandwidth) {
  SystemConfig c;
  c.num_generators = generators;
  c.num_basis = basis;
  c.pulse_duration = duration;
  c.bandwidth = bandwidth;
  c.carrier_frequency = 2.0 * bandwidth;
  c.sigma_min = 0.0;
  return c;
}

double SystemConfig::effective_sigma_min() const {
  return sigma_min > 0.0 ? sigma_min : 1.0 / (2.0 * std::numbers::pi * bandwidth);
}

void SystemConfig::validate() const {
  if (num_generators < 1) throw ConfigError("num_generators must be >= 1");
  if (num_basis < 1) throw ConfigError("num_basis must be >= 1");
  if (!(pulse_duration > 0.0)) throw ConfigError("pulse_duration must be > 0");
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be > 0");
  if (!(carrier_frequency >= 0.0)) throw ConfigError("carrier_frequency must be >= 0");
  if (!(nominal_scale > 0.0)) throw ConfigError("nominal_scale must be > 0");
  if (sigma_min < 0.0) throw ConfigError("sigma_min must be >= 0");
}

double GaussianKernel::operator()(double t) const {
  const double z = (t - mean) / stddev;
  return std::exp(-0.5 * z * z) / (stddev * std::sqrt(2.0 * std::numbers::pi));
}

double GaussianKernel::log_value(double t) const {
  const double z = (t - mean) / stddev;
  return -0.5 * z * z - std::log(stddev * std::sqrt(2.0 * std::numbers::pi));
}

BasisSet::BasisSet(SystemConfig config, std::vector<GaussianKernel> kernels)
    : config_(config), kernels_(std::move(kernels)) {
  if (kernels_.size() != config_.dimension()) {
    throw std::invalid_argument("BasisSet: expected " + std::to_string(config_.dimension()) +
                                " kernels, got " + std::to_string(kernels_.size()));
  }
  for (const auto& k : kernels_) {
    if (!(k.stddev > 0.0)) throw std::invalid_argument("BasisSet: kernel stddev must be > 0");
  }
}

std::size_t BasisSet::index(int generator, int basis) const {
  if (generator < 0 || generator >= config_.num_generators || basis < 0 || basis >= config_.num_basis) {
    throw std::out_of_range("BasisSet: kernel index out of range");
  }
  return static_cast<std::size_t>(generator) * config_.num_basis + basis;
}

const GaussianKernel& BasisSet::at(int generator, int basis) const { return kernels_[index(generator, basis)]; }

ArrayGeometry::ArrayGeometry(std::vector<double> element_delays, double direction)
    : delays_(std::move(element_delays)), direction_(direction) {
  for (double d : delays_) {
    if (!std::isfinite(d)) throw std::invalid_argument("ArrayGeometry: non-finite element delay");
  }
}

ArrayGeometry ArrayGeometry::uniform_linear(int elements, double carrier_frequency, double direction) {
  // d = lambda / 2, tau_m = m d sin(phi) / c = m sin(phi) / (2 f_c)
  std::vector<double> delays(static_cast<std::size_t>(elements), 0.0);
  if (carrier_frequency > 0.0) {
    for (int m = 0; m < elements; ++m) delays[m] = m * std::sin(direction) / (2.0 * carrier_frequency);
  }
  return ArrayGeometry(std::move(delays), direction);
}

ParameterBox ParameterBox::from_resolution(const SystemConfig& config, double shrink, double delay_cells,
                                           double scale_cells) {
  ParameterBox box;
  box.scale_center = config.nominal_scale;
  box.delay_halfwidth = delay_cells / config.bandwidth;
  box.scale_halfwidth = scale_cells / (config.carrier_frequency * config.pulse_duration);
  box.shrink = shrink;
  return box;
}

bool ParameterBox::contains(const TargetParams& p) const {
  return p.scale >= scale_min() && p.scale <= scale_max() && p.delay_offset >= delay_min() &&
         p.delay_offset <= delay_max();
}

TargetParams ParameterBox::at_normalized(double scale_coord, double delay_coord) const {
  return {delay_coord * delay_extent(), scale_center + scale_coord * scale_extent(), 1.0};
}

void ParameterBox::validate() const {
  if (!(scale_halfwidth > 0.0) || !(delay_halfwidth > 0.0)) throw ConfigError("box half-widths must be > 0");
  if (!(shrink > 0.0) || shrink > 1.0) throw ConfigError("shrink factor must lie in (0, 1]");
  if (!(scale_min() > 0.0)) throw ConfigError("box extends to non-positive time scales");
}

BasisSet sample_basis(const SystemConfig& config, Rng& rng) {
  config.validate();
  const double T = config.pulse_duration;
  const double sigma_lo = config.effective_sigma_min();
  const int N = config.num_basis;
  std::vector<double> means(N);
  for (int n = 0; n < N; ++n) {
    means[n] = T * (n + 0.5) / N;
    const double sigma_hi = std::min(means[n], T - means[n]) / 3.0;
    if (sigma_lo > sigma_hi) {
      throw ConfigError("pulse too short for the requested bandwidth: sigma_min " + std::to_string(sigma_lo) +
                        " exceeds sigma_max " + std::to_string(sigma_hi));
    }
  }
  std::vector<GaussianKernel> kernels;
  kernels.reserve(config.dimension());
  for (int m = 0; m < config.num_generators; ++m) {
    for (int n = 0; n < N; ++n) {
      const double sigma_hi = std::min(means[n], T - means[n]) / 3.0;
      const double sigma = sigma_lo + (sigma_hi - sigma_lo) * uniform01(rng);
      kernels.push_back({means[n], sigma});
    }
  }
  return BasisSet(config, std::move(kernels));
}

cdouble eval_waveform(const BasisSet& basis, const Vector& s, int generator, double t) {
  if (static_cast<std::size_t>(s.size()) != basis.size()) {
    throw std::invalid_argument("eval_waveform: coefficient vector has wrong length");
  }
  const int N = basis.config().num_basis;
  const std::size_t offset = basis.index(generator, 0);
  cdouble acc = 0.0;
  for (int n = 0; n < N; ++n) acc += s(offset + n) * basis[offset + n](t);
  return acc;
}

std::vector<TargetParams> box_grid(const ParameterBox& box, int n_scale, int n_delay) {
  if (n_scale < 1 || n_delay < 1) throw std::invalid_argument("box_grid: counts must be >= 1");
  auto axis = [](double lo, double hi, double center, int count) {
    std::vector<double> v(count);
    if (count == 1) {
      v[0] = center;
      return v;
    }
    for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
    v.back() = hi;
    return v;
  };
  const auto scales = axis(box.scale_min(), box.scale_max(), box.scale_center, n_scale);
  const auto delays = axis(box.delay_min(), box.delay_max(), 0.0, n_delay);
  std::vector<TargetParams> grid;
  grid.reserve(static_cast<std::size_t>(n_scale) * n_delay);
  for (double mu : scales) {
    for (double tau : delays) grid.push_back({tau, mu, 1.0});
  }
  return grid;
}

std::pair<TargetParams, TargetParams> corner_pair(const ParameterBox& box, CornerChoice choice) {
  if (choice == CornerChoice::anti_diagonal) {
    return {{box.delay_max(), box.scale_min(), 1.0}, {box.delay_min(), box.scale_max(), 1.0}};
  }
  return {{box.delay_min(), box.scale_min(), 1.0}, {box.delay_max(), box.scale_max(), 1.0}};
}

}  // namespace wavecraft
