#pragma once

#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wavecraft/numerics.hpp"
#include "wavecraft/random.hpp"

namespace wavecraft {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Physical configuration of the multi-generator transmitter.
struct SystemConfig {
  int num_generators = 3;         // M
  int num_basis = 30;             // N per generator
  double pulse_duration = 1.0;    // T [s]
  double bandwidth = 200.0;       // B [Hz]
  double carrier_frequency = 400.0;  // f_c [Hz]
  double nominal_scale = 0.94;    // mu'
  double sigma_min = 0.0;         // lower kernel width bound [s]; 0 selects 1/(2 pi B)

  /// Defaults for a given size: f_c = 2B and sigma_min = 1/(2 pi B).
  static SystemConfig standard(int generators, int basis, double duration, double bandwidth);

  double omega_c() const { return 2.0 * std::numbers::pi * carrier_frequency; }
  double bt_product() const { return bandwidth * pulse_duration; }
  double effective_sigma_min() const;
  std::size_t dimension() const {
    return static_cast<std::size_t>(num_generators) * static_cast<std::size_t>(num_basis);
  }
  void validate() const;
};

/// Unit-area Gaussian density used as a basis kernel.
struct GaussianKernel {
  double mean = 0.0;
  double stddev = 1.0;

  double operator()(double t) const;
  double log_value(double t) const;
};

/// M x N kernels, flattened generator-major: index = m * N + n.
class BasisSet {
 public:
  BasisSet(SystemConfig config, std::vector<GaussianKernel> kernels);

  const SystemConfig& config() const { return config_; }
  const std::vector<GaussianKernel>& kernels() const { return kernels_; }
  std::size_t size() const { return kernels_.size(); }
  const GaussianKernel& at(int generator, int basis) const;
  const GaussianKernel& operator[](std::size_t flat) const { return kernels_[flat]; }
  std::size_t index(int generator, int basis) const;
  int generator_of(std::size_t flat) const { return static_cast<int>(flat) / config_.num_basis; }

 private:
  SystemConfig config_;
  std::vector<GaussianKernel> kernels_;
};

/// Per-element propagation delays toward the (known) target direction.
class ArrayGeometry {
 public:
  ArrayGeometry(std::vector<double> element_delays, double direction);

  /// Uniform linear array with half-wavelength spacing at the carrier.
  static ArrayGeometry uniform_linear(int elements, double carrier_frequency, double direction = 0.0);

  const std::vector<double>& element_delays() const { return delays_; }
  double direction() const { return direction_; }
  std::size_t size() const { return delays_.size(); }
  /// tau_{m,m'} = tau_m - tau_m'
  double relative_delay(int m, int m_prime) const { return delays_.at(m) - delays_.at(m_prime); }

 private:
  std::vector<double> delays_;
  double direction_;
};

/// A point theta = (tau_0, mu) with an optional reflection coefficient.
struct TargetParams {
  double delay_offset = 0.0;  // tau_0 = tau - tau' [s]
  double scale = 1.0;         // mu
  double reflection = 1.0;    // sigma_t
};

/// Uncertainty region in (mu, tau_0). Effective half-widths are the nominal
/// half-widths divided by the shrink factor, so a smaller factor is a larger box.
struct ParameterBox {
  double scale_center = 0.94;
  double scale_halfwidth = 1.0 / 400.0;
  double delay_halfwidth = 0.01;
  double shrink = 1.0;

  /// Half-widths as multiples of the resolution limits 1/B (delay) and
  /// 1/(f_c T) (scale). Defaults: 2/B and 1/(f_c T).
  static ParameterBox from_resolution(const SystemConfig& config, double shrink, double delay_cells = 2.0,
                                      double scale_cells = 1.0);

  double scale_extent() const { return scale_halfwidth / shrink; }
  double delay_extent() const { return delay_halfwidth / shrink; }
  double scale_min() const { return scale_center - scale_extent(); }
  double scale_max() const { return scale_center + scale_extent(); }
  double delay_min() const { return -delay_extent(); }
  double delay_max() const { return delay_extent(); }
  bool contains(const TargetParams& p) const;
  /// Maps normalized coordinates in [-1, 1]^2 to a point of the box.
  TargetParams at_normalized(double scale_coord, double delay_coord) const;
  void validate() const;
};

/// Draws a basis with uniformly spaced means and uniformly random widths in
/// [sigma_min, min(mean, T - mean) / 3].
BasisSet sample_basis(const SystemConfig& config, Rng& rng);

/// x_m(t) = sum_n s_{m,n} psi_{m,n}(t).
cdouble eval_waveform(const BasisSet& basis, const Vector& s, int generator, double t);

/// Uniform lattice over the box, scale-major, endpoints included. A single
/// point along an axis sits at the box center.
std::vector<TargetParams> box_grid(const ParameterBox& box, int n_scale, int n_delay);

enum class CornerChoice { diagonal, anti_diagonal };

/// The two opposite corners used as design grid points. The diagonal pair is
/// (mu_min, -eps_tau) and (mu_max, +eps_tau).
std::pair<TargetParams, TargetParams> corner_pair(const ParameterBox& box,
                                                  CornerChoice choice = CornerChoice::diagonal);

}  // namespace wavecraft
