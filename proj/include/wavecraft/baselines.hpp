#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wavecraft/numerics.hpp"
#include "wavecraft/signal_model.hpp"

namespace wavecraft {

/// A continuous baseband transmit waveform x~(t).
struct TransmitWaveform {
  std::function<cdouble(double)> value;
  /// Optional exact complex logarithm of value(t), used where the waveform
  /// would underflow (Gaussian tails). Empty means no rescaling is needed.
  std::function<cdouble(double)> log_value;
  double support_lo = 0.0;  // may be -inf
  double support_hi = 0.0;  // may be +inf
  double core_lo = 0.0;     // finite interval holding essentially all energy
  double core_hi = 0.0;
  /// Narrowest time feature (kernel width, chirp resolution); sets the initial
  /// quadrature panel width. 0 means unknown.
  double feature_width = 0.0;
  std::string label;
};

/// Unit-energy chirp A exp(j pi (B/T) (t - T/2)^2) on [0, T].
TransmitWaveform lfm_pulse(double duration, double bandwidth);

/// Unit-energy Gaussian envelope centered at T/2, truncated to [0, T].
TransmitWaveform gaussian_pulse(double duration, double sigma);

/// Default Gaussian baseline width: T / 8.
inline double default_gaussian_sigma(double duration) { return duration / 8.0; }

/// A single basis kernel as a waveform (unbounded support).
TransmitWaveform kernel_waveform(const GaussianKernel& kernel);

/// Generator m of a basis expansion with coefficients s.
TransmitWaveform basis_waveform(const BasisSet& basis, const Vector& s, int generator);

struct SampledWaveform {
  std::vector<cdouble> samples;
  double sample_rate = 0.0;
  double duration = 0.0;
  std::string label;

  double energy() const;
};

/// Samples on [0, T) at the given rate and rescales to unit discrete energy.
/// Rejects rates below 8 B.
SampledWaveform lfm_waveform(double duration, double bandwidth, double sample_rate);
SampledWaveform gaussian_pulse_waveform(double duration, double bandwidth, double sample_rate,
                                        double sigma = 0.0);

/// CSV with header `t,re,im`.
void write_csv(const SampledWaveform& w, std::ostream& out);

/// Result of numerically integrating the matched-filter output.
struct QuadratureCorrelation {
  cdouble log_value;      // complex log of the integral
  double rel_error = 0.0;  // estimated relative error
  cdouble value() const;
};

/// Direct numerical evaluation of the matched-filter output for a noiseless
/// unit-reflection target: the received waveforms are time-scaled by mu and
/// delayed by tau_m + tau_0, the filter is the same model at (0, mu'), both
/// carry sqrt(scale) amplitude normalization and carrier mixing at omega_c.
/// Integration runs in a peak-rescaled domain so underflowing responses still
/// carry relative accuracy.
QuadratureCorrelation correlation_quadrature(std::span<const TransmitWaveform> tx, const ArrayGeometry& geom,
                                             const TargetParams& theta, double nominal_scale, double omega_c,
                                             const QuadratureOptions& opts = {});

/// Same integral for a single received/filter kernel pair.
QuadratureCorrelation kernel_pair_quadrature(const GaussianKernel& received, const GaussianKernel& filter,
                                             double delay_offset, double relative_delay, double scale,
                                             double nominal_scale, double omega_c,
                                             const QuadratureOptions& opts = {});

struct BoxStats {
  double average = 0.0;
  double minimum = 0.0;
};

using CorrelationFn = std::function<cdouble(const TargetParams&)>;

/// Mean and minimum of |corr(theta)| over box_grid, divided by the on-peak
/// magnitude |corr(0, mu')|.
BoxStats box_correlation_stats(const CorrelationFn& corr, const ParameterBox& box, int n_scale, int n_delay,
                               double nominal_scale);

}  // namespace wavecraft
