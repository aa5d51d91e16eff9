#include "wavecraft/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace wavecraft {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Integration stops this far (in log-magnitude) below the peak.
constexpr double kTailDepth = 80.0;

cdouble safe_log(cdouble z) {
  if (z == 0.0) return {kNegInf, 0.0};
  return std::log(z);
}

cdouble exp_log(cdouble l) {
  if (!(l.real() > -745.0)) return 0.0;
  return std::polar(std::exp(l.real()), l.imag());
}

// log(sum_i exp(l_i)) for complex logs.
cdouble log_sum(std::span<const cdouble> logs) {
  double peak = kNegInf;
  for (auto l : logs) peak = std::max(peak, l.real());
  if (peak == kNegInf) return {kNegInf, 0.0};
  cdouble acc = 0.0;
  for (auto l : logs) {
    if (l.real() == kNegInf) continue;
    acc += std::polar(std::exp(l.real() - peak), l.imag());
  }
  cdouble out = safe_log(acc);
  return {out.real() + peak, out.imag()};
}

struct PairSetup {
  const TransmitWaveform* rx;
  const TransmitWaveform* filter;
  double rx_delay;      // a
  double filter_delay;  // b
  double scale;
  double nominal;
  double omega_c;
};

// Complex log of the pair integrand (without peak rescaling).
cdouble pair_log_integrand(const PairSetup& p, double t) {
  const double t_rx = p.scale * (t - p.rx_delay);
  const double t_f = p.nominal * (t - p.filter_delay);
  const cdouble l_rx = p.rx->log_value ? p.rx->log_value(t_rx) : safe_log(p.rx->value(t_rx));
  const cdouble l_f = p.filter->log_value ? p.filter->log_value(t_f) : safe_log(p.filter->value(t_f));
  const double carrier =
      p.omega_c * ((p.scale - p.nominal) * (t - p.rx_delay) - p.nominal * (p.rx_delay - p.filter_delay));
  return {0.5 * std::log(p.scale * p.nominal) + l_rx.real() + l_f.real(), l_rx.imag() - l_f.imag() + carrier};
}

cdouble pair_integrand(const PairSetup& p, double t) {
  const double t_rx = p.scale * (t - p.rx_delay);
  const double t_f = p.nominal * (t - p.filter_delay);
  const double carrier =
      p.omega_c * ((p.scale - p.nominal) * (t - p.rx_delay) - p.nominal * (p.rx_delay - p.filter_delay));
  return std::sqrt(p.scale * p.nominal) * p.rx->value(t_rx) * std::conj(p.filter->value(t_f)) *
         std::polar(1.0, carrier);
}

QuadratureCorrelation pair_quadrature(const PairSetup& p, const QuadratureOptions& opts) {
  // Map supports into the integration variable t.
  const double w_lo = std::max(p.rx_delay + p.rx->support_lo / p.scale, p.filter_delay + p.filter->support_lo / p.nominal);
  const double w_hi = std::min(p.rx_delay + p.rx->support_hi / p.scale, p.filter_delay + p.filter->support_hi / p.nominal);
  if (!(w_lo < w_hi)) return {{kNegInf, 0.0}, 0.0};

  const bool rescale = static_cast<bool>(p.rx->log_value) || static_cast<bool>(p.filter->log_value);
  double lo = w_lo;
  double hi = w_hi;
  double peak_t = 0.5 * (lo + hi);
  double peak_log = 0.0;

  if (rescale) {
    double h_lo = std::min(p.rx_delay + p.rx->core_lo / p.scale, p.filter_delay + p.filter->core_lo / p.nominal);
    double h_hi = std::max(p.rx_delay + p.rx->core_hi / p.scale, p.filter_delay + p.filter->core_hi / p.nominal);
    h_lo = std::max(h_lo, w_lo);
    h_hi = std::min(h_hi, w_hi);
    if (!(h_lo < h_hi)) {
      if (!std::isfinite(w_lo) || !std::isfinite(w_hi)) return {{kNegInf, 0.0}, 0.0};
      h_lo = w_lo;
      h_hi = w_hi;
    }
    auto re_log = [&](double t) { return pair_log_integrand(p, t).real(); };
    constexpr int kSamples = 801;
    int best = -1;
    double best_val = kNegInf;
    for (int i = 0; i < kSamples; ++i) {
      const double t = h_lo + (h_hi - h_lo) * i / (kSamples - 1);
      const double v = re_log(t);
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    if (best < 0) return {{kNegInf, 0.0}, 0.0};
    // Golden-section refinement around the best sample.
    const double step = (h_hi - h_lo) / (kSamples - 1);
    double a = h_lo + step * std::max(best - 1, 0);
    double b = h_lo + step * std::min(best + 1, kSamples - 1);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = re_log(c);
    double fd = re_log(d);
    for (int it = 0; it < 80; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = re_log(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = re_log(d);
      }
    }
    peak_t = 0.5 * (a + b);
    peak_log = std::max(re_log(peak_t), best_val);
    if (re_log(peak_t) < best_val) peak_t = h_lo + step * best;

    // Extend unbounded sides until the integrand is negligible.
    const double width = h_hi - h_lo;
    auto extend = [&](double dir, double bound, double core_edge) {
      if (std::isfinite(bound)) return bound;
      double dist = std::max(width / 50.0, std::abs(core_edge - peak_t));
      for (int it = 0; it < 200; ++it) {
        const double t = peak_t + dir * dist;
        if (re_log(t) < peak_log - kTailDepth) return t;
        dist *= 1.5;
      }
      throw NumericalError("correlation_quadrature: integrand does not decay");
    };
    lo = extend(-1.0, w_lo, h_lo);
    hi = extend(1.0, w_hi, h_hi);
  }

  QuadratureOptions local = opts;
  local.abs_tol = std::max(opts.abs_tol, 1e-15 * (hi - lo));
  // Start with panels no wider than the narrowest feature in t.
  double feature = kInf;
  if (p.rx->feature_width > 0.0) feature = std::min(feature, p.rx->feature_width / p.scale);
  if (p.filter->feature_width > 0.0) feature = std::min(feature, p.filter->feature_width / p.nominal);
  auto panels_for = [&](double width) {
    if (!std::isfinite(feature)) return std::max(opts.initial_panels, 1);
    const double n = std::ceil(width / feature);
    return std::max(opts.initial_panels, static_cast<int>(std::min(n, 0.25 * opts.max_subdivisions)));
  };
  auto f = [&](double t) -> cdouble {
    if (!rescale) return pair_integrand(p, t);
    const cdouble l = pair_log_integrand(p, t);
    return exp_log({l.real() - peak_log, l.imag()});
  };
  cdouble total = 0.0;
  double err = 0.0;
  if (rescale && peak_t > lo && peak_t < hi) {
    local.initial_panels = panels_for(peak_t - lo);
    const auto left = integrate_1d(f, lo, peak_t, local);
    local.initial_panels = panels_for(hi - peak_t);
    const auto right = integrate_1d(f, peak_t, hi, local);
    total = left.value + right.value;
    err = left.error + right.error;
  } else {
    local.initial_panels = panels_for(hi - lo);
    const auto whole = integrate_1d(f, lo, hi, local);
    total = whole.value;
    err = whole.error;
  }
  cdouble l = safe_log(total);
  const double rel = std::abs(total) > 0.0 ? err / std::abs(total) : kInf;
  return {{l.real() + peak_log, l.imag()}, rel};
}

SampledWaveform sample_waveform(const TransmitWaveform& w, double duration, double sample_rate, double bandwidth) {
  if (!(sample_rate >= 8.0 * bandwidth)) throw std::invalid_argument("undersampled waveform: rate must be >= 8 B");
  const auto count = static_cast<std::size_t>(std::llround(duration * sample_rate));
  SampledWaveform out;
  out.sample_rate = sample_rate;
  out.duration = duration;
  out.label = w.label;
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.samples[i] = w.value(static_cast<double>(i) / sample_rate);
  const double e = out.energy();
  if (e > 0.0) {
    const double g = 1.0 / std::sqrt(e);
    for (auto& x : out.samples) x *= g;
  }
  return out;
}

}  // namespace

TransmitWaveform lfm_pulse(double duration, double bandwidth) {
  if (!(duration > 0.0) || !(bandwidth > 0.0)) throw std::invalid_argument("lfm_pulse: T and B must be > 0");
  const double amp = 1.0 / std::sqrt(duration);
  const double rate = std::numbers::pi * bandwidth / duration;
  TransmitWaveform w;
  w.value = [=](double t) -> cdouble {
    if (t < 0.0 || t > duration) return 0.0;
    const double x = t - 0.5 * duration;
    return std::polar(amp, rate * x * x);
  };
  w.support_lo = w.core_lo = 0.0;
  w.support_hi = w.core_hi = duration;
  w.feature_width = std::sqrt(duration / bandwidth);
  w.label = "LFM";
  return w;
}

TransmitWaveform gaussian_pulse(double duration, double sigma) {
  if (!(duration > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("gaussian_pulse: T and sigma must be > 0");
  // Energy of exp(-(t-T/2)^2/(2 sigma^2)) over [0, T] is sigma sqrt(pi) erf(T/(2 sigma)).
  const double energy = sigma * std::sqrt(std::numbers::pi) * std::erf(duration / (2.0 * sigma));
  const double amp = 1.0 / std::sqrt(energy);
  TransmitWaveform w;
  w.value = [=](double t) -> cdouble {
    if (t < 0.0 || t > duration) return 0.0;
    const double z = (t - 0.5 * duration) / sigma;
    return amp * std::exp(-0.5 * z * z);
  };
  w.support_lo = w.core_lo = 0.0;
  w.support_hi = w.core_hi = duration;
  w.feature_width = sigma;
  w.label = "Gaussian";
  return w;
}

TransmitWaveform kernel_waveform(const GaussianKernel& kernel) {
  TransmitWaveform w;
  w.value = [kernel](double t) -> cdouble { return kernel(t); };
  w.log_value = [kernel](double t) -> cdouble { return kernel.log_value(t); };
  w.support_lo = kNegInf;
  w.support_hi = kInf;
  w.core_lo = kernel.mean - 12.0 * kernel.stddev;
  w.core_hi = kernel.mean + 12.0 * kernel.stddev;
  w.feature_width = kernel.stddev;
  w.label = "kernel";
  return w;
}

TransmitWaveform basis_waveform(const BasisSet& basis, const Vector& s, int generator) {
  if (static_cast<std::size_t>(s.size()) != basis.size()) {
    throw std::invalid_argument("basis_waveform: coefficient vector has wrong length");
  }
  const int N = basis.config().num_basis;
  const std::size_t offset = basis.index(generator, 0);
  std::vector<GaussianKernel> kernels(basis.kernels().begin() + offset, basis.kernels().begin() + offset + N);
  std::vector<cdouble> coeffs(s.data() + offset, s.data() + offset + N);
  TransmitWaveform w;
  w.value = [kernels, coeffs](double t) {
    cdouble acc = 0.0;
    for (std::size_t n = 0; n < kernels.size(); ++n) acc += coeffs[n] * kernels[n](t);
    return acc;
  };
  w.log_value = [v = w.value](double t) { return safe_log(v(t)); };
  w.support_lo = kNegInf;
  w.support_hi = kInf;
  w.core_lo = kInf;
  w.core_hi = kNegInf;
  w.feature_width = kInf;
  for (const auto& k : kernels) {
    w.core_lo = std::min(w.core_lo, k.mean - 12.0 * k.stddev);
    w.core_hi = std::max(w.core_hi, k.mean + 12.0 * k.stddev);
    w.feature_width = std::min(w.feature_width, k.stddev);
  }
  w.label = "designed";
  return w;
}

double SampledWaveform::energy() const {
  double acc = 0.0;
  for (const auto& x : samples) acc += std::norm(x);
  return acc / sample_rate;
}

SampledWaveform lfm_waveform(double duration, double bandwidth, double sample_rate) {
  return sample_waveform(lfm_pulse(duration, bandwidth), duration, sample_rate, bandwidth);
}

SampledWaveform gaussian_pulse_waveform(double duration, double bandwidth, double sample_rate, double sigma) {
  if (sigma <= 0.0) sigma = default_gaussian_sigma(duration);
  return sample_waveform(gaussian_pulse(duration, sigma), duration, sample_rate, bandwidth);
}

void write_csv(const SampledWaveform& w, std::ostream& out) {
  out << "t,re,im\n" << std::setprecision(17);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    out << static_cast<double>(i) / w.sample_rate << ',' << w.samples[i].real() << ',' << w.samples[i].imag()
        << '\n';
  }
}

cdouble QuadratureCorrelation::value() const { return exp_log(log_value); }

QuadratureCorrelation correlation_quadrature(std::span<const TransmitWaveform> tx, const ArrayGeometry& geom,
                                             const TargetParams& theta, double nominal_scale, double omega_c,
                                             const QuadratureOptions& opts) {
  if (tx.size() != geom.size()) throw std::invalid_argument("correlation_quadrature: geometry size mismatch");
  if (!(theta.scale > 0.0) || !(nominal_scale > 0.0)) {
    throw std::invalid_argument("correlation_quadrature: scales must be > 0");
  }
  struct Cached {
    const TransmitWaveform* rx;
    const TransmitWaveform* filter;
    double rx_delay, filter_delay;
    QuadratureCorrelation result;
  };
  std::vector<Cached> cache;
  std::vector<QuadratureCorrelation> pairs;
  const auto& delays = geom.element_delays();
  for (std::size_t m = 0; m < tx.size(); ++m) {
    for (std::size_t mp = 0; mp < tx.size(); ++mp) {
      PairSetup p{&tx[m], &tx[mp], delays[m] + theta.delay_offset, delays[mp], theta.scale, nominal_scale, omega_c};
      auto hit = std::find_if(cache.begin(), cache.end(), [&](const Cached& c) {
        return c.rx == p.rx && c.filter == p.filter && c.rx_delay == p.rx_delay && c.filter_delay == p.filter_delay;
      });
      if (hit == cache.end()) {
        cache.push_back({p.rx, p.filter, p.rx_delay, p.filter_delay, pair_quadrature(p, opts)});
        hit = cache.end() - 1;
      }
      pairs.push_back(hit->result);
    }
  }
  std::vector<cdouble> logs;
  for (const auto& r : pairs) logs.push_back(r.log_value);
  const cdouble total = log_sum(logs);
  if (total.real() == kNegInf) return {total, 0.0};
  double rel = 0.0;
  for (const auto& r : pairs) {
    if (r.log_value.real() == kNegInf) continue;
    rel += std::exp(r.log_value.real() - total.real()) * r.rel_error;
  }
  return {total, rel};
}

QuadratureCorrelation kernel_pair_quadrature(const GaussianKernel& received, const GaussianKernel& filter,
                                             double delay_offset, double relative_delay, double scale,
                                             double nominal_scale, double omega_c, const QuadratureOptions& opts) {
  const TransmitWaveform rx = kernel_waveform(received);
  const TransmitWaveform f = kernel_waveform(filter);
  PairSetup p{&rx, &f, delay_offset + relative_delay, 0.0, scale, nominal_scale, omega_c};
  return pair_quadrature(p, opts);
}

BoxStats box_correlation_stats(const CorrelationFn& corr, const ParameterBox& box, int n_scale, int n_delay,
                               double nominal_scale) {
  if (n_scale < 2 || n_delay < 2) throw std::invalid_argument("box_correlation_stats: grid must be at least 2x2");
  const double peak = std::abs(corr({0.0, nominal_scale, 1.0}));
  if (!(peak > 0.0)) throw NumericalError("box_correlation_stats: zero on-peak response");
  const auto grid = box_grid(box, n_scale, n_delay);
  double sum = 0.0;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& theta : grid) {
    const double v = std::abs(corr(theta)) / peak;
    sum += v;
    lowest = std::min(lowest, v);
  }
  return {sum / static_cast<double>(grid.size()), lowest};
}

}  // namespace wavecraft
