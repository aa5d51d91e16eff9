#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "wavecraft/numerics.hpp"
#include "wavecraft/signal_model.hpp"

namespace wavecraft {

/// Closed-form matched-filter response between a received kernel (time scale
/// `scale`) and a filter kernel (time scale `nominal_scale`), returned as a
/// complex logarithm: real part is log-magnitude, imaginary part the phase.
/// `relative_delay` is tau_{m,m'} with m the received generator. The target
/// reflection coefficient is not included.
cdouble correlation_entry_log(const GaussianKernel& received, const GaussianKernel& filter,
                              double delay_offset, double relative_delay, double scale,
                              double nominal_scale, double omega_c);

/// exp(correlation_entry_log(...)).
cdouble correlation_entry(const GaussianKernel& received, const GaussianKernel& filter,
                          double delay_offset, double relative_delay, double scale,
                          double nominal_scale, double omega_c);

/// R(theta). Entry (i, j) couples filter kernel i with received kernel j so
/// that s^H R s is the filter output for coefficient vector s.
struct CorrelationMatrix {
  Matrix entries;
  TargetParams theta;
  double nominal_scale = 1.0;
};

CorrelationMatrix build_R(const BasisSet& basis, const ArrayGeometry& geom, const TargetParams& theta,
                          double nominal_scale);

/// R at theta = (0, mu'), symmetrized to scrub rounding asymmetry.
CorrelationMatrix build_R0(const BasisSet& basis, const ArrayGeometry& geom, double nominal_scale);

/// Whitened coordinates u = Sigma0^{1/2} U0^H s on the range of R0.
struct WhitenedSystem {
  Matrix range_basis;          // U0, n x r
  Eigen::VectorXd energies;    // Sigma0, descending
  Matrix transform;            // U0 Sigma0^{-1/2} G^{-1/2} with G = (U0 Sigma0^{-1/2})^H R0 (U0 Sigma0^{-1/2}), n x r
  std::vector<Matrix> whitened;  // R~_k = transform^H R_k transform
  int rank() const { return static_cast<int>(energies.size()); }
};

// Looser than 1e-10 so that the whitened R0 stays within 1e-8 of identity;
// eigenvalues near 1e-10 lambda_max carry too much rounding.
inline constexpr double kDefaultRankTolerance = 1e-9;

WhitenedSystem whiten(const CorrelationMatrix& r0, std::span<const CorrelationMatrix> rs,
                      double rank_tol = kDefaultRankTolerance);

/// s = transform u (null-space component zero).
Vector recover_s(const Vector& u, const WhitenedSystem& ws);

/// sigma_t * s^H R s.
cdouble filter_output(const Vector& s, const CorrelationMatrix& r, double reflection);

/// Evaluates theta -> s^H R(theta) s without materializing R.
class ResponseModel {
 public:
  ResponseModel(const BasisSet& basis, const ArrayGeometry& geom, Vector s, double nominal_scale);

  cdouble operator()(const TargetParams& theta) const;
  double nominal_scale() const { return nominal_scale_; }
  const Vector& coefficients() const { return s_; }

 private:
  std::vector<GaussianKernel> kernels_;
  std::vector<int> generator_;
  std::vector<double> delays_;
  Vector s_;
  double nominal_scale_;
  double omega_c_;
};

/// Debug dump: header `row,col,re,im`, one line per entry.
void write_csv(const CorrelationMatrix& r, std::ostream& out);

}  // namespace wavecraft
