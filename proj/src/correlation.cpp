#include "wavecraft/correlation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace wavecraft {

namespace {

// Below this log-magnitude a term is an exact zero in double precision.
constexpr double kUnderflowLog = -745.0;

inline cdouble entry_log(double mean_rx, double var_rx, double mean_f, double var_f, double shift,
                         double scale, double nominal, double omega_c) {
  const double denom = scale * scale * var_f + nominal * nominal * var_rx;
  const double offset = nominal * mean_rx - scale * mean_f + scale * nominal * shift;
  const double dscale = scale - nominal;
  const double var_g = var_rx * var_f / denom;
  const double mean_g = (scale * mean_rx * var_f + nominal * (mean_f - nominal * shift) * var_rx) / denom;
  const double log_mag = 0.5 * std::log(scale * nominal) - 0.5 * std::log(2.0 * std::numbers::pi * denom) -
                         offset * offset / (2.0 * denom) - 0.5 * omega_c * omega_c * dscale * dscale * var_g;
  const double phase = -omega_c * nominal * shift + omega_c * dscale * mean_g;
  return {log_mag, phase};
}

inline cdouble exp_log(cdouble l) {
  if (l.real() < kUnderflowLog) return 0.0;
  return std::polar(std::exp(l.real()), l.imag());
}

}  // namespace

cdouble correlation_entry_log(const GaussianKernel& received, const GaussianKernel& filter,
                              double delay_offset, double relative_delay, double scale,
                              double nominal_scale, double omega_c) {
  if (!(scale > 0.0) || !(nominal_scale > 0.0)) throw std::invalid_argument("correlation_entry: scales must be > 0");
  if (!(received.stddev > 0.0) || !(filter.stddev > 0.0)) {
    throw std::invalid_argument("correlation_entry: kernel widths must be > 0");
  }
  return entry_log(received.mean, received.stddev * received.stddev, filter.mean, filter.stddev * filter.stddev,
                   delay_offset + relative_delay, scale, nominal_scale, omega_c);
}

cdouble correlation_entry(const GaussianKernel& received, const GaussianKernel& filter, double delay_offset,
                          double relative_delay, double scale, double nominal_scale, double omega_c) {
  return exp_log(
      correlation_entry_log(received, filter, delay_offset, relative_delay, scale, nominal_scale, omega_c));
}

CorrelationMatrix build_R(const BasisSet& basis, const ArrayGeometry& geom, const TargetParams& theta,
                          double nominal_scale) {
  const auto& cfg = basis.config();
  if (geom.size() != static_cast<std::size_t>(cfg.num_generators)) {
    throw std::invalid_argument("build_R: geometry size does not match the number of generators");
  }
  if (!(theta.scale > 0.0) || !(nominal_scale > 0.0)) throw std::invalid_argument("build_R: scales must be > 0");
  const auto n = static_cast<Eigen::Index>(basis.size());
  const double omega_c = cfg.omega_c();
  CorrelationMatrix out{Matrix(n, n), theta, nominal_scale};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& rx = basis[j];
    const int m = basis.generator_of(j);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& filt = basis[i];
      const double shift = theta.delay_offset + geom.relative_delay(m, basis.generator_of(i));
      out.entries(i, j) = exp_log(entry_log(rx.mean, rx.stddev * rx.stddev, filt.mean, filt.stddev * filt.stddev,
                                            shift, theta.scale, nominal_scale, omega_c));
    }
  }
  return out;
}

CorrelationMatrix build_R0(const BasisSet& basis, const ArrayGeometry& geom, double nominal_scale) {
  CorrelationMatrix r0 = build_R(basis, geom, {0.0, nominal_scale, 1.0}, nominal_scale);
  r0.entries = 0.5 * (r0.entries + r0.entries.adjoint()).eval();
  return r0;
}

WhitenedSystem whiten(const CorrelationMatrix& r0, std::span<const CorrelationMatrix> rs, double rank_tol) {
  const EigenDecomposition eig = hermitian_eig(r0.entries);
  if (eig.values.size() == 0 || !(eig.values(0) > 0.0)) {
    throw NumericalError("whiten: R0 is numerically zero, no signal space");
  }
  const double cutoff = rank_tol * eig.values(0);
  Eigen::Index rank = 0;
  while (rank < eig.values.size() && eig.values(rank) > cutoff) ++rank;

  WhitenedSystem ws;
  ws.range_basis = eig.vectors.leftCols(rank);
  ws.energies = eig.values.head(rank);
  ws.transform = ws.range_basis * ws.energies.cwiseSqrt().cwiseInverse().cast<cdouble>().asDiagonal();
  // One refinement step: eigenvectors of the smallest kept eigenvalues carry
  // errors of order eps * lambda_max / lambda, which shows up in
  // transform^H R0 transform. Multiplying by G^{-1/2} removes most of it.
  Matrix g = ws.transform.adjoint() * r0.entries * ws.transform;
  g = 0.5 * (g + g.adjoint()).eval();
  const EigenDecomposition ge = hermitian_eig(g);
  if (!(ge.values.minCoeff() > 0.0)) throw NumericalError("whiten: whitened R0 is not positive definite");
  ws.transform = ws.transform *
                 (ge.vectors * ge.values.cwiseSqrt().cwiseInverse().cast<cdouble>().asDiagonal() * ge.vectors.adjoint());
  ws.whitened.reserve(rs.size());
  for (const auto& r : rs) {
    if (r.entries.rows() != r0.entries.rows() || r.entries.cols() != r0.entries.cols()) {
      throw std::invalid_argument("whiten: correlation matrix dimension mismatch");
    }
    ws.whitened.push_back(ws.transform.adjoint() * r.entries * ws.transform);
  }
  return ws;
}

Vector recover_s(const Vector& u, const WhitenedSystem& ws) {
  if (u.size() != ws.rank()) throw std::invalid_argument("recover_s: whitened vector has wrong length");
  return ws.transform * u;
}

cdouble filter_output(const Vector& s, const CorrelationMatrix& r, double reflection) {
  if (s.size() != r.entries.cols()) throw std::invalid_argument("filter_output: dimension mismatch");
  return reflection * s.dot(r.entries * s);
}

ResponseModel::ResponseModel(const BasisSet& basis, const ArrayGeometry& geom, Vector s, double nominal_scale)
    : kernels_(basis.kernels()),
      delays_(geom.element_delays()),
      s_(std::move(s)),
      nominal_scale_(nominal_scale),
      omega_c_(basis.config().omega_c()) {
  if (static_cast<std::size_t>(s_.size()) != basis.size()) {
    throw std::invalid_argument("ResponseModel: coefficient vector has wrong length");
  }
  if (geom.size() != static_cast<std::size_t>(basis.config().num_generators)) {
    throw std::invalid_argument("ResponseModel: geometry size mismatch");
  }
  generator_.resize(kernels_.size());
  for (std::size_t i = 0; i < kernels_.size(); ++i) generator_[i] = basis.generator_of(i);
}

cdouble ResponseModel::operator()(const TargetParams& theta) const {
  const std::size_t n = kernels_.size();
  cdouble acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (s_(j) == 0.0) continue;
    const auto& rx = kernels_[j];
    const double var_rx = rx.stddev * rx.stddev;
    const double tau_rx = delays_[generator_[j]];
    cdouble row = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& filt = kernels_[i];
      const double shift = theta.delay_offset + tau_rx - delays_[generator_[i]];
      const cdouble l = entry_log(rx.mean, var_rx, filt.mean, filt.stddev * filt.stddev, shift, theta.scale,
                                  nominal_scale_, omega_c_);
      row += std::conj(s_(i)) * exp_log(l);
    }
    acc += row * s_(j);
  }
  return acc;
}

void write_csv(const CorrelationMatrix& r, std::ostream& out) {
  out << "row,col,re,im\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < r.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.entries.cols(); ++j) {
      out << i << ',' << j << ',' << r.entries(i, j).real() << ',' << r.entries(i, j).imag() << '\n';
    }
  }
}

}  // namespace wavecraft
