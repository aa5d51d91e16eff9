#pragma once

#include <complex>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace wavecraft {

using cdouble = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvalues in descending order with orthonormal eigenvector columns.
struct EigenDecomposition {
  Eigen::VectorXd values;
  Matrix vectors;
};

struct EigenPair {
  double value = 0.0;
  Vector vector;
};

/// Full decomposition of a Hermitian matrix (Householder reduction to real
/// tridiagonal form followed by implicit QL). The input is symmetrized as
/// (H + H^H)/2 before reduction. Each eigenvector is phase-normalized so that
/// its largest-magnitude component is real and positive.
EigenDecomposition hermitian_eig(const Matrix& h);

/// Largest eigenvalue and its eigenvector; identical to the first pair of
/// hermitian_eig.
EigenPair top_eigpair(const Matrix& h);

/// Generalized Marcum Q function of order one, Q1(a, b) = P(|X| > b) for a
/// Rician X with noncentrality a and unit per-component variance.
double marcum_q1(double a, double b);

struct QuadratureOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_subdivisions = 4000;
  /// Uniform panels to start from. A single Gauss-Kronrod panel can step over
  /// a narrow bump and report a tiny error, so callers that know the feature
  /// width of their integrand should start finer.
  int initial_panels = 1;
};

struct QuadratureResult {
  cdouble value;
  double error = 0.0;
  int evaluations = 0;
};

using ComplexIntegrand = std::function<cdouble(double)>;

/// Globally adaptive Gauss-Kronrod (7/15) integration on a finite interval.
/// Starts from opts.initial_panels equal panels.
/// Converges when the summed error estimate is below
/// max(abs_tol, rel_tol * |integral|); throws NumericalError otherwise.
QuadratureResult integrate_1d(const ComplexIntegrand& f, double a, double b,
                              const QuadratureOptions& opts);

/// Convenience overload with an absolute tolerance only.
QuadratureResult integrate_1d(const ComplexIntegrand& f, double a, double b,
                              double tol);

}  // namespace wavecraft
