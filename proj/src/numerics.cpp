#include "wavecraft/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

namespace wavecraft {

namespace {

// Householder reduction of a Hermitian matrix to a real symmetric tridiagonal
// matrix. A = Q D T D^H Q^H with Q the product of the stored reflectors and D
// a diagonal phase matrix.
struct Tridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd offdiag;  // offdiag[i] couples i and i+1; last entry is 0
  std::vector<Vector> reflectors;  // reflectors[k] acts on rows k+1..n-1
  Vector phases;
};

Tridiagonal tridiagonalize(Matrix a) {
  const Eigen::Index n = a.rows();
  Tridiagonal out;
  out.reflectors.reserve(n > 2 ? n - 2 : 0);
  Vector sub(n > 0 ? n - 1 : 0);

  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    const Eigen::Index m = n - k - 1;
    Vector x = a.col(k).tail(m);
    const double xnorm = x.norm();
    if (xnorm == 0.0) {
      out.reflectors.emplace_back(Vector::Zero(m));
      sub(k) = 0.0;
      continue;
    }
    const cdouble x0 = x(0);
    const cdouble phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : cdouble(1.0);
    const cdouble alpha = -phase * xnorm;
    Vector v = x;
    v(0) -= alpha;
    const double vnorm = v.norm();
    if (vnorm == 0.0) {
      out.reflectors.emplace_back(Vector::Zero(m));
      sub(k) = x0;
      continue;
    }
    v /= vnorm;

    auto block = a.bottomRightCorner(m, m);
    Vector p = 2.0 * (block * v);
    const cdouble vp = v.dot(p);  // v^H p, real up to rounding
    Vector q = p - vp * v;
    block.noalias() -= v * q.adjoint();
    block.noalias() -= q * v.adjoint();

    sub(k) = alpha;
    out.reflectors.push_back(std::move(v));
  }
  if (n >= 2) sub(n - 2) = a(n - 1, n - 2);

  out.diag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.diag(i) = a(i, i).real();

  out.offdiag = Eigen::VectorXd::Zero(n);
  out.phases = Vector::Ones(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double mag = std::abs(sub(i));
    out.offdiag(i) = mag;
    out.phases(i + 1) = mag > 0.0 ? out.phases(i) * sub(i) / mag : out.phases(i);
  }
  return out;
}

// Implicit QL on a real symmetric tridiagonal matrix, accumulating rotations
// into z (JAMA tql2 layout: e[i] couples i and i+1).
void tridiagonal_ql(Eigen::VectorXd& d, Eigen::VectorXd& e, Eigen::MatrixXd& z) {
  const Eigen::Index n = d.size();
  const double eps = std::numeric_limits<double>::epsilon();
  double f = 0.0;
  double tst1 = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d(l)) + std::abs(e(l)));
    Eigen::Index m = l;
    while (m < n - 1) {
      if (std::abs(e(m)) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 100) throw NumericalError("tridiagonal QL did not converge");
        double g = d(l);
        double p = (d(l + 1) - g) / (2.0 * e(l));
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d(l) = e(l) / (p + r);
        d(l + 1) = e(l) * (p + r);
        const double dl1 = d(l + 1);
        double h = g - d(l);
        for (Eigen::Index i = l + 2; i < n; ++i) d(i) -= h;
        f += h;

        p = d(m);
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e(l + 1);
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e(i);
          h = c * p;
          r = std::hypot(p, e(i));
          e(i + 1) = s * r;
          s = e(i) / r;
          c = p / r;
          p = c * d(i) - s * g;
          d(i + 1) = h + s * (c * g + s * d(i));
          for (Eigen::Index k = 0; k < n; ++k) {
            h = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * h;
            z(k, i) = c * z(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e(l) / dl1;
        e(l) = s * p;
        d(l) = c * p;
      } while (std::abs(e(l)) > eps * tst1);
    }
    d(l) += f;
    e(l) = 0.0;
  }
}

// Maps a tridiagonal-basis vector back to the original coordinates.
Vector back_transform(const Tridiagonal& t, const Eigen::VectorXd& z) {
  Vector x = t.phases.cwiseProduct(z.cast<cdouble>());
  const Eigen::Index n = x.size();
  for (Eigen::Index k = static_cast<Eigen::Index>(t.reflectors.size()) - 1; k >= 0; --k) {
    const Vector& v = t.reflectors[k];
    const Eigen::Index m = n - k - 1;
    auto tail = x.tail(m);
    const cdouble proj = v.dot(tail);
    tail -= 2.0 * proj * v;
  }
  return x;
}

void normalize_phase(Eigen::Ref<Vector> v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  const double mag = std::abs(v(idx));
  if (mag == 0.0) return;
  v *= std::conj(v(idx)) / mag;
  v(idx) = cdouble(v(idx).real(), 0.0);
}

struct RealSpectrum {
  Tridiagonal tri;
  Eigen::VectorXd values;
  Eigen::MatrixXd z;
  std::vector<Eigen::Index> order;  // descending
};

RealSpectrum real_spectrum(const Matrix& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("hermitian_eig: matrix must be square");
  if (!h.allFinite()) throw NumericalError("hermitian_eig: non-finite entries");
  const Matrix sym = 0.5 * (h + h.adjoint());
  RealSpectrum out;
  out.tri = tridiagonalize(sym);
  out.values = out.tri.diag;
  Eigen::VectorXd e = out.tri.offdiag;
  out.z = Eigen::MatrixXd::Identity(h.rows(), h.rows());
  tridiagonal_ql(out.values, e, out.z);
  out.order.resize(h.rows());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return out.values(i) > out.values(j); });
  return out;
}

}  // namespace

EigenDecomposition hermitian_eig(const Matrix& h) {
  const Eigen::Index n = h.rows();
  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  if (n == 0) return out;
  const RealSpectrum spec = real_spectrum(h);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = spec.order[j];
    out.values(j) = spec.values(src);
    out.vectors.col(j) = back_transform(spec.tri, spec.z.col(src));
    normalize_phase(out.vectors.col(j));
  }
  return out;
}

EigenPair top_eigpair(const Matrix& h) {
  if (h.rows() == 0) throw std::invalid_argument("top_eigpair: empty matrix");
  const RealSpectrum spec = real_spectrum(h);
  const Eigen::Index top = spec.order.front();
  EigenPair out;
  out.value = spec.values(top);
  out.vector = back_transform(spec.tri, spec.z.col(top));
  normalize_phase(out.vector);
  return out;
}

double marcum_q1(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("marcum_q1: non-finite argument");
  a = std::abs(a);
  b = std::abs(b);
  if (b == 0.0) return 1.0;
  const double x = 0.5 * a * a;
  const double y = 0.5 * b * b;
  if (x == 0.0) return std::exp(-y);

  // Q1(a,b) = sum_k Poisson(k; a^2/2) * P(Poisson(b^2/2) <= k). All terms are
  // nonnegative so the sum carries no cancellation.
  const double log_x = std::log(x);
  const double log_y = std::log(y);
  const auto k_max = static_cast<long>(std::ceil(x + 12.0 * std::sqrt(x) + 40.0));
  double cdf = 0.0;
  double sum = 0.0;
  for (long k = 0; k <= k_max; ++k) {
    const double lk = std::lgamma(static_cast<double>(k) + 1.0);
    cdf += std::exp(-y + static_cast<double>(k) * log_y - lk);
    const double weight = std::exp(-x + static_cast<double>(k) * log_x - lk);
    sum += weight * std::min(cdf, 1.0);
  }
  return std::clamp(sum, 0.0, 1.0);
}

namespace {

constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b;
  cdouble value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gauss_kronrod(const ComplexIntegrand& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  cdouble kronrod = kKronrodWeights[7] * f(center);
  cdouble gauss = kGaussWeights[3] * f(center);
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const cdouble sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[i] * sum;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * sum;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace

QuadratureResult integrate_1d(const ComplexIntegrand& f, double a, double b,
                              const QuadratureOptions& opts) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("integrate_1d: infinite limits");
  if (a == b) return {};
  const double sign = b < a ? -1.0 : 1.0;
  if (b < a) std::swap(a, b);

  if (opts.initial_panels < 1) throw std::invalid_argument("integrate_1d: initial_panels must be >= 1");
  std::priority_queue<Segment> heap;
  cdouble total = 0.0;
  double error = 0.0;
  const int panels = opts.initial_panels;
  for (int i = 0; i < panels; ++i) {
    const double lo = i == 0 ? a : a + (b - a) * i / panels;
    const double hi = i + 1 == panels ? b : a + (b - a) * (i + 1) / panels;
    Segment seg = gauss_kronrod(f, lo, hi);
    total += seg.value;
    error += seg.error;
    heap.push(seg);
  }
  int evaluations = 15 * panels;
  int segments = panels;
  while (error > std::max(opts.abs_tol, opts.rel_tol * std::abs(total))) {
    if (segments >= opts.max_subdivisions) {
      throw NumericalError("integrate_1d: no convergence within subdivision limit");
    }
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      throw NumericalError("integrate_1d: interval collapsed before convergence");
    }
    Segment left = gauss_kronrod(f, worst.a, mid);
    Segment right = gauss_kronrod(f, mid, worst.b);
    evaluations += 30;
    ++segments;
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    // Rebuild the sums periodically to stop drift from incremental updates.
    if (segments % 64 == 0) {
      auto copy = heap;
      total = 0.0;
      error = 0.0;
      while (!copy.empty()) {
        total += copy.top().value;
        error += copy.top().error;
        copy.pop();
      }
    }
  }
  return {sign * total, error, evaluations};
}

QuadratureResult integrate_1d(const ComplexIntegrand& f, double a, double b, double tol) {
  QuadratureOptions opts;
  opts.abs_tol = tol;
  opts.rel_tol = 0.0;
  return integrate_1d(f, a, b, opts);
}

}  // namespace wavecraft
