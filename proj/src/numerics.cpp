#include "smadd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "smadd/kernels.hpp"

namespace smadd {

void gemv(const Mat& m, const double* x, double* y) {
  for (int r = 0; r < m.rows; ++r) y[r] = kernels::dot(m.row(r), x, m.cols);
}

void gemv_t(const Mat& m, const double* x, double* y) {
  std::memset(y, 0, sizeof(double) * m.cols);
  for (int r = 0; r < m.rows; ++r) kernels::axpy(x[r], m.row(r), y, m.cols);
}

void ger(double a, const double* x, const double* y, Mat& m) {
  for (int r = 0; r < m.rows; ++r) kernels::axpy(a * x[r], y, m.row(r), m.cols);
}

double norm2(const double* v, std::size_t n) { return std::sqrt(kernels::sumsq(v, n)); }
double norm2(const Vec& v) { return norm2(v.data(), v.size()); }

double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double max_abs(const Mat& m) {
  double r = 0.0;
  for (double x : m.a) r = std::max(r, std::fabs(x));
  return r;
}

void softmax_inplace(Vec& logits) {
  double m = -HUGE_VAL;
  for (double x : logits) m = std::max(m, x);
  double z = 0.0;
  for (double& x : logits) {
    x = std::exp(x - m);
    z += x;
  }
  kernels::scal(1.0 / z, logits.data(), logits.size());
}

Vec softmax(const Vec& logits) {
  Vec out = logits;
  softmax_inplace(out);
  return out;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

double gelu(double x) { return x * 0.5 * std::erfc(-x * kInvSqrt2); }

double gelu_prime(double x) {
  double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

void gelu_inplace(Vec& v) {
  for (double& x : v) x = gelu(x);
}

void normalize_into(const double* v, std::size_t n, double guard, double* out) {
  double s = 1.0 / std::max(norm2(v, n), guard);
  for (std::size_t i = 0; i < n; ++i) out[i] = v[i] * s;
}

Vec normalize(const Vec& v, double guard) {
  Vec out(v.size());
  normalize_into(v.data(), v.size(), guard, out.data());
  return out;
}

void smoothed_normalize_into(const double* v, std::size_t n, double guard, double* out) {
  double r = norm2(v, n);
  double gain = (r >= 1.0) ? 1.0 : r * r * (3.0 - 2.0 * r);  // smoothstep
  double s = gain / std::max(r, guard);
  for (std::size_t i = 0; i < n; ++i) out[i] = v[i] * s;
}

Vec smoothed_normalize(const Vec& v, double guard) {
  Vec out(v.size());
  smoothed_normalize_into(v.data(), v.size(), guard, out.data());
  return out;
}

double operator_norm(const Mat& m, double rel_tol, int max_iters) {
  if (m.rows == 0 || m.cols == 0) return 0.0;
  if (kernels::sumsq(m.data(), m.size()) == 0.0) return 0.0;

  // Iterate on the Gram matrix of the thinner side: v <- M^T(Mv) keeps the
  // work per step at two gemvs without forming the Gram matrix.
  const bool tall = m.rows >= m.cols;
  const int n = tall ? m.cols : m.rows;
  const int k = tall ? m.rows : m.cols;

  Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vec w(k, 0.0), u(n, 0.0);

  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    if (tall) {
      gemv(m, v.data(), w.data());
      gemv_t(m, w.data(), u.data());
    } else {
      gemv_t(m, v.data(), w.data());
      gemv(m, w.data(), u.data());
    }
    // u = Gram * v, so the Rayleigh quotient of the unit v is just v.u
    double next = kernels::dot(v.data(), u.data(), n);
    double un = norm2(u);
    if (un == 0.0) {
      // The fixed all-ones start happened to lie in the null space exactly;
      // the iteration cannot move from there.
      throw ConvergenceFailure("operator_norm: start vector annihilated by the Gram matrix");
    }
    kernels::scal(1.0 / un, u.data(), n);
    std::swap(u, v);
    if (it > 0 && std::fabs(next - lambda) <= rel_tol * std::max(std::fabs(next), 1e-300)) {
      return std::sqrt(std::max(next, 0.0));
    }
    lambda = next;
  }
  throw ConvergenceFailure("operator_norm: power iteration did not converge within iteration cap");
}

double tv_distance(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) {
    throw LengthMismatch("tv_distance: vectors have lengths " + std::to_string(p.size()) +
                         " and " + std::to_string(q.size()));
  }
  return 0.5 * kernels::absdiff_sum(p.data(), q.data(), p.size());
}

}  // namespace smadd
