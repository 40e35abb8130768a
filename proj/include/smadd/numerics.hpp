#pragma once
// Small dense linear algebra and the handful of nonlinearities the model
// needs. Everything is f64; matrices are row-major. The inner loops sit on
// top of the kernels layer so they pick up the SIMD backend automatically.

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace smadd {

using Vec = std::vector<double>;

// Power iteration failed to settle within its iteration cap.
struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two vectors that had to be the same length were not.
struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major, rows*cols entries

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  double* data() { return a.data(); }
  const double* data() const { return a.data(); }

  std::size_t size() const { return a.size(); }
  void fill(double v) { a.assign(a.size(), v); }

  bool operator==(const Mat&) const = default;
};

// y = M x and y = M^T x. The transposed form walks rows and accumulates with
// axpy so it stays contiguous.
void gemv(const Mat& m, const double* x, double* y);
void gemv_t(const Mat& m, const double* x, double* y);
// M += a * x y^T
void ger(double a, const double* x, const double* y, Mat& m);

double norm2(const Vec& v);
double norm2(const double* v, std::size_t n);
double max_abs(const Vec& v);
double max_abs(const Mat& m);

// Numerically safe softmax: shifts by the max before exponentiating, so
// entries like 1000 do not overflow. Output sums to 1 exactly up to rounding.
Vec softmax(const Vec& logits);
void softmax_inplace(Vec& logits);

// Exact GELU, x * Phi(x) with Phi the standard normal CDF (erf form, not the
// tanh approximation), and its derivative Phi(x) + x * phi(x).
double gelu(double x);
double gelu_prime(double x);
void gelu_inplace(Vec& v);

// v / max(||v||, guard). The guard keeps the zero vector at zero instead of
// producing NaNs.
Vec normalize(const Vec& v, double guard = 1e-12);
void normalize_into(const double* v, std::size_t n, double guard, double* out);

// Norm-smoothed variant: scales by smoothstep(||v||) so the map flattens out
// near the origin instead of having an unbounded derivative there. Above
// unit norm it matches plain normalization.
Vec smoothed_normalize(const Vec& v, double guard = 1e-12);
void smoothed_normalize_into(const double* v, std::size_t n, double guard, double* out);

// Largest singular value via power iteration on M^T M (or M M^T, whichever
// is smaller). Deterministic all-ones start, relative tolerance 1e-10 on the
// eigenvalue, hard cap 10000 iterations, ConvergenceFailure beyond that.
double operator_norm(const Mat& m, double rel_tol = 1e-10, int max_iters = 10000);

// Total variation distance between two distributions of equal length,
// (1/2) sum |p_i - q_i|. Throws LengthMismatch otherwise.
double tv_distance(const Vec& p, const Vec& q);

}  // namespace smadd
