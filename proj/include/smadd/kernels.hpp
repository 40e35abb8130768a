#pragma once
// Dense f64 primitives used by the numerics and gradient code. Two backends:
// a scalar reference implementation and an AVX2 one, selected at runtime.
// Both are deterministic; they differ in summation order, so results agree
// to rounding (see the equivalence tests), not bit-for-bit.

#include <cstddef>
#include <string>

namespace smadd::kernels {

enum class Backend { scalar, avx2 };

// Backend currently in effect. Resolved on first use: avx2 if the CPU has it,
// scalar otherwise.
Backend active();

bool supported(Backend b);

// Force a backend (throws std::runtime_error if unsupported on this CPU).
// Mainly for tests and the --kernels flag.
void use(Backend b);

// Re-resolve to the best supported backend.
void use_auto();

std::string to_string(Backend b);
Backend backend_from_string(const std::string& name);

// sum_i x[i]*y[i]
double dot(const double* x, const double* y, std::size_t n);
// y += a*x
void axpy(double a, const double* x, double* y, std::size_t n);
// x *= a
void scal(double a, double* x, std::size_t n);
// sum_i x[i]
double sum(const double* x, std::size_t n);
// sum_i x[i]^2
double sumsq(const double* x, std::size_t n);
// sum_i |x[i]-y[i]|
double absdiff_sum(const double* x, const double* y, std::size_t n);

}  // namespace smadd::kernels
