#include "smadd/kernels.hpp"

#include <stdexcept>

#include "kernels_detail.hpp"

namespace smadd::kernels {
namespace detail {

namespace {

double scalar_dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void scalar_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scalar_scal(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double scalar_sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double scalar_sumsq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double scalar_absdiff_sum(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = x[i] - y[i];
    acc += d < 0 ? -d : d;
  }
  return acc;
}

}  // namespace

const Vtable& scalar_vtable() {
  static const Vtable t = {scalar_dot, scalar_axpy, scalar_scal,
                           scalar_sum, scalar_sumsq, scalar_absdiff_sum};
  return t;
}

}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const detail::Vtable* resolve_best() {
  if (cpu_has_avx2()) {
    if (const detail::Vtable* t = detail::avx2_vtable()) return t;
  }
  return &detail::scalar_vtable();
}

struct State {
  const detail::Vtable* vt;
  Backend which;
  State() : vt(resolve_best()) {
    which = (vt == &detail::scalar_vtable()) ? Backend::scalar : Backend::avx2;
  }
};

State& state() {
  static State s;
  return s;
}

}  // namespace

Backend active() { return state().which; }

bool supported(Backend b) {
  if (b == Backend::scalar) return true;
  return cpu_has_avx2() && detail::avx2_vtable() != nullptr;
}

void use(Backend b) {
  if (!supported(b)) throw std::runtime_error("kernel backend not supported on this CPU: " + to_string(b));
  state().vt = (b == Backend::scalar) ? &detail::scalar_vtable() : detail::avx2_vtable();
  state().which = b;
}

void use_auto() {
  state().vt = resolve_best();
  state().which = (state().vt == &detail::scalar_vtable()) ? Backend::scalar : Backend::avx2;
}

std::string to_string(Backend b) { return b == Backend::scalar ? "scalar" : "avx2"; }

Backend backend_from_string(const std::string& name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  throw std::runtime_error("unknown kernel backend: " + name);
}

double dot(const double* x, const double* y, std::size_t n) { return state().vt->dot(x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { state().vt->axpy(a, x, y, n); }
void scal(double a, double* x, std::size_t n) { state().vt->scal(a, x, n); }
double sum(const double* x, std::size_t n) { return state().vt->sum(x, n); }
double sumsq(const double* x, std::size_t n) { return state().vt->sumsq(x, n); }
double absdiff_sum(const double* x, const double* y, std::size_t n) { return state().vt->absdiff_sum(x, y, n); }

}  // namespace smadd::kernels
