#pragma once
// Internal glue between the dispatcher in kernels.cpp and the per-backend
// translation units. Not installed, not part of the public surface.

#include <cstddef>

namespace smadd::kernels::detail {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  double (*absdiff_sum)(const double*, const double*, std::size_t);
};

const Vtable& scalar_vtable();

// Null if this build/CPU cannot run AVX2 code at all (non-x86 target).
const Vtable* avx2_vtable();

}  // namespace smadd::kernels::detail
