#pragma once
// Independent reference implementations used only by tests. These cross-check
// the production code along a different algorithmic route: the production
// operator norm is power iteration, the oracle is one-sided Jacobi; gradients
// are hand-derived, the oracle is finite differences.

#include <functional>

#include "smadd/numerics.hpp"

namespace smadd::testing {

// Largest singular value via one-sided Jacobi (Hestenes): rotate column pairs
// until all are mutually orthogonal, then the column norms are the singular
// values. Slow and simple.
double jacobi_max_singular(const Mat& m);

// Central difference (f(x+h) - f(x-h)) / 2h.
double central_diff(const std::function<double(double)>& f, double x, double h);

}  // namespace smadd::testing
