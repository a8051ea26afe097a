#pragma once

#include <cstddef>
#include <span>

namespace ctpnp {

/// Caps the number of OpenMP workers used by every operator. Values < 1
/// restore the runtime default.
void set_thread_count(int n);
int thread_count();

// Reductions are computed over fixed-size blocks whose partial sums are
// combined in block order, so the result does not depend on the number of
// workers.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double sum(std::span<const double> a);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace ctpnp
