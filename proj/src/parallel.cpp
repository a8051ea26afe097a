#include "ctpnp/parallel.hpp"

#include <omp.h>

#include <cmath>
#include <vector>

#include "ctpnp/errors.hpp"

namespace ctpnp {
namespace {

constexpr std::size_t kBlock = 4096;

template <typename F>
double blocked_sum(std::size_t n, F&& term) {
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += term(i);
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

void set_thread_count(int n) {
  if (n < 1) n = omp_get_num_procs();
  omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return blocked_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double sum(std::span<const double> a) {
  return blocked_sum(a.size(), [&](std::size_t i) { return a[i]; });
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(x.size()); ++i) y[i] += alpha * x[i];
}

}  // namespace ctpnp
