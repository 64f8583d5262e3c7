// Scalar reference kernels. Compiled with -ffp-contract=off so the
// accumulation order matches the AVX2 variants bit for bit.

#include <cstddef>

#include "lobwm/kernels.hpp"

namespace lobwm::kern {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    p0 += a[i] * b[i];
    p1 += a[i + 1] * b[i + 1];
    p2 += a[i + 2] * b[i + 2];
    p3 += a[i + 3] * b[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_scalar(const double* x, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    p0 += x[i];
    p1 += x[i + 1];
    p2 += x[i + 2];
    p3 += x[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq_scalar(const double* x, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    p0 += x[i] * x[i];
    p1 += x[i + 1] * x[i + 1];
    p2 += x[i + 2] * x[i + 2];
    p3 += x[i + 3] * x[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

}  // namespace

const Table& scalar_table() {
  static const Table t{dot_scalar, axpy_scalar, scal_scalar, sum_scalar, sumsq_scalar};
  return t;
}

}  // namespace lobwm::kern
