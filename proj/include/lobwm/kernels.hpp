#pragma once

#include <cstddef>
#include <string>

// Double-precision kernels backing the dense/conv/recurrent inner loops.
// Each primitive has a scalar reference implementation and, on x86-64, an
// AVX2 variant. The scalar versions mirror the SIMD accumulation order
// (four partial sums, reduced as (p0+p2)+(p1+p3)) so both backends produce
// bit-identical results; the equivalence tests assert exactly that.

namespace lobwm::kern {

enum class Backend { scalar, avx2 };

// Active backend. Resolved on first use: LOBWM_KERNELS=scalar|avx2 wins,
// otherwise avx2 when the CPU supports it.
Backend active();
const char* backend_name();
bool avx2_supported();
void select(Backend b);  // throws ConfigError if unsupported on this CPU

// --- primitives (dispatched) ---
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void scal(double alpha, double* x, std::size_t n);                   // x *= alpha
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);

// --- derived (row/column loops over the primitives) ---
void matvec(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);      // y = A x
void matvec_acc(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);  // y += A x
void matvec_t_acc(const double* a, const double* x, double* y, std::size_t rows,
                  std::size_t cols);  // y += A^T x
void ger_acc(double alpha, const double* x, const double* y, double* a, std::size_t rows,
             std::size_t cols);  // A += alpha * x y^T

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
};

const Table& scalar_table();
const Table& avx2_table();  // null entries when not compiled in

}  // namespace lobwm::kern
