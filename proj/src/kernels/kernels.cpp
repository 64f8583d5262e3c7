#include "lobwm/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "lobwm/common.hpp"

namespace lobwm::kern {

namespace {

std::atomic<const Table*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const Table* resolve() {
  Backend want = avx2_supported() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("LOBWM_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) want = Backend::scalar;
    else if (std::strcmp(env, "avx2") == 0) want = Backend::avx2;
    else if (std::strcmp(env, "auto") != 0)
      throw ConfigError(std::string("LOBWM_KERNELS: unknown backend '") + env + "'");
  }
  if (want == Backend::avx2 && !avx2_supported()) want = Backend::scalar;
  g_backend.store(want);
  return want == Backend::avx2 ? &avx2_table() : &scalar_table();
}

inline const Table& table() {
  const Table* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    t = resolve();
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && avx2_table().dot != nullptr;
#else
  return false;
#endif
}

void select(Backend b) {
  if (b == Backend::avx2 && !avx2_supported())
    throw ConfigError("kernels: avx2 backend not supported on this CPU");
  g_backend.store(b);
  g_table.store(b == Backend::avx2 ? &avx2_table() : &scalar_table(), std::memory_order_release);
}

Backend active() {
  table();
  return g_backend.load();
}

const char* backend_name() { return active() == Backend::avx2 ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
void scal(double alpha, double* x, std::size_t n) { table().scal(alpha, x, n); }
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
double sumsq(const double* x, std::size_t n) { return table().sumsq(x, n); }

void matvec(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  const Table& t = table();
  for (std::size_t r = 0; r < rows; ++r) y[r] = t.dot(a + r * cols, x, cols);
}

void matvec_acc(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  const Table& t = table();
  for (std::size_t r = 0; r < rows; ++r) y[r] += t.dot(a + r * cols, x, cols);
}

void matvec_t_acc(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  const Table& t = table();
  for (std::size_t r = 0; r < rows; ++r) t.axpy(x[r], a + r * cols, y, cols);
}

void ger_acc(double alpha, const double* x, const double* y, double* a, std::size_t rows,
             std::size_t cols) {
  const Table& t = table();
  for (std::size_t r = 0; r < rows; ++r) t.axpy(alpha * x[r], y, a + r * cols, cols);
}

}  // namespace lobwm::kern
