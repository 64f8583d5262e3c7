#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lobwm/kernels.hpp"
#include "lobwm/rng.hpp"

using namespace lobwm;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree bit for bit") {
  if (!kern::avx2_supported()) return;  // scalar-only host
  const auto& sc = kern::scalar_table();
  const auto& vx = kern::avx2_table();
  Rng rng(7);
  // sizes straddling the 4-lane width, including ragged tails
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 64u, 129u, 1000u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    CHECK(sc.dot(a.data(), b.data(), n) == vx.dot(a.data(), b.data(), n));
    CHECK(sc.sum(a.data(), n) == vx.sum(a.data(), n));
    CHECK(sc.sumsq(a.data(), n) == vx.sumsq(a.data(), n));

    auto y1 = b, y2 = b;
    sc.axpy(1.7, a.data(), y1.data(), n);
    vx.axpy(1.7, a.data(), y2.data(), n);
    CHECK(y1 == y2);

    auto x1 = a, x2 = a;
    sc.scal(-0.3, x1.data(), n);
    vx.scal(-0.3, x2.data(), n);
    CHECK(x1 == x2);
  }
}

TEST_CASE("dot matches long-double reference") {
  Rng rng(11);
  for (std::size_t n : {5u, 33u, 1024u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
    const double got = kern::dot(a.data(), b.data(), n);
    CHECK(std::abs(got - static_cast<double>(ref)) <= 1e-9 * (1.0 + std::abs(static_cast<double>(ref))));
  }
}

TEST_CASE("matvec / transposed matvec / rank-1 update match naive loops") {
  Rng rng(13);
  const std::size_t rows = 7, cols = 5;
  auto a = random_vec(rng, rows * cols);
  auto x = random_vec(rng, cols);
  auto u = random_vec(rng, rows);

  std::vector<double> y(rows, 0.0), y_ref(rows, 0.0);
  kern::matvec(a.data(), x.data(), y.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y_ref[r] += a[r * cols + c] * x[c];
  for (std::size_t r = 0; r < rows; ++r) CHECK(y[r] == doctest::Approx(y_ref[r]).epsilon(1e-12));

  std::vector<double> z(cols, 0.0), z_ref(cols, 0.0);
  kern::matvec_t_acc(a.data(), u.data(), z.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) z_ref[c] += a[r * cols + c] * u[r];
  for (std::size_t c = 0; c < cols; ++c) CHECK(z[c] == doctest::Approx(z_ref[c]).epsilon(1e-12));

  auto g = a;
  auto g_ref = a;
  kern::ger_acc(0.5, u.data(), x.data(), g.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g_ref[r * cols + c] += 0.5 * u[r] * x[c];
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(g_ref[i]).epsilon(1e-12));
}

TEST_CASE("backend selection is explicit and reversible") {
  const auto initial = kern::active();
  kern::select(kern::Backend::scalar);
  CHECK(kern::active() == kern::Backend::scalar);
  if (kern::avx2_supported()) {
    kern::select(kern::Backend::avx2);
    CHECK(kern::active() == kern::Backend::avx2);
  }
  kern::select(initial);
}
