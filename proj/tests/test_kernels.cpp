#include <doctest.h>

#include <random>

#include "sparsedet/errors.hpp"
#include "sparsedet/infotheory.hpp"
#include "sparsedet/kernels.hpp"

using namespace sparsedet;

namespace {

MatrixD random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> gauss;
  MatrixD m(r, c);
  for (auto& v : m.values()) v = gauss(rng);
  return m;
}

}  // namespace

TEST_CASE("parallel kernels are bitwise equal to the serial references") {
  std::mt19937_64 rng(31);
  for (auto [n, e, d] : {std::tuple{1ul, 1ul, 1ul}, {17ul, 5ul, 9ul}, {128ul, 32ul, 64ul}, {3ul, 40ul, 2ul}}) {
    const MatrixD x = random_matrix(rng, n, e);
    const MatrixD w = random_matrix(rng, e, d);
    const MatrixD g = random_matrix(rng, n, d);
    std::vector<double> bias(d);
    for (std::size_t i = 0; i < d; ++i) bias[i] = 0.1 * static_cast<double>(i);

    MatrixD a1(n, d), a2(n, d);
    kernels::affine(x, w, bias, a1);
    kernels::serial::affine(x, w, bias, a2);
    CHECK(a1 == a2);

    MatrixD t1(e, d), t2(e, d);
    kernels::gemm_tn(x, g, t1);
    kernels::serial::gemm_tn(x, g, t2);
    CHECK(t1 == t2);

    MatrixD n1(n, e), n2(n, e);
    kernels::gemm_nt(g, w, n1);
    kernels::serial::gemm_nt(g, w, n2);
    CHECK(n1 == n2);

    std::vector<double> c1(d), c2(d);
    kernels::column_sums(g, c1);
    kernels::serial::column_sums(g, c2);
    CHECK(c1 == c2);
  }
}

TEST_CASE("affine computes x*w + b") {
  const MatrixD x(2, 2, {1, 2, 3, 4});
  const MatrixD w(2, 3, {1, 0, -1, 2, 1, 0});
  const std::vector<double> b{0.5, 0, 0};
  MatrixD out(2, 3);
  kernels::affine(x, w, b, out);
  CHECK(out.values() == std::vector<double>{5.5, 2, -1, 11.5, 4, -3});
  MatrixD bad(2, 2);
  CHECK_THROWS_AS(kernels::affine(x, w, b, bad), ShapeError);
}

TEST_CASE("parallel nMI matrix equals the serial reference") {
  std::mt19937_64 rng(8);
  const std::size_t n = 300, d = 12;
  MatrixD latents = random_matrix(rng, n, d);
  for (std::size_t i = 0; i < latents.size(); i += 3) latents.values()[i] = 0.0;
  FactorTable t;
  t.factors = {"A", "B", "C"};
  t.indicator = Matrix<std::uint8_t>(n, 3, 0);
  for (std::size_t i = 0; i < n; ++i) {
    t.indicator(i, i % 3) = 1;
    t.sample_index.push_back(i);
    latents(i, 0) += static_cast<double>(i % 3);
  }
  const BinningSpec spec;
  const auto par = nmi_matrix(latents, t, spec);
  const auto ser = serial::nmi_matrix(latents, t, spec);
  CHECK(par.values == ser.values);
  CHECK(par.values(0, 0) > par.values(5, 0));
}
