#include "sparsedet/kernels.hpp"

#include <cstddef>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sparsedet/errors.hpp"

namespace sparsedet::kernels {

namespace {

void check_affine(const MatrixD& x, const MatrixD& w, std::span<const double> bias, const MatrixD& out) {
  if (x.cols() != w.rows() || bias.size() != w.cols() || out.rows() != x.rows() || out.cols() != w.cols()) {
    throw ShapeError("affine: x is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", w is " +
                     std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
}

void check_tn(const MatrixD& a, const MatrixD& g, const MatrixD& out) {
  if (a.rows() != g.rows() || out.rows() != a.cols() || out.cols() != g.cols()) {
    throw ShapeError("gemm_tn: shape mismatch");
  }
}

void check_nt(const MatrixD& g, const MatrixD& w, const MatrixD& out) {
  if (g.cols() != w.cols() || out.rows() != g.rows() || out.cols() != w.rows()) {
    throw ShapeError("gemm_nt: shape mismatch");
  }
}

using Index = std::ptrdiff_t;

}  // namespace

void affine(const MatrixD& x, const MatrixD& w, std::span<const double> bias, MatrixD& out) {
  check_affine(x, w, bias, out);
  const Index n = static_cast<Index>(x.rows());
  const std::size_t inner = x.cols();
  const std::size_t width = w.cols();
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < n; ++r) {
    const auto xr = x.row(static_cast<std::size_t>(r));
    auto orow = out.row(static_cast<std::size_t>(r));
    for (std::size_t c = 0; c < width; ++c) orow[c] = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      const double xi = xr[i];
      const auto wi = w.row(i);
      for (std::size_t c = 0; c < width; ++c) orow[c] += xi * wi[c];
    }
    for (std::size_t c = 0; c < width; ++c) orow[c] += bias[c];
  }
}

void gemm_tn(const MatrixD& a, const MatrixD& g, MatrixD& out) {
  check_tn(a, g, out);
  const Index rows_out = static_cast<Index>(a.cols());
  const std::size_t n = a.rows();
  const std::size_t width = g.cols();
#pragma omp parallel for schedule(static)
  for (Index e = 0; e < rows_out; ++e) {
    auto orow = out.row(static_cast<std::size_t>(e));
    for (std::size_t c = 0; c < width; ++c) orow[c] = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double ae = a(r, static_cast<std::size_t>(e));
      const auto gr = g.row(r);
      for (std::size_t c = 0; c < width; ++c) orow[c] += ae * gr[c];
    }
  }
}

void gemm_nt(const MatrixD& g, const MatrixD& w, MatrixD& out) {
  check_nt(g, w, out);
  const Index n = static_cast<Index>(g.rows());
  const std::size_t inner = g.cols();
  const std::size_t width = w.rows();
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < n; ++r) {
    const auto gr = g.row(static_cast<std::size_t>(r));
    auto orow = out.row(static_cast<std::size_t>(r));
    for (std::size_t c = 0; c < width; ++c) {
      const auto wc = w.row(c);
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += gr[i] * wc[i];
      orow[c] = acc;
    }
  }
}

void column_sums(const MatrixD& g, std::span<double> out) {
  if (out.size() != g.cols()) throw ShapeError("column_sums: shape mismatch");
  const Index width = static_cast<Index>(g.cols());
  const std::size_t n = g.rows();
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < width; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) acc += g(r, static_cast<std::size_t>(c));
    out[static_cast<std::size_t>(c)] = acc;
  }
}

namespace serial {

void affine(const MatrixD& x, const MatrixD& w, std::span<const double> bias, MatrixD& out) {
  check_affine(x, w, bias, out);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.cols(); ++i) acc += x(r, i) * w(i, c);
      out(r, c) = acc + bias[c];
    }
  }
}

void gemm_tn(const MatrixD& a, const MatrixD& g, MatrixD& out) {
  check_tn(a, g, out);
  for (std::size_t e = 0; e < a.cols(); ++e) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) acc += a(r, e) * g(r, c);
      out(e, c) = acc;
    }
  }
}

void gemm_nt(const MatrixD& g, const MatrixD& w, MatrixD& out) {
  check_nt(g, w, out);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < w.rows(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.cols(); ++i) acc += g(r, i) * w(c, i);
      out(r, c) = acc;
    }
  }
}

void column_sums(const MatrixD& g, std::span<double> out) {
  if (out.size() != g.cols()) throw ShapeError("column_sums: shape mismatch");
  for (std::size_t c = 0; c < g.cols(); ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) out[c] += g(r, c);
  }
}

}  // namespace serial

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sparsedet::kernels
