#pragma once

// Dense array kernels used by the classifier head. Every kernel has an
// OpenMP version (parallel over independent output rows) and a serial
// reference in `kernels::serial`. Both accumulate each output element in the
// same order, so their results are bitwise identical regardless of thread
// count; tests rely on that.

#include <span>

#include "sparsedet/matrix.hpp"

namespace sparsedet::kernels {

// out = x * w + bias (bias broadcast over rows).
void affine(const MatrixD& x, const MatrixD& w, std::span<const double> bias, MatrixD& out);

// out = a^T * g. Accumulates over rows of a/g in ascending order.
void gemm_tn(const MatrixD& a, const MatrixD& g, MatrixD& out);

// out = g * w^T.
void gemm_nt(const MatrixD& g, const MatrixD& w, MatrixD& out);

// out[c] = sum_r g(r, c), rows in ascending order.
void column_sums(const MatrixD& g, std::span<double> out);

namespace serial {
void affine(const MatrixD& x, const MatrixD& w, std::span<const double> bias, MatrixD& out);
void gemm_tn(const MatrixD& a, const MatrixD& g, MatrixD& out);
void gemm_nt(const MatrixD& g, const MatrixD& w, MatrixD& out);
void column_sums(const MatrixD& g, std::span<double> out);
}  // namespace serial

// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace sparsedet::kernels
