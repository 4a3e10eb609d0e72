#pragma once

// Dense numeric kernels used by the layer stack and the prototype memory.
//
// Two implementations share every signature:
//   alen::kernels            OpenMP row-parallel, used by the library
//   alen::kernels::reference plain serial loops, kept for tests and benchmarks
//
// Each output element is accumulated in the same order by both, so results are
// bit-identical regardless of thread count.

#include <span>
#include <vector>

#include "alen/matrix.hpp"

namespace alen::kernels {

/// a[m x k] * b[k x n]
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b with a[m x k], b[m x n] -> [k x n]
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T with a[m x n], b[k x n] -> [m x k]
Matrix matmul_nt(const Matrix& a, const Matrix& b);

void add_row_vector(Matrix& a, std::span<const double> v);
std::vector<double> column_sums(const Matrix& a);

/// Row-wise z = L^{-1} (x - mean) for lower-triangular L.
Matrix whiten_rows(const Matrix& lower, std::span<const double> mean, const Matrix& x);
/// Row-wise w = L^{-T} z.
Matrix back_substitute_rows(const Matrix& lower, const Matrix& z);
std::vector<double> squared_row_norms(const Matrix& a);

/// Problems below this many multiply-adds run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 14;

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
void add_row_vector(Matrix& a, std::span<const double> v);
std::vector<double> column_sums(const Matrix& a);
Matrix whiten_rows(const Matrix& lower, std::span<const double> mean, const Matrix& x);
Matrix back_substitute_rows(const Matrix& lower, const Matrix& z);
std::vector<double> squared_row_norms(const Matrix& a);

}  // namespace reference

}  // namespace alen::kernels
