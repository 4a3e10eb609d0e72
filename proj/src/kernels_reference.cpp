#include "alen/errors.hpp"
#include "alen/kernels.hpp"

namespace alen::kernels::reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
            c(i, j) = acc;
        }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.cols(); ++p)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, p) * b(i, j);
            c(p, j) = acc;
        }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t q = 0; q < b.rows(); ++q) {
            double acc = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * b(q, j);
            c(i, q) = acc;
        }
    return c;
}

void add_row_vector(Matrix& a, std::span<const double> v) {
    if (v.size() != a.cols()) throw ShapeError("add_row_vector: length mismatch");
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += v[j];
}

std::vector<double> column_sums(const Matrix& a) {
    std::vector<double> out(a.cols(), 0.0);
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) out[j] += a(i, j);
    return out;
}

Matrix whiten_rows(const Matrix& lower, std::span<const double> mean, const Matrix& x) {
    const std::size_t d = lower.rows();
    if (lower.cols() != d || mean.size() != d || x.cols() != d)
        throw ShapeError("whiten_rows: dimension mismatch");
    Matrix z(x.rows(), d);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t k = 0; k < d; ++k) {
            double acc = x(r, k) - mean[k];
            for (std::size_t j = 0; j < k; ++j) acc -= lower(k, j) * z(r, j);
            z(r, k) = acc / lower(k, k);
        }
    return z;
}

Matrix back_substitute_rows(const Matrix& lower, const Matrix& z) {
    const std::size_t d = lower.rows();
    if (lower.cols() != d || z.cols() != d) throw ShapeError("back_substitute_rows: dimension mismatch");
    Matrix w(z.rows(), d);
    for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t k = d; k-- > 0;) {
            double acc = z(r, k);
            for (std::size_t j = k + 1; j < d; ++j) acc -= lower(j, k) * w(r, j);
            w(r, k) = acc / lower(k, k);
        }
    return w;
}

std::vector<double> squared_row_norms(const Matrix& a) {
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out[i] += a(i, j) * a(i, j);
    return out;
}

}  // namespace alen::kernels::reference
