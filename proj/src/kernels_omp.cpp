#include <cstddef>

#include "alen/errors.hpp"
#include "alen/kernels.hpp"

namespace alen::kernels {

namespace {

using Index = std::ptrdiff_t;

bool worth_threading(std::size_t work) { return work >= kParallelThreshold; }

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    const Index m = static_cast<Index>(a.rows());
    const std::size_t k = a.cols(), n = b.cols();
    Matrix c(a.rows(), n);
    const double* bp = b.data().data();
#pragma omp parallel for schedule(static) if (worth_threading(a.rows() * k * n))
    for (Index i = 0; i < m; ++i) {
        double* crow = c.row(static_cast<std::size_t>(i)).data();
        const double* arow = a.row(static_cast<std::size_t>(i)).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    const std::size_t m = a.rows(), n = b.cols();
    const Index k = static_cast<Index>(a.cols());
    Matrix c(a.cols(), n);
#pragma omp parallel for schedule(static) if (worth_threading(m * a.cols() * n))
    for (Index p = 0; p < k; ++p) {
        double* crow = c.row(static_cast<std::size_t>(p)).data();
        for (std::size_t i = 0; i < m; ++i) {
            const double aip = a(i, static_cast<std::size_t>(p));
            const double* brow = b.row(i).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
    const Index m = static_cast<Index>(a.rows());
    const std::size_t n = a.cols(), k = b.rows();
    Matrix c(a.rows(), k);
#pragma omp parallel for schedule(static) if (worth_threading(a.rows() * n * k))
    for (Index i = 0; i < m; ++i) {
        const double* arow = a.row(static_cast<std::size_t>(i)).data();
        double* crow = c.row(static_cast<std::size_t>(i)).data();
        for (std::size_t q = 0; q < k; ++q) {
            const double* brow = b.row(q).data();
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[q] = acc;
        }
    }
    return c;
}

void add_row_vector(Matrix& a, std::span<const double> v) {
    if (v.size() != a.cols()) throw ShapeError("add_row_vector: length mismatch");
    const Index m = static_cast<Index>(a.rows());
#pragma omp parallel for schedule(static) if (worth_threading(a.size()))
    for (Index i = 0; i < m; ++i) {
        auto row = a.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += v[j];
    }
}

std::vector<double> column_sums(const Matrix& a) {
    const Index n = static_cast<Index>(a.cols());
    std::vector<double> out(a.cols(), 0.0);
#pragma omp parallel for schedule(static) if (worth_threading(a.size()))
    for (Index j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, static_cast<std::size_t>(j));
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

Matrix whiten_rows(const Matrix& lower, std::span<const double> mean, const Matrix& x) {
    const std::size_t d = lower.rows();
    if (lower.cols() != d || mean.size() != d || x.cols() != d)
        throw ShapeError("whiten_rows: dimension mismatch");
    Matrix z(x.rows(), d);
    const Index rows = static_cast<Index>(x.rows());
#pragma omp parallel for schedule(static) if (worth_threading(x.rows() * d * d))
    for (Index r = 0; r < rows; ++r) {
        const auto xr = x.row(static_cast<std::size_t>(r));
        auto zr = z.row(static_cast<std::size_t>(r));
        for (std::size_t k = 0; k < d; ++k) {
            double acc = xr[k] - mean[k];
            for (std::size_t j = 0; j < k; ++j) acc -= lower(k, j) * zr[j];
            zr[k] = acc / lower(k, k);
        }
    }
    return z;
}

Matrix back_substitute_rows(const Matrix& lower, const Matrix& z) {
    const std::size_t d = lower.rows();
    if (lower.cols() != d || z.cols() != d) throw ShapeError("back_substitute_rows: dimension mismatch");
    Matrix w(z.rows(), d);
    const Index rows = static_cast<Index>(z.rows());
#pragma omp parallel for schedule(static) if (worth_threading(z.rows() * d * d))
    for (Index r = 0; r < rows; ++r) {
        const auto zr = z.row(static_cast<std::size_t>(r));
        auto wr = w.row(static_cast<std::size_t>(r));
        for (std::size_t k = d; k-- > 0;) {
            double acc = zr[k];
            for (std::size_t j = k + 1; j < d; ++j) acc -= lower(j, k) * wr[j];
            wr[k] = acc / lower(k, k);
        }
    }
    return w;
}

std::vector<double> squared_row_norms(const Matrix& a) {
    std::vector<double> out(a.rows(), 0.0);
    const Index rows = static_cast<Index>(a.rows());
#pragma omp parallel for schedule(static) if (worth_threading(a.size()))
    for (Index i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (double v : a.row(static_cast<std::size_t>(i))) acc += v * v;
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

}  // namespace alen::kernels
