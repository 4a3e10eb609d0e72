#include "alen/loss.hpp"

#include <algorithm>
#include <cmath>

#include "alen/errors.hpp"

namespace alen {

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            p(i, j) = std::exp(row[j] - m);
            z += p(i, j);
        }
        for (std::size_t j = 0; j < row.size(); ++j) p(i, j) /= z;
    }
    return p;
}

LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const Label> labels) {
    if (labels.size() != logits.rows())
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    if (!logits.all_finite()) throw NumericError("softmax_cross_entropy: non-finite logits");
    LossAndGrad out{0.0, Matrix(logits.rows(), logits.cols())};
    const std::size_t n = logits.rows();
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Label y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
            throw InputError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(logits.cols()) + ")");
        const auto row = logits.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - m);
        const double log_z = m + std::log(z);
        out.loss += (log_z - row[static_cast<std::size_t>(y)]) * inv_n;
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double p = std::exp(row[j] - log_z);
            out.grad(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
        }
    }
    return out;
}

std::vector<Label> argmax_rows(const Matrix& scores) {
    std::vector<Label> out(scores.rows(), 0);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        out[i] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

}  // namespace alen
